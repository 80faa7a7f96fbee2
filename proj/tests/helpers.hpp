#pragma once

// Shared test utilities: random graph generation tuned so the dependency
// oracle is exact (positive weights, avg pools, monotone activations on
// positive data), plus tensor and raster fillers.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <rasterflow/errors.hpp>
#include <rasterflow/netgraph.hpp>
#include <rasterflow/raster_io.hpp>

namespace rflow::testing {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag = "rf") {
    path = std::filesystem::temp_directory_path() /
           (tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct ChainOptions {
  std::int64_t in_channels = 2;
  int max_ops = 4;
  bool allow_stride = true;   // strides > 1 in convs and pools
  bool allow_tconv = true;    // transposed conv with kernel == stride
  std::int64_t max_receptive = 32;
  std::int64_t max_step = 8;
};

inline std::vector<float> positive_weights(std::mt19937_64& rng, std::int64_t count) {
  std::uniform_real_distribution<float> dist(0.05f, 0.4f);
  std::vector<float> w(static_cast<std::size_t>(count));
  for (float& v : w) v = dist(rng);
  return w;
}

// Linear chain x -> ops -> y. All weights positive and activations monotone
// on positive inputs, so perturbing any input pixel strictly changes every
// output inside its dependency window and nothing else.
inline ModelGraph random_chain_graph(std::mt19937_64& rng, const ChainOptions& opt) {
  for (;;) {
    GraphBuilder b;
    int node = b.add_input("x", opt.in_channels);
    std::int64_t ch = opt.in_channels;
    std::uniform_int_distribution<int> op_count(1, opt.max_ops);
    std::uniform_int_distribution<int> op_pick(0, opt.allow_tconv ? 3 : 2);
    const int ops = op_count(rng);
    int tconvs = 0;
    for (int i = 0; i < ops; ++i) {
      switch (op_pick(rng)) {
        case 0: {
          std::uniform_int_distribution<std::int64_t> kdist(1, 3), sdist(1, 2), cdist(1, 4);
          const Size2 kernel{kdist(rng), kdist(rng)};
          const Size2 stride = opt.allow_stride ? Size2{sdist(rng), sdist(rng)} : Size2{1, 1};
          const std::int64_t out_ch = cdist(rng);
          node = b.add_conv2d(node, kernel, stride, Padding::valid, ch, out_ch,
                              positive_weights(rng, kernel.rows * kernel.cols * ch * out_ch),
                              positive_weights(rng, out_ch));
          ch = out_ch;
          break;
        }
        case 1: {
          std::uniform_int_distribution<std::int64_t> wdist(2, 3), sdist(1, 2);
          const Size2 window{wdist(rng), wdist(rng)};
          const Size2 stride = opt.allow_stride ? Size2{sdist(rng), sdist(rng)} : Size2{1, 1};
          node = b.add_pool(node, PoolKind::avg, window, stride);
          break;
        }
        case 2:
          node = b.add_activation(node, ActKind::relu);
          break;
        default: {
          if (++tconvs > 1) {
            node = b.add_activation(node, ActKind::identity);
            break;
          }
          const std::int64_t k = 2;
          std::uniform_int_distribution<std::int64_t> cdist(1, 3);
          const std::int64_t out_ch = cdist(rng);
          node = b.add_transposed_conv2d(node, Size2{k, k}, Size2{k, k}, ch, out_ch,
                                         positive_weights(rng, k * k * ch * out_ch),
                                         positive_weights(rng, out_ch));
          ch = out_ch;
          break;
        }
      }
    }
    b.mark_output("y", node);
    ModelGraph graph = b.build();
    try {
      const FieldSpec spec = derive_fields(graph, "x", "y");
      const AxisField fr = spec.row_field();
      const AxisField fc = spec.col_field();
      if (fr.receptive > opt.max_receptive || fc.receptive > opt.max_receptive) continue;
      if (fr.step() > opt.max_step || fc.step() > opt.max_step) continue;
      if (fr.step() <= 0 || fc.step() <= 0) continue;
      return graph;
    } catch (const Error&) {
      continue;
    }
  }
}

// Single-scale FCN in the style of the benchmark model: four stride-2
// poolings, a 5x5 bottleneck conv and a 16x stride transposed conv.
// Fields: r=80x80, e=16x16, f=1.
inline ModelGraph pyramid_graph(std::int64_t in_channels, std::int64_t mid_channels,
                                std::int64_t out_channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GraphBuilder b;
  int node = b.add_input("x", in_channels);
  for (int i = 0; i < 4; ++i) node = b.add_pool(node, PoolKind::max, Size2{2, 2}, Size2{2, 2});
  node = b.add_conv2d(node, Size2{5, 5}, Size2{1, 1}, Padding::valid, in_channels, mid_channels,
                      positive_weights(rng, 25 * in_channels * mid_channels),
                      positive_weights(rng, mid_channels));
  node = b.add_activation(node, ActKind::relu);
  node = b.add_transposed_conv2d(node, Size2{16, 16}, Size2{16, 16}, mid_channels, out_channels,
                                 positive_weights(rng, 256 * mid_channels * out_channels),
                                 positive_weights(rng, out_channels));
  b.mark_output("y", node);
  return b.build();
}

// Dual-branch patch classifier: a 1x1 pixel stack ("ts") concatenated with
// features of a 25x25 window ("vhrs"), one output pixel per patch.
inline ModelGraph m3_graph(std::int64_t ts_channels, std::int64_t vhrs_channels,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GraphBuilder b;
  const int ts = b.add_input("ts", ts_channels);
  const int vhrs = b.add_input("vhrs", vhrs_channels);
  int a = b.add_conv2d(ts, Size2{1, 1}, Size2{1, 1}, Padding::valid, ts_channels, 4,
                       positive_weights(rng, ts_channels * 4), positive_weights(rng, 4));
  a = b.add_activation(a, ActKind::relu);
  int v = b.add_conv2d(vhrs, Size2{25, 25}, Size2{1, 1}, Padding::valid, vhrs_channels, 4,
                       positive_weights(rng, 625 * vhrs_channels * 4), positive_weights(rng, 4));
  v = b.add_activation(v, ActKind::relu);
  const int cat = b.add_concat({a, v});
  const int head = b.add_conv2d(cat, Size2{1, 1}, Size2{1, 1}, Padding::valid, 8, 3,
                                positive_weights(rng, 8 * 3), positive_weights(rng, 3));
  b.mark_output("y", head);
  return b.build();
}

// Copies a window of `buf` into a batch-1 float tensor, the same layout the
// serve filter feeds the graph.
inline Tensor window_tensor(const PixelBuffer& buf, const ImageRegion& window) {
  Tensor t(TensorShape{1, window.rows, window.cols, buf.channels()});
  std::int64_t i = 0;
  for (std::int64_t r = window.row; r < window.row_end(); ++r) {
    for (std::int64_t c = window.col; c < window.col_end(); ++c) {
      for (std::int64_t ch = 0; ch < buf.channels(); ++ch) {
        t.data()[i++] = static_cast<float>(buf.value_at(c, r, ch));
      }
    }
  }
  return t;
}

inline Tensor constant_tensor(const TensorShape& shape, float value) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.count(); ++i) t.data()[i] = value;
  return t;
}

inline Tensor seeded_tensor(const TensorShape& shape, std::uint64_t seed) {
  Tensor t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.1f, 1.0f);
  for (std::int64_t i = 0; i < t.count(); ++i) t.data()[i] = dist(rng);
  return t;
}

inline PixelBuffer seeded_buffer(const ImageRegion& region, std::int64_t channels,
                                 DType dtype, std::uint64_t seed) {
  PixelBuffer buf(region, channels, dtype);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> idist(0, 255);
  std::uniform_real_distribution<float> fdist(0.0f, 1.0f);
  const std::int64_t n = buf.value_count();
  for (std::int64_t i = 0; i < n; ++i) {
    switch (dtype) {
      case DType::u8:
        buf.values<std::uint8_t>()[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>(idist(rng));
        break;
      case DType::u16:
        buf.values<std::uint16_t>()[static_cast<std::size_t>(i)] =
            static_cast<std::uint16_t>(idist(rng) * 231);
        break;
      case DType::f32:
        buf.values<float>()[static_cast<std::size_t>(i)] = fdist(rng);
        break;
    }
  }
  return buf;
}

inline void write_raster(const std::string& path, const PixelBuffer& buf,
                         const GeoInfo& geo) {
  RasterHeader h;
  h.cols = buf.region().cols;
  h.rows = buf.region().rows;
  h.channels = buf.channels();
  h.dtype = buf.dtype();
  h.geo = geo;
  RasterWriter w(path, h);
  w.write_region(buf);
  w.finish();
}

}  // namespace rflow::testing
