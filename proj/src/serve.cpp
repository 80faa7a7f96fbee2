#include "rasterflow/serve.hpp"

#include <algorithm>
#include <cstring>
#include <utility>

#include "rasterflow/errors.hpp"

namespace rflow {

const char* serve_mode_name(ServeMode m) {
  return m == ServeMode::patch_based ? "patch" : "fullconv";
}

ServeMode serve_mode_from_name(const std::string& name) {
  if (name == "patch") return ServeMode::patch_based;
  if (name == "fullconv") return ServeMode::fully_convolutional;
  throw ArgumentError("unknown serve mode '" + name + "' (expected patch|fullconv)");
}

namespace {

std::vector<ProcessObject*> sources_of(const std::vector<BoundInput>& inputs) {
  std::vector<ProcessObject*> out;
  out.reserve(inputs.size());
  for (const BoundInput& in : inputs) out.push_back(in.source);
  return out;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

// Copies a window of `buf` (absolute coordinates) into batch slot `b` of a
// float tensor, casting the element type.
void fill_window(Tensor& t, std::int64_t b, const PixelBuffer& buf, std::int64_t row0,
                 std::int64_t col0, std::int64_t rows, std::int64_t cols) {
  const std::int64_t ch = buf.channels();
  const std::int64_t row_values = cols * ch;
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t src0 = buf.value_index(col0, row0 + r, 0);
    float* dst = t.data() + ((b * rows + r) * cols) * ch;
    switch (buf.dtype()) {
      case DType::u8: {
        auto src = buf.values<std::uint8_t>();
        for (std::int64_t i = 0; i < row_values; ++i) {
          dst[i] = static_cast<float>(src[static_cast<std::size_t>(src0 + i)]);
        }
        break;
      }
      case DType::u16: {
        auto src = buf.values<std::uint16_t>();
        for (std::int64_t i = 0; i < row_values; ++i) {
          dst[i] = static_cast<float>(src[static_cast<std::size_t>(src0 + i)]);
        }
        break;
      }
      case DType::f32: {
        auto src = buf.values<float>();
        std::memcpy(dst, src.data() + src0, static_cast<std::size_t>(row_values) * sizeof(float));
        break;
      }
    }
  }
}

}  // namespace

ModelServeFilter::ModelServeFilter(std::shared_ptr<const ModelGraph> graph, ServeConfig config,
                                   std::vector<BoundInput> inputs)
    : ProcessObject(sources_of(inputs)), graph_(std::move(graph)), config_(std::move(config)) {
  if (!graph_) throw ContractError("serve filter needs a model graph");
  input_names_.reserve(inputs.size());
  for (const BoundInput& in : inputs) input_names_.push_back(in.graph_input);

  std::map<std::string, int> seen;
  for (const std::string& name : input_names_) {
    if (!graph_->inputs().count(name)) {
      throw SpecError("model has no input named '" + name + "'");
    }
    if (++seen[name] > 1) throw SpecError("graph input '" + name + "' bound twice");
  }
  if (seen.size() != graph_->inputs().size()) {
    throw SpecError("serve filter binds " + std::to_string(seen.size()) + " of " +
                    std::to_string(graph_->inputs().size()) + " graph inputs");
  }
  if (!graph_->outputs().count(config_.output)) {
    throw SpecError("model has no output named '" + config_.output + "'");
  }
  if (config_.mode == ServeMode::patch_based && config_.batch < 1) {
    throw SpecError("patch batch size must be positive");
  }
  auto ref = std::find(input_names_.begin(), input_names_.end(), config_.spec.reference);
  if (ref == input_names_.end()) {
    throw SpecError("reference input '" + config_.spec.reference + "' is not bound");
  }
  reference_index_ = static_cast<std::size_t>(ref - input_names_.begin());
}

std::string ModelServeFilter::name() const { return "serve(" + config_.output + ")"; }

Size2 ModelServeFilter::receptive_of(std::size_t input) const {
  return config_.spec.receptive.at(input_names_[input]);
}

std::int64_t ModelServeFilter::window_start(std::size_t input, bool row_axis,
                                            std::int64_t block) const {
  const AxisField axis = row_axis ? config_.spec.row_field() : config_.spec.col_field();
  const std::int64_t d = axis.step();
  if (input == reference_index_) return block * d;

  const GeoInfo& ref_geo = upstream()[reference_index_]->info().geo;
  const GeoInfo& x_geo = upstream()[input]->info().geo;
  const double ref_origin = row_axis ? ref_geo.origin_y : ref_geo.origin_x;
  const double ref_spacing = row_axis ? ref_geo.spacing_y : ref_geo.spacing_x;
  const double x_origin = row_axis ? x_geo.origin_y : x_geo.origin_x;
  const double x_spacing = row_axis ? x_geo.spacing_y : x_geo.spacing_x;
  const Size2 rf = receptive_of(input);
  const std::int64_t r_x = row_axis ? rf.rows : rf.cols;

  const double center_ref = static_cast<double>(block * d) +
                            static_cast<double>(axis.receptive - 1) / 2.0;
  const double center_phys = ref_origin + ref_spacing * center_ref;
  const double center_x = (center_phys - x_origin) / x_spacing;
  return snapped_floor(center_x - static_cast<double>(r_x - 1) / 2.0);
}

ModelServeFilter::BlockRange ModelServeFilter::block_range(const ImageRegion& region) const {
  const std::int64_t e_r = config_.spec.expression.rows;
  const std::int64_t e_c = config_.spec.expression.cols;
  BlockRange b;
  b.k0_row = floor_div(region.row, e_r);
  b.k1_row = ceil_div(region.row_end(), e_r) - 1;
  b.k0_col = floor_div(region.col, e_c);
  b.k1_col = ceil_div(region.col_end(), e_c) - 1;
  return b;
}

ImageRegion ModelServeFilter::window_union(std::size_t input, const BlockRange& blocks) const {
  const Size2 rf = receptive_of(input);
  const std::int64_t row0 = window_start(input, true, blocks.k0_row);
  const std::int64_t row1 = window_start(input, true, blocks.k1_row) + rf.rows;
  const std::int64_t col0 = window_start(input, false, blocks.k0_col);
  const std::int64_t col1 = window_start(input, false, blocks.k1_col) + rf.cols;
  return ImageRegion{col0, row0, col1 - col0, row1 - row0};
}

ImageInfo ModelServeFilter::generate_info() {
  const FieldSpec& spec = config_.spec;
  validation_ = validate_fields(*graph_, config_.output, spec);
  const bool fullconv = config_.mode == ServeMode::fully_convolutional;
  if (fullconv && graph_->uses_same_padding()) {
    throw SpecError(name() + ": fully-convolutional serving requires valid padding");
  }
  const bool ok = fullconv ? validation_.pass() : validation_.patch_ok();
  if (!ok) {
    std::string msg = name() + ": declared fields fail validation";
    for (const std::string& m : validation_.messages) msg += "; " + m;
    throw SpecError(msg);
  }

  std::map<std::string, TensorShape> rf_shapes;
  for (std::size_t i = 0; i < input_names_.size(); ++i) {
    const Size2 rf = receptive_of(i);
    rf_shapes[input_names_[i]] =
        TensorShape{1, rf.rows, rf.cols, graph_->input_channels(input_names_[i])};
  }
  const std::vector<TensorShape> shapes = infer_shapes(*graph_, rf_shapes);
  out_channels_ = shapes[static_cast<std::size_t>(graph_->outputs().at(config_.output))].channels;

  for (std::size_t i = 0; i < input_names_.size(); ++i) {
    const std::int64_t want = graph_->input_channels(input_names_[i]);
    const std::int64_t got = upstream()[i]->info().channels;
    if (got != want) {
      throw ShapeError(name() + ": input '" + input_names_[i] + "' supplies " +
                       std::to_string(got) + " channels, model expects " +
                       std::to_string(want));
    }
  }

  const ImageInfo& ref = upstream()[reference_index_]->info();
  const AxisField rows_axis = spec.row_field();
  const AxisField cols_axis = spec.col_field();
  std::int64_t blocks_rows = output_length(ref.region.rows, rows_axis) / rows_axis.expression;
  std::int64_t blocks_cols = output_length(ref.region.cols, cols_axis) / cols_axis.expression;

  for (std::size_t i = 0; i < input_names_.size(); ++i) {
    if (i == reference_index_) continue;
    const ImageInfo& x = upstream()[i]->info();
    if (!grids_aligned(ref.geo, x.geo)) {
      throw AlignmentError(name() + ": input '" + input_names_[i] +
                           "' grid is not aligned with the reference: " + to_string(x.geo) +
                           " vs " + to_string(ref.geo));
    }
    const Size2 rf = receptive_of(i);
    auto fit = [&](bool row_axis) -> std::int64_t {
      const std::int64_t r_x = row_axis ? rf.rows : rf.cols;
      const std::int64_t n_x = row_axis ? x.region.rows : x.region.cols;
      const std::int64_t blocks = row_axis ? blocks_rows : blocks_cols;
      if (blocks == 0) return 0;
      if (window_start(i, row_axis, 0) < 0) {
        throw SpecError(name() + ": input '" + input_names_[i] +
                        "' cannot supply the receptive window of the first block");
      }
      auto fits = [&](std::int64_t k) {
        return window_start(i, row_axis, k) + r_x <= n_x;
      };
      if (!fits(0)) return 0;
      std::int64_t lo = 0, hi = blocks - 1;
      while (lo < hi) {
        const std::int64_t mid = lo + (hi - lo + 1) / 2;
        if (fits(mid)) {
          lo = mid;
        } else {
          hi = mid - 1;
        }
      }
      return lo + 1;
    };
    blocks_rows = std::min(blocks_rows, fit(true));
    blocks_cols = std::min(blocks_cols, fit(false));
  }

  ImageInfo info;
  info.region = ImageRegion{0, 0, blocks_cols * cols_axis.expression,
                            blocks_rows * rows_axis.expression};
  info.channels = out_channels_;
  info.dtype = DType::f32;
  info.geo = propagate_geo(ref.geo, spec);
  return info;
}

std::vector<ImageRegion> ModelServeFilter::required_input_regions(
    const ImageRegion& region) const {
  std::vector<ImageRegion> out(input_names_.size());
  if (region.empty()) return out;
  const BlockRange blocks = block_range(region);
  for (std::size_t i = 0; i < input_names_.size(); ++i) {
    out[i] = window_union(i, blocks);
  }
  return out;
}

std::map<std::string, TensorShape> ModelServeFilter::tensor_shapes(
    const BlockRange& blocks) const {
  std::map<std::string, TensorShape> shapes;
  const std::int64_t n_blocks =
      (blocks.k1_row - blocks.k0_row + 1) * (blocks.k1_col - blocks.k0_col + 1);
  for (std::size_t i = 0; i < input_names_.size(); ++i) {
    const std::string& name = input_names_[i];
    const std::int64_t ch = graph_->input_channels(name);
    if (config_.mode == ServeMode::fully_convolutional) {
      const ImageRegion u = window_union(i, blocks);
      shapes[name] = TensorShape{1, u.rows, u.cols, ch};
    } else {
      const Size2 rf = receptive_of(i);
      shapes[name] = TensorShape{std::min(config_.batch, n_blocks), rf.rows, rf.cols, ch};
    }
  }
  return shapes;
}

std::int64_t ModelServeFilter::extra_bytes(const ImageRegion& region) const {
  if (region.empty()) return 0;
  return peak_intermediate_bytes(*graph_, tensor_shapes(block_range(region)));
}

PixelBuffer ModelServeFilter::compute(const ImageRegion& region,
                                      std::vector<PixelBuffer> inputs) {
  const BlockRange blocks = block_range(region);
  if (config_.mode == ServeMode::fully_convolutional) {
    return compute_fullyconv(region, blocks, inputs);
  }
  return compute_patchbased(region, blocks, inputs);
}

PixelBuffer ModelServeFilter::compute_fullyconv(const ImageRegion& region,
                                                const BlockRange& blocks,
                                                std::vector<PixelBuffer>& inputs) {
  std::map<std::string, Tensor> feed;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    PixelBuffer& buf = inputs[i];
    const ImageRegion& r = buf.region();
    Tensor t(TensorShape{1, r.rows, r.cols, buf.channels()});
    fill_window(t, 0, buf, r.row, r.col, r.rows, r.cols);
    feed.emplace(input_names_[i], std::move(t));
    buf = PixelBuffer();
  }
  std::map<std::string, Tensor> produced = graph_->forward(std::move(feed));
  const Tensor& out = produced.at(config_.output);

  const std::int64_t e_r = config_.spec.expression.rows;
  const std::int64_t e_c = config_.spec.expression.cols;
  const TensorShape want{1, (blocks.k1_row - blocks.k0_row + 1) * e_r,
                         (blocks.k1_col - blocks.k0_col + 1) * e_c, out_channels_};
  if (out.shape() != want) {
    throw ContractError(name() + ": model produced " + to_string(out.shape()) + ", expected " +
                        to_string(want) + " for region " + to_string(region));
  }

  PixelBuffer result(region, out_channels_, DType::f32);
  auto dst = result.values<float>();
  const std::int64_t row_values = region.cols * out_channels_;
  for (std::int64_t r = region.row; r < region.row_end(); ++r) {
    const std::int64_t src0 =
        out.index(0, r - blocks.k0_row * e_r, region.col - blocks.k0_col * e_c, 0);
    std::memcpy(dst.data() + result.value_index(region.col, r, 0), out.data() + src0,
                static_cast<std::size_t>(row_values) * sizeof(float));
  }
  return result;
}

PixelBuffer ModelServeFilter::compute_patchbased(const ImageRegion& region,
                                                 const BlockRange& blocks,
                                                 std::vector<PixelBuffer>& inputs) {
  const std::int64_t e_r = config_.spec.expression.rows;
  const std::int64_t e_c = config_.spec.expression.cols;
  PixelBuffer result(region, out_channels_, DType::f32);
  auto dst = result.values<float>();

  std::vector<std::pair<std::int64_t, std::int64_t>> todo;
  for (std::int64_t kr = blocks.k0_row; kr <= blocks.k1_row; ++kr) {
    for (std::int64_t kc = blocks.k0_col; kc <= blocks.k1_col; ++kc) {
      todo.emplace_back(kr, kc);
    }
  }

  for (std::size_t begin = 0; begin < todo.size(); begin += static_cast<std::size_t>(config_.batch)) {
    const std::size_t end =
        std::min(todo.size(), begin + static_cast<std::size_t>(config_.batch));
    const std::int64_t batch = static_cast<std::int64_t>(end - begin);

    std::map<std::string, Tensor> feed;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Size2 rf = receptive_of(i);
      Tensor t(TensorShape{batch, rf.rows, rf.cols, inputs[i].channels()});
      for (std::size_t b = begin; b < end; ++b) {
        const auto [kr, kc] = todo[b];
        fill_window(t, static_cast<std::int64_t>(b - begin), inputs[i],
                    window_start(i, true, kr), window_start(i, false, kc), rf.rows, rf.cols);
      }
      feed.emplace(input_names_[i], std::move(t));
    }

    std::map<std::string, Tensor> produced = graph_->forward(std::move(feed));
    const Tensor& out = produced.at(config_.output);
    const TensorShape want{batch, e_r, e_c, out_channels_};
    if (out.shape() != want) {
      throw ContractError(name() + ": model produced " + to_string(out.shape()) + ", expected " +
                          to_string(want) + " per patch batch");
    }

    for (std::size_t b = begin; b < end; ++b) {
      const auto [kr, kc] = todo[b];
      const std::int64_t row0 = std::max(kr * e_r, region.row);
      const std::int64_t row1 = std::min((kr + 1) * e_r, region.row_end());
      const std::int64_t col0 = std::max(kc * e_c, region.col);
      const std::int64_t col1 = std::min((kc + 1) * e_c, region.col_end());
      for (std::int64_t r = row0; r < row1; ++r) {
        const std::int64_t src0 = out.index(static_cast<std::int64_t>(b - begin), r - kr * e_r,
                                            col0 - kc * e_c, 0);
        std::memcpy(dst.data() + result.value_index(col0, r, 0), out.data() + src0,
                    static_cast<std::size_t>((col1 - col0) * out_channels_) * sizeof(float));
      }
    }
  }
  return result;
}

}  // namespace rflow
