#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <memory>
#include <random>
#include <vector>

#include <rasterflow/errors.hpp>
#include <rasterflow/serve.hpp>

#include "helpers.hpp"

using namespace rflow;
using rflow::testing::TempDir;
using rflow::testing::seeded_buffer;

namespace {

std::shared_ptr<const ModelGraph> shared(ModelGraph graph) {
  return std::make_shared<const ModelGraph>(std::move(graph));
}

FieldSpec spec_of(const ModelGraph& graph, const std::string& reference) {
  return derive_fields(graph, reference, "y");
}

std::vector<std::byte> file_payload(const std::string& path) {
  RasterReader reader(path);
  PixelBuffer all = reader.read_region(reader.header().full_region());
  return {all.bytes().begin(), all.bytes().end()};
}

// conv3 -> relu -> conv3, all stride 1: r=5x5, e=1x1, f=1.
ModelGraph conv_chain_graph(std::int64_t in_channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GraphBuilder b;
  int node = b.add_input("x", in_channels);
  node = b.add_conv2d(node, Size2{3, 3}, Size2{1, 1}, Padding::valid, in_channels, 3,
                      rflow::testing::positive_weights(rng, 9 * in_channels * 3),
                      rflow::testing::positive_weights(rng, 3));
  node = b.add_activation(node, ActKind::relu);
  node = b.add_conv2d(node, Size2{3, 3}, Size2{1, 1}, Padding::valid, 3, 2,
                      rflow::testing::positive_weights(rng, 9 * 3 * 2),
                      rflow::testing::positive_weights(rng, 2));
  b.mark_output("y", node);
  return b.build();
}

}  // namespace

TEST_CASE("serve mode names") {
  CHECK(serve_mode_from_name("patch") == ServeMode::patch_based);
  CHECK(serve_mode_from_name("fullconv") == ServeMode::fully_convolutional);
  CHECK(serve_mode_name(ServeMode::patch_based) == std::string("patch"));
  CHECK(serve_mode_name(ServeMode::fully_convolutional) == std::string("fullconv"));
  CHECK_THROWS_AS(serve_mode_from_name("tiled"), ArgumentError);
}

TEST_CASE("binding validation") {
  auto graph = shared(conv_chain_graph(2, 1));
  ServeConfig config;
  config.output = "y";
  config.spec = spec_of(*graph, "x");
  BufferSource src(seeded_buffer(ImageRegion{0, 0, 10, 10}, 2, DType::f32, 1), GeoInfo{});

  CHECK_THROWS_AS(ModelServeFilter(graph, config, {{&src, "z"}}), SpecError);
  CHECK_THROWS_AS(ModelServeFilter(graph, config, {{&src, "x"}, {&src, "x"}}), SpecError);

  ServeConfig bad_out = config;
  bad_out.output = "probabilities";
  CHECK_THROWS_AS(ModelServeFilter(graph, bad_out, {{&src, "x"}}), SpecError);

  ServeConfig bad_batch = config;
  bad_batch.mode = ServeMode::patch_based;
  bad_batch.batch = 0;
  CHECK_THROWS_AS(ModelServeFilter(graph, bad_batch, {{&src, "x"}}), SpecError);

  ServeConfig bad_ref = config;
  bad_ref.spec.reference = "w";
  CHECK_THROWS_AS(ModelServeFilter(graph, bad_ref, {{&src, "x"}}), SpecError);

  auto two = shared(rflow::testing::m3_graph(6, 4, 2));
  ServeConfig m3c;
  m3c.output = "y";
  m3c.spec = spec_of(*two, "ts");
  CHECK_THROWS_AS(ModelServeFilter(two, m3c, {{&src, "ts"}}), SpecError);
}

TEST_CASE("identity graph serves values unchanged in both modes") {
  GraphBuilder b;
  b.mark_output("y", b.add_activation(b.add_input("x", 3), ActKind::identity));
  auto graph = shared(b.build());

  const PixelBuffer data = seeded_buffer(ImageRegion{0, 0, 20, 15}, 3, DType::f32, 5);
  for (ServeMode mode : {ServeMode::fully_convolutional, ServeMode::patch_based}) {
    BufferSource src(data, GeoInfo{});
    ServeConfig config;
    config.mode = mode;
    config.output = "y";
    config.spec = spec_of(*graph, "x");
    ModelServeFilter filter(graph, config, {{&src, "x"}});
    filter.update_info();
    CHECK(filter.info().region == ImageRegion{0, 0, 20, 15});
    CHECK(filter.info().channels == 3);

    PixelBuffer out = filter.produce(ImageRegion{0, 0, 20, 15});
    auto got = out.values<float>();
    auto want = data.values<float>();
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
  }
}

TEST_CASE("pyramid serve filter reports the derived output grid") {
  auto graph = shared(rflow::testing::pyramid_graph(4, 6, 2, 7));
  const FieldSpec spec = spec_of(*graph, "x");
  CHECK(spec.reference_receptive() == Size2{80, 80});
  CHECK(spec.expression == Size2{16, 16});
  CHECK(spec.scale_rows == Ratio::of(1, 1));

  GeoInfo geo;
  geo.origin_x = 100.0;
  geo.origin_y = 200.0;
  geo.spacing_x = 10.0;
  geo.spacing_y = -10.0;
  BufferSource src(seeded_buffer(ImageRegion{0, 0, 100, 100}, 4, DType::f32, 9), geo);

  ServeConfig config;
  config.output = "y";
  config.spec = spec;
  ModelServeFilter filter(graph, config, {{&src, "x"}});
  filter.update_info();
  CHECK(filter.validation().pass());
  CHECK(filter.info().region == ImageRegion{0, 0, 32, 32});
  CHECK(filter.info().channels == 2);
  CHECK(filter.info().dtype == DType::f32);
  CHECK(filter.info().geo.spacing_x == 10.0);
  CHECK(filter.info().geo.spacing_y == -10.0);
  CHECK(filter.info().geo.origin_x == 100.0 + 10.0 * 32.0);
  CHECK(filter.info().geo.origin_y == 200.0 - 10.0 * 32.0);

  // Blocks 0 and 1 across columns, block 0 across rows.
  const std::vector<ImageRegion> need =
      filter.required_input_regions(ImageRegion{8, 0, 16, 16});
  REQUIRE(need.size() == 1);
  CHECK(need[0] == ImageRegion{0, 0, 96, 80});

  // Output [0,32) pulls input [0, 1*16+80) = [0,96): the last four input
  // rows and columns cannot fill another block.
  const ImageRegion whole{0, 0, 32, 32};
  CHECK(filter.required_input_regions(whole)[0] == ImageRegion{0, 0, 96, 96});
  CHECK(filter.extra_bytes(whole) ==
        peak_intermediate_bytes(*graph, {{"x", TensorShape{1, 96, 96, 4}}}));
  CHECK(filter.extra_bytes(ImageRegion{}) == 0);
}

TEST_CASE("fully convolutional serving matches one whole-image forward") {
  auto graph = shared(rflow::testing::pyramid_graph(4, 6, 2, 11));
  SyntheticSource src(512, 512, 4, DType::f32, GeoInfo{}, 13);

  ServeConfig config;
  config.output = "y";
  config.spec = spec_of(*graph, "x");
  ModelServeFilter filter(graph, config, {{&src, "x"}});
  filter.update_info();
  REQUIRE(filter.info().region == ImageRegion{0, 0, 448, 448});

  PixelBuffer served = filter.produce(ImageRegion{0, 0, 448, 448});

  SyntheticSource direct(512, 512, 4, DType::f32, GeoInfo{}, 13);
  direct.update_info();
  PixelBuffer image = direct.produce(ImageRegion{0, 0, 512, 512});
  std::map<std::string, Tensor> feed;
  feed.emplace("x", rflow::testing::window_tensor(image, image.region()));
  const Tensor want = std::move(graph->forward(std::move(feed)).at("y"));
  REQUIRE(want.shape() == TensorShape{1, 448, 448, 2});
  auto got = served.values<float>();
  REQUIRE(static_cast<std::int64_t>(got.size()) == want.count());
  for (std::int64_t i = 0; i < want.count(); ++i) {
    REQUIRE(got[static_cast<std::size_t>(i)] == want.data()[i]);
  }

  // A requested sub-region is the same slice of the whole-image output.
  PixelBuffer slice = filter.produce(ImageRegion{8, 0, 16, 16});
  for (std::int64_t r = 0; r < 16; ++r) {
    for (std::int64_t c = 8; c < 24; ++c) {
      for (std::int64_t ch = 0; ch < 2; ++ch) {
        REQUIRE(slice.value_at(c, r, ch) == served.value_at(c, r, ch));
      }
    }
  }
}

TEST_CASE("fully convolutional output is invariant to the output partition") {
  TempDir dir("serve_parts");
  auto graph = shared(rflow::testing::pyramid_graph(4, 6, 2, 17));
  const FieldSpec spec = spec_of(*graph, "x");

  auto run = [&](const SplitStrategy& strategy, ExecutionMode mode, const std::string& tag) {
    SyntheticSource src(512, 512, 4, DType::f32, GeoInfo{}, 19);
    ServeConfig config;
    config.output = "y";
    config.spec = spec;
    ModelServeFilter filter(graph, config, {{&src, "x"}});
    Mapper mapper(&filter, dir.file(tag + ".rfraw"));
    mapper.execute(strategy, mode);
    return file_payload(dir.file(tag + ".rfraw"));
  };

  const std::vector<std::byte> want =
      run(SplitStrategy::whole(), ExecutionMode::sequential, "whole");
  CHECK(run(SplitStrategy::striped(16), ExecutionMode::sequential, "s16") == want);
  CHECK(run(SplitStrategy::striped(112), ExecutionMode::sequential, "s112") == want);
  CHECK(run(SplitStrategy::tiled(96, 80), ExecutionMode::sequential, "tile") == want);
  CHECK(run(SplitStrategy::striped(48), ExecutionMode::overlapped, "ovl") == want);
}

TEST_CASE("patch-based serving equals a forward pass per window") {
  auto graph = shared(conv_chain_graph(2, 23));
  const PixelBuffer data = seeded_buffer(ImageRegion{0, 0, 30, 24}, 2, DType::f32, 29);
  BufferSource src(data, GeoInfo{});

  ServeConfig config;
  config.mode = ServeMode::patch_based;
  config.output = "y";
  config.spec = spec_of(*graph, "x");
  config.batch = 7;
  ModelServeFilter filter(graph, config, {{&src, "x"}});
  filter.update_info();
  REQUIRE(filter.info().region == ImageRegion{0, 0, 26, 20});

  PixelBuffer out = filter.produce(ImageRegion{0, 0, 26, 20});
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::int64_t> cdist(0, 25), rdist(0, 19);
  for (int probe = 0; probe < 40; ++probe) {
    const std::int64_t c = cdist(rng), r = rdist(rng);
    std::map<std::string, Tensor> feed;
    feed.emplace("x", rflow::testing::window_tensor(data, ImageRegion{c, r, 5, 5}));
    const Tensor want = std::move(graph->forward(std::move(feed)).at("y"));
    for (std::int64_t ch = 0; ch < 2; ++ch) {
      CHECK(std::abs(out.value_at(c, r, ch) - static_cast<double>(want.data()[ch])) <= 1e-6);
    }
  }
}

TEST_CASE("patch-based serving is invariant to the batch size") {
  auto graph = shared(conv_chain_graph(2, 37));
  const PixelBuffer data = seeded_buffer(ImageRegion{0, 0, 23, 17}, 2, DType::f32, 41);

  std::vector<std::vector<float>> outputs;
  for (std::int64_t batch : {std::int64_t{1}, std::int64_t{7}, std::int64_t{64}}) {
    BufferSource src(data, GeoInfo{});
    ServeConfig config;
    config.mode = ServeMode::patch_based;
    config.output = "y";
    config.spec = spec_of(*graph, "x");
    config.batch = batch;
    ModelServeFilter filter(graph, config, {{&src, "x"}});
    filter.update_info();
    PixelBuffer out = filter.produce(filter.info().region);
    auto vals = out.values<float>();
    outputs.emplace_back(vals.begin(), vals.end());
  }
  CHECK(outputs[1] == outputs[0]);
  CHECK(outputs[2] == outputs[0]);
}

TEST_CASE("patch and fully-convolutional modes agree for stride-1 graphs") {
  std::mt19937_64 rng(43);
  rflow::testing::ChainOptions opt;
  opt.in_channels = 2;
  opt.max_ops = 3;
  opt.allow_stride = false;
  opt.allow_tconv = false;
  for (int iter = 0; iter < 6; ++iter) {
    auto graph = shared(rflow::testing::random_chain_graph(rng, opt));
    const FieldSpec spec = spec_of(*graph, "x");
    REQUIRE(spec.expression == Size2{1, 1});
    const PixelBuffer data =
        seeded_buffer(ImageRegion{0, 0, 20, 14}, 2, DType::f32, 47 + iter);

    auto serve = [&](ServeMode mode) {
      BufferSource src(data, GeoInfo{});
      ServeConfig config;
      config.mode = mode;
      config.output = "y";
      config.spec = spec;
      ModelServeFilter filter(graph, config, {{&src, "x"}});
      filter.update_info();
      return filter.produce(filter.info().region);
    };

    PixelBuffer full = serve(ServeMode::fully_convolutional);
    PixelBuffer patch = serve(ServeMode::patch_based);
    REQUIRE(full.value_count() == patch.value_count());
    auto a = full.values<float>();
    auto b = patch.values<float>();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("a declared stride serves a subsampled grid in patch mode") {
  auto graph = shared(conv_chain_graph(2, 53));
  const PixelBuffer data = seeded_buffer(ImageRegion{0, 0, 21, 17}, 2, DType::f32, 59);
  BufferSource src(data, GeoInfo{});

  FieldSpec spec = spec_of(*graph, "x");
  spec.scale_rows = Ratio::of(2, 1);
  spec.scale_cols = Ratio::of(2, 1);

  ServeConfig config;
  config.output = "y";
  config.spec = spec;
  ModelServeFilter fullconv(graph, config, {{&src, "x"}});
  CHECK_THROWS_AS(fullconv.update_info(), SpecError);

  config.mode = ServeMode::patch_based;
  BufferSource src2(data, GeoInfo{});
  ModelServeFilter filter(graph, config, {{&src2, "x"}});
  filter.update_info();
  CHECK(filter.validation().patch_ok());
  CHECK(!filter.validation().pass());
  CHECK(filter.info().region == ImageRegion{0, 0, 9, 7});
  CHECK(filter.info().geo.spacing_x == 2.0);

  PixelBuffer out = filter.produce(filter.info().region);
  for (std::int64_t r = 0; r < 7; ++r) {
    for (std::int64_t c = 0; c < 9; ++c) {
      std::map<std::string, Tensor> feed;
      feed.emplace("x", rflow::testing::window_tensor(data, ImageRegion{2 * c, 2 * r, 5, 5}));
      const Tensor want = std::move(graph->forward(std::move(feed)).at("y"));
      CHECK(std::abs(out.value_at(c, r, 0) - static_cast<double>(want.data()[0])) <= 1e-6);
    }
  }
}

TEST_CASE("same padding is rejected fully-convolutionally but serves patches") {
  std::mt19937_64 rng(61);
  GraphBuilder b;
  int node = b.add_input("x", 1);
  const std::vector<float> kernel = rflow::testing::positive_weights(rng, 9);
  node = b.add_conv2d(node, Size2{3, 3}, Size2{1, 1}, Padding::same, 1, 1, kernel, {0.25f});
  b.mark_output("y", node);
  auto graph = shared(b.build());

  FieldSpec spec;
  spec.reference = "x";
  spec.receptive["x"] = Size2{1, 1};
  spec.expression = Size2{1, 1};
  spec.scale_rows = Ratio::of(1, 1);
  spec.scale_cols = Ratio::of(1, 1);

  const PixelBuffer data = seeded_buffer(ImageRegion{0, 0, 9, 6}, 1, DType::f32, 67);
  ServeConfig config;
  config.output = "y";
  config.spec = spec;
  BufferSource src(data, GeoInfo{});
  ModelServeFilter fullconv(graph, config, {{&src, "x"}});
  CHECK_THROWS_AS(fullconv.update_info(), SpecError);

  config.mode = ServeMode::patch_based;
  BufferSource src2(data, GeoInfo{});
  ModelServeFilter filter(graph, config, {{&src2, "x"}});
  filter.update_info();
  CHECK(filter.info().region == ImageRegion{0, 0, 9, 6});
  PixelBuffer out = filter.produce(filter.info().region);
  // A 1x1 same-padded patch sees zeros everywhere but the kernel center.
  for (std::int64_t r = 0; r < 6; ++r) {
    for (std::int64_t c = 0; c < 9; ++c) {
      const double want = data.value_at(c, r, 0) * kernel[4] + 0.25;
      CHECK(out.value_at(c, r, 0) == doctest::Approx(want).epsilon(1e-6));
    }
  }
}

TEST_CASE("wrong declared fields fail validation before serving") {
  auto graph = shared(conv_chain_graph(2, 71));
  FieldSpec spec = spec_of(*graph, "x");
  spec.receptive["x"] = Size2{3, 3};

  BufferSource src(seeded_buffer(ImageRegion{0, 0, 12, 12}, 2, DType::f32, 73), GeoInfo{});
  for (ServeMode mode : {ServeMode::fully_convolutional, ServeMode::patch_based}) {
    ServeConfig config;
    config.mode = mode;
    config.output = "y";
    config.spec = spec;
    BufferSource local(seeded_buffer(ImageRegion{0, 0, 12, 12}, 2, DType::f32, 73), GeoInfo{});
    ModelServeFilter filter(graph, config, {{&local, "x"}});
    CHECK_THROWS_AS(filter.update_info(), SpecError);
  }
}

TEST_CASE("channel mismatch between source and model input") {
  auto graph = shared(conv_chain_graph(2, 79));
  BufferSource src(seeded_buffer(ImageRegion{0, 0, 12, 12}, 3, DType::f32, 83), GeoInfo{});
  ServeConfig config;
  config.output = "y";
  config.spec = spec_of(*graph, "x");
  ModelServeFilter filter(graph, config, {{&src, "x"}});
  CHECK_THROWS_AS(filter.update_info(), ShapeError);
}

TEST_CASE("dual-input patch serving centers the secondary window") {
  auto graph = shared(rflow::testing::m3_graph(6, 4, 89));
  FieldSpec spec = spec_of(*graph, "ts");
  REQUIRE(spec.receptive.at("ts") == Size2{1, 1});
  REQUIRE(spec.receptive.at("vhrs") == Size2{25, 25});
  REQUIRE(spec.expression == Size2{1, 1});

  GeoInfo ts_geo;
  ts_geo.spacing_x = 10.0;
  ts_geo.spacing_y = 10.0;
  GeoInfo vhrs_geo = ts_geo;
  vhrs_geo.origin_x = -120.0;
  vhrs_geo.origin_y = -120.0;

  const PixelBuffer ts_data = seeded_buffer(ImageRegion{0, 0, 40, 30}, 6, DType::f32, 101);
  const PixelBuffer vhrs_data = seeded_buffer(ImageRegion{0, 0, 64, 54}, 4, DType::f32, 102);

  BufferSource ts_src(ts_data, ts_geo, "ts");
  BufferSource vhrs_src(vhrs_data, vhrs_geo, "vhrs");

  ServeConfig config;
  config.mode = ServeMode::patch_based;
  config.output = "y";
  config.spec = spec;
  config.batch = 11;
  ModelServeFilter filter(graph, config, {{&ts_src, "ts"}, {&vhrs_src, "vhrs"}});
  filter.update_info();
  CHECK(filter.info().region == ImageRegion{0, 0, 40, 30});
  CHECK(filter.info().channels == 3);
  CHECK(filter.info().geo.spacing_x == 10.0);

  PixelBuffer out = filter.produce(ImageRegion{0, 0, 40, 30});
  std::mt19937_64 rng(103);
  std::uniform_int_distribution<std::int64_t> cdist(0, 39), rdist(0, 29);
  for (int probe = 0; probe < 30; ++probe) {
    const std::int64_t c = cdist(rng), r = rdist(rng);
    std::map<std::string, Tensor> feed;
    feed.emplace("ts", rflow::testing::window_tensor(ts_data, ImageRegion{c, r, 1, 1}));
    feed.emplace("vhrs", rflow::testing::window_tensor(vhrs_data, ImageRegion{c, r, 25, 25}));
    const Tensor want = std::move(graph->forward(std::move(feed)).at("y"));
    for (std::int64_t ch = 0; ch < 3; ++ch) {
      CHECK(std::abs(out.value_at(c, r, ch) - static_cast<double>(want.data()[ch])) <= 1e-6);
    }
  }

  // Both modes admit this spec; they must agree.
  ServeConfig fc = config;
  fc.mode = ServeMode::fully_convolutional;
  BufferSource ts2(ts_data, ts_geo, "ts");
  BufferSource vhrs2(vhrs_data, vhrs_geo, "vhrs");
  ModelServeFilter fullconv(graph, fc, {{&ts2, "ts"}, {&vhrs2, "vhrs"}});
  fullconv.update_info();
  REQUIRE(fullconv.info().region == ImageRegion{0, 0, 40, 30});
  PixelBuffer fcout = fullconv.produce(ImageRegion{0, 0, 40, 30});
  auto a = out.values<float>();
  auto b = fcout.values<float>();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("secondary input too small trims trailing blocks") {
  auto graph = shared(rflow::testing::m3_graph(6, 4, 107));
  GeoInfo ts_geo;
  ts_geo.spacing_x = 10.0;
  ts_geo.spacing_y = 10.0;
  GeoInfo vhrs_geo = ts_geo;
  vhrs_geo.origin_x = -120.0;
  vhrs_geo.origin_y = -120.0;

  BufferSource ts_src(seeded_buffer(ImageRegion{0, 0, 40, 30}, 6, DType::f32, 109), ts_geo);
  BufferSource vhrs_src(seeded_buffer(ImageRegion{0, 0, 60, 54}, 4, DType::f32, 113), vhrs_geo);

  ServeConfig config;
  config.mode = ServeMode::patch_based;
  config.output = "y";
  config.spec = spec_of(*graph, "ts");
  ModelServeFilter filter(graph, config, {{&ts_src, "ts"}, {&vhrs_src, "vhrs"}});
  filter.update_info();
  CHECK(filter.info().region == ImageRegion{0, 0, 36, 30});
}

TEST_CASE("secondary window out of bounds at the first block is an error") {
  auto graph = shared(rflow::testing::m3_graph(6, 4, 127));
  GeoInfo geo;
  geo.spacing_x = 10.0;
  geo.spacing_y = 10.0;

  BufferSource ts_src(seeded_buffer(ImageRegion{0, 0, 40, 30}, 6, DType::f32, 131), geo);
  BufferSource vhrs_src(seeded_buffer(ImageRegion{0, 0, 64, 54}, 4, DType::f32, 137), geo);

  ServeConfig config;
  config.mode = ServeMode::patch_based;
  config.output = "y";
  config.spec = spec_of(*graph, "ts");
  ModelServeFilter filter(graph, config, {{&ts_src, "ts"}, {&vhrs_src, "vhrs"}});
  CHECK_THROWS_AS(filter.update_info(), SpecError);
}

TEST_CASE("misaligned secondary grid is an alignment error") {
  auto graph = shared(rflow::testing::m3_graph(6, 4, 139));
  GeoInfo ts_geo;
  ts_geo.spacing_x = 10.0;
  ts_geo.spacing_y = 10.0;
  GeoInfo vhrs_geo = ts_geo;
  vhrs_geo.origin_x = -115.0;  // 11.5 pixels of shift
  vhrs_geo.origin_y = -120.0;

  BufferSource ts_src(seeded_buffer(ImageRegion{0, 0, 40, 30}, 6, DType::f32, 149), ts_geo);
  BufferSource vhrs_src(seeded_buffer(ImageRegion{0, 0, 64, 54}, 4, DType::f32, 151), vhrs_geo);

  ServeConfig config;
  config.mode = ServeMode::patch_based;
  config.output = "y";
  config.spec = spec_of(*graph, "ts");
  ModelServeFilter filter(graph, config, {{&ts_src, "ts"}, {&vhrs_src, "vhrs"}});
  CHECK_THROWS_AS(filter.update_info(), AlignmentError);
}

TEST_CASE("empty requests cost nothing") {
  auto graph = shared(conv_chain_graph(2, 157));
  BufferSource src(seeded_buffer(ImageRegion{0, 0, 12, 12}, 2, DType::f32, 163), GeoInfo{});
  ServeConfig config;
  config.output = "y";
  config.spec = spec_of(*graph, "x");
  ModelServeFilter filter(graph, config, {{&src, "x"}});
  filter.update_info();
  CHECK(filter.produce(ImageRegion{}).value_count() == 0);
  for (const ImageRegion& r : filter.required_input_regions(ImageRegion{})) {
    CHECK(r.empty());
  }
}
