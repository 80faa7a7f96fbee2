#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <rasterflow/errors.hpp>
#include <rasterflow/fields.hpp>
#include <rasterflow/netgraph.hpp>
#include <rasterflow/pipeline.hpp>
#include <rasterflow/raster_io.hpp>
#include <rasterflow/sampling.hpp>
#include <rasterflow/serve.hpp>

namespace rflow {
namespace {

std::int64_t parse_int(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("bad " + what + " '" + text + "'");
  }
}

Size2 parse_size2(const std::string& text, const std::string& what) {
  const std::size_t x = text.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= text.size()) {
    throw ArgumentError("bad " + what + " '" + text + "' (expected RxC)");
  }
  Size2 s;
  s.rows = parse_int(text.substr(0, x), what);
  s.cols = parse_int(text.substr(x + 1), what);
  if (s.rows <= 0 || s.cols <= 0) {
    throw ArgumentError(what + " must be positive, got '" + text + "'");
  }
  return s;
}

Ratio parse_ratio(const std::string& text) {
  const std::size_t slash = text.find('/');
  if (slash == std::string::npos) return Ratio::of(parse_int(text, "scale factor"));
  return Ratio::of(parse_int(text.substr(0, slash), "scale factor"),
                   parse_int(text.substr(slash + 1), "scale factor"));
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = text.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(text.substr(pos));
      break;
    }
    out.push_back(text.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

struct NamedPath {
  std::string name;
  std::string path;
};

NamedPath parse_input_arg(const std::string& text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string::npos) return NamedPath{"", text};
  if (eq == 0 || eq + 1 >= text.size()) {
    throw ArgumentError("bad --input '" + text + "' (expected name=path)");
  }
  return NamedPath{text.substr(0, eq), text.substr(eq + 1)};
}

// --fields grammar: `auto[,ref=NAME]` or a comma list of
// rf=[NAME:]RxC, ef=RxC, sf=N[/D], ref=NAME tokens.
struct FieldsArg {
  bool auto_mode = false;
  std::string reference;
  std::map<std::string, Size2> named_rf;
  bool has_plain_rf = false;
  Size2 plain_rf{0, 0};
  bool has_ef = false;
  Size2 ef{0, 0};
  Ratio sf;
};

FieldsArg parse_fields_arg(const std::string& text) {
  FieldsArg f;
  for (const std::string& token : split_list(text, ',')) {
    if (token.empty()) continue;
    if (token == "auto") {
      f.auto_mode = true;
      continue;
    }
    const std::size_t eq = token.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError("bad --fields token '" + token + "'");
    }
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "ref") {
      f.reference = value;
    } else if (key == "rf") {
      const std::size_t colon = value.find(':');
      if (colon == std::string::npos) {
        f.plain_rf = parse_size2(value, "receptive field");
        f.has_plain_rf = true;
      } else {
        f.named_rf[value.substr(0, colon)] =
            parse_size2(value.substr(colon + 1), "receptive field");
      }
    } else if (key == "ef") {
      f.ef = parse_size2(value, "expression field");
      f.has_ef = true;
    } else if (key == "sf") {
      f.sf = parse_ratio(value);
    } else {
      throw ArgumentError("bad --fields token '" + token + "'");
    }
  }
  return f;
}

std::string pick_output_node(const ModelGraph& graph, const std::string& requested) {
  if (!requested.empty()) {
    if (!graph.outputs().count(requested)) {
      throw ArgumentError("model has no output named '" + requested + "'");
    }
    return requested;
  }
  if (graph.outputs().size() != 1) {
    throw ArgumentError("model has " + std::to_string(graph.outputs().size()) +
                        " outputs, pick one with --node");
  }
  return graph.outputs().begin()->first;
}

std::string pick_reference(const std::vector<std::string>& bound,
                           const std::string& requested) {
  if (!requested.empty()) {
    for (const std::string& name : bound) {
      if (name == requested) return requested;
    }
    throw ArgumentError("reference input '" + requested + "' is not bound");
  }
  if (bound.size() != 1) {
    throw ArgumentError("several inputs are bound, pick the reference with ref=NAME");
  }
  return bound.front();
}

FieldSpec build_field_spec(const FieldsArg& f, const ModelGraph& graph,
                           const std::vector<std::string>& bound,
                           const std::string& output_node) {
  const std::string reference = pick_reference(bound, f.reference);
  if (f.auto_mode) {
    if (f.has_plain_rf || f.has_ef || !f.named_rf.empty()) {
      throw ArgumentError("--fields auto cannot be combined with declared values");
    }
    return derive_fields(graph, reference, output_node);
  }
  if (!f.has_ef) throw ArgumentError("--fields needs ef=RxC (or auto)");
  FieldSpec spec;
  spec.reference = reference;
  spec.expression = f.ef;
  spec.scale_rows = f.sf;
  spec.scale_cols = f.sf;
  spec.receptive = f.named_rf;
  if (f.has_plain_rf) spec.receptive[reference] = f.plain_rf;
  for (const std::string& name : bound) {
    if (!spec.receptive.count(name)) {
      throw ArgumentError("--fields misses rf for input '" + name + "'");
    }
  }
  spec.validate();
  return spec;
}

struct ServeOpts {
  std::vector<std::string> inputs;
  std::string model;
  std::string mode = "fullconv";
  std::string fields;
  std::string split = "whole";
  std::int64_t batch = 64;
  std::string output;
  std::string node;
  bool overlap = false;
};

int cmd_serve(const ServeOpts& o) {
  std::vector<NamedPath> named;
  for (const std::string& arg : o.inputs) named.push_back(parse_input_arg(arg));
  const ModelGraph graph_loaded = ModelGraph::load(o.model);
  auto graph = std::make_shared<const ModelGraph>(graph_loaded);
  if (named.size() == 1 && named.front().name.empty() && graph->inputs().size() == 1) {
    named.front().name = graph->inputs().begin()->first;
  }
  std::vector<std::string> bound;
  std::vector<std::unique_ptr<RasterSource>> sources;
  std::vector<BoundInput> bindings;
  for (const NamedPath& np : named) {
    if (np.name.empty()) {
      throw ArgumentError("--input needs name=path when the model has several inputs");
    }
    bound.push_back(np.name);
    sources.push_back(std::make_unique<RasterSource>(np.path));
    bindings.push_back(BoundInput{sources.back().get(), np.name});
  }
  if (bindings.empty()) throw ArgumentError("serve needs at least one --input");

  const std::string node = pick_output_node(*graph, o.node);
  ServeConfig config;
  config.mode = serve_mode_from_name(o.mode);
  config.output = node;
  config.batch = o.batch;
  config.spec = build_field_spec(parse_fields_arg(o.fields), *graph, bound, node);

  ModelServeFilter filter(graph, config, bindings);
  Mapper mapper(&filter, o.output);
  mapper.update_output_information();
  const ImageInfo& info = mapper.output_info();
  std::cout << "output " << info.region.cols << "x" << info.region.rows << "x"
            << info.channels << " " << dtype_name(info.dtype) << " -> " << o.output
            << "\n";
  mapper.on_region = [](const ImageRegion& r, std::int64_t index, std::int64_t total) {
    std::cout << "  region " << (index + 1) << "/" << total << " " << to_string(r)
              << "\n";
  };
  const ExecutionStats stats =
      mapper.execute(SplitStrategy::parse(o.split),
                     o.overlap ? ExecutionMode::overlapped : ExecutionMode::sequential);
  std::cout << "wrote " << stats.written_pixels << " px in " << stats.seconds
            << " s, peak " << stats.peak_tracked_bytes << " B\n";
  return 0;
}

struct SampleOpts {
  std::string input;
  std::string patch;
  std::string strategy = "grid:1";
  std::uint64_t seed = 0;
  std::string output;
  std::string labels_output;
};

int cmd_sample(const SampleOpts& o) {
  const NamedPath np = parse_input_arg(o.input);
  RasterReader reader(np.path);
  const Size2 patch = parse_size2(o.patch, "--patch");
  const SampleStrategy strategy = SampleStrategy::parse(o.strategy, o.seed);
  const SamplePositions positions =
      select_positions(reader.header().full_region(), patch, strategy);
  if (positions.count() == 0) {
    throw ArgumentError("no admissible position for " + to_string(patch) +
                        " patches on a " + std::to_string(reader.header().cols) + "x" +
                        std::to_string(reader.header().rows) + " image");
  }
  const PatchImage patches = extract_patches(reader, positions, patch);
  write_patch_image(o.output, patches, reader.header().geo);
  std::cout << "wrote " << patches.count << " patches of " << to_string(patch) << "x"
            << reader.header().channels << " to " << o.output << "\n";
  if (!o.labels_output.empty()) {
    if (!positions.has_labels) {
      throw ArgumentError("--labels-output needs labeled positions (file strategy)");
    }
    const PixelBuffer labels = label_raster(positions);
    RasterHeader lh;
    lh.cols = 1;
    lh.rows = positions.count();
    lh.channels = 1;
    lh.dtype = DType::u16;
    lh.geo = reader.header().geo;
    RasterWriter writer(o.labels_output, lh);
    writer.write_region(labels);
    writer.finish();
    std::cout << "wrote " << positions.count() << " labels to " << o.labels_output
              << "\n";
  }
  return 0;
}

struct DeriveOpts {
  std::string model;
  std::string reference;
  std::string node;
};

int cmd_derive_fields(const DeriveOpts& o) {
  const ModelGraph graph = ModelGraph::load(o.model);
  const std::string node = pick_output_node(graph, o.node);
  std::string reference = o.reference;
  if (reference.empty()) {
    if (graph.inputs().size() != 1) {
      throw ArgumentError("model has several inputs, pick one with --reference");
    }
    reference = graph.inputs().begin()->first;
  } else if (!graph.inputs().count(reference)) {
    throw ArgumentError("model has no input named '" + reference + "'");
  }

  const FieldSpec spec = derive_fields(graph, reference, node);
  std::cout << "reference: " << spec.reference << "\n";
  std::cout << "output: " << node << "\n";
  for (const auto& [name, rf] : spec.receptive) {
    std::cout << "receptive[" << name << "]: " << to_string(rf) << "\n";
  }
  std::cout << "expression: " << to_string(spec.expression) << "\n";
  std::cout << "scale: " << to_string(spec.scale_rows) << " x "
            << to_string(spec.scale_cols) << "\n";
  std::cout << "step: " << spec.row_field().step() << "x" << spec.col_field().step()
            << "\n";

  const FieldValidation v = validate_fields(graph, node, spec);
  for (const std::string& m : v.messages) std::cout << "note: " << m << "\n";
  std::cout << "validation: " << (v.pass() ? "pass" : "fail") << "\n";
  return v.pass() ? 0 : 1;
}

struct BenchOpts {
  std::string sizes = "256,512,1024";
  std::vector<std::string> splits;
  std::uint64_t seed = 0;
  std::string output = "bench_out";
  std::int64_t channels = 4;
};

// Pool x4 -> conv 5x5 -> relu -> tconv 16x16 s16: receptive 80, expression 16,
// unit scale. Weights are seeded so runs are reproducible.
ModelGraph build_benchmark_graph(std::int64_t in_channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 0.1f);
  auto weights = [&](std::int64_t count) {
    std::vector<float> w(static_cast<std::size_t>(count));
    for (float& v : w) v = dist(rng);
    return w;
  };
  GraphBuilder b;
  int node = b.add_input("x", in_channels);
  for (int i = 0; i < 4; ++i) {
    node = b.add_pool(node, PoolKind::max, Size2{2, 2}, Size2{2, 2});
  }
  node = b.add_conv2d(node, Size2{5, 5}, Size2{1, 1}, Padding::valid, in_channels, 8,
                      weights(5 * 5 * in_channels * 8), weights(8));
  node = b.add_activation(node, ActKind::relu);
  node = b.add_transposed_conv2d(node, Size2{16, 16}, Size2{16, 16}, 8, 1,
                                 weights(16 * 16 * 8 * 1), weights(1));
  b.mark_output("y", node);
  return b.build();
}

int cmd_benchmark(const BenchOpts& o) {
  std::vector<std::int64_t> sizes;
  for (const std::string& tok : split_list(o.sizes, ',')) {
    if (tok.empty()) continue;
    const std::int64_t n = parse_int(tok, "--sizes entry");
    if (n <= 0) throw ArgumentError("--sizes entries must be positive");
    sizes.push_back(n);
  }
  if (sizes.empty()) throw ArgumentError("--sizes is empty");
  std::vector<std::string> splits = o.splits;
  if (splits.empty()) splits = {"striped:64", "whole"};

  std::filesystem::create_directories(o.output);
  auto graph = std::make_shared<const ModelGraph>(
      build_benchmark_graph(o.channels, o.seed));
  const FieldSpec spec = derive_fields(*graph, "x", "y");

  struct Run {
    std::int64_t pixels;
    double seconds;
  };
  std::map<std::string, std::vector<Run>> runs;

  std::cout << "pixels,strategy,stripe,seconds,peak_bytes\n";
  for (const std::int64_t n : sizes) {
    for (const std::string& split_text : splits) {
      const SplitStrategy strategy = SplitStrategy::parse(split_text);
      SyntheticSource source(n, n, o.channels, DType::u16, GeoInfo{}, o.seed);
      ServeConfig config;
      config.mode = ServeMode::fully_convolutional;
      config.spec = spec;
      config.output = "y";
      ModelServeFilter filter(graph, config, {BoundInput{&source, "x"}});
      const std::string path = o.output + "/bench_" + std::to_string(n) + ".rfraw";
      Mapper mapper(&filter, path);
      ExecutionStats stats = mapper.execute(strategy);
      std::int64_t stripe = stats.stripe_rows;
      if (stripe == 0) {
        switch (strategy.kind) {
          case SplitStrategy::Kind::striped: stripe = strategy.stripe_rows; break;
          case SplitStrategy::Kind::tiled: stripe = strategy.tile_rows; break;
          default: stripe = mapper.output_info().region.rows; break;
        }
      }
      std::cout << stats.written_pixels << "," << split_text << "," << stripe << ","
                << stats.seconds << "," << stats.peak_tracked_bytes << "\n";
      runs[split_text].push_back(Run{stats.written_pixels, stats.seconds});
    }
  }

  for (const std::string& split_text : splits) {
    const std::vector<Run>& r = runs[split_text];
    double sx = 0, sy = 0;
    for (const Run& p : r) {
      sx += static_cast<double>(p.pixels);
      sy += p.seconds;
    }
    const double n = static_cast<double>(r.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (const Run& p : r) {
      const double dx = static_cast<double>(p.pixels) - mx;
      const double dy = p.seconds - my;
      sxx += dx * dx;
      sxy += dx * dy;
      syy += dy * dy;
    }
    if (r.size() < 2 || sxx == 0.0 || syy == 0.0) {
      std::cout << "# r2 " << split_text << " n/a\n";
    } else {
      const double r2 = (sxy * sxy) / (sxx * syy);
      std::cout << "# r2 " << split_text << " " << r2 << "\n";
    }
  }
  return 0;
}

}  // namespace
}  // namespace rflow

int main(int argc, char** argv) {
  using namespace rflow;
  CLI::App app{"streaming model serving over RFRAW rasters"};
  app.require_subcommand(1);

  ServeOpts so;
  CLI::App* serve = app.add_subcommand("serve", "run a model over rasters");
  serve->add_option("--input", so.inputs, "input binding name=path")->required();
  serve->add_option("--model", so.model, "model graph json")->required();
  serve->add_option("--mode", so.mode, "patch|fullconv")
      ->check(CLI::IsMember({"patch", "fullconv"}));
  serve->add_option("--fields", so.fields, "rf=RxC,ef=RxC,sf=N[/D] or auto")->required();
  serve->add_option("--split", so.split, "whole|striped:H|tiled:WxH|budget:BYTES");
  serve->add_option("--batch", so.batch, "patch batch size");
  serve->add_option("--output", so.output, "output raster path")->required();
  serve->add_option("--node", so.node, "output tensor name");
  serve->add_flag("--overlap", so.overlap, "overlap compute and writing");

  SampleOpts po;
  CLI::App* sample = app.add_subcommand("sample", "extract training patches");
  sample->add_option("--input", po.input, "source raster [name=]path")->required();
  sample->add_option("--patch", po.patch, "patch size RxC")->required();
  sample->add_option("--strategy", po.strategy, "grid:STEP|random:COUNT|file:PATH");
  sample->add_option("--seed", po.seed, "random sampling seed");
  sample->add_option("--output", po.output, "patch raster path")->required();
  sample->add_option("--labels-output", po.labels_output, "label raster path");

  DeriveOpts dd;
  CLI::App* derive = app.add_subcommand("derive-fields", "derive and check model fields");
  derive->add_option("--model", dd.model, "model graph json")->required();
  derive->add_option("--reference", dd.reference, "reference input name");
  derive->add_option("--node", dd.node, "output tensor name");

  BenchOpts bo;
  CLI::App* bench = app.add_subcommand("benchmark", "time streaming strategies");
  bench->add_option("--sizes", bo.sizes, "comma list of square input sizes");
  bench->add_option("--split", bo.splits, "strategy, repeatable");
  bench->add_option("--seed", bo.seed, "synthetic data seed");
  bench->add_option("--output", bo.output, "scratch directory");
  bench->add_option("--channels", bo.channels, "synthetic input channels");

  int rc = 0;
  serve->callback([&]() { rc = cmd_serve(so); });
  sample->callback([&]() { rc = cmd_sample(po); });
  derive->callback([&]() { rc = cmd_derive_fields(dd); });
  bench->callback([&]() { rc = cmd_benchmark(bo); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
