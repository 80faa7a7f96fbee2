#include <rasterflow/sampling.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <rasterflow/errors.hpp>

namespace rflow {

SampleStrategy SampleStrategy::grid(std::int64_t step) {
  if (step <= 0) throw ArgumentError("grid sampling step must be positive");
  SampleStrategy s;
  s.kind = Kind::grid;
  s.step = step;
  return s;
}

SampleStrategy SampleStrategy::random(std::int64_t count, std::uint64_t seed) {
  if (count < 0) throw ArgumentError("random sampling count must be non-negative");
  SampleStrategy s;
  s.kind = Kind::random;
  s.count = count;
  s.seed = seed;
  return s;
}

SampleStrategy SampleStrategy::from_file(std::string path) {
  SampleStrategy s;
  s.kind = Kind::from_file;
  s.path = std::move(path);
  return s;
}

SampleStrategy SampleStrategy::parse(const std::string& text, std::uint64_t seed) {
  const auto bad = [&]() -> ArgumentError {
    return ArgumentError("bad sampling strategy '" + text +
                         "' (expected grid:STEP|random:COUNT|file:PATH)");
  };
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos) throw bad();
  const std::string head = text.substr(0, colon);
  const std::string arg = text.substr(colon + 1);
  if (head == "file") {
    if (arg.empty()) throw bad();
    return from_file(arg);
  }
  std::int64_t value = 0;
  try {
    std::size_t used = 0;
    value = std::stoll(arg, &used);
    if (used != arg.size()) throw bad();
  } catch (const ArgumentError&) {
    throw;
  } catch (const std::exception&) {
    throw bad();
  }
  if (head == "grid") return grid(value);
  if (head == "random") return random(value, seed);
  throw bad();
}

std::string to_string(const SampleStrategy& s) {
  switch (s.kind) {
    case SampleStrategy::Kind::grid:
      return "grid:" + std::to_string(s.step);
    case SampleStrategy::Kind::random:
      return "random:" + std::to_string(s.count);
    case SampleStrategy::Kind::from_file:
      return "file:" + s.path;
  }
  return "?";
}

ImageRegion admissible_positions(const ImageRegion& image, const Size2& patch) {
  if (patch.rows <= 0 || patch.cols <= 0) {
    throw ArgumentError("patch size must be positive, got " + to_string(patch));
  }
  ImageRegion r;
  r.col = image.col + (patch.cols - 1) / 2;
  r.row = image.row + (patch.rows - 1) / 2;
  r.cols = std::max<std::int64_t>(image.cols - patch.cols + 1, 0);
  r.rows = std::max<std::int64_t>(image.rows - patch.rows + 1, 0);
  return r;
}

namespace {

SamplePositions grid_positions(const ImageRegion& adm, std::int64_t step) {
  SamplePositions out;
  for (std::int64_t r = adm.row; r < adm.row_end(); r += step) {
    for (std::int64_t c = adm.col; c < adm.col_end(); c += step) {
      out.items.push_back(SamplePosition{c, r, 0});
    }
  }
  return out;
}

SamplePositions random_positions(const ImageRegion& adm, std::int64_t count,
                                 std::uint64_t seed) {
  const std::int64_t total = adm.pixels();
  if (count > total) {
    throw ArgumentError("random sampling asked for " + std::to_string(count) +
                        " positions but only " + std::to_string(total) +
                        " are admissible");
  }
  // Floyd's sampling: uniform without replacement, then row-major order.
  std::mt19937_64 rng(seed);
  std::set<std::int64_t> chosen;
  for (std::int64_t j = total - count; j < total; ++j) {
    std::uniform_int_distribution<std::int64_t> dist(0, j);
    const std::int64_t t = dist(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  SamplePositions out;
  out.items.reserve(static_cast<std::size_t>(count));
  for (std::int64_t index : chosen) {
    out.items.push_back(SamplePosition{adm.col + index % adm.cols,
                                       adm.row + index / adm.cols, 0});
  }
  return out;
}

SamplePositions file_positions(const std::string& path, const ImageRegion& adm) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open position file " + path);
  SamplePositions out;
  std::int64_t labeled = 0;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::int64_t> values;
    std::int64_t v = 0;
    while (ls >> v) values.push_back(v);
    if (!ls.eof()) {
      throw ArgumentError("bad position line " + std::to_string(line_no) + " in " +
                          path + ": '" + line + "'");
    }
    if (values.empty()) continue;
    if (values.size() != 2 && values.size() != 3) {
      throw ArgumentError("bad position line " + std::to_string(line_no) + " in " +
                          path + ": expected 'col row [label]'");
    }
    SamplePosition p;
    p.col = values[0];
    p.row = values[1];
    if (values.size() == 3) {
      p.label = values[2];
      ++labeled;
    }
    if (!adm.contains(p.col, p.row)) {
      throw ArgumentError("position " + std::to_string(out.count()) + " at (" +
                          std::to_string(p.col) + ", " + std::to_string(p.row) +
                          ") does not admit a centered patch");
    }
    out.items.push_back(p);
  }
  if (labeled != 0 && labeled != out.count()) {
    throw ArgumentError("position file " + path +
                        " mixes labeled and unlabeled lines");
  }
  out.has_labels = labeled != 0;
  return out;
}

}  // namespace

SamplePositions select_positions(const ImageRegion& image, const Size2& patch,
                                 const SampleStrategy& strategy) {
  const ImageRegion adm = admissible_positions(image, patch);
  switch (strategy.kind) {
    case SampleStrategy::Kind::grid:
      return grid_positions(adm, strategy.step);
    case SampleStrategy::Kind::random:
      return random_positions(adm, strategy.count, strategy.seed);
    case SampleStrategy::Kind::from_file:
      return file_positions(strategy.path, adm);
  }
  throw ArgumentError("unknown sampling strategy");
}

namespace {

ImageRegion patch_window(const SamplePosition& p, const Size2& patch) {
  return ImageRegion{p.col - (patch.cols - 1) / 2, p.row - (patch.rows - 1) / 2,
                     patch.cols, patch.rows};
}

template <typename Fetch>
PatchImage extract_impl(const ImageRegion& bounds, std::int64_t channels, DType dtype,
                        Fetch&& fetch, const SamplePositions& positions,
                        const Size2& patch) {
  if (patch.rows <= 0 || patch.cols <= 0) {
    throw ArgumentError("patch size must be positive, got " + to_string(patch));
  }
  PatchImage out;
  out.patch = patch;
  out.count = positions.count();
  out.raster = PixelBuffer(ImageRegion{0, 0, patch.cols, out.count * patch.rows},
                           channels, dtype);
  const std::int64_t patch_bytes =
      patch.rows * patch.cols * channels * static_cast<std::int64_t>(dtype_size(dtype));
  for (std::int64_t i = 0; i < out.count; ++i) {
    const SamplePosition& p = positions.items[static_cast<std::size_t>(i)];
    const ImageRegion window = patch_window(p, patch);
    if (!bounds.contains(window)) {
      throw ArgumentError("patch " + std::to_string(i) + " at (" +
                          std::to_string(p.col) + ", " + std::to_string(p.row) +
                          ") falls outside the image");
    }
    const PixelBuffer piece = fetch(window);
    std::memcpy(out.raster.bytes().data() + i * patch_bytes, piece.bytes().data(),
                static_cast<std::size_t>(patch_bytes));
  }
  return out;
}

}  // namespace

PatchImage extract_patches(RasterReader& reader, const SamplePositions& positions,
                           const Size2& patch) {
  const RasterHeader& h = reader.header();
  return extract_impl(
      h.full_region(), h.channels, h.dtype,
      [&](const ImageRegion& window) { return reader.read_region(window); },
      positions, patch);
}

PatchImage extract_patches(const PixelBuffer& image, const SamplePositions& positions,
                           const Size2& patch) {
  if (image.region().col != 0 || image.region().row != 0) {
    throw ArgumentError("patch extraction expects a buffer anchored at (0, 0)");
  }
  return extract_impl(
      image.region(), image.channels(), image.dtype(),
      [&](const ImageRegion& window) { return crop(image, window); }, positions,
      patch);
}

PixelBuffer label_raster(const SamplePositions& positions) {
  PixelBuffer out(ImageRegion{0, 0, 1, positions.count()}, 1, DType::u16);
  auto values = out.values<std::uint16_t>();
  for (std::int64_t i = 0; i < positions.count(); ++i) {
    const std::int64_t label = positions.items[static_cast<std::size_t>(i)].label;
    if (label < 0 || label > 0xFFFF) {
      throw ArgumentError("label " + std::to_string(label) + " of position " +
                          std::to_string(i) + " does not fit u16");
    }
    values[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(label);
  }
  return out;
}

void write_patch_image(const std::string& path, const PatchImage& patches,
                       const GeoInfo& geo) {
  RasterHeader header;
  header.cols = patches.raster.region().cols;
  header.rows = patches.raster.region().rows;
  header.channels = patches.raster.channels();
  header.dtype = patches.raster.dtype();
  header.geo = geo;
  RasterWriter writer(path, header);
  writer.write_region(patches.raster);
  writer.finish();
}

}  // namespace rflow
