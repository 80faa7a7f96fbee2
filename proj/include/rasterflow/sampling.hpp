#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <rasterflow/fields.hpp>
#include <rasterflow/raster_io.hpp>
#include <rasterflow/region.hpp>

namespace rflow {

// Patch sampling: positions are pixel indices (col, row) on the source grid.
// A patch of size S centered at a position has its top-left corner at
// position - floor((S - 1) / 2) per axis, and a position is admissible only
// when that whole patch lies inside the image.

struct SamplePosition {
  std::int64_t col = 0;
  std::int64_t row = 0;
  std::int64_t label = 0;
};

struct SamplePositions {
  std::vector<SamplePosition> items;
  bool has_labels = false;

  std::int64_t count() const { return static_cast<std::int64_t>(items.size()); }
};

struct SampleStrategy {
  enum class Kind { grid, random, from_file };

  Kind kind = Kind::grid;
  std::int64_t step = 1;        // grid
  std::int64_t count = 0;       // random
  std::uint64_t seed = 0;       // random
  std::string path;             // from_file

  static SampleStrategy grid(std::int64_t step);
  static SampleStrategy random(std::int64_t count, std::uint64_t seed);
  static SampleStrategy from_file(std::string path);

  // grid:STEP | random:COUNT | file:PATH (seed supplied separately)
  static SampleStrategy parse(const std::string& text, std::uint64_t seed);
};

std::string to_string(const SampleStrategy& s);

// Inclusive admissible position range per axis, or an empty region when the
// patch does not fit at all.
ImageRegion admissible_positions(const ImageRegion& image, const Size2& patch);

// Positions are returned in row-major order for every strategy except
// from_file, which preserves file order.
SamplePositions select_positions(const ImageRegion& image, const Size2& patch,
                                 const SampleStrategy& strategy);

// Stacked patches: count * patch.rows x patch.cols x source channels, patch i
// occupying rows [i * patch.rows, (i + 1) * patch.rows). The payload of patch
// i is byte-identical to a read_region of its window.
struct PatchImage {
  PixelBuffer raster{ImageRegion{}, 1, DType::f32};
  Size2 patch{0, 0};
  std::int64_t count = 0;
};

PatchImage extract_patches(RasterReader& reader, const SamplePositions& positions,
                           const Size2& patch);

// Convenience for in-memory sources; buffer region must be anchored at (0, 0).
PatchImage extract_patches(const PixelBuffer& image, const SamplePositions& positions,
                           const Size2& patch);

// count x 1 x 1 u16 raster carrying the per-patch labels, parallel to the
// patch stack.
PixelBuffer label_raster(const SamplePositions& positions);

void write_patch_image(const std::string& path, const PatchImage& patches,
                       const GeoInfo& geo);

}  // namespace rflow
