#pragma once

#include <cstdint>
#include <string>

#include "rasterflow/region.hpp"

namespace rflow {

// Relative tolerance for physical grid alignment, in units of the finer
// of the two pixel spacings being compared.
inline constexpr double kGridAlignTol = 1e-6;

// Physical placement of an image grid. `origin` is the physical coordinate
// of the CENTER of pixel (0,0); `spacing` is the signed physical size of one
// pixel step along each axis (columns advance x, rows advance y).
struct GeoInfo {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double spacing_x = 1.0;
  double spacing_y = 1.0;
  std::string projection;

  bool valid() const { return spacing_x != 0.0 && spacing_y != 0.0; }
};

std::string to_string(const GeoInfo& g);

// floor/ceil that first snap values within kGridAlignTol of an integer,
// absorbing float noise in grid arithmetic.
std::int64_t snapped_floor(double t);
std::int64_t snapped_ceil(double t);

// Two grids are aligned when their pixel centers lie on compatible physical
// lattices: per axis, the coarser spacing is an integer multiple of the finer
// one and the origin difference is an integer multiple of the finer spacing,
// both within kGridAlignTol of the finer spacing.
bool grids_aligned(const GeoInfo& a, const GeoInfo& b);

// Smallest region on the target grid whose physical footprint covers the
// footprint of `region` on the source grid. Footprints are measured edge to
// edge: region [a, a+n) spans physical [origin + a*spacing, origin +
// (a+n)*spacing). Throws AlignmentError (naming both grids) when the grids
// are not aligned.
ImageRegion map_region_between_grids(const ImageRegion& region, const GeoInfo& from,
                                     const GeoInfo& to);

}  // namespace rflow
