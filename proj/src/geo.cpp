#include "rasterflow/geo.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rasterflow/errors.hpp"

namespace rflow {

namespace {

bool axis_aligned(double origin_a, double spacing_a, double origin_b, double spacing_b) {
  const double fine = std::min(std::fabs(spacing_a), std::fabs(spacing_b));
  const double coarse = std::max(std::fabs(spacing_a), std::fabs(spacing_b));
  const double ratio = coarse / fine;
  if (std::fabs(ratio - std::round(ratio)) > kGridAlignTol) return false;
  const double shift = (origin_b - origin_a) / fine;
  return std::fabs(shift - std::round(shift)) <= kGridAlignTol;
}

// Map the edge-to-edge footprint of [start, start+size) from one axis grid
// to the covering index span on another.
void map_axis(std::int64_t start, std::int64_t size, double origin_from, double spacing_from,
              double origin_to, double spacing_to, std::int64_t& out_start,
              std::int64_t& out_size) {
  const double p0 = origin_from + static_cast<double>(start) * spacing_from;
  const double p1 = origin_from + static_cast<double>(start + size) * spacing_from;
  const double t0 = (p0 - origin_to) / spacing_to;
  const double t1 = (p1 - origin_to) / spacing_to;
  const std::int64_t lo = snapped_floor(std::min(t0, t1));
  const std::int64_t hi = snapped_ceil(std::max(t0, t1));
  out_start = lo;
  out_size = hi - lo;
}

}  // namespace

std::int64_t snapped_floor(double t) {
  const double r = std::round(t);
  if (std::fabs(t - r) <= kGridAlignTol) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::floor(t));
}

std::int64_t snapped_ceil(double t) {
  const double r = std::round(t);
  if (std::fabs(t - r) <= kGridAlignTol) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(t));
}

std::string to_string(const GeoInfo& g) {
  std::ostringstream os;
  os << "origin(" << g.origin_x << ", " << g.origin_y << ") spacing(" << g.spacing_x << ", "
     << g.spacing_y << ")";
  if (!g.projection.empty()) os << " proj '" << g.projection << "'";
  return os.str();
}

bool grids_aligned(const GeoInfo& a, const GeoInfo& b) {
  if (!a.valid() || !b.valid()) return false;
  return axis_aligned(a.origin_x, a.spacing_x, b.origin_x, b.spacing_x) &&
         axis_aligned(a.origin_y, a.spacing_y, b.origin_y, b.spacing_y);
}

ImageRegion map_region_between_grids(const ImageRegion& region, const GeoInfo& from,
                                     const GeoInfo& to) {
  if (!grids_aligned(from, to)) {
    throw AlignmentError("grids are not aligned: source " + to_string(from) + " vs target " +
                         to_string(to));
  }
  ImageRegion out;
  map_axis(region.col, region.cols, from.origin_x, from.spacing_x, to.origin_x, to.spacing_x,
           out.col, out.cols);
  map_axis(region.row, region.rows, from.origin_y, from.spacing_y, to.origin_y, to.spacing_y,
           out.row, out.rows);
  if (region.empty()) {
    out.cols = 0;
    out.rows = 0;
  }
  return out;
}

}  // namespace rflow
