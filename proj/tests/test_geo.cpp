#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <rasterflow/errors.hpp>
#include <rasterflow/geo.hpp>

using namespace rflow;

namespace {

GeoInfo grid(double origin, double spacing) {
  GeoInfo g;
  g.origin_x = origin;
  g.origin_y = origin;
  g.spacing_x = spacing;
  g.spacing_y = spacing;
  return g;
}

}  // namespace

TEST_CASE("snapped floor and ceil absorb float noise") {
  CHECK(snapped_floor(2.0000000001) == 2);
  CHECK(snapped_floor(1.9999999999) == 2);
  CHECK(snapped_floor(1.5) == 1);
  CHECK(snapped_floor(-0.5) == -1);
  CHECK(snapped_ceil(1.9999999999) == 2);
  CHECK(snapped_ceil(2.0000000001) == 2);
  CHECK(snapped_ceil(1.5) == 2);
  CHECK(snapped_ceil(-1.5) == -1);
}

TEST_CASE("alignment requires integer spacing ratio and origin offset") {
  CHECK(grids_aligned(grid(0, 10), grid(0, 5)));
  CHECK(grids_aligned(grid(0, 5), grid(0, 10)));
  CHECK(grids_aligned(grid(0, 10), grid(0, 10)));
  CHECK(grids_aligned(grid(2.5, 10), grid(0, 2.5)));
  CHECK_FALSE(grids_aligned(grid(0, 10), grid(0, 1.5)));
  CHECK_FALSE(grids_aligned(grid(0.3, 10), grid(0, 10)));
  // negative spacings (north-up rasters) still align
  GeoInfo a = grid(0, 10);
  a.spacing_y = -10;
  GeoInfo b = grid(0, 5);
  b.spacing_y = -5;
  CHECK(grids_aligned(a, b));
}

TEST_CASE("misaligned grids raise an alignment error naming both") {
  try {
    map_region_between_grids(ImageRegion{0, 0, 10, 10}, grid(0, 10), grid(0, 1.5));
    FAIL("expected AlignmentError");
  } catch (const AlignmentError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("10") != std::string::npos);
    CHECK(msg.find("1.5") != std::string::npos);
  }
}

TEST_CASE("identity mapping on the same grid") {
  GeoInfo g = grid(17.5, 2.5);
  ImageRegion r{3, 3, 4, 4};
  CHECK(map_region_between_grids(r, g, g) == r);
}

TEST_CASE("coarse to fine doubles indices") {
  ImageRegion r{0, 0, 10, 10};
  CHECK(map_region_between_grids(r, grid(0, 10), grid(0, 5)) ==
        ImageRegion{0, 0, 20, 20});
}

TEST_CASE("fine to coarse rounds outward") {
  // fine pixels [3, 7) span physical [6, 14); coarse pixels are 4 units wide
  // so the cover is coarse [1, 4)
  ImageRegion mapped =
      map_region_between_grids(ImageRegion{3, 3, 4, 4}, grid(0, 2), grid(0, 4));
  CHECK(mapped == ImageRegion{1, 1, 3, 3});
}

TEST_CASE("mapping round trip never shrinks the footprint") {
  for (std::int64_t a = 0; a < 12; ++a) {
    for (std::int64_t n = 1; n < 9; ++n) {
      ImageRegion r{a, a, n, n};
      ImageRegion down = map_region_between_grids(r, grid(0, 5), grid(0, 15));
      ImageRegion back = map_region_between_grids(down, grid(0, 15), grid(0, 5));
      CHECK(back.contains(r));
      // and the cover is tight: one coarse pixel less no longer covers
      CHECK(down.cols * 3 >= n);
      CHECK((down.cols - 1) * 3 < n + 2 * 3);
    }
  }
}

TEST_CASE("empty region maps to empty") {
  CHECK(map_region_between_grids(ImageRegion{}, grid(0, 10), grid(0, 5)).empty());
}
