#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <string>

namespace rflow {

// Rectangular pixel region on an image grid: top-left index plus size.
// Sizes are never negative; a region with any zero size component is empty
// and intersects nothing.
struct ImageRegion {
  std::int64_t col = 0;
  std::int64_t row = 0;
  std::int64_t cols = 0;
  std::int64_t rows = 0;

  constexpr bool empty() const { return cols <= 0 || rows <= 0; }
  constexpr std::int64_t pixels() const { return empty() ? 0 : cols * rows; }
  constexpr std::int64_t col_end() const { return col + cols; }
  constexpr std::int64_t row_end() const { return row + rows; }

  constexpr bool contains(std::int64_t c, std::int64_t r) const {
    return !empty() && c >= col && c < col_end() && r >= row && r < row_end();
  }

  constexpr bool contains(const ImageRegion& other) const {
    if (other.empty()) return true;
    return !empty() && other.col >= col && other.row >= row &&
           other.col_end() <= col_end() && other.row_end() <= row_end();
  }

  friend constexpr bool operator==(const ImageRegion& a, const ImageRegion& b) {
    if (a.empty() && b.empty()) return true;
    return a.col == b.col && a.row == b.row && a.cols == b.cols && a.rows == b.rows;
  }
  friend constexpr bool operator!=(const ImageRegion& a, const ImageRegion& b) {
    return !(a == b);
  }
};

constexpr ImageRegion intersect(const ImageRegion& a, const ImageRegion& b) {
  if (a.empty() || b.empty()) return ImageRegion{};
  const std::int64_t c0 = std::max(a.col, b.col);
  const std::int64_t r0 = std::max(a.row, b.row);
  const std::int64_t c1 = std::min(a.col_end(), b.col_end());
  const std::int64_t r1 = std::min(a.row_end(), b.row_end());
  if (c1 <= c0 || r1 <= r0) return ImageRegion{};
  return ImageRegion{c0, r0, c1 - c0, r1 - r0};
}

// Smallest region containing both operands. An empty operand does not
// contribute extent.
constexpr ImageRegion bounding_union(const ImageRegion& a, const ImageRegion& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  const std::int64_t c0 = std::min(a.col, b.col);
  const std::int64_t r0 = std::min(a.row, b.row);
  const std::int64_t c1 = std::max(a.col_end(), b.col_end());
  const std::int64_t r1 = std::max(a.row_end(), b.row_end());
  return ImageRegion{c0, r0, c1 - c0, r1 - r0};
}

inline std::string to_string(const ImageRegion& r) {
  return "[col " + std::to_string(r.col) + " +" + std::to_string(r.cols) + ", row " +
         std::to_string(r.row) + " +" + std::to_string(r.rows) + "]";
}

inline std::ostream& operator<<(std::ostream& os, const ImageRegion& r) {
  return os << to_string(r);
}

}  // namespace rflow
