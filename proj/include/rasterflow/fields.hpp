#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <string>

#include "rasterflow/geo.hpp"
#include "rasterflow/region.hpp"

namespace rflow {

// Positive rational, kept normalized.
struct Ratio {
  std::int64_t num = 1;
  std::int64_t den = 1;

  static Ratio of(std::int64_t num, std::int64_t den = 1);

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool is_integer() const { return den == 1; }
  bool is_one() const { return num == 1 && den == 1; }

  friend bool operator==(const Ratio& a, const Ratio& b) {
    return a.num == b.num && a.den == b.den;
  }
  friend bool operator!=(const Ratio& a, const Ratio& b) { return !(a == b); }
};

Ratio operator*(const Ratio& a, const Ratio& b);
std::string to_string(const Ratio& r);

struct Size2 {
  std::int64_t rows = 0;
  std::int64_t cols = 0;

  friend bool operator==(const Size2& a, const Size2& b) {
    return a.rows == b.rows && a.cols == b.cols;
  }
  friend bool operator!=(const Size2& a, const Size2& b) { return !(a == b); }
};

std::string to_string(const Size2& s);

// One axis of a model's output geometry:
//   receptive   input pixels feeding one output block
//   expression  output pixels produced per block
//   scale       output pixel spacing / reference input pixel spacing
//
// Output is produced in whole expression blocks. Block k covers output
// indices [k*expression, (k+1)*expression) and is computed from the input
// window [k*step, k*step + receptive), where step = expression * scale must
// be a positive integer (the input-space stride between adjacent blocks).
struct AxisField {
  std::int64_t receptive = 1;
  std::int64_t expression = 1;
  Ratio scale;

  bool step_integral() const { return (expression * scale.num) % scale.den == 0; }
  std::int64_t step() const { return expression * scale.num / scale.den; }
};

// Field parameters of a model: per-input receptive fields, the output
// expression field, per-axis scale factors, and which input is the
// geometric reference. All block arithmetic is relative to the reference
// input; secondary inputs are reached through physical grid mapping.
struct FieldSpec {
  std::string reference;
  std::map<std::string, Size2> receptive;  // keyed by input name
  Size2 expression{1, 1};
  Ratio scale_rows;
  Ratio scale_cols;

  const Size2& reference_receptive() const;
  AxisField row_field() const;
  AxisField col_field() const;

  // Throws SpecError if any window is non-positive, the reference input is
  // missing, or expression*scale is not a positive integer on some axis.
  void validate() const;
};

std::string to_string(const FieldSpec& s);

// Number of output pixels along one axis for an input of length n:
// expression * (floor((n - receptive)/step) + 1) when n >= receptive, else 0.
// Only complete expression blocks are produced; trailing input that cannot
// fill a block is dropped rather than padded.
std::int64_t output_length(std::int64_t input_length, const AxisField& axis);

Size2 compute_output_size(const Size2& input_size, const FieldSpec& spec);

// Input span required to produce output span [start, start+size) along one
// axis: exactly the union of the receptive windows of every expression block
// the output span touches. The caller crops the produced blocks back to the
// requested span. Empty output spans map to empty input spans.
void requested_input_span(std::int64_t start, std::int64_t size, const AxisField& axis,
                          std::int64_t& in_start, std::int64_t& in_size);

ImageRegion requested_input_region(const ImageRegion& output_region, const FieldSpec& spec);

// Physical grid of the output image given the reference input's grid.
// Output spacing is the reference spacing scaled per axis; the output origin
// shifts by (receptive - step)/2 reference pixels per axis, which centers
// each expression block on its receptive window. Identity fields leave the
// grid unchanged.
GeoInfo propagate_geo(const GeoInfo& reference, const FieldSpec& spec);

}  // namespace rflow
