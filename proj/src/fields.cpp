#include "rasterflow/fields.hpp"

#include <numeric>
#include <sstream>

#include "rasterflow/errors.hpp"

namespace rflow {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

}  // namespace

Ratio Ratio::of(std::int64_t num, std::int64_t den) {
  if (num <= 0 || den <= 0) {
    throw SpecError("scale factor must be positive, got " + std::to_string(num) + "/" +
                    std::to_string(den));
  }
  const std::int64_t g = std::gcd(num, den);
  return Ratio{num / g, den / g};
}

Ratio operator*(const Ratio& a, const Ratio& b) { return Ratio::of(a.num * b.num, a.den * b.den); }

std::string to_string(const Ratio& r) {
  if (r.den == 1) return std::to_string(r.num);
  return std::to_string(r.num) + "/" + std::to_string(r.den);
}

std::string to_string(const Size2& s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

const Size2& FieldSpec::reference_receptive() const {
  auto it = receptive.find(reference);
  if (it == receptive.end()) {
    throw SpecError("field spec has no receptive field for reference input '" + reference + "'");
  }
  return it->second;
}

AxisField FieldSpec::row_field() const {
  return AxisField{reference_receptive().rows, expression.rows, scale_rows};
}

AxisField FieldSpec::col_field() const {
  return AxisField{reference_receptive().cols, expression.cols, scale_cols};
}

void FieldSpec::validate() const {
  if (receptive.empty()) throw SpecError("field spec declares no inputs");
  for (const auto& [name, rf] : receptive) {
    if (rf.rows <= 0 || rf.cols <= 0) {
      throw SpecError("receptive field of input '" + name + "' must be positive, got " +
                      to_string(rf));
    }
  }
  reference_receptive();
  if (expression.rows <= 0 || expression.cols <= 0) {
    throw SpecError("expression field must be positive, got " + to_string(expression));
  }
  if (!row_field().step_integral() || !col_field().step_integral()) {
    throw SpecError("expression field " + to_string(expression) + " times scale factor (" +
                    to_string(scale_rows) + ", " + to_string(scale_cols) +
                    ") must be an integer per axis");
  }
}

std::string to_string(const FieldSpec& s) {
  std::ostringstream os;
  os << "rf{";
  bool first = true;
  for (const auto& [name, rf] : s.receptive) {
    if (!first) os << ", ";
    os << name << ":" << to_string(rf);
    first = false;
  }
  os << "} ef " << to_string(s.expression) << " sf (" << to_string(s.scale_rows) << ", "
     << to_string(s.scale_cols) << ") ref '" << s.reference << "'";
  return os.str();
}

std::int64_t output_length(std::int64_t input_length, const AxisField& axis) {
  if (!axis.step_integral()) {
    throw SpecError("expression " + std::to_string(axis.expression) + " times scale " +
                    to_string(axis.scale) + " is not an integer");
  }
  if (input_length < axis.receptive) return 0;
  const std::int64_t blocks = (input_length - axis.receptive) / axis.step() + 1;
  return blocks * axis.expression;
}

Size2 compute_output_size(const Size2& input_size, const FieldSpec& spec) {
  spec.validate();
  return Size2{output_length(input_size.rows, spec.row_field()),
               output_length(input_size.cols, spec.col_field())};
}

void requested_input_span(std::int64_t start, std::int64_t size, const AxisField& axis,
                          std::int64_t& in_start, std::int64_t& in_size) {
  if (size <= 0) {
    in_start = 0;
    in_size = 0;
    return;
  }
  const std::int64_t e = axis.expression;
  const std::int64_t d = axis.step();
  const std::int64_t first_block = floor_div(start, e);
  const std::int64_t last_block = ceil_div(start + size, e) - 1;
  in_start = first_block * d;
  in_size = (last_block - first_block) * d + axis.receptive;
}

ImageRegion requested_input_region(const ImageRegion& output_region, const FieldSpec& spec) {
  spec.validate();
  if (output_region.empty()) return ImageRegion{};
  ImageRegion in;
  requested_input_span(output_region.col, output_region.cols, spec.col_field(), in.col, in.cols);
  requested_input_span(output_region.row, output_region.rows, spec.row_field(), in.row, in.rows);
  return in;
}

GeoInfo propagate_geo(const GeoInfo& reference, const FieldSpec& spec) {
  spec.validate();
  const AxisField fr = spec.row_field();
  const AxisField fc = spec.col_field();
  GeoInfo out;
  out.spacing_x = reference.spacing_x * fc.scale.value();
  out.spacing_y = reference.spacing_y * fr.scale.value();
  out.origin_x =
      reference.origin_x + reference.spacing_x * static_cast<double>(fc.receptive - fc.step()) / 2.0;
  out.origin_y =
      reference.origin_y + reference.spacing_y * static_cast<double>(fr.receptive - fr.step()) / 2.0;
  out.projection = reference.projection;
  return out;
}

}  // namespace rflow
