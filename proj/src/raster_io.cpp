#include "rasterflow/raster_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "rasterflow/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "RFRAW I/O assumes a little-endian host");

namespace rflow {

namespace {

void check_header(const RasterHeader& h, const std::string& path) {
  if (h.cols <= 0 || h.rows <= 0 || h.channels <= 0) {
    throw IoError("raster '" + path + "' has non-positive dimensions " + std::to_string(h.cols) +
                  "x" + std::to_string(h.rows) + "x" + std::to_string(h.channels));
  }
  if (!h.geo.valid()) {
    throw IoError("raster '" + path + "' has zero pixel spacing");
  }
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::u8: return 1;
    case DType::u16: return 2;
    case DType::f32: return 4;
  }
  return 0;
}

const char* dtype_name(DType t) {
  switch (t) {
    case DType::u8: return "u8";
    case DType::u16: return "u16";
    case DType::f32: return "f32";
  }
  return "?";
}

DType dtype_from_name(const std::string& name) {
  if (name == "u8") return DType::u8;
  if (name == "u16") return DType::u16;
  if (name == "f32") return DType::f32;
  throw IoError("unknown element type '" + name + "' (expected u8, u16 or f32)");
}

std::string sidecar_path(const std::string& raster_path) { return raster_path + ".json"; }

RasterHeader read_header(const std::string& raster_path) {
  const std::string side = sidecar_path(raster_path);
  std::ifstream in(side);
  if (!in) throw IoError("cannot open raster sidecar '" + side + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed raster sidecar '" + side + "': " + e.what());
  }
  RasterHeader h;
  try {
    h.cols = j.at("cols").get<std::int64_t>();
    h.rows = j.at("rows").get<std::int64_t>();
    h.channels = j.at("channels").get<std::int64_t>();
    h.dtype = dtype_from_name(j.at("dtype").get<std::string>());
    h.geo.origin_x = j.at("origin_x").get<double>();
    h.geo.origin_y = j.at("origin_y").get<double>();
    h.geo.spacing_x = j.at("spacing_x").get<double>();
    h.geo.spacing_y = j.at("spacing_y").get<double>();
    h.geo.projection = j.at("projection").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("raster sidecar '" + side + "' is missing fields: " + e.what());
  }
  check_header(h, raster_path);
  return h;
}

void write_header(const std::string& raster_path, const RasterHeader& header) {
  nlohmann::json j;
  j["cols"] = header.cols;
  j["rows"] = header.rows;
  j["channels"] = header.channels;
  j["dtype"] = dtype_name(header.dtype);
  j["origin_x"] = header.geo.origin_x;
  j["origin_y"] = header.geo.origin_y;
  j["spacing_x"] = header.geo.spacing_x;
  j["spacing_y"] = header.geo.spacing_y;
  j["projection"] = header.geo.projection;
  const std::string side = sidecar_path(raster_path);
  std::ofstream out(side);
  if (!out) throw IoError("cannot create raster sidecar '" + side + "'");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing raster sidecar '" + side + "'");
}

PixelBuffer::PixelBuffer(const ImageRegion& region, std::int64_t channels, DType dtype)
    : region_(region), channels_(channels), dtype_(dtype) {
  const std::int64_t n = region.pixels() * channels * static_cast<std::int64_t>(dtype_size(dtype));
  data_.resize(static_cast<std::size_t>(n));
  tracked_.resize(n);
}

double PixelBuffer::value_at(std::int64_t col, std::int64_t row, std::int64_t channel) const {
  const std::int64_t i = value_index(col, row, channel);
  switch (dtype_) {
    case DType::u8: return static_cast<double>(values<std::uint8_t>()[i]);
    case DType::u16: return static_cast<double>(values<std::uint16_t>()[i]);
    case DType::f32: return static_cast<double>(values<float>()[i]);
  }
  return 0.0;
}

PixelBuffer crop(const PixelBuffer& src, const ImageRegion& region) {
  if (!src.region().contains(region)) {
    throw ContractError("crop region " + to_string(region) + " exceeds buffer " +
                        to_string(src.region()));
  }
  PixelBuffer out(region, src.channels(), src.dtype());
  const std::size_t esz = dtype_size(src.dtype());
  const std::size_t row_bytes = static_cast<std::size_t>(region.cols * src.channels()) * esz;
  for (std::int64_t r = 0; r < region.rows; ++r) {
    const std::int64_t src_off =
        src.value_index(region.col, region.row + r, 0) * static_cast<std::int64_t>(esz);
    std::memcpy(out.bytes().data() + static_cast<std::size_t>(r) * row_bytes,
                src.bytes().data() + src_off, row_bytes);
  }
  return out;
}

RasterReader::RasterReader(const std::string& path)
    : path_(path), header_(read_header(path)), file_(path, std::ios::binary) {
  if (!file_) throw IoError("cannot open raster payload '" + path + "'");
  std::error_code ec;
  const auto actual = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat raster payload '" + path + "'");
  if (static_cast<std::int64_t>(actual) != header_.payload_bytes()) {
    throw IoError("raster '" + path + "' payload is " + std::to_string(actual) +
                  " bytes, header implies " + std::to_string(header_.payload_bytes()));
  }
}

PixelBuffer RasterReader::read_region(const ImageRegion& region) {
  if (!header_.full_region().contains(region)) {
    throw IoError("read of region " + to_string(region) + " outside raster '" + path_ + "' " +
                  to_string(header_.full_region()));
  }
  PixelBuffer buf(region, header_.channels, header_.dtype);
  if (region.empty()) return buf;
  const std::int64_t esz = static_cast<std::int64_t>(dtype_size(header_.dtype));
  const std::int64_t row_values = region.cols * header_.channels;
  const std::int64_t row_bytes = row_values * esz;
  for (std::int64_t r = 0; r < region.rows; ++r) {
    const std::int64_t offset =
        (((region.row + r) * header_.cols) + region.col) * header_.channels * esz;
    file_.seekg(offset);
    file_.read(reinterpret_cast<char*>(buf.bytes().data() + r * row_bytes), row_bytes);
    if (!file_) throw IoError("short read from raster '" + path_ + "' at row " +
                              std::to_string(region.row + r));
  }
  return buf;
}

RasterWriter::RasterWriter(const std::string& path, const RasterHeader& header, bool checked)
    : path_(path), header_(header), checked_(checked) {
  check_header(header, path);
  write_header(path, header);
  file_.open(path, std::ios::binary | std::ios::trunc);
  if (!file_) throw IoError("cannot create raster payload '" + path + "'");
  if (checked_) coverage_.assign(static_cast<std::size_t>(header.rows * header.cols), false);
}

RasterWriter::~RasterWriter() {
  try {
    finish();
  } catch (...) {
  }
}

void RasterWriter::write_region(const PixelBuffer& buffer) {
  const ImageRegion& region = buffer.region();
  if (!header_.full_region().contains(region)) {
    throw IoError("write of region " + to_string(region) + " outside raster '" + path_ + "' " +
                  to_string(header_.full_region()));
  }
  if (buffer.channels() != header_.channels || buffer.dtype() != header_.dtype) {
    throw ContractError("buffer geometry " + std::to_string(buffer.channels()) + " ch " +
                        dtype_name(buffer.dtype()) + " does not match raster '" + path_ + "'");
  }
  if (region.empty()) return;
  if (checked_) {
    for (std::int64_t r = region.row; r < region.row_end(); ++r) {
      for (std::int64_t c = region.col; c < region.col_end(); ++c) {
        const std::size_t i = static_cast<std::size_t>(r * header_.cols + c);
        if (coverage_[i]) {
          throw IoError("overlapping write at pixel (" + std::to_string(c) + ", " +
                        std::to_string(r) + ") in region " + to_string(region) + " of '" + path_ +
                        "'");
        }
        coverage_[i] = true;
      }
    }
  }
  covered_pixels_ += region.pixels();
  const std::int64_t esz = static_cast<std::int64_t>(dtype_size(header_.dtype));
  const std::int64_t row_bytes = region.cols * header_.channels * esz;
  for (std::int64_t r = 0; r < region.rows; ++r) {
    const std::int64_t offset =
        (((region.row + r) * header_.cols) + region.col) * header_.channels * esz;
    if (offset != file_offset_) {
      file_.seekp(offset);
      file_offset_ = offset;
    }
    file_.write(reinterpret_cast<const char*>(buffer.bytes().data() + r * row_bytes), row_bytes);
    file_offset_ += row_bytes;
    if (!file_) {
      throw IoError("failed writing region " + to_string(region) + " to raster '" + path_ + "'");
    }
  }
}

bool RasterWriter::fully_covered() const {
  return covered_pixels_ == header_.rows * header_.cols;
}

void RasterWriter::finish() {
  if (finished_) return;
  finished_ = true;
  // Pad the payload out to its declared size so partially written images
  // still satisfy the header/payload size invariant.
  const std::int64_t total = header_.payload_bytes();
  file_.seekp(0, std::ios::end);
  std::int64_t end = static_cast<std::int64_t>(file_.tellp());
  if (end < total) {
    file_.seekp(total - 1);
    const char zero = 0;
    file_.write(&zero, 1);
  }
  file_.flush();
  if (!file_) throw IoError("failed finalizing raster '" + path_ + "'");
  file_.close();
}

}  // namespace rflow
