#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rasterflow/geo.hpp"
#include "rasterflow/memory.hpp"
#include "rasterflow/region.hpp"

namespace rflow {

enum class DType : std::uint8_t { u8, u16, f32 };

std::size_t dtype_size(DType t);
const char* dtype_name(DType t);
DType dtype_from_name(const std::string& name);

// Header of an RFRAW raster: a flat little-endian payload file `name.rfraw`
// (row-major, channel-last interleave, no compression) plus a JSON sidecar
// `name.rfraw.json` carrying these fields. Payload size must equal
// rows*cols*channels*element_size exactly.
struct RasterHeader {
  std::int64_t cols = 0;
  std::int64_t rows = 0;
  std::int64_t channels = 0;
  DType dtype = DType::f32;
  GeoInfo geo;

  std::int64_t payload_bytes() const {
    return rows * cols * channels * static_cast<std::int64_t>(dtype_size(dtype));
  }
  ImageRegion full_region() const { return ImageRegion{0, 0, cols, rows}; }
};

std::string sidecar_path(const std::string& raster_path);
RasterHeader read_header(const std::string& raster_path);
void write_header(const std::string& raster_path, const RasterHeader& header);

// Pixel data of one region: contiguous row-major, channel-last values.
// Allocation is reported to the MemoryTracker.
class PixelBuffer {
 public:
  PixelBuffer() = default;
  PixelBuffer(const ImageRegion& region, std::int64_t channels, DType dtype);

  const ImageRegion& region() const { return region_; }
  std::int64_t channels() const { return channels_; }
  DType dtype() const { return dtype_; }
  std::int64_t value_count() const { return region_.pixels() * channels_; }
  std::int64_t byte_count() const { return static_cast<std::int64_t>(data_.size()); }

  std::span<const std::byte> bytes() const { return data_; }
  std::span<std::byte> bytes() { return data_; }

  template <typename T>
  std::span<const T> values() const {
    return {reinterpret_cast<const T*>(data_.data()), data_.size() / sizeof(T)};
  }
  template <typename T>
  std::span<T> values() {
    return {reinterpret_cast<T*>(data_.data()), data_.size() / sizeof(T)};
  }

  // Value index of (col, row, channel) in absolute image coordinates.
  std::int64_t value_index(std::int64_t col, std::int64_t row, std::int64_t channel) const {
    return ((row - region_.row) * region_.cols + (col - region_.col)) * channels_ + channel;
  }

  // Reads one value as double regardless of element type.
  double value_at(std::int64_t col, std::int64_t row, std::int64_t channel) const;

 private:
  ImageRegion region_;
  std::int64_t channels_ = 0;
  DType dtype_ = DType::f32;
  std::vector<std::byte> data_;
  TrackedBytes tracked_;
};

// Copies the intersection-free sub-rectangle `region` out of `src`;
// `region` must be contained in src.region().
PixelBuffer crop(const PixelBuffer& src, const ImageRegion& region);

// Seekable region reader. I/O per request is proportional to the region
// size (one contiguous read per row), independent of total image size.
// Not safe for concurrent use of one instance; open one reader per thread.
class RasterReader {
 public:
  explicit RasterReader(const std::string& path);

  const RasterHeader& header() const { return header_; }
  const std::string& path() const { return path_; }

  // Throws IoError when the region is not fully inside the image.
  PixelBuffer read_region(const ImageRegion& region);

 private:
  std::string path_;
  RasterHeader header_;
  std::ifstream file_;
};

// Region writer over a fixed-size payload created up front. Regions arriving
// in row-major order append without seeking; out-of-order regions seek.
// In checked mode a coverage bitmap rejects overlapping writes.
class RasterWriter {
 public:
  RasterWriter(const std::string& path, const RasterHeader& header, bool checked = false);
  ~RasterWriter();

  const RasterHeader& header() const { return header_; }

  // Buffer geometry (channels, dtype) must match the header; the region must
  // be inside the image.
  void write_region(const PixelBuffer& buffer);

  bool fully_covered() const;
  void finish();

 private:
  std::string path_;
  RasterHeader header_;
  std::ofstream file_;
  std::int64_t file_offset_ = 0;
  bool checked_ = false;
  bool finished_ = false;
  std::vector<bool> coverage_;
  std::int64_t covered_pixels_ = 0;
};

}  // namespace rflow
