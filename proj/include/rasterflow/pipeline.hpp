#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rasterflow/geo.hpp"
#include "rasterflow/raster_io.hpp"
#include "rasterflow/region.hpp"

namespace rflow {

// Generated output information of one process object.
struct ImageInfo {
  ImageRegion region;  // full extent, anchored at (0, 0)
  std::int64_t channels = 0;
  DType dtype = DType::f32;
  GeoInfo geo;
};

std::string to_string(const ImageInfo& info);

// Node of the demand-driven pipeline graph. Information flows downstream
// once (update_info), requested regions flow upstream on every produce call.
// Nodes do not own their upstream objects; the caller keeps them alive.
class ProcessObject {
 public:
  virtual ~ProcessObject() = default;

  virtual std::string name() const = 0;

  const std::vector<ProcessObject*>& upstream() const { return upstream_; }

  // Generates this node's ImageInfo from upstream infos. Idempotent; throws
  // ContractError when the graph contains a cycle.
  void update_info();
  bool info_ready() const { return info_.has_value(); }
  const ImageInfo& info() const;

  // Computes exactly `region`, pulling the required upstream regions first.
  // Producing anything other than the requested region (or a region a source
  // does not contain) is a contract violation.
  PixelBuffer produce(const ImageRegion& region);

  // Region each upstream object must provide, in upstream order.
  virtual std::vector<ImageRegion> required_input_regions(const ImageRegion& region) const;

  // Bytes live while computing `region` beyond the input/output pixel
  // buffers (e.g. model tensors). Used by footprint accounting only.
  virtual std::int64_t extra_bytes(const ImageRegion& region) const;

 protected:
  explicit ProcessObject(std::vector<ProcessObject*> upstream);

  virtual ImageInfo generate_info() = 0;
  virtual PixelBuffer compute(const ImageRegion& region, std::vector<PixelBuffer> inputs) = 0;

 private:
  std::vector<ProcessObject*> upstream_;
  std::optional<ImageInfo> info_;
  bool generating_ = false;
};

// Reads regions of an RFRAW raster on demand.
class RasterSource : public ProcessObject {
 public:
  explicit RasterSource(const std::string& path);

  std::string name() const override;
  const std::string& path() const { return path_; }

 protected:
  ImageInfo generate_info() override;
  PixelBuffer compute(const ImageRegion& region, std::vector<PixelBuffer> inputs) override;

 private:
  std::string path_;
  RasterReader reader_;
};

// Serves a whole in-memory raster; regions are copied out on demand.
class BufferSource : public ProcessObject {
 public:
  BufferSource(PixelBuffer data, GeoInfo geo, std::string label = "buffer");

  std::string name() const override;

 protected:
  ImageInfo generate_info() override;
  PixelBuffer compute(const ImageRegion& region, std::vector<PixelBuffer> inputs) override;

 private:
  PixelBuffer data_;
  GeoInfo geo_;
  std::string label_;
};

// Seeded pseudo-random raster with no backing file. Every value is a pure
// function of (col, row, channel, seed), so any request pattern sees the
// same image.
class SyntheticSource : public ProcessObject {
 public:
  SyntheticSource(std::int64_t cols, std::int64_t rows, std::int64_t channels, DType dtype,
                  GeoInfo geo, std::uint64_t seed);

  std::string name() const override;
  double value_at(std::int64_t col, std::int64_t row, std::int64_t channel) const;

 protected:
  ImageInfo generate_info() override;
  PixelBuffer compute(const ImageRegion& region, std::vector<PixelBuffer> inputs) override;

 private:
  std::int64_t cols_ = 0;
  std::int64_t rows_ = 0;
  std::int64_t channels_ = 0;
  DType dtype_ = DType::f32;
  GeoInfo geo_;
  std::uint64_t seed_ = 0;
};

// How a mapper partitions its output into requested regions.
struct SplitStrategy {
  enum class Kind { whole, striped, tiled, budget };

  Kind kind = Kind::whole;
  std::int64_t stripe_rows = 0;   // striped
  std::int64_t tile_cols = 0;     // tiled
  std::int64_t tile_rows = 0;     // tiled
  std::int64_t budget_bytes = 0;  // budget

  static SplitStrategy whole();
  static SplitStrategy striped(std::int64_t rows);
  static SplitStrategy tiled(std::int64_t cols, std::int64_t rows);
  static SplitStrategy budget(std::int64_t bytes);

  // Accepts `whole`, `striped:H`, `tiled:WxH`, `budget:BYTES`.
  static SplitStrategy parse(const std::string& text);
};

std::string to_string(const SplitStrategy& s);

// Row-major partition of `full` under the strategy. MemoryBudget picks the
// largest stripe height h with h * cols * footprint <= budget; a budget
// below one row's footprint degrades to h = 1 (flagged, never an error).
// An empty region yields an empty list.
std::vector<ImageRegion> split_output(const ImageRegion& full, const SplitStrategy& strategy,
                                      double footprint_bytes_per_pixel,
                                      bool* budget_degraded = nullptr);

enum class ExecutionMode { sequential, overlapped };

struct ExecutionStats {
  std::int64_t regions = 0;
  std::int64_t written_pixels = 0;
  double seconds = 0.0;
  std::int64_t peak_tracked_bytes = 0;
  double footprint_bytes_per_pixel = 0.0;
  std::int64_t stripe_rows = 0;  // resolved height for budget splits
  bool budget_degraded = false;
};

// Terminal process object: plans the split, pulls each region through the
// pipeline and writes an RFRAW raster. Sequential mode is the reference;
// overlapped mode computes region k+1 while region k is written, handing
// buffers through a depth-1 queue, and must produce identical files.
class Mapper {
 public:
  Mapper(ProcessObject* input, std::string output_path);

  void update_output_information();
  const ImageInfo& output_info() const;

  // Bytes per output pixel across the pipeline for a one-row reference
  // stripe: every process object's requested buffer, serve-filter tensor
  // peaks, and the mapper's own write buffer.
  double estimate_footprint() const;

  // Total bytes the accounting charges for producing one output stripe.
  std::int64_t stripe_bytes(std::int64_t stripe_rows) const;

  std::vector<ImageRegion> plan_split(const SplitStrategy& strategy,
                                      ExecutionStats* stats = nullptr) const;

  ExecutionStats execute(const SplitStrategy& strategy,
                         ExecutionMode mode = ExecutionMode::sequential);

  // Called after each region is written: (region, index, total).
  std::function<void(const ImageRegion&, std::int64_t, std::int64_t)> on_region;

 private:
  ProcessObject* input_;
  std::string output_path_;
};

}  // namespace rflow
