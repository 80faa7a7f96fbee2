#include "rasterflow/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>

#include "rasterflow/errors.hpp"
#include "rasterflow/memory.hpp"

namespace rflow {

std::string to_string(const ImageInfo& info) {
  return std::to_string(info.region.cols) + "x" + std::to_string(info.region.rows) + "x" +
         std::to_string(info.channels) + " " + dtype_name(info.dtype);
}

ProcessObject::ProcessObject(std::vector<ProcessObject*> upstream)
    : upstream_(std::move(upstream)) {
  for (ProcessObject* up : upstream_) {
    if (up == nullptr) throw ContractError("process object wired to a null upstream");
  }
}

void ProcessObject::update_info() {
  if (info_) return;
  if (generating_) throw ContractError("pipeline contains a cycle at " + name());
  generating_ = true;
  for (ProcessObject* up : upstream_) up->update_info();
  ImageInfo info = generate_info();
  generating_ = false;
  if (!info.region.empty()) {
    if (info.region.col != 0 || info.region.row != 0 || info.channels <= 0) {
      throw ContractError(name() + " generated invalid info " + to_string(info));
    }
  }
  info_ = std::move(info);
}

const ImageInfo& ProcessObject::info() const {
  if (!info_) throw ContractError(name() + ": information not generated yet");
  return *info_;
}

std::vector<ImageRegion> ProcessObject::required_input_regions(const ImageRegion& region) const {
  return std::vector<ImageRegion>(upstream_.size(), region);
}

std::int64_t ProcessObject::extra_bytes(const ImageRegion&) const { return 0; }

PixelBuffer ProcessObject::produce(const ImageRegion& region) {
  const ImageInfo& out_info = info();
  if (region.empty()) return PixelBuffer(region, out_info.channels, out_info.dtype);
  if (!out_info.region.contains(region)) {
    throw ContractError(name() + ": requested region " + to_string(region) +
                        " exceeds output " + to_string(out_info.region));
  }
  std::vector<ImageRegion> requests = required_input_regions(region);
  if (requests.size() != upstream_.size()) {
    throw ContractError(name() + " requested " + std::to_string(requests.size()) +
                        " input regions for " + std::to_string(upstream_.size()) + " inputs");
  }
  std::vector<PixelBuffer> inputs;
  inputs.reserve(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    inputs.push_back(upstream_[i]->produce(requests[i]));
  }
  PixelBuffer out = compute(region, std::move(inputs));
  if (out.region() != region || out.channels() != out_info.channels ||
      out.dtype() != out_info.dtype) {
    throw ContractError(name() + " produced " + to_string(out.region()) + " (" +
                        std::to_string(out.channels()) + " ch) for requested " +
                        to_string(region));
  }
  return out;
}

RasterSource::RasterSource(const std::string& path)
    : ProcessObject({}), path_(path), reader_(path) {}

std::string RasterSource::name() const { return "source(" + path_ + ")"; }

ImageInfo RasterSource::generate_info() {
  const RasterHeader& h = reader_.header();
  return ImageInfo{h.full_region(), h.channels, h.dtype, h.geo};
}

PixelBuffer RasterSource::compute(const ImageRegion& region, std::vector<PixelBuffer>) {
  return reader_.read_region(region);
}

BufferSource::BufferSource(PixelBuffer data, GeoInfo geo, std::string label)
    : ProcessObject({}), data_(std::move(data)), geo_(std::move(geo)), label_(std::move(label)) {
  if (data_.region().empty()) throw ContractError("buffer source over an empty buffer");
  if (data_.region().col != 0 || data_.region().row != 0) {
    throw ContractError("buffer source data must be anchored at (0, 0)");
  }
}

std::string BufferSource::name() const { return "source(" + label_ + ")"; }

ImageInfo BufferSource::generate_info() {
  return ImageInfo{data_.region(), data_.channels(), data_.dtype(), geo_};
}

PixelBuffer BufferSource::compute(const ImageRegion& region, std::vector<PixelBuffer>) {
  return crop(data_, region);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

SyntheticSource::SyntheticSource(std::int64_t cols, std::int64_t rows, std::int64_t channels,
                                 DType dtype, GeoInfo geo, std::uint64_t seed)
    : ProcessObject({}),
      cols_(cols),
      rows_(rows),
      channels_(channels),
      dtype_(dtype),
      geo_(std::move(geo)),
      seed_(seed) {
  if (cols_ <= 0 || rows_ <= 0 || channels_ <= 0) {
    throw ContractError("synthetic source needs positive dimensions");
  }
}

std::string SyntheticSource::name() const { return "source(synthetic)"; }

double SyntheticSource::value_at(std::int64_t col, std::int64_t row, std::int64_t channel) const {
  const std::uint64_t key =
      static_cast<std::uint64_t>((row * cols_ + col) * channels_ + channel);
  const std::uint64_t v = splitmix64(seed_ ^ splitmix64(key));
  switch (dtype_) {
    case DType::u8: return static_cast<double>(v & 0xFFu);
    case DType::u16: return static_cast<double>(v & 0xFFFFu);
    case DType::f32:
      return static_cast<double>(static_cast<float>(
          static_cast<double>(v >> 11) * (1.0 / 9007199254740992.0)));
  }
  return 0.0;
}

ImageInfo SyntheticSource::generate_info() {
  return ImageInfo{ImageRegion{0, 0, cols_, rows_}, channels_, dtype_, geo_};
}

PixelBuffer SyntheticSource::compute(const ImageRegion& region, std::vector<PixelBuffer>) {
  PixelBuffer out(region, channels_, dtype_);
  std::int64_t i = 0;
  auto fill = [&](auto write_one) {
    for (std::int64_t r = region.row; r < region.row_end(); ++r) {
      for (std::int64_t c = region.col; c < region.col_end(); ++c) {
        for (std::int64_t ch = 0; ch < channels_; ++ch) write_one(value_at(c, r, ch), i++);
      }
    }
  };
  switch (dtype_) {
    case DType::u8: {
      auto vals = out.values<std::uint8_t>();
      fill([&](double v, std::int64_t k) { vals[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(v); });
      break;
    }
    case DType::u16: {
      auto vals = out.values<std::uint16_t>();
      fill([&](double v, std::int64_t k) { vals[static_cast<std::size_t>(k)] = static_cast<std::uint16_t>(v); });
      break;
    }
    case DType::f32: {
      auto vals = out.values<float>();
      fill([&](double v, std::int64_t k) { vals[static_cast<std::size_t>(k)] = static_cast<float>(v); });
      break;
    }
  }
  return out;
}

SplitStrategy SplitStrategy::whole() { return SplitStrategy{}; }

SplitStrategy SplitStrategy::striped(std::int64_t rows) {
  if (rows <= 0) throw ArgumentError("stripe height must be positive");
  SplitStrategy s;
  s.kind = Kind::striped;
  s.stripe_rows = rows;
  return s;
}

SplitStrategy SplitStrategy::tiled(std::int64_t cols, std::int64_t rows) {
  if (cols <= 0 || rows <= 0) throw ArgumentError("tile dimensions must be positive");
  SplitStrategy s;
  s.kind = Kind::tiled;
  s.tile_cols = cols;
  s.tile_rows = rows;
  return s;
}

SplitStrategy SplitStrategy::budget(std::int64_t bytes) {
  if (bytes <= 0) throw ArgumentError("memory budget must be positive");
  SplitStrategy s;
  s.kind = Kind::budget;
  s.budget_bytes = bytes;
  return s;
}

SplitStrategy SplitStrategy::parse(const std::string& text) {
  if (text == "whole") return whole();
  auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto parse_int = [&](const std::string& v) -> std::int64_t {
    std::size_t used = 0;
    std::int64_t n = 0;
    try {
      n = std::stoll(v, &used);
    } catch (const std::exception&) {
      throw ArgumentError("bad split strategy '" + text + "'");
    }
    if (used != v.size()) throw ArgumentError("bad split strategy '" + text + "'");
    return n;
  };
  if (head == "striped" && !tail.empty()) return striped(parse_int(tail));
  if (head == "budget" && !tail.empty()) return budget(parse_int(tail));
  if (head == "tiled" && !tail.empty()) {
    auto x = tail.find('x');
    if (x != std::string::npos) {
      return tiled(parse_int(tail.substr(0, x)), parse_int(tail.substr(x + 1)));
    }
  }
  throw ArgumentError("bad split strategy '" + text +
                      "' (expected whole|striped:H|tiled:WxH|budget:BYTES)");
}

std::string to_string(const SplitStrategy& s) {
  switch (s.kind) {
    case SplitStrategy::Kind::whole: return "whole";
    case SplitStrategy::Kind::striped: return "striped:" + std::to_string(s.stripe_rows);
    case SplitStrategy::Kind::tiled:
      return "tiled:" + std::to_string(s.tile_cols) + "x" + std::to_string(s.tile_rows);
    case SplitStrategy::Kind::budget: return "budget:" + std::to_string(s.budget_bytes);
  }
  return "?";
}

std::vector<ImageRegion> split_output(const ImageRegion& full, const SplitStrategy& strategy,
                                      double footprint_bytes_per_pixel, bool* budget_degraded) {
  if (budget_degraded) *budget_degraded = false;
  std::vector<ImageRegion> out;
  if (full.empty()) return out;

  auto striped_regions = [&](std::int64_t h) {
    for (std::int64_t r = full.row; r < full.row_end(); r += h) {
      out.push_back(ImageRegion{full.col, r, full.cols, std::min(h, full.row_end() - r)});
    }
  };

  switch (strategy.kind) {
    case SplitStrategy::Kind::whole:
      out.push_back(full);
      break;
    case SplitStrategy::Kind::striped:
      striped_regions(strategy.stripe_rows);
      break;
    case SplitStrategy::Kind::tiled:
      for (std::int64_t r = full.row; r < full.row_end(); r += strategy.tile_rows) {
        for (std::int64_t c = full.col; c < full.col_end(); c += strategy.tile_cols) {
          out.push_back(ImageRegion{c, r, std::min(strategy.tile_cols, full.col_end() - c),
                                    std::min(strategy.tile_rows, full.row_end() - r)});
        }
      }
      break;
    case SplitStrategy::Kind::budget: {
      if (footprint_bytes_per_pixel <= 0.0) {
        throw ContractError("memory-budget splitting needs a positive footprint");
      }
      const double row_bytes = static_cast<double>(full.cols) * footprint_bytes_per_pixel;
      std::int64_t h = static_cast<std::int64_t>(
          std::floor(static_cast<double>(strategy.budget_bytes) / row_bytes));
      if (h < 1) {
        h = 1;
        if (budget_degraded) *budget_degraded = true;
      }
      striped_regions(std::min(h, full.rows));
      break;
    }
  }
  return out;
}

namespace {

std::int64_t buffer_bytes(const ImageRegion& region, const ImageInfo& info) {
  return region.pixels() * info.channels * static_cast<std::int64_t>(dtype_size(info.dtype));
}

// Sum of every buffer the accounting charges to produce `region` at `node`:
// the node's own output buffer, its internal extra, and its whole upstream
// chain. Overlapping upstream requests are charged per consumer.
std::int64_t chain_bytes(ProcessObject* node, const ImageRegion& region) {
  if (region.empty()) return 0;
  std::int64_t total = buffer_bytes(region, node->info()) + node->extra_bytes(region);
  const std::vector<ImageRegion> requests = node->required_input_regions(region);
  const auto& ups = node->upstream();
  for (std::size_t i = 0; i < ups.size(); ++i) {
    total += chain_bytes(ups[i], requests[i]);
  }
  return total;
}

}  // namespace

Mapper::Mapper(ProcessObject* input, std::string output_path)
    : input_(input), output_path_(std::move(output_path)) {
  if (input_ == nullptr) throw ContractError("mapper wired to a null input");
}

void Mapper::update_output_information() { input_->update_info(); }

const ImageInfo& Mapper::output_info() const { return input_->info(); }

double Mapper::estimate_footprint() const {
  const ImageInfo& info = input_->info();
  if (info.region.empty()) return 0.0;
  const ImageRegion row{info.region.col, info.region.row, info.region.cols, 1};
  const std::int64_t bytes = chain_bytes(input_, row) + buffer_bytes(row, info);
  return static_cast<double>(bytes) / static_cast<double>(row.pixels());
}

std::int64_t Mapper::stripe_bytes(std::int64_t stripe_rows) const {
  const ImageInfo& info = input_->info();
  const ImageRegion stripe{info.region.col, info.region.row, info.region.cols,
                           std::min(stripe_rows, info.region.rows)};
  return chain_bytes(input_, stripe) + buffer_bytes(stripe, info);
}

std::vector<ImageRegion> Mapper::plan_split(const SplitStrategy& strategy,
                                            ExecutionStats* stats) const {
  const ImageInfo& info = input_->info();
  const double footprint = estimate_footprint();
  bool degraded = false;
  std::vector<ImageRegion> splits = split_output(info.region, strategy, footprint, &degraded);
  if (strategy.kind == SplitStrategy::Kind::budget && !splits.empty()) {
    // The per-pixel extrapolation can overshoot when requested input regions
    // grow sublinearly (receptive overlap); verify the candidate height
    // against the exact per-stripe accounting and shrink until it fits.
    std::int64_t h = splits.front().rows;
    while (h > 1 && stripe_bytes(h) > strategy.budget_bytes) --h;
    if (h == 1 && stripe_bytes(1) > strategy.budget_bytes) degraded = true;
    if (h != splits.front().rows) {
      SplitStrategy refined = SplitStrategy::striped(h);
      splits = split_output(info.region, refined, footprint, nullptr);
    }
    if (stats) stats->stripe_rows = h;
  }
  if (stats) {
    stats->footprint_bytes_per_pixel = footprint;
    stats->budget_degraded = degraded;
  }
  return splits;
}

ExecutionStats Mapper::execute(const SplitStrategy& strategy, ExecutionMode mode) {
  update_output_information();
  const ImageInfo& info = input_->info();

  ExecutionStats stats;
  const std::vector<ImageRegion> splits = plan_split(strategy, &stats);
  const auto t0 = std::chrono::steady_clock::now();
  MemoryTracker::instance().reset_peak();

  if (!splits.empty()) {
    RasterHeader header{info.region.cols, info.region.rows, info.channels, info.dtype, info.geo};
    RasterWriter writer(output_path_, header, true);

    auto write_one = [&](const PixelBuffer& buf, std::int64_t index) {
      writer.write_region(buf);
      stats.written_pixels += buf.region().pixels();
      ++stats.regions;
      if (on_region) on_region(buf.region(), index, static_cast<std::int64_t>(splits.size()));
    };

    if (mode == ExecutionMode::sequential) {
      for (std::size_t i = 0; i < splits.size(); ++i) {
        PixelBuffer buf = input_->produce(splits[i]);
        write_one(buf, static_cast<std::int64_t>(i));
      }
    } else {
      std::mutex m;
      std::condition_variable cv;
      std::optional<PixelBuffer> slot;
      bool producer_done = false;
      std::exception_ptr producer_error;

      std::thread producer([&] {
        try {
          for (const ImageRegion& region : splits) {
            PixelBuffer buf = input_->produce(region);
            std::unique_lock<std::mutex> lock(m);
            cv.wait(lock, [&] { return !slot.has_value(); });
            slot = std::move(buf);
            cv.notify_all();
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          producer_error = std::current_exception();
        }
        {
          std::lock_guard<std::mutex> lock(m);
          producer_done = true;
        }
        cv.notify_all();
      });

      std::int64_t index = 0;
      try {
        for (;;) {
          std::optional<PixelBuffer> buf;
          {
            std::unique_lock<std::mutex> lock(m);
            cv.wait(lock, [&] { return slot.has_value() || producer_done; });
            if (!slot.has_value()) break;
            buf = std::move(slot);
            slot.reset();
            cv.notify_all();
          }
          write_one(*buf, index++);
        }
      } catch (...) {
        producer.join();
        throw;
      }
      producer.join();
      if (producer_error) std::rethrow_exception(producer_error);
    }

    if (!writer.fully_covered()) {
      throw ContractError("split regions did not cover the output of " + input_->name());
    }
    writer.finish();
  }

  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  stats.peak_tracked_bytes = MemoryTracker::instance().peak();
  return stats;
}

}  // namespace rflow
