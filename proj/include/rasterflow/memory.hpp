#pragma once

#include <atomic>
#include <cstdint>

namespace rflow {

// Process-wide accounting of live pixel-buffer and tensor bytes.
// The streaming executor resets the peak before a run and reads it after,
// so memory-budget splitting can be checked against actual allocations.
// File and OS buffers are not tracked.
class MemoryTracker {
 public:
  static MemoryTracker& instance();

  void add(std::int64_t bytes);
  void remove(std::int64_t bytes);

  std::int64_t current() const { return current_.load(std::memory_order_relaxed); }
  std::int64_t peak() const { return peak_.load(std::memory_order_relaxed); }
  void reset_peak();

 private:
  std::atomic<std::int64_t> current_{0};
  std::atomic<std::int64_t> peak_{0};
};

// RAII registration used by the owning containers.
class TrackedBytes {
 public:
  TrackedBytes() = default;
  explicit TrackedBytes(std::int64_t bytes) : bytes_(bytes) {
    if (bytes_ > 0) MemoryTracker::instance().add(bytes_);
  }
  TrackedBytes(const TrackedBytes& other) : TrackedBytes(other.bytes_) {}
  TrackedBytes& operator=(const TrackedBytes& other) {
    if (this != &other) {
      release();
      bytes_ = other.bytes_;
      if (bytes_ > 0) MemoryTracker::instance().add(bytes_);
    }
    return *this;
  }
  TrackedBytes(TrackedBytes&& other) noexcept : bytes_(other.bytes_) { other.bytes_ = 0; }
  TrackedBytes& operator=(TrackedBytes&& other) noexcept {
    if (this != &other) {
      release();
      bytes_ = other.bytes_;
      other.bytes_ = 0;
    }
    return *this;
  }
  ~TrackedBytes() { release(); }

  void resize(std::int64_t bytes) {
    release();
    bytes_ = bytes;
    if (bytes_ > 0) MemoryTracker::instance().add(bytes_);
  }

 private:
  void release() {
    if (bytes_ > 0) MemoryTracker::instance().remove(bytes_);
    bytes_ = 0;
  }
  std::int64_t bytes_ = 0;
};

}  // namespace rflow
