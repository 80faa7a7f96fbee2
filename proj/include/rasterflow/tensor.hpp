#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rasterflow/memory.hpp"

namespace rflow {

// Shape of a rank-4 tensor: batch, spatial rows/cols, channels last.
struct TensorShape {
  std::int64_t batch = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::int64_t channels = 0;

  std::int64_t count() const { return batch * rows * cols * channels; }
  std::int64_t byte_count() const { return count() * 4; }

  friend bool operator==(const TensorShape& a, const TensorShape& b) {
    return a.batch == b.batch && a.rows == b.rows && a.cols == b.cols && a.channels == b.channels;
  }
  friend bool operator!=(const TensorShape& a, const TensorShape& b) { return !(a == b); }
};

std::string to_string(const TensorShape& s);

// Dense float32 tensor, row-major with channels innermost. Allocation is
// reported to the MemoryTracker.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const TensorShape& shape)
      : shape_(shape),
        data_(static_cast<std::size_t>(shape.count()), 0.0f),
        tracked_(shape.byte_count()) {}

  const TensorShape& shape() const { return shape_; }
  std::int64_t count() const { return shape_.count(); }

  const float* data() const { return data_.data(); }
  float* data() { return data_.data(); }

  std::int64_t index(std::int64_t b, std::int64_t r, std::int64_t c, std::int64_t ch) const {
    return ((b * shape_.rows + r) * shape_.cols + c) * shape_.channels + ch;
  }
  float at(std::int64_t b, std::int64_t r, std::int64_t c, std::int64_t ch) const {
    return data_[static_cast<std::size_t>(index(b, r, c, ch))];
  }
  float& at(std::int64_t b, std::int64_t r, std::int64_t c, std::int64_t ch) {
    return data_[static_cast<std::size_t>(index(b, r, c, ch))];
  }

  void release() {
    data_.clear();
    data_.shrink_to_fit();
    shape_ = TensorShape{};
    tracked_.resize(0);
  }

 private:
  TensorShape shape_;
  std::vector<float> data_;
  TrackedBytes tracked_;
};

}  // namespace rflow
