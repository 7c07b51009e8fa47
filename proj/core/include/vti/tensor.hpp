#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vti {

/// Dense row-major float32 array. The universal value carrier: hidden
/// states, deltas, directions, images and attention maps are all Tensors.
/// Construction from data rejects NaN/Inf.
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::size_t> shape);

  /// Validates product(shape) == data.size() and that all values are finite.
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  float at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  float& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  float at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Shape plus bitwise payload equality (determinism checks).
  bool bytes_equal(const Tensor& other) const;

  static std::size_t shape_product(const std::vector<std::size_t>& shape);

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

/// Stacked per-example delta vectors: N rows (examples) by D columns
/// (hidden dim). Input to direction extraction; N >= 2 there.
struct DeltaMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Tensor data;  // [N, D]

  static DeltaMatrix from_tensor(Tensor t);
};

}  // namespace vti
