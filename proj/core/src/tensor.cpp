#include "vti/tensor.hpp"

#include <cmath>
#include <cstring>

#include "vti/errors.hpp"

namespace vti {

std::size_t Tensor::shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor: product(shape) != len(data)");
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw ValueError("tensor: non-finite value rejected");
  }
}

bool Tensor::bytes_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  if (data_.empty()) return other.data_.empty();
  return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

DeltaMatrix DeltaMatrix::from_tensor(Tensor t) {
  if (t.rank() != 2) throw ShapeError("delta matrix must be rank 2");
  DeltaMatrix m;
  m.rows = t.dim(0);
  m.cols = t.dim(1);
  m.data = std::move(t);
  return m;
}

}  // namespace vti
