#include "s2w/tensor.hpp"

#include <cmath>

#include "s2w/errors.hpp"

namespace s2w {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(shape_size(shape_), 0.0);
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, Scalar value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<Scalar> values) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("Tensor::from: value count does not match shape");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

void Tensor::fill(Scalar v) {
  for (auto& x : data_) x = v;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_size(shape) != size()) {
    throw ShapeError("reshape to incompatible size: " + shape_str());
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

bool Tensor::all_finite() const {
  for (Scalar v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

}  // namespace s2w
