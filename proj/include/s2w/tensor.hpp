#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace s2w {

using Scalar = double;

// Dense row-major tensor. Rank is dynamic; most of the model code works with
// 2-D [rows, cols] and 4-D [n, height, width, channels] shapes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, Scalar value);
  static Tensor from(std::vector<int> shape, std::vector<Scalar> values);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessors.
  int rows() const { return shape_[0]; }
  int cols() const { return shape_[1]; }
  Scalar& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  Scalar at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  // 4-D accessor for [n, y, x, c] layouts.
  Scalar& at4(int n, int y, int x, int c) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + y) * shape_[2] + x) *
                     shape_[3] +
                 c];
  }
  Scalar at4(int n, int y, int x, int c) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + y) * shape_[2] + x) *
                     shape_[3] +
                 c];
  }

  void fill(Scalar v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  Tensor reshaped(std::vector<int> shape) const;
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<Scalar> data_;
};

std::size_t shape_size(const std::vector<int>& shape);

}  // namespace s2w
