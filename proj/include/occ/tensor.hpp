#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace occ {

// Storage precision. Values are always held as doubles; an f32 tensor rounds
// every stored value to float precision, so 32-bit mode is reproducible
// without templating the whole stack on the scalar type.
enum class Dtype { f64, f32 };

// Dense row-major tensor, the single numeric currency of the toolkit.
// Invariant: product(shape) == data.size(), and every value is finite.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, Dtype dtype = Dtype::f64);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data,
         Dtype dtype = Dtype::f64);

  static Tensor zeros(std::vector<std::size_t> shape, Dtype dtype = Dtype::f64);
  static Tensor scalar(double v, Dtype dtype = Dtype::f64);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  Dtype dtype() const { return dtype_; }

  // 2-D conveniences
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  // Rounds every value to float precision when dtype is f32. Ops call this
  // once after filling the output buffer.
  void quantize();

  // Throws std::runtime_error naming `context` if any value is NaN/Inf.
  void check_finite(const std::string& context) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  Dtype dtype_ = Dtype::f64;
};

}  // namespace occ
