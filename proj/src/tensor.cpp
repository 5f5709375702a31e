#include "occ/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace occ {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("Tensor: zero dimension in shape");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, Dtype dtype)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0), dtype_(dtype) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data, Dtype dtype)
    : shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
  if (shape_product(shape_) != data_.size())
    throw std::invalid_argument("Tensor: shape " + shape_str() + " does not match data length " +
                                std::to_string(data_.size()));
  quantize();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, Dtype dtype) {
  return Tensor(std::move(shape), dtype);
}

Tensor Tensor::scalar(double v, Dtype dtype) {
  return Tensor({1}, {v}, dtype);
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

void Tensor::quantize() {
  if (dtype_ != Dtype::f32) return;
  for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

void Tensor::check_finite(const std::string& context) const {
  for (double v : data_) {
    if (!std::isfinite(v))
      throw std::runtime_error(context + ": non-finite value in tensor " + shape_str());
  }
}

}  // namespace occ
