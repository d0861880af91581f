#include "famed/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace famed {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + "]";
}

Tensor::Tensor(Shape shape, Scalar fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw std::invalid_argument("tensor: negative dimension in " + shape.str());
  }
  data_.assign(shape.numel(), fill);
}

Tensor Tensor::from(Shape shape, std::vector<Scalar> values) {
  if (values.size() != shape.numel()) {
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape.str());
  }
  Tensor t;
  t.shape_ = shape;
  t.data_ = std::move(values);
  return t;
}

std::span<Scalar> Tensor::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0f);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0f); }

void Tensor::fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != numel()) {
    throw std::invalid_argument("tensor: cannot reshape " + shape_.str() +
                                " to " + shape.str());
  }
  Tensor t = *this;
  t.shape_ = shape;
  return t;
}

Tensor Tensor::item(int index) const {
  if (index < 0 || index >= shape_.n) {
    throw std::out_of_range("tensor: batch index out of range");
  }
  Tensor t(Shape{1, shape_.c, shape_.h, shape_.w});
  const std::size_t per = t.numel();
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(per * index), per,
              t.data_.begin());
  return t;
}

Tensor Tensor::channels(int first, int count) const {
  if (first < 0 || count < 0 || first + count > shape_.c) {
    throw std::out_of_range("tensor: channel range out of bounds for " +
                            shape_.str());
  }
  Tensor t(Shape{shape_.n, count, shape_.h, shape_.w});
  const std::size_t hw = shape_.plane();
  for (int b = 0; b < shape_.n; ++b) {
    std::copy_n(plane(b, first), hw * count, t.plane(b, 0));
  }
  return t;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](Scalar v) { return std::isfinite(v); });
}

Scalar Tensor::min() const {
  if (data_.empty()) return std::numeric_limits<Scalar>::quiet_NaN();
  return *std::min_element(data_.begin(), data_.end());
}

Scalar Tensor::max() const {
  if (data_.empty()) return std::numeric_limits<Scalar>::quiet_NaN();
  return *std::max_element(data_.begin(), data_.end());
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.str() + " vs " + b.str());
  }
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "add_inplace");
  Scalar* pa = a.raw();
  const Scalar* pb = b.raw();
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) pa[i] += pb[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  }
  return m;
}

}  // namespace famed
