#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace famed {

#ifdef FAMED_SCALAR_DOUBLE
using Scalar = double;
#else
using Scalar = float;
#endif

/// Dimensions of a dense NCHW array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool same_spatial(const Shape& o) const { return h == o.h && w == o.w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense 4-D tensor (batch, channels, rows, cols), row-major within
/// (c,h,w). Carries an optional gradient buffer of identical shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = 0.0f);
  Tensor(int n, int c, int h, int w, Scalar fill = 0.0f)
      : Tensor(Shape{n, c, h, w}, fill) {}

  static Tensor from(Shape shape, std::vector<Scalar> values);

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Scalar> data() { return data_; }
  std::span<const Scalar> data() const { return data_; }
  Scalar* raw() { return data_.data(); }
  const Scalar* raw() const { return data_.data(); }

  Scalar* plane(int n, int c) {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }
  const Scalar* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }

  Scalar& at(int n, int c, int y, int x) {
    return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x];
  }
  Scalar at(int n, int c, int y, int x) const {
    return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x];
  }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  // Gradient companion. Allocated on demand, zero-filled.
  bool has_grad() const { return !grad_.empty(); }
  std::span<Scalar> grad();
  std::span<const Scalar> grad() const { return grad_; }
  void zero_grad();
  void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }

  void fill(Scalar v);
  /// Reinterprets dims; element count must be unchanged.
  Tensor reshaped(Shape shape) const;
  /// Copy of batch item `index` as a 1-item tensor.
  Tensor item(int index) const;
  /// Copy of channels [first, first+count).
  Tensor channels(int first, int count) const;

  bool all_finite() const;
  Scalar min() const;
  Scalar max() const;

 private:
  Shape shape_{};
  std::vector<Scalar> data_;
  std::vector<Scalar> grad_;
};

/// Throws std::invalid_argument naming `what` when the shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// a += b elementwise.
void add_inplace(Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace famed
