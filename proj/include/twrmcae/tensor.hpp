#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace twrmcae {

enum class TensorKind : std::uint8_t { real = 0, complex = 1 };

using Shape = std::vector<std::size_t>;
using cdouble = std::complex<double>;

/// Row-major complex matrix used for echo / range-profile / subspace data.
using CMatrix = Eigen::Matrix<cdouble, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Row-major real matrix.
using RMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t shape_numel(const Shape& shape);

/// Dense n-d array of doubles. Complex tensors interleave (re, im) per element,
/// so the raw buffer holds 2 * numel doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, TensorKind kind = TensorKind::real);
  Tensor(Shape shape, std::vector<double> raw, TensorKind kind = TensorKind::real);

  static Tensor filled(Shape shape, double value);
  /// Real C x H x W tensor of zeros.
  static Tensor chw(std::size_t c, std::size_t h, std::size_t w) { return Tensor({c, h, w}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  /// Number of (possibly complex) elements.
  std::size_t numel() const noexcept { return numel_; }
  TensorKind kind() const noexcept { return kind_; }
  bool is_complex() const noexcept { return kind_ == TensorKind::complex; }

  std::span<double> raw() noexcept { return raw_; }
  std::span<const double> raw() const noexcept { return raw_; }
  double* data() noexcept { return raw_.data(); }
  const double* data() const noexcept { return raw_.data(); }

  double& operator[](std::size_t i) { return raw_[i]; }
  double operator[](std::size_t i) const { return raw_[i]; }

  // Rank-3 real accessors (C x H x W).
  double& at(std::size_t c, std::size_t h, std::size_t w) {
    return raw_[(c * shape_[1] + h) * shape_[2] + w];
  }
  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return raw_[(c * shape_[1] + h) * shape_[2] + w];
  }

  cdouble complex_at(std::size_t i) const { return {raw_[2 * i], raw_[2 * i + 1]}; }
  void set_complex(std::size_t i, cdouble v) {
    raw_[2 * i] = v.real();
    raw_[2 * i + 1] = v.imag();
  }

  bool same_shape(const Tensor& other) const noexcept {
    return shape_ == other.shape_ && kind_ == other.kind_;
  }
  bool all_finite() const noexcept;
  /// Throws NumericError naming `what` if any element is NaN/Inf.
  void require_finite(std::string_view what) const;

  // Elementwise helpers for real tensors of identical shape.
  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);
  void axpy(double a, const Tensor& x);  // this += a * x
  void fill(double v);
  double sum() const;
  double max_abs() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::size_t numel_ = 0;
  TensorKind kind_ = TensorKind::real;
  std::vector<double> raw_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
/// Elementwise product of two real tensors with equal shape.
Tensor hadamard(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);

Tensor to_tensor(const CMatrix& m);
CMatrix to_cmatrix(const Tensor& t);
Tensor to_tensor(const RMatrix& m);

/// Bit-exact equality of shape, kind and every stored double (compares bit patterns).
bool bit_identical(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what);

}  // namespace twrmcae
