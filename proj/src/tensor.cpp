#include "twrmcae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "twrmcae/error.hpp"

namespace twrmcae {

namespace {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, TensorKind kind)
    : shape_(std::move(shape)), numel_(shape_numel(shape_)), kind_(kind) {
  raw_.assign(numel_ * (is_complex() ? 2 : 1), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> raw, TensorKind kind)
    : shape_(std::move(shape)), numel_(shape_numel(shape_)), kind_(kind), raw_(std::move(raw)) {
  if (raw_.size() != numel_ * (is_complex() ? 2 : 1)) {
    throw ShapeError("tensor buffer of " + std::to_string(raw_.size()) +
                     " doubles does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis out of range for shape " + shape_str(shape_));
  return shape_[axis];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(raw_.begin(), raw_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(std::string_view what) const {
  if (!all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < raw_.size(); ++i) raw_[i] += other.raw_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "tensor -=");
  for (std::size_t i = 0; i < raw_.size(); ++i) raw_[i] -= other.raw_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : raw_) v *= s;
  return *this;
}

void Tensor::axpy(double a, const Tensor& x) {
  require_same_shape(*this, x, "tensor axpy");
  for (std::size_t i = 0; i < raw_.size(); ++i) raw_[i] += a * x.raw_[i];
}

void Tensor::fill(double v) { std::fill(raw_.begin(), raw_.end(), v); }

double Tensor::sum() const { return std::accumulate(raw_.begin(), raw_.end(), 0.0); }

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : raw_) m = std::max(m, std::abs(v));
  return m;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.raw().size(); ++i) out[i] *= b[i];
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.raw().size(); ++i) s += a[i] * b[i];
  return s;
}

Tensor to_tensor(const CMatrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
           TensorKind::complex);
  std::memcpy(t.data(), m.data(), sizeof(double) * 2 * t.numel());
  return t;
}

CMatrix to_cmatrix(const Tensor& t) {
  if (t.rank() != 2 || !t.is_complex()) throw ShapeError("expected a rank-2 complex tensor");
  CMatrix m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  std::memcpy(static_cast<void*>(m.data()), t.data(), sizeof(double) * 2 * t.numel());
  return m;
}

Tensor to_tensor(const RMatrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  std::memcpy(t.data(), m.data(), sizeof(double) * t.numel());
  return t;
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * a.raw().size()) == 0;
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace twrmcae
