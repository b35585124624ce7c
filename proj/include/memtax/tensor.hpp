#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace memtax {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  constexpr std::size_t size() const { return rows * cols; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(Shape s) {
  return "(" + std::to_string(s.rows) + "," + std::to_string(s.cols) + ")";
}

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& what, Shape a, Shape b)
      : std::invalid_argument(what + ": " + to_string(a) + " vs " + to_string(b)) {}
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Dense rank-2 array of doubles, row-major. Column vectors are (n,1).
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, data_(rows * cols, fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  static Tensor zeros(std::size_t rows, std::size_t cols = 1) { return {rows, cols, 0.0}; }
  static Tensor ones(std::size_t rows, std::size_t cols = 1) { return {rows, cols, 1.0}; }
  static Tensor scalar(double v) { return {1, 1, v}; }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }
  static Tensor column(std::initializer_list<double> values) {
    return {Shape{values.size(), 1}, std::vector<double>(values)};
  }
  static Tensor column(std::span<const double> values) {
    return {Shape{values.size(), 1}, std::vector<double>(values.begin(), values.end())};
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return {Shape{rows, cols}, std::vector<double>(values)};
  }

  Shape shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() & { return data_; }
  std::span<const double> values() const& { return data_; }
  std::span<const double> values() && = delete;  // would dangle

  // Scalar value of a (1,1) tensor.
  double item() const {
    if (shape_ != Shape{1, 1}) throw ShapeError("item() needs a (1,1) tensor", shape_, {1, 1});
    return data_[0];
  }

  Tensor& operator+=(const Tensor& o) {
    require_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double k) {
    for (double& v : data_) v *= k;
    return *this;
  }
  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double k) { return a *= k; }
  friend Tensor operator*(double k, Tensor a) { return a *= k; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }
  double squared_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }
  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Tensor transposed() const {
    Tensor t(shape_.cols, shape_.rows);
    for (std::size_t r = 0; r < shape_.rows; ++r)
      for (std::size_t c = 0; c < shape_.cols; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  Tensor row(std::size_t r) const {
    Tensor t(shape_.cols, 1);
    for (std::size_t c = 0; c < shape_.cols; ++c) t[c] = (*this)(r, c);
    return t;
  }

 private:
  void require_same(const Tensor& o, const char* op) const {
    if (shape_ != o.shape_) throw ShapeError(std::string("shape mismatch in ") + op, shape_, o.shape_);
  }

  Shape shape_{};
  std::vector<double> data_;
};

// C = A * B
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul inner dimension mismatch", a.shape(), b.shape());
  Tensor out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* orow = &out(i, 0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* brow = b.values().data() + k * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff shape mismatch", a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::ostream& operator<<(std::ostream& os, const Tensor& t) {
  os << "[";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    if (r) os << "; ";
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (c) os << ", ";
      os << t(r, c);
    }
  }
  return os << "]";
}

}  // namespace memtax
