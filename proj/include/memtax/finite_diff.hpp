#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <utility>
#include <stdexcept>

#include "memtax/tensor.hpp"

namespace memtax {

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h for every coordinate of x.
// Independent of the tape: f only needs to map a Tensor to a double.
template <typename F>
Tensor finite_diff(F&& f, const Tensor& x, double h = 1e-5) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff: step must be positive");
  Tensor grad(x.rows(), x.cols());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(static_cast<const Tensor&>(probe));
    probe[i] = orig - h;
    const double down = f(static_cast<const Tensor&>(probe));
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Ridders' method for one coordinate: central differences at steps h,
// h/1.4, h/1.4^2, ... extrapolated to zero step with a Neville tableau.
// Returns the estimate with the smallest internal error and that error.
template <typename F>
std::pair<double, double> ridders(F&& central, double h) {
  constexpr std::size_t kTab = 10;
  constexpr double kCon = 1.4, kCon2 = kCon * kCon, kSafe = 2.0;
  double a[kTab][kTab];
  double err = std::numeric_limits<double>::max();
  a[0][0] = central(h);
  double best = a[0][0];
  for (std::size_t k = 1; k < kTab; ++k) {
    h /= kCon;
    a[0][k] = central(h);
    double fac = kCon2;
    for (std::size_t j = 1; j <= k; ++j) {
      a[j][k] = (a[j - 1][k] * fac - a[j - 1][k - 1]) / (fac - 1.0);
      fac *= kCon2;
      const double e = std::max(std::abs(a[j][k] - a[j - 1][k]), std::abs(a[j][k] - a[j - 1][k - 1]));
      if (e <= err) {
        err = e;
        best = a[j][k];
      }
    }
    if (std::abs(a[k][k] - a[k - 1][k - 1]) >= kSafe * err) break;
  }
  return {best, err};
}

// Extrapolated central differences for every coordinate of x. Ridders' method
// runs from each starting step in `starts` and the estimate with the smallest
// internal error wins: large steps resolve tiny gradients that a small fixed
// step loses to roundoff, small steps follow sharp curvature.
template <typename F>
Tensor finite_diff_ridders(F&& f, const Tensor& x, std::initializer_list<double> starts = {1e-1, 1e-2, 1e-3}) {
  if (starts.size() == 0) throw std::invalid_argument("finite_diff_ridders: no starting steps");
  for (double h : starts)
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_ridders: step must be positive");
  Tensor grad(x.rows(), x.cols());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto central = [&](double step) {
      probe[i] = x[i] + step;
      const double up = f(static_cast<const Tensor&>(probe));
      probe[i] = x[i] - step;
      const double down = f(static_cast<const Tensor&>(probe));
      probe[i] = x[i];
      return (up - down) / (2.0 * step);
    };
    double best_err = std::numeric_limits<double>::max();
    for (double h : starts) {
      const auto [estimate, err] = ridders(central, h);
      if (err < best_err) {
        best_err = err;
        grad[i] = estimate;
      }
    }
  }
  return grad;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

inline double max_relative_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_relative_error shape mismatch", a.shape(), b.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i]));
  return worst;
}

}  // namespace memtax
