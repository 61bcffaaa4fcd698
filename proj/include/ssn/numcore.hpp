#pragma once

// Dense double-precision vectors and matrices, trainable parameter tensors,
// a portable seeded generator and a finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ssn/error.hpp"

namespace ssn {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Trainable tensor: value plus a gradient accumulator of the same shape.
/// Vectors are stored as n x 1 matrices.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  std::size_t rows() const noexcept { return value.rows(); }
  std::size_t cols() const noexcept { return value.cols(); }
  std::size_t size() const noexcept { return value.size(); }

  void zero_grad() { std::fill(grad.span().begin(), grad.span().end(), 0.0); }
};

inline void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) p->zero_grad();
}

/// Deterministic generator. The engine is fully specified by the standard and
/// the draws below avoid the implementation-defined std distributions, so a
/// seed yields the same sequence on every platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::size_t index(std::size_t n) {
    if (n == 0) throw InvalidArgument("SeededRng::index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  std::string state() const {
    std::ostringstream os;
    os << seed_ << ' ' << engine_;
    return os.str();
  }

  void restore(const std::string& text) {
    std::istringstream is(text);
    std::uint64_t seed = 0;
    std::mt19937_64 engine;
    if (!(is >> seed >> engine)) throw InvalidArgument("SeededRng::restore: malformed state");
    seed_ = seed;
    engine_ = engine;
  }

  bool operator==(const SeededRng&) const = default;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double tanh_(double x) { return std::tanh(x); }

inline void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                            " vs " + std::to_string(b) + ")");
  }
}

inline Vector softmax(const Vector& v) {
  if (v.empty()) throw InvalidArgument("softmax: empty vector");
  const double peak = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  check_same_size(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const Vector& a, const Vector& b) { return dot(a.span(), b.span()); }

inline double l2_norm(std::span<const double> v) {
  // Scaled accumulation keeps huge or tiny entries from over/underflowing.
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (double x : v) {
    const double y = x / scale;
    s += y * y;
  }
  return scale * std::sqrt(s);
}

inline double l2_norm(const Vector& v) { return l2_norm(v.span()); }

inline Vector matvec(const Matrix& w, const Vector& x) {
  check_same_size(w.cols(), x.size(), "matvec");
  Vector out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] = dot(w.row(r), x.span());
  return out;
}

inline Vector operator+(const Vector& a, const Vector& b) {
  check_same_size(a.size(), b.size(), "vector add");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vector operator-(const Vector& a, const Vector& b) {
  check_same_size(a.size(), b.size(), "vector subtract");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vector operator*(double k, const Vector& a) {
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = k * a[i];
  return out;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Compares the analytic gradient left in each Param::grad by
/// `loss_with_grad()` against central differences of `loss()`, one scalar at a
/// time. Returns the worst relative error, with the denominator floored at 1e-8.
///
/// Gradients are zeroed before `loss_with_grad` runs, so it only has to
/// accumulate. Both must be pure functions of the parameter values.
inline double finite_diff_grad_check(const std::function<double()>& loss_with_grad,
                                     const std::function<double()>& loss,
                                     std::span<Param* const> params, double eps = 1e-5) {
  if (!(eps > 0.0)) throw InvalidArgument("finite_diff_grad_check: eps must be positive");
  zero_grads(params);
  const double base = loss_with_grad();
  if (!std::isfinite(base)) throw NumericError("finite_diff_grad_check: non-finite loss");

  double worst = 0.0;
  for (Param* p : params) {
    auto values = p->value.span();
    auto grads = p->grad.span();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double up = loss();
      values[i] = original - eps;
      const double down = loss();
      values[i] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_diff_grad_check: non-finite loss at " + p->name);
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grads[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

/// Convenience overload for a single callable `loss(bool with_grad)`.
inline double finite_diff_grad_check(const std::function<double(bool)>& loss_fn,
                                     std::span<Param* const> params, double eps = 1e-5) {
  return finite_diff_grad_check([&] { return loss_fn(true); }, [&] { return loss_fn(false); },
                                params, eps);
}

}  // namespace ssn
