#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <span>
#include <vector>

namespace lmc {

// Dense column-major matrix of doubles. Column-major keeps per-node embedding
// columns contiguous, and flattening the storage yields vec(A) with
// A(i,j) == vec(A)[i + j*rows].
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return data_[j * rows_ + i];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return data_[j * rows_ + i];
  }

  std::span<double> col(std::size_t j) {
    assert(j < cols_);
    return {data_.data() + j * rows_, rows_};
  }
  std::span<const double> col(std::size_t j) const {
    assert(j < cols_);
    return {data_.data() + j * rows_, rows_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  void scale(double s) {
    for (double& x : data_) x *= s;
  }

  // this += s * other
  void add_scaled(const Matrix& other, double s) {
    assert(rows_ == other.rows_ && cols_ == other.cols_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += s * other.data_[k];
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline bool same_shape(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (!same_shape(a, b)) return false;
  if (a.data().empty()) return true;
  return std::memcmp(a.data().data(), b.data().data(),
                     a.data().size() * sizeof(double)) == 0;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  assert(same_shape(a, b));
  double m = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k)
    m = std::max(m, std::fabs(a.data()[k] - b.data()[k]));
  return m;
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  return std::sqrt(s);
}

inline double frobenius_diff(const Matrix& a, const Matrix& b) {
  assert(same_shape(a, b));
  double s = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) {
    double d = a.data()[k] - b.data()[k];
    s += d * d;
  }
  return std::sqrt(s);
}

// y += s * x
inline void axpy(double s, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += s * x[k];
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// z = theta * v
inline void mat_vec(const Matrix& theta, std::span<const double> v,
                    std::span<double> z) {
  assert(theta.cols() == v.size() && theta.rows() == z.size());
  std::fill(z.begin(), z.end(), 0.0);
  for (std::size_t k = 0; k < theta.cols(); ++k) axpy(v[k], theta.col(k), z);
}

// out = theta^T * v
inline void mat_tvec(const Matrix& theta, std::span<const double> v,
                     std::span<double> out) {
  assert(theta.rows() == v.size() && theta.cols() == out.size());
  for (std::size_t k = 0; k < theta.cols(); ++k) out[k] = dot(theta.col(k), v);
}

// a += s * u * v^T
inline void add_outer(Matrix& a, double s, std::span<const double> u,
                      std::span<const double> v) {
  assert(a.rows() == u.size() && a.cols() == v.size());
  for (std::size_t j = 0; j < v.size(); ++j) axpy(s * v[j], u, a.col(j));
}

}  // namespace lmc
