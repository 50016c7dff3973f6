#pragma once

// Small dense kernels over a generic scalar (double or ad::Var).
//
// Packed triangular storage everywhere uses the column-major half
// vectorization order: (0,0), (1,0), ..., (d-1,0), (1,1), (2,1), ...
// so vech(A) and the packed entries of a LowerTriangular coincide.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gloss/scalar.hpp"

namespace gloss {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t tri_size(std::size_t d) { return d * (d + 1) / 2; }

/// Position of entry (i, j), i >= j, in the packed column-major order.
inline std::size_t tri_index(std::size_t d, std::size_t i, std::size_t j) {
  return j * d - j * (j - 1) / 2 + (i - j);
}

/// Dimension d with d(d+1)/2 == packed_size; throws if there is none.
std::size_t tri_dim(std::size_t packed_size);

template <class T = double>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0.0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> row_major)
      : rows_(rows), cols_(cols), data_(std::move(row_major)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Matrix: entry count does not match shape");
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <class T = double>
class LowerTriangular {
 public:
  LowerTriangular() = default;
  explicit LowerTriangular(std::size_t dim)
      : dim_(dim), packed_(tri_size(dim), T(0.0)) {}
  LowerTriangular(std::size_t dim, std::vector<T> packed)
      : dim_(dim), packed_(std::move(packed)) {
    if (packed_.size() != tri_size(dim_)) {
      throw DimensionError("LowerTriangular: packed length must be d(d+1)/2");
    }
  }

  static LowerTriangular identity(std::size_t dim) {
    LowerTriangular t(dim);
    for (std::size_t j = 0; j < dim; ++j) t.at(j, j) = T(1.0);
    return t;
  }

  std::size_t dim() const { return dim_; }

  /// Entry (i, j); zero above the diagonal.
  T operator()(std::size_t i, std::size_t j) const {
    return i < j ? T(0.0) : packed_[tri_index(dim_, i, j)];
  }
  T& at(std::size_t i, std::size_t j) { return packed_[tri_index(dim_, i, j)]; }
  const T& at(std::size_t i, std::size_t j) const {
    return packed_[tri_index(dim_, i, j)];
  }
  const T& diag(std::size_t j) const { return packed_[tri_index(dim_, j, j)]; }

  std::span<const T> packed() const { return packed_; }
  std::span<T> packed() { return packed_; }

  Matrix<T> dense() const {
    Matrix<T> m(dim_, dim_);
    for (std::size_t j = 0; j < dim_; ++j)
      for (std::size_t i = j; i < dim_; ++i) m(i, j) = at(i, j);
    return m;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<T> packed_;
};

/// Half vectorization: column-stacked entries on and below the diagonal.
template <class T>
std::vector<T> vech(const Matrix<T>& a) {
  if (!a.square()) throw DimensionError("vech: matrix must be square");
  const std::size_t d = a.rows();
  std::vector<T> out;
  out.reserve(tri_size(d));
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = j; i < d; ++i) out.push_back(a(i, j));
  return out;
}

/// Column stacking.
template <class T>
std::vector<T> vec(const Matrix<T>& a) {
  std::vector<T> out;
  out.reserve(a.rows() * a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (std::size_t i = 0; i < a.rows(); ++i) out.push_back(a(i, j));
  return out;
}

/// Inverse of vech onto lower-triangular matrices.
template <class T>
LowerTriangular<T> unvech(std::span<const T> packed) {
  const std::size_t d = tri_dim(packed.size());
  return LowerTriangular<T>(d, std::vector<T>(packed.begin(), packed.end()));
}

/// A*: log of the diagonal, off-diagonal entries unchanged.
template <class T>
LowerTriangular<T> star(const LowerTriangular<T>& a) {
  LowerTriangular<T> out = a;
  for (std::size_t j = 0; j < a.dim(); ++j) {
    if (!(value(a.diag(j)) > 0.0)) {
      throw std::domain_error("star: diagonal entries must be positive");
    }
    out.at(j, j) = log(a.diag(j));
  }
  return out;
}

template <class T>
LowerTriangular<T> star_inverse(const LowerTriangular<T>& a) {
  LowerTriangular<T> out = a;
  for (std::size_t j = 0; j < a.dim(); ++j) out.at(j, j) = exp(a.diag(j));
  return out;
}

enum class Side { kNormal, kTranspose };

/// Solves T x = v (kNormal) or T^T x = v (kTranspose).
template <class T>
std::vector<T> tri_solve(const LowerTriangular<T>& t, std::span<const T> v,
                         Side side = Side::kNormal) {
  const std::size_t d = t.dim();
  if (v.size() != d) throw DimensionError("tri_solve: dimension mismatch");
  for (std::size_t j = 0; j < d; ++j) {
    if (value(t.diag(j)) == 0.0) {
      throw std::domain_error("tri_solve: zero diagonal entry");
    }
  }
  std::vector<T> x(v.begin(), v.end());
  if (side == Side::kNormal) {
    for (std::size_t i = 0; i < d; ++i) {
      T acc = x[i];
      for (std::size_t j = 0; j < i; ++j) acc -= t.at(i, j) * x[j];
      x[i] = acc / t.diag(i);
    }
  } else {
    for (std::size_t i = d; i-- > 0;) {
      T acc = x[i];
      for (std::size_t j = i + 1; j < d; ++j) acc -= t.at(j, i) * x[j];
      x[i] = acc / t.diag(i);
    }
  }
  return x;
}

/// T v (kNormal) or T^T v (kTranspose).
template <class T>
std::vector<T> tri_multiply(const LowerTriangular<T>& t, std::span<const T> v,
                            Side side = Side::kNormal) {
  const std::size_t d = t.dim();
  if (v.size() != d) throw DimensionError("tri_multiply: dimension mismatch");
  std::vector<T> out(d, T(0.0));
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = j; i < d; ++i) {
      if (side == Side::kNormal) {
        out[i] += t.at(i, j) * v[j];
      } else {
        out[j] += t.at(i, j) * v[i];
      }
    }
  }
  return out;
}

template <class T>
std::vector<T> multiply(const Matrix<T>& a, std::span<const T> v) {
  if (v.size() != a.cols()) throw DimensionError("multiply: dimension mismatch");
  std::vector<T> out(a.rows(), T(0.0));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    T acc(0.0);
    for (std::size_t c = 0; c < a.cols(); ++c) acc += a(r, c) * v[c];
    out[r] = acc;
  }
  return out;
}

/// a^T v.
template <class T>
std::vector<T> multiply_transpose(const Matrix<T>& a, std::span<const T> v) {
  if (v.size() != a.rows()) {
    throw DimensionError("multiply_transpose: dimension mismatch");
  }
  std::vector<T> out(a.cols(), T(0.0));
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a(r, c) * v[r];
  return out;
}

template <class T>
Matrix<T> multiply(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) throw DimensionError("multiply: inner dimensions differ");
  Matrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += a(i, k) * b(k, j);
  return out;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <class T>
Matrix<T> kronecker(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

/// Determinant by Gaussian elimination without pivoting. Only meant for the
/// small, structurally nonsingular Jacobians used by the model priors.
template <class T>
T determinant(Matrix<T> a) {
  if (!a.square()) throw DimensionError("determinant: matrix must be square");
  const std::size_t n = a.rows();
  T det(1.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (value(a(k, k)) == 0.0) {
      throw std::domain_error("determinant: zero pivot");
    }
    det *= a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      if (value(a(i, k)) == 0.0) continue;
      const T factor = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= factor * a(k, j);
    }
  }
  return det;
}

/// L with L vec(A) = vech(A); shape d(d+1)/2 x d^2.
Matrix<double> elimination(std::size_t d);

/// K with K vec(A^T) = vec(A); shape d^2 x d^2.
Matrix<double> commutation(std::size_t d);

template <class T, class U = T>
Matrix<U> cast(const Matrix<T>& a) {
  Matrix<U> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = U(a(i, j));
  return out;
}

}  // namespace gloss
