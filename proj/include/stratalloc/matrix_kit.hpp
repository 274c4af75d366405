#pragma once

// Small dense matrix calculus: vec/vech, duplication and commutation
// matrices, Kronecker products and a few spectral helpers.
//
// All functions are pure. Dense G^2 x G^2 storage is used throughout, which
// is practical up to about G = 16 characteristics.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "stratalloc/errors.hpp"

namespace stratalloc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Number of distinct elements of a symmetric G x G matrix.
constexpr Index vech_size(Index G) { return G * (G + 1) / 2; }

/// Position of element (row, col), row >= col, in column-major lower-triangle
/// order: (0,0), (1,0), ..., (G-1,0), (1,1), (2,1), ...
constexpr Index vech_index(Index row, Index col, Index G) {
  if (row < col) {
    const Index t = row;
    row = col;
    col = t;
  }
  return col * G - col * (col - 1) / 2 + (row - col);
}

/// Inverse of vech_size: returns G with G(G+1)/2 == k, or -1 when none exists.
inline Index dim_from_vech_size(Index k) {
  Index G = 0;
  while (vech_size(G) < k) ++G;
  return vech_size(G) == k ? G : -1;
}

/// Symmetric matrix stored as its lower triangle (vech order). An asymmetric
/// value cannot be represented.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(Index dim) : dim_(dim), lower_(Vector::Zero(vech_size(dim))) {}

  static SymmetricMatrix identity(Index dim) {
    SymmetricMatrix m(dim);
    for (Index i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
  }

  static SymmetricMatrix from_vech(const Vector& v, Index dim) {
    if (v.size() != vech_size(dim)) {
      throw DimensionError("unvech: vector of length " + std::to_string(v.size()) +
                           " does not match G = " + std::to_string(dim));
    }
    SymmetricMatrix m;
    m.dim_ = dim;
    m.lower_ = v;
    return m;
  }

  /// Requires exact symmetry; throws DimensionError otherwise.
  static SymmetricMatrix from_dense(const Matrix& a) {
    if (a.rows() != a.cols()) throw DimensionError("vech: matrix is not square");
    SymmetricMatrix m(a.rows());
    for (Index j = 0; j < a.cols(); ++j) {
      for (Index i = j; i < a.rows(); ++i) {
        if (a(i, j) != a(j, i)) {
          throw DimensionError("vech: matrix is not symmetric at (" + std::to_string(i) + "," +
                               std::to_string(j) + ")");
        }
        m(i, j) = a(i, j);
      }
    }
    return m;
  }

  /// Symmetrizes (A + A')/2; for matrices that are symmetric up to rounding.
  static SymmetricMatrix symmetrize(const Matrix& a) {
    if (a.rows() != a.cols()) throw DimensionError("symmetrize: matrix is not square");
    SymmetricMatrix m(a.rows());
    for (Index j = 0; j < a.cols(); ++j)
      for (Index i = j; i < a.rows(); ++i) m(i, j) = 0.5 * (a(i, j) + a(j, i));
    return m;
  }

  Index dim() const { return dim_; }
  const Vector& lower() const { return lower_; }

  double operator()(Index i, Index j) const { return lower_[vech_index(i, j, dim_)]; }
  double& operator()(Index i, Index j) { return lower_[vech_index(i, j, dim_)]; }

  Matrix to_dense() const {
    Matrix a(dim_, dim_);
    for (Index j = 0; j < dim_; ++j)
      for (Index i = j; i < dim_; ++i) a(i, j) = a(j, i) = (*this)(i, j);
    return a;
  }

  double trace() const {
    double t = 0.0;
    for (Index i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
  }

  SymmetricMatrix& operator+=(const SymmetricMatrix& o) {
    check_same(o);
    lower_ += o.lower_;
    return *this;
  }
  SymmetricMatrix& operator-=(const SymmetricMatrix& o) {
    check_same(o);
    lower_ -= o.lower_;
    return *this;
  }
  SymmetricMatrix& operator*=(double a) {
    lower_ *= a;
    return *this;
  }

  friend SymmetricMatrix operator+(SymmetricMatrix a, const SymmetricMatrix& b) { return a += b; }
  friend SymmetricMatrix operator-(SymmetricMatrix a, const SymmetricMatrix& b) { return a -= b; }
  friend SymmetricMatrix operator*(double s, SymmetricMatrix a) { return a *= s; }
  friend SymmetricMatrix operator*(SymmetricMatrix a, double s) { return a *= s; }
  friend bool operator==(const SymmetricMatrix& a, const SymmetricMatrix& b) {
    return a.dim_ == b.dim_ && a.lower_ == b.lower_;
  }

 private:
  void check_same(const SymmetricMatrix& o) const {
    if (o.dim_ != dim_) throw DimensionError("symmetric matrix dimension mismatch");
  }

  Index dim_ = 0;
  Vector lower_;
};

/// Column stacking.
inline Vector vec(const Matrix& a) {
  return Eigen::Map<const Vector>(a.data(), a.size());
}

/// Inverse of vec for an m x n matrix.
inline Matrix unvec(const Vector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw DimensionError("unvec: length mismatch");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline Vector vech(const SymmetricMatrix& b) { return b.lower(); }

/// Half-vectorization of a dense matrix; the input must be exactly symmetric.
inline Vector vech(const Matrix& b) { return SymmetricMatrix::from_dense(b).lower(); }

inline SymmetricMatrix unvech(const Vector& v, Index G) { return SymmetricMatrix::from_vech(v, G); }

inline Vector vec(const SymmetricMatrix& b) { return vec(b.to_dense()); }

struct DuplicationMatrix {
  Index G = 0;
  Matrix D;      ///< G^2 x G(G+1)/2, D * vech(B) == vec(B)
  Matrix Dpinv;  ///< G(G+1)/2 x G^2, Moore-Penrose inverse (D'D)^{-1} D'
};

inline DuplicationMatrix duplication(Index G) {
  if (G < 1) throw DimensionError("duplication: G must be >= 1");
  const Index k = vech_size(G);
  DuplicationMatrix out;
  out.G = G;
  out.D = Matrix::Zero(G * G, k);
  for (Index j = 0; j < G; ++j)
    for (Index i = 0; i < G; ++i) out.D(i + j * G, vech_index(i, j, G)) = 1.0;
  // D'D is diagonal: 1 on diagonal elements, 2 on off-diagonal ones.
  out.Dpinv = out.D.transpose();
  for (Index p = 0; p < k; ++p) out.Dpinv.row(p) /= out.D.col(p).sum();
  return out;
}

/// K_{mn}: the permutation with K_{mn} vec(C) == vec(C') for every m x n C.
inline Matrix commutation(Index m, Index n) {
  if (m < 1 || n < 1) throw DimensionError("commutation: dimensions must be >= 1");
  Matrix K = Matrix::Zero(m * n, m * n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) K(j + i * n, i + j * m) = 1.0;
  return K;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Vector eigenvalues(const SymmetricMatrix& b) {
  if (b.dim() == 0) return Vector();
  Eigen::SelfAdjointEigenSolver<Matrix> es(b.to_dense(), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const SymmetricMatrix& b) { return eigenvalues(b).minCoeff(); }
inline double max_eigenvalue(const SymmetricMatrix& b) { return eigenvalues(b).maxCoeff(); }

/// True iff every eigenvalue exceeds tol.
inline bool is_positive_definite(const SymmetricMatrix& b, double tol) {
  return min_eigenvalue(b) > tol;
}

/// PSD up to rounding: min eigenvalue >= -rel_tol * max(|eigenvalue|).
inline bool is_positive_semidefinite(const SymmetricMatrix& b, double rel_tol = 1e-10) {
  if (b.dim() == 0) return true;
  const Vector ev = eigenvalues(b);
  const double scale = ev.cwiseAbs().maxCoeff();
  return ev.minCoeff() >= -rel_tol * scale;
}

/// Symmetric square root V diag(sqrt(max(l,0))) V' of a PSD matrix.
inline Matrix psd_sqrt(const SymmetricMatrix& b) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(b.to_dense());
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

/// Relative Frobenius residual of the best approximation of `m` (square,
/// made of G x G blocks of size G x G) by a single Kronecker product B1 (x) B2.
/// Uses the rearrangement of Van Loan and Pitsianis: the best Kronecker
/// factorization is the leading singular pair of the rearranged matrix.
inline double nearest_kronecker_residual(const Matrix& m, Index G) {
  if (m.rows() != G * G || m.cols() != G * G) {
    throw DimensionError("nearest_kronecker_residual: expected a G^2 x G^2 matrix");
  }
  const double norm = m.norm();
  if (norm == 0.0) return 0.0;
  Matrix r(G * G, G * G);
  for (Index bj = 0; bj < G; ++bj)
    for (Index bi = 0; bi < G; ++bi) {
      const Matrix block = m.block(bi * G, bj * G, G, G);
      r.row(bi + bj * G) = vec(block).transpose();
    }
  Eigen::JacobiSVD<Matrix> svd(r);
  const Vector sv = svd.singularValues();
  const double tail = sv.squaredNorm() - sv[0] * sv[0];
  return std::sqrt(std::max(tail, 0.0)) / norm;
}

}  // namespace stratalloc
