#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace bbgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Dense symmetric matrix. The input is symmetrized as (A + A^T) / 2 on
// construction and must be square with finite entries.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(Matrix a);

  Index order() const { return a_.rows(); }
  const Matrix& dense() const { return a_; }
  double operator()(Index i, Index j) const { return a_(i, j); }

  Vector operator*(const Vector& x) const { return a_ * x; }

  double max_diagonal() const;
  double max_abs() const;

 private:
  Matrix a_;
};

// Symmetric tridiagonal matrix: diagonal of length t, off-diagonal t - 1.
struct TridiagonalMatrix {
  Vector diagonal;
  Vector off_diagonal;

  TridiagonalMatrix() = default;
  TridiagonalMatrix(Vector diag, Vector off);

  Index size() const { return diagonal.size(); }
  Matrix dense() const;
};

struct EigenDecomposition {
  Vector values;   // ascending
  Matrix vectors;  // orthonormal columns, vectors.col(k) pairs with values(k)
};

// Eigenvalues of a tridiagonal matrix together with the first component of
// each normalized eigenvector. Enough to evaluate e1^T f(T) e1.
struct SpectralWeights {
  Vector values;           // ascending
  Vector first_components;
};

// Greedy diagonal-pivoted partial Cholesky factor: A ~= L L^T.
struct LowRankFactor {
  Matrix factor;                    // n x p
  std::vector<Index> pivots;        // length p
  Vector residual_diagonal;         // diag(A - L L^T)
  std::vector<double> max_residual; // max residual diagonal before each pivot, then final

  Index rank() const { return factor.cols(); }
  Index order() const { return factor.rows(); }
};

// Lower-triangular Cholesky factor. Throws NotPositiveDefinite with the
// 0-based index of the first non-positive pivot.
Matrix cholesky(const SymmetricMatrix& a);

// Solves (L L^T) x = b for a lower-triangular factor L.
Vector cholesky_solve(const Matrix& lower, const Vector& b);
Matrix cholesky_solve(const Matrix& lower, const Matrix& b);

// log det(L L^T) from the factor diagonal.
double cholesky_logdet(const Matrix& lower);

// Implicit-shift QL on a symmetric tridiagonal matrix, at most 30 sweeps per
// eigenvalue. Throws NoConvergence when the sweep budget is exceeded.
EigenDecomposition tridiag_eigen(const TridiagonalMatrix& t);

// Same iteration, accumulating only the first row of the eigenvector matrix.
SpectralWeights tridiag_spectral_weights(const TridiagonalMatrix& t);

// Householder tridiagonalization followed by tridiag_eigen.
EigenDecomposition sym_eigen(const SymmetricMatrix& a);

// Applies f to the eigenvalues: Q f(Lambda) Q^T.
template <typename F>
Matrix spectral_function(const EigenDecomposition& e, F&& f) {
  Vector fv = e.values.unaryExpr(f);
  return e.vectors * fv.asDiagonal() * e.vectors.transpose();
}

// Greedy diagonal pivoting; ties go to the lowest index. Stops at rank
// max_rank (clamped to n) or once the largest residual diagonal entry is
// <= residual_tol.
LowRankFactor pivoted_cholesky(const SymmetricMatrix& a, Index max_rank, double residual_tol = 0.0);

// Applies (L L^T + sigma2 I)^{-1} through a p x p inner Cholesky factor.
class WoodburySolver {
 public:
  WoodburySolver(const Matrix& factor, double sigma2);

  Vector solve(const Vector& b) const;
  double sigma2() const { return sigma2_; }
  Index rank() const { return factor_.cols(); }

 private:
  Matrix factor_;
  Matrix inner_lower_;  // chol(L^T L + sigma2 I)
  double sigma2_;
};

Vector woodbury_solve(const LowRankFactor& l, double sigma2, const Vector& b);

}  // namespace bbgp
