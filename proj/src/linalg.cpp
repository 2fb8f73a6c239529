#include "bbgp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "bbgp/errors.hpp"

namespace bbgp {

SymmetricMatrix::SymmetricMatrix(Matrix a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("SymmetricMatrix: matrix is not square");
  }
  if (!a.allFinite()) {
    throw std::invalid_argument("SymmetricMatrix: non-finite entry");
  }
  a_ = 0.5 * (a + a.transpose());
}

double SymmetricMatrix::max_diagonal() const {
  return a_.size() == 0 ? 0.0 : a_.diagonal().maxCoeff();
}

double SymmetricMatrix::max_abs() const {
  return a_.size() == 0 ? 0.0 : a_.cwiseAbs().maxCoeff();
}

TridiagonalMatrix::TridiagonalMatrix(Vector diag, Vector off)
    : diagonal(std::move(diag)), off_diagonal(std::move(off)) {
  const Index expected = diagonal.size() == 0 ? 0 : diagonal.size() - 1;
  if (off_diagonal.size() != expected) {
    throw std::invalid_argument("TridiagonalMatrix: off-diagonal must have length t - 1");
  }
}

Matrix TridiagonalMatrix::dense() const {
  const Index t = size();
  Matrix m = Matrix::Zero(t, t);
  m.diagonal() = diagonal;
  if (t > 1) {
    m.diagonal(1) = off_diagonal;
    m.diagonal(-1) = off_diagonal;
  }
  return m;
}

Matrix cholesky(const SymmetricMatrix& sym) {
  const Matrix& a = sym.dense();
  const Index n = a.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    const double s = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(s > 0.0)) {
      throw NotPositiveDefinite(static_cast<std::size_t>(j));
    }
    const double ljj = std::sqrt(s);
    l(j, j) = ljj;
    const Index rest = n - j - 1;
    if (rest > 0) {
      l.col(j).tail(rest) =
          (a.col(j).tail(rest) - l.block(j + 1, 0, rest, j) * l.row(j).head(j).transpose()) / ljj;
    }
  }
  return l;
}

Vector cholesky_solve(const Matrix& lower, const Vector& b) {
  Vector x = lower.triangularView<Eigen::Lower>().solve(b);
  lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

Matrix cholesky_solve(const Matrix& lower, const Matrix& b) {
  Matrix x = lower.triangularView<Eigen::Lower>().solve(b);
  lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

double cholesky_logdet(const Matrix& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

namespace {

constexpr int kSweepsPerEigenvalue = 30;

// Implicit-shift QL on (d, e), e holding the off-diagonal in e[0..n-2].
// `rotate(i, c, s)` applies the plane rotation on columns i, i+1 of
// whatever eigenvector accumulator the caller keeps.
template <typename Rotate>
void implicit_ql(Vector& d, Vector& e, Rotate&& rotate) {
  const Index n = d.size();
  if (n == 0) return;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (Index l = 0; l < n; ++l) {
    int iter = 0;
    Index m = l;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d(m)) + std::abs(d(m + 1));
        if (std::abs(e(m)) <= eps * dd) break;
      }
      if (m != l) {
        if (iter++ == kSweepsPerEigenvalue) {
          throw NoConvergence("tridiagonal QL exceeded its sweep budget");
        }
        double g = (d(l + 1) - d(l)) / (2.0 * e(l));
        double r = std::hypot(g, 1.0);
        g = d(m) - d(l) + e(l) / (g + std::copysign(r, g));
        double s = 1.0;
        double c = 1.0;
        double p = 0.0;
        Index i = m - 1;
        bool underflow = false;
        for (; i >= l; --i) {
          const double f = s * e(i);
          const double b = c * e(i);
          r = std::hypot(f, g);
          e(i + 1) = r;
          if (r == 0.0) {
            d(i + 1) -= p;
            e(m) = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d(i + 1) - p;
          r = (d(i) - g) * s + 2.0 * c * b;
          p = s * r;
          d(i + 1) = g + p;
          g = c * r - b;
          rotate(i, c, s);
        }
        if (underflow) continue;
        d(l) -= p;
        e(l) = g;
        e(m) = 0.0;
      }
    } while (m != l);
  }
}

std::vector<Index> ascending_order(const Vector& d) {
  std::vector<Index> order(static_cast<std::size_t>(d.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return d(a) < d(b); });
  return order;
}

Vector padded_off_diagonal(const TridiagonalMatrix& t) {
  Vector e = Vector::Zero(t.size());
  if (t.size() > 1) e.head(t.size() - 1) = t.off_diagonal;
  return e;
}

}  // namespace

EigenDecomposition tridiag_eigen(const TridiagonalMatrix& t) {
  const Index n = t.size();
  Vector d = t.diagonal;
  Vector e = padded_off_diagonal(t);
  Matrix z = Matrix::Identity(n, n);
  implicit_ql(d, e, [&](Index i, double c, double s) {
    for (Index k = 0; k < n; ++k) {
      const double f = z(k, i + 1);
      z(k, i + 1) = s * z(k, i) + c * f;
      z(k, i) = c * z(k, i) - s * f;
    }
  });
  EigenDecomposition out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  const auto order = ascending_order(d);
  for (Index k = 0; k < n; ++k) {
    out.values(k) = d(order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = z.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

SpectralWeights tridiag_spectral_weights(const TridiagonalMatrix& t) {
  const Index n = t.size();
  Vector d = t.diagonal;
  Vector e = padded_off_diagonal(t);
  Vector row = Vector::Zero(n);
  if (n > 0) row(0) = 1.0;
  implicit_ql(d, e, [&](Index i, double c, double s) {
    const double f = row(i + 1);
    row(i + 1) = s * row(i) + c * f;
    row(i) = c * row(i) - s * f;
  });
  SpectralWeights out;
  out.values.resize(n);
  out.first_components.resize(n);
  const auto order = ascending_order(d);
  for (Index k = 0; k < n; ++k) {
    out.values(k) = d(order[static_cast<std::size_t>(k)]);
    out.first_components(k) = row(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

EigenDecomposition sym_eigen(const SymmetricMatrix& sym) {
  Matrix a = sym.dense();
  const Index n = a.rows();
  Matrix q = Matrix::Identity(n, n);
  for (Index k = 0; k + 2 < n; ++k) {
    const Index m = n - k - 1;
    Vector v = a.col(k).tail(m);
    const double xnorm = v.norm();
    if (v.tail(m - 1).squaredNorm() == 0.0) continue;
    const double alpha = v(0) > 0.0 ? -xnorm : xnorm;
    v(0) -= alpha;
    v /= v.norm();
    // A <- H A H, Q <- Q H with H = I - 2 v v^T acting on the trailing block.
    const Eigen::RowVectorXd vta = v.transpose() * a.bottomRows(m);
    a.bottomRows(m).noalias() -= 2.0 * v * vta;
    const Vector av = a.rightCols(m) * v;
    a.rightCols(m).noalias() -= 2.0 * av * v.transpose();
    const Vector qv = q.rightCols(m) * v;
    q.rightCols(m).noalias() -= 2.0 * qv * v.transpose();
  }
  TridiagonalMatrix t(a.diagonal(), n > 1 ? Vector(a.diagonal(-1)) : Vector());
  EigenDecomposition inner = tridiag_eigen(t);
  inner.vectors = q * inner.vectors;
  return inner;
}

LowRankFactor pivoted_cholesky(const SymmetricMatrix& sym, Index max_rank, double residual_tol) {
  const Matrix& a = sym.dense();
  const Index n = a.rows();
  const Index p = std::clamp<Index>(max_rank, 0, n);
  LowRankFactor out;
  out.residual_diagonal = a.diagonal();
  Vector& d = out.residual_diagonal;
  Matrix l(n, p);
  Index rank = 0;
  while (true) {
    Index j = 0;
    double best = n > 0 ? d(0) : 0.0;
    for (Index i = 1; i < n; ++i) {
      if (d(i) > best) {
        best = d(i);
        j = i;
      }
    }
    out.max_residual.push_back(best);
    if (rank == p || n == 0 || best <= residual_tol || !(best > 0.0)) break;
    const double root = std::sqrt(best);
    Vector col = a.col(j);
    if (rank > 0) col.noalias() -= l.leftCols(rank) * l.row(j).head(rank).transpose();
    col /= root;
    col(j) = root;
    l.col(rank) = col;
    d.array() -= col.array().square();
    d(j) = 0.0;
    out.pivots.push_back(j);
    ++rank;
  }
  out.factor = l.leftCols(rank);
  return out;
}

WoodburySolver::WoodburySolver(const Matrix& factor, double sigma2) : factor_(factor), sigma2_(sigma2) {
  if (!(sigma2 > 0.0)) {
    throw std::invalid_argument("WoodburySolver: sigma2 must be positive");
  }
  const Index p = factor_.cols();
  Matrix inner = factor_.transpose() * factor_;
  inner.diagonal().array() += sigma2_;
  inner_lower_ = p > 0 ? cholesky(SymmetricMatrix(std::move(inner))) : Matrix(0, 0);
}

Vector WoodburySolver::solve(const Vector& b) const {
  if (b.size() != factor_.rows()) {
    throw LengthMismatch(static_cast<std::size_t>(b.size()), static_cast<std::size_t>(factor_.rows()));
  }
  if (factor_.cols() == 0) return b / sigma2_;
  const Vector inner = cholesky_solve(inner_lower_, Vector(factor_.transpose() * b));
  return (b - factor_ * inner) / sigma2_;
}

Vector woodbury_solve(const LowRankFactor& l, double sigma2, const Vector& b) {
  return WoodburySolver(l.factor, sigma2).solve(b);
}

}  // namespace bbgp
