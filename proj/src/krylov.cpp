#include "bbgp/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bbgp/errors.hpp"

namespace bbgp {

MatVec as_matvec(const SymmetricMatrix& k) {
  return [&k](const Vector& x) -> Vector { return k.dense() * x; };
}

QuadBracket quad_bounds(const Vector& v, const Vector& r, const SymmetricMatrix& k, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("quad_bounds: sigma2 must be positive");
  QuadBracket b;
  b.lower = 2.0 * r.dot(v) + v.dot(k * v);
  b.upper = b.lower + r.squaredNorm() / sigma2;
  return b;
}

QuadBracket precond_quad_bound(const Vector& v, const Vector& r, const SymmetricMatrix& k,
                               const LowRankFactor& l, double sigma2) {
  QuadBracket b;
  b.lower = 2.0 * r.dot(v) + v.dot(k * v);
  b.upper = b.lower + r.dot(woodbury_solve(l, sigma2, r));
  return b;
}

namespace {

constexpr double kResidualFloor = 1e-14;

Vector apply_preconditioner(const WoodburySolver* precond, const Vector& r) {
  return precond != nullptr ? precond->solve(r) : r;
}

// With K v = y - r: 2 r^T v + v^T K v = r^T v + y^T v.
void update_bracket(CGState& s, const Vector& y, double sigma2, bool preconditioned) {
  s.bracket.lower = s.r.dot(s.v) + y.dot(s.v);
  s.bracket.upper = s.bracket.lower + s.r.squaredNorm() / sigma2;
  s.precond_upper = preconditioned ? s.bracket.lower + s.r.dot(s.z) : s.bracket.upper;
}

}  // namespace

CGState cg_init(const MatVec& k, const Vector& y, double sigma2, const WoodburySolver* precond,
                const Vector& v0) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("cg_init: sigma2 must be positive");
  const Index n = y.size();
  CGState s;
  if (v0.size() == 0) {
    s.v = Vector::Zero(n);
    s.r = y;
  } else {
    if (v0.size() != n) {
      throw std::invalid_argument("cg_init: warm start has the wrong length");
    }
    s.v = v0;
    s.r = y - k(v0);
  }
  s.z = apply_preconditioner(precond, s.r);
  s.p = s.z;
  s.rz = s.r.dot(s.z);
  s.y_norm = y.norm();
  update_bracket(s, y, sigma2, precond != nullptr);
  return s;
}

void cg_step(CGState& s, const MatVec& k, const Vector& y, double sigma2, const WoodburySolver* precond) {
  if (s.rz == 0.0 || s.p.squaredNorm() == 0.0) return;
  // Residual at working precision: further steps only amplify roundoff.
  if (s.r.norm() <= kResidualFloor * s.y_norm) return;
  const Vector q = k(s.p);
  const double curvature = s.p.dot(q);
  if (!(curvature > 0.0)) {
    std::ostringstream msg;
    msg << "conjugate gradients: non-positive curvature p^T K p = " << curvature << " at iteration "
        << s.iteration << ", |r|/|y| = " << s.r.norm() / s.y_norm;
    throw Breakdown(msg.str());
  }
  const double step = s.rz / curvature;
  s.v.noalias() += step * s.p;
  s.r.noalias() -= step * q;
  ++s.iteration;
  if (s.iteration % CGState::kDriftCheckInterval == 0) {
    const Vector exact = y - k(s.v);
    s.last_drift = (exact - s.r).norm();
    s.r = exact;
  }
  s.z = apply_preconditioner(precond, s.r);
  const double rz_next = s.r.dot(s.z);
  s.p = s.z + (rz_next / s.rz) * s.p;
  s.rz = rz_next;
  update_bracket(s, y, sigma2, precond != nullptr);
}

double lanczos_breakdown_scale(const SymmetricMatrix& k) { return 1e-12 * k.max_diagonal(); }

LanczosState::LanczosState(Vector probe, double breakdown_scale, Index capacity_hint)
    : probe_(std::move(probe)), breakdown_scale_(breakdown_scale) {
  const Index n = probe_.size();
  if (n == 0) throw std::invalid_argument("LanczosState: empty probe");
  probe_norm2_ = probe_.squaredNorm();
  if (!(probe_norm2_ > 0.0)) throw std::invalid_argument("LanczosState: zero probe");
  reserve(std::clamp<Index>(capacity_hint, 1, n) + 1);
  basis_.col(0) = probe_ / std::sqrt(probe_norm2_);
}

void LanczosState::reserve(Index columns) {
  const Index n = probe_.size();
  columns = std::min(columns, n + 1);
  if (basis_.cols() >= columns) return;
  basis_.conservativeResize(n, columns);
  alpha_.conservativeResize(columns);
  beta_.conservativeResize(columns);
}

void LanczosState::step(const MatVec& k) {
  const Index n = probe_.size();
  if (breakdown_) throw Breakdown("Lanczos: step requested after breakdown");
  if (t_ >= n) throw Breakdown("Lanczos: Krylov space exhausted");
  if (t_ + 2 > basis_.cols()) reserve(std::max<Index>(2 * basis_.cols(), t_ + 2));

  const Index j = t_;
  Vector w = k(basis_.col(j));
  const double a = basis_.col(j).dot(w);
  w.noalias() -= a * basis_.col(j);
  if (j > 0) w.noalias() -= beta_(j - 1) * basis_.col(j - 1);
  const auto q = basis_.leftCols(j + 1);
  for (int pass = 0; pass < 2; ++pass) {
    const Vector h = q.transpose() * w;
    w.noalias() -= q * h;
  }
  const double b = w.norm();
  alpha_(j) = a;
  beta_(j) = b;
  t_ = j + 1;
  if (t_ == n || !(b > breakdown_scale_)) {
    breakdown_ = true;
    return;
  }
  basis_.col(t_) = w / b;
}

}  // namespace bbgp
