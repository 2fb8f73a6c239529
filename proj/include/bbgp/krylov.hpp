#pragma once

#include <functional>
#include <optional>

#include "bbgp/linalg.hpp"

namespace bbgp {

// Read-only matrix-vector product with an SPD operator.
using MatVec = std::function<Vector(const Vector&)>;

MatVec as_matvec(const SymmetricMatrix& k);

// Bracket on y^T K^{-1} y from any iterate v with residual r = y - K v:
//   lower = 2 r^T v + v^T K v,  upper = lower + r^T r / sigma2.
struct QuadBracket {
  double lower = 0.0;
  double upper = 0.0;
  double gap() const { return upper - lower; }
};

QuadBracket quad_bounds(const Vector& v, const Vector& r, const SymmetricMatrix& k, double sigma2);

// Tighter upper bound using K_hat = L L^T + sigma2 I <= K:
//   upper = r^T K_hat^{-1} r + 2 r^T v + v^T K v.
QuadBracket precond_quad_bound(const Vector& v, const Vector& r, const SymmetricMatrix& k,
                               const LowRankFactor& l, double sigma2);

// Preconditioned conjugate gradients on K v = y. Without a preconditioner
// z == r. Every kDriftCheckInterval iterations r is recomputed as y - K v.
struct CGState {
  static constexpr Index kDriftCheckInterval = 50;

  Vector v;
  Vector r;
  Vector z;  // M^{-1} r
  Vector p;
  double rz = 0.0;
  Index iteration = 0;
  double y_norm = 0.0;
  double last_drift = 0.0;  // ||r_recursive - (y - K v)|| at the last check

  // Bracket with the sigma2 upper bound, and the preconditioned upper bound
  // (equal to bracket.upper when no preconditioner is used).
  QuadBracket bracket;
  double precond_upper = 0.0;

  double residual_norm() const { return r.norm(); }
  // The tightest certified upper bound available.
  double best_upper() const { return precond_upper; }
};

// Sets up the state from a warm start v0 (zero when empty); one matvec.
CGState cg_init(const MatVec& k, const Vector& y, double sigma2, const WoodburySolver* precond,
                const Vector& v0 = Vector());

// One (preconditioned) CG iteration. A zero residual makes the step a no-op.
// Throws Breakdown when p^T K p <= 0.
void cg_step(CGState& state, const MatVec& k, const Vector& y, double sigma2, const WoodburySolver* precond);

// Lanczos recurrence with two-pass classical Gram-Schmidt reorthogonalization
// against every stored basis vector.
class LanczosState {
 public:
  LanczosState() = default;
  // Starts from q1 = z / ||z||. breakdown_scale is the magnitude below which
  // a new off-diagonal entry signals an invariant subspace.
  LanczosState(Vector probe, double breakdown_scale, Index capacity_hint = 16);

  const Vector& probe() const { return probe_; }
  double probe_norm2() const { return probe_norm2_; }
  Index steps() const { return t_; }
  Index order() const { return probe_.size(); }
  bool breakdown() const { return breakdown_; }

  // n x t orthonormal basis.
  auto basis() const { return basis_.leftCols(t_); }
  Vector alpha() const { return alpha_.head(t_); }
  // Off-diagonal of the t x t tridiagonal, length t - 1.
  Vector beta() const { return beta_.head(t_ > 0 ? t_ - 1 : 0); }
  // beta_t, the coupling to the (t + 1)-th Lanczos vector.
  double coupling() const { return t_ > 0 ? beta_(t_ - 1) : 0.0; }
  TridiagonalMatrix tridiagonal() const { return {alpha(), beta()}; }

  // Appends one basis vector and one (alpha, beta) pair. Throws Breakdown when
  // called after an invariant subspace was found or when t == n.
  void step(const MatVec& k);

 private:
  void reserve(Index columns);

  Vector probe_;
  double probe_norm2_ = 0.0;
  double breakdown_scale_ = 0.0;
  Matrix basis_;  // columns [0, t) are the basis; column t holds q_{t+1} when available
  Vector alpha_;
  Vector beta_;
  Index t_ = 0;
  bool breakdown_ = false;
};

inline void lanczos_step(LanczosState& state, const MatVec& k) { state.step(k); }

// Breakdown threshold: 1e-12 times the largest diagonal entry of K.
double lanczos_breakdown_scale(const SymmetricMatrix& k);

}  // namespace bbgp
