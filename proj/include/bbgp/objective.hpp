#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bbgp/kernel.hpp"
#include "bbgp/krylov.hpp"
#include "bbgp/linalg.hpp"
#include "bbgp/quadrature.hpp"

namespace bbgp {

struct BBGPConfig {
  double epsilon = 1.0;        // certified bias target, nats
  Index probes = 1;
  Index max_krylov_iters = 0;  // 0 selects min(n, 1000)
  Index precond_rank = 100;    // 0 disables the preconditioner
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;    // probe stream; the trainer passes the outer step

  void validate() const;
  Index max_rounds(Index n) const;
};

// n x s matrix of independent +-1 entries, a pure function of (seed, stream).
Matrix rademacher_probes(Index n, Index count, std::uint64_t seed, std::uint64_t stream);

// Everything the Krylov estimator needs at one hyperparameter setting.
struct KrylovProblem {
  SymmetricMatrix kernel;
  Vector target;  // y - mean
  double noise_variance = 1.0;
  std::optional<LowRankFactor> precond;  // pivoted Cholesky of K - noise I
  SpectralEnvelope envelope;
};

KrylovProblem make_problem(const Matrix& x, const Vector& y, const Hyperparameters& hp, Index precond_rank);

struct RoundRecord {
  double value = 0.0;
  double bias_bound = 0.0;
  double logdet_width = 0.0;
  double quad_gap = 0.0;
};

struct KrylovRun {
  CGState cg;
  std::vector<LanczosState> lanczos;
  LogdetBracket logdet;
  QuadBracket quad;  // lower, and the upper bound used by the objective
  double value = 0.0;
  double bias_bound = 0.0;
  Index rounds = 0;
  bool converged = false;
  std::vector<RoundRecord> history;
};

// Advances CG and one Lanczos recurrence per probe in lockstep, one step each
// per round, until the bias bound is <= epsilon or max_rounds is reached.
KrylovRun run_krylov(const KrylovProblem& problem, const Matrix& probes, const Vector& warm_v, double epsilon,
                     Index max_rounds, RadauSides sides = RadauSides::kCorrect);

// 1/2 (mean Gauss estimate - logdet lower) + 1/2 (quad upper - quad lower).
// The Gauss mean rather than the bracket's upper end is used because it is
// the log-det value that enters the objective.
double bias_bound(const LogdetBracket& logdet, const QuadBracket& quad);

// -(n/2) log 2pi - 1/2 logdet_term - 1/2 quad_upper.
double objective_value(Index n, double logdet_term, double quad_upper);

// Derivative of r^T M^{-1} r + 2 r^T v + v^T K v (M = sigma2 I, or the frozen
// L L^T + sigma2 I) with v held fixed, per unconstrained coordinate (D + 3).
Vector grad_quad_term(const Vector& v, const Vector& r, const KernelDerivatives& dk,
                      const std::optional<LowRankFactor>& precond, double noise_variance);

// Derivative of (1/s) sum_i z_i^T T_i log(T_i^T K T_i) T_i^T z_i with every
// T_i and z_i held fixed, per unconstrained coordinate (D + 3).
struct ProbeBasis {
  Matrix basis;  // n x t, orthonormal columns
  Vector probe;  // in the column space of basis
};

Vector grad_logdet_term(std::span<const ProbeBasis> probes, const SymmetricMatrix& k, const KernelDerivatives& dk);

// First divided difference of log: (log a - log b) / (a - b), 1/a when a == b.
double log_divided_difference(double a, double b);

std::vector<ProbeBasis> probe_bases(std::span<const LanczosState> states);

struct BBGPEstimate {
  double value = 0.0;       // stochastic lower bound on the LML, nats
  double bias_bound = 0.0;
  Vector gradient;          // d value / d unconstrained coordinates
  Index iterations_used = 0;
  bool converged = false;
  LogdetBracket logdet;
  QuadBracket quad;
  double quad_upper_sigma2 = 0.0;
  std::vector<Index> lanczos_steps;
  Index cg_iterations = 0;
  Vector v;  // auxiliary CG solution, reused as the next warm start
  std::vector<RoundRecord> history;
};

BBGPEstimate estimate_lml(const Matrix& x, const Vector& y, const Hyperparameters& hp, const BBGPConfig& cfg,
                          const Vector& warm_v = Vector());

// Same, with explicit probe vectors (columns) instead of a seeded draw.
BBGPEstimate estimate_lml(const Matrix& x, const Vector& y, const Hyperparameters& hp, const BBGPConfig& cfg,
                          const Vector& warm_v, const Matrix& probes);

// Auxiliary quantities frozen at one point: the objective becomes a smooth
// function of the hyperparameters whose gradient estimate_lml reports.
struct FrozenAuxiliaries {
  std::vector<ProbeBasis> probes;
  Vector v;
  std::optional<Matrix> precond_factor;
};

double frozen_objective(const Matrix& x, const Vector& y, const Hyperparameters& hp, const FrozenAuxiliaries& aux);
Vector frozen_objective_grad(const Matrix& x, const Vector& y, const Hyperparameters& hp,
                             const FrozenAuxiliaries& aux);

}  // namespace bbgp
