#include "bbgp/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "bbgp/errors.hpp"

namespace bbgp {

void BBGPConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("epsilon must be > 0");
  if (probes < 1) throw std::invalid_argument("probe count must be >= 1");
  if (max_krylov_iters < 0) throw std::invalid_argument("max_krylov_iters must be >= 0");
  if (precond_rank < 0) throw std::invalid_argument("precond_rank must be >= 0");
}

Index BBGPConfig::max_rounds(Index n) const {
  const Index cap = max_krylov_iters > 0 ? max_krylov_iters : std::min<Index>(n, 1000);
  return std::max<Index>(cap, 1);
}

Matrix rademacher_probes(Index n, Index count, std::uint64_t seed, std::uint64_t stream) {
  Matrix z(n, count);
  for (Index j = 0; j < count; ++j) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(j)};
    std::mt19937_64 gen(seq);
    std::uint64_t bits = 0;
    for (Index i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = gen();
      z(i, j) = (bits & 1u) != 0 ? 1.0 : -1.0;
      bits >>= 1;
    }
  }
  return z;
}

KrylovProblem make_problem(const Matrix& x, const Vector& y, const Hyperparameters& hp, Index precond_rank) {
  if (y.size() != x.rows()) {
    throw LengthMismatch(static_cast<std::size_t>(y.size()), static_cast<std::size_t>(x.rows()));
  }
  KrylovProblem p;
  p.kernel = kernel_matrix(x, hp);
  p.target = y.array() - hp.mean;
  p.noise_variance = hp.noise_variance;
  if (precond_rank > 0) {
    Matrix signal = p.kernel.dense();
    signal.diagonal().array() -= hp.noise_variance;
    p.precond = pivoted_cholesky(SymmetricMatrix(std::move(signal)), precond_rank);
  }
  p.envelope = spectral_envelope(p.kernel, hp.noise_variance);
  return p;
}

double bias_bound(const LogdetBracket& logdet, const QuadBracket& quad) {
  return 0.5 * std::max(0.0, logdet.gauss_mean - logdet.lower) + 0.5 * std::max(0.0, quad.upper - quad.lower);
}

double objective_value(Index n, double logdet_term, double quad_upper) {
  return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) - 0.5 * logdet_term -
         0.5 * quad_upper;
}

KrylovRun run_krylov(const KrylovProblem& problem, const Matrix& probes, const Vector& warm_v, double epsilon,
                     Index max_rounds, RadauSides sides) {
  const Index n = problem.kernel.order();
  if (probes.rows() != n || probes.cols() < 1) {
    throw std::invalid_argument("run_krylov: probes must be n x s with s >= 1");
  }
  const MatVec k = as_matvec(problem.kernel);
  std::optional<WoodburySolver> solver;
  if (problem.precond && problem.precond->rank() > 0) {
    solver.emplace(problem.precond->factor, problem.noise_variance);
  }
  const WoodburySolver* precond = solver ? &*solver : nullptr;

  KrylovRun run;
  run.cg = cg_init(k, problem.target, problem.noise_variance, precond, warm_v);
  const double scale = lanczos_breakdown_scale(problem.kernel);
  const Index hint = std::min<Index>(max_rounds, n);
  run.lanczos.reserve(static_cast<std::size_t>(probes.cols()));
  for (Index j = 0; j < probes.cols(); ++j) run.lanczos.emplace_back(probes.col(j), scale, hint);

  max_rounds = std::max<Index>(max_rounds, 1);
  while (true) {
    cg_step(run.cg, k, problem.target, problem.noise_variance, precond);
    for (LanczosState& s : run.lanczos) {
      if (!s.breakdown()) s.step(k);
    }
    ++run.rounds;
    run.logdet = logdet_bracket(run.lanczos, problem.envelope, sides);
    run.quad = {run.cg.bracket.lower, run.cg.best_upper()};
    run.bias_bound = bias_bound(run.logdet, run.quad);
    run.value = objective_value(n, run.logdet.gauss_mean, run.quad.upper);
    run.history.push_back({run.value, run.bias_bound, run.logdet.width(), run.quad.gap()});
    if (run.bias_bound <= epsilon) {
      run.converged = true;
      break;
    }
    if (run.rounds >= max_rounds) break;
  }
  return run;
}

double log_divided_difference(double a, double b) {
  if (a == b) return 1.0 / a;
  // log1p keeps nearby eigenvalues accurate.
  const double lo = std::min(a, b);
  const double x = (std::max(a, b) - lo) / lo;
  return std::log1p(x) / (x * lo);
}

Vector grad_quad_term(const Vector& v, const Vector& r, const KernelDerivatives& dk,
                      const std::optional<LowRankFactor>& precond, double noise_variance) {
  const Index dims = dk.dims();
  const bool low_rank = precond && precond->rank() > 0;
  const Vector s = low_rank ? woodbury_solve(*precond, noise_variance, r) : Vector(r / noise_variance);
  Vector g(dims + 3);
  // r = y - m 1 - K v; with dr = -dK v the term changes by
  // -2 (dK v)^T s - v^T dK v, plus -dnoise ||s||^2 from M^{-1}.
  for (Index c = 0; c < dims + 2; ++c) {
    const Vector dkv = dk.apply(c, v);
    g(c) = -2.0 * dkv.dot(s) - v.dot(dkv);
  }
  g(dims + 1) -= dk.noise_scale * s.squaredNorm();
  g(dims + 2) = -2.0 * (s.sum() + v.sum());
  return g;
}

Vector grad_logdet_term(std::span<const ProbeBasis> probes, const SymmetricMatrix& k, const KernelDerivatives& dk) {
  if (probes.empty()) throw std::invalid_argument("grad_logdet_term: no probes");
  const Index n = k.order();
  const Index dims = dk.dims();
  // d/du_c of g^T log(M) g with M = T^T K T = Q diag(l) Q^T, w = Q^T T^T z:
  //   sum_ab w_a w_b F_ab [Q^T T^T dK_c T Q]_ab = <T H T^T, dK_c>,  H = Q (ww^T .* F) Q^T.
  Matrix weight = Matrix::Zero(n, n);
  double noise_trace = 0.0;
  for (const ProbeBasis& pb : probes) {
    const Matrix& t = pb.basis;
    const Matrix kt = k.dense() * t;
    const EigenDecomposition eig = sym_eigen(SymmetricMatrix(t.transpose() * kt));
    const Index m = eig.values.size();
    for (Index a = 0; a < m; ++a) {
      if (!(eig.values(a) > 0.0)) throw NonPositiveRitzValue(eig.values(a));
    }
    const Vector w = eig.vectors.transpose() * (t.transpose() * pb.probe);
    Matrix g(m, m);
    for (Index b = 0; b < m; ++b) {
      for (Index a = 0; a < m; ++a) {
        g(a, b) = w(a) * w(b) * log_divided_difference(eig.values(a), eig.values(b));
      }
    }
    const Matrix h = eig.vectors * g * eig.vectors.transpose();
    noise_trace += h.trace();
    const Matrix th = t * h;
    weight.noalias() += th * t.transpose();
  }
  const double count = static_cast<double>(probes.size());
  weight /= count;
  noise_trace /= count;

  Vector grad(dims + 3);
  for (Index c = 0; c < dims; ++c) {
    grad(c) = weight.cwiseProduct(dk.lengthscale[static_cast<std::size_t>(c)]).sum();
  }
  grad(dims) = weight.cwiseProduct(dk.signal).sum();
  grad(dims + 1) = dk.noise_scale * noise_trace;
  grad(dims + 2) = 0.0;
  return grad;
}

std::vector<ProbeBasis> probe_bases(std::span<const LanczosState> states) {
  std::vector<ProbeBasis> out;
  out.reserve(states.size());
  for (const LanczosState& s : states) out.push_back({Matrix(s.basis()), s.probe()});
  return out;
}

BBGPEstimate estimate_lml(const Matrix& x, const Vector& y, const Hyperparameters& hp, const BBGPConfig& cfg,
                          const Vector& warm_v) {
  cfg.validate();
  return estimate_lml(x, y, hp, cfg, warm_v, rademacher_probes(x.rows(), cfg.probes, cfg.seed, cfg.stream));
}

BBGPEstimate estimate_lml(const Matrix& x, const Vector& y, const Hyperparameters& hp, const BBGPConfig& cfg,
                          const Vector& warm_v, const Matrix& probes) {
  cfg.validate();
  const KrylovProblem problem = make_problem(x, y, hp, cfg.precond_rank);
  const Index n = x.rows();
  KrylovRun run = run_krylov(problem, probes, warm_v, cfg.epsilon, cfg.max_rounds(n));

  BBGPEstimate est;
  est.value = run.value;
  est.bias_bound = run.bias_bound;
  est.iterations_used = run.rounds;
  est.converged = run.converged;
  est.logdet = run.logdet;
  est.quad = run.quad;
  est.quad_upper_sigma2 = run.cg.bracket.upper;
  est.cg_iterations = run.cg.iteration;
  for (const LanczosState& s : run.lanczos) est.lanczos_steps.push_back(s.steps());
  est.history = std::move(run.history);

  const KernelDerivatives dk = kernel_derivatives(x, hp);
  const std::vector<ProbeBasis> bases = probe_bases(run.lanczos);
  const Vector g_logdet = grad_logdet_term(bases, problem.kernel, dk);
  const Vector residual = problem.target - problem.kernel * run.cg.v;
  const Vector g_quad = grad_quad_term(run.cg.v, residual, dk, problem.precond, problem.noise_variance);
  est.gradient = -0.5 * (g_logdet + g_quad);
  est.v = std::move(run.cg.v);
  return est;
}

double frozen_objective(const Matrix& x, const Vector& y, const Hyperparameters& hp, const FrozenAuxiliaries& aux) {
  if (aux.probes.empty()) throw std::invalid_argument("frozen_objective: no probes");
  const SymmetricMatrix k = kernel_matrix(x, hp);
  const Index n = k.order();
  double logdet = 0.0;
  for (const ProbeBasis& pb : aux.probes) {
    const EigenDecomposition eig = sym_eigen(SymmetricMatrix(pb.basis.transpose() * (k.dense() * pb.basis)));
    const Vector w = eig.vectors.transpose() * (pb.basis.transpose() * pb.probe);
    for (Index a = 0; a < eig.values.size(); ++a) {
      if (!(eig.values(a) > 0.0)) throw NonPositiveRitzValue(eig.values(a));
      logdet += w(a) * w(a) * std::log(eig.values(a));
    }
  }
  logdet /= static_cast<double>(aux.probes.size());
  const Vector target = y.array() - hp.mean;
  const Vector r = target - k * aux.v;
  const double lower = 2.0 * r.dot(aux.v) + aux.v.dot(k * aux.v);
  double penalty = r.squaredNorm() / hp.noise_variance;
  if (aux.precond_factor && aux.precond_factor->cols() > 0) {
    penalty = r.dot(WoodburySolver(*aux.precond_factor, hp.noise_variance).solve(r));
  }
  return objective_value(n, logdet, lower + penalty);
}

Vector frozen_objective_grad(const Matrix& x, const Vector& y, const Hyperparameters& hp,
                             const FrozenAuxiliaries& aux) {
  const SymmetricMatrix k = kernel_matrix(x, hp);
  const KernelDerivatives dk = kernel_derivatives(x, hp);
  const Vector r = (y.array() - hp.mean).matrix() - k * aux.v;
  std::optional<LowRankFactor> precond;
  if (aux.precond_factor) {
    precond.emplace();
    precond->factor = *aux.precond_factor;
  }
  return -0.5 * (grad_logdet_term(aux.probes, k, dk) + grad_quad_term(aux.v, r, dk, precond, hp.noise_variance));
}

}  // namespace bbgp
