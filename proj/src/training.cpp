#include "bbgp/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "bbgp/errors.hpp"

namespace bbgp {

AdamState AdamState::create(Index size, double learning_rate) {
  AdamState s;
  s.first_moment = Vector::Zero(size);
  s.second_moment = Vector::Zero(size);
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(AdamState& s, UnconstrainedParams& params, const Vector& grad) {
  if (grad.size() != params.values.size() || s.first_moment.size() != grad.size()) {
    throw LengthMismatch(static_cast<std::size_t>(grad.size()), static_cast<std::size_t>(params.values.size()));
  }
  ++s.step;
  s.first_moment = s.beta1 * s.first_moment + (1.0 - s.beta1) * grad;
  s.second_moment = s.beta2 * s.second_moment + (1.0 - s.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  const Vector m_hat = s.first_moment / c1;
  const Vector v_hat = s.second_moment / c2;
  params.values.array() += s.learning_rate * m_hat.array() / (v_hat.array().sqrt() + s.epsilon);
}

namespace {

using Clock = std::chrono::steady_clock;

bool should_evaluate(Index step, Index steps, Index every) {
  return step == steps || (every > 0 && step % every == 0);
}

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

FitResult fit(const Matrix& x, const Vector& y, const FitConfig& cfg, const Hyperparameters& init,
              const EvalHook& eval) {
  cfg.bbgp.validate();
  if (cfg.steps < 0) throw std::invalid_argument("fit: steps must be >= 0");
  init.validate();

  FitResult result;
  UnconstrainedParams params = to_unconstrained(init);
  AdamState adam = AdamState::create(params.values.size(), cfg.learning_rate);
  Hyperparameters hp = to_constrained(params);
  Vector warm_v;
  for (Index step = 1; step <= cfg.steps; ++step) {
    const auto start = Clock::now();
    BBGPConfig bcfg = cfg.bbgp;
    bcfg.stream = static_cast<std::uint64_t>(step);
    BBGPEstimate est = estimate_lml(x, y, hp, bcfg, cfg.warm_start ? warm_v : Vector());

    TraceRecord rec;
    rec.step = step;
    rec.value = est.value;
    rec.bias_bound = est.bias_bound;
    rec.iterations = est.iterations_used;
    rec.cg_iterations = est.cg_iterations;
    rec.lanczos_steps = est.lanczos_steps;
    for (const ProbeBracket& pb : est.logdet.probes) {
      rec.probe_widths.push_back(std::min(pb.gauss, pb.radau_upper) - pb.radau_lower);
    }
    rec.quad_gap = est.quad.gap();
    rec.converged = est.converged;
    rec.evaluated_at = hp;

    adam_step(adam, params, est.gradient);
    hp = to_constrained(params);
    warm_v = std::move(est.v);
    rec.hp = hp;
    if (eval && should_evaluate(step, cfg.steps, cfg.eval_every)) rec.rmse = eval(hp);
    rec.wall_ms = elapsed_ms(start);

    result.total_iterations += rec.iterations;
    result.total_cg_iterations += rec.cg_iterations;
    result.trace.push_back(std::move(rec));
  }
  result.hp = hp;
  return result;
}

FitResult fit_exact(const Matrix& x, const Vector& y, Index steps, double learning_rate, const Hyperparameters& init,
                    const EvalHook& eval, Index eval_every) {
  init.validate();
  FitResult result;
  UnconstrainedParams params = to_unconstrained(init);
  AdamState adam = AdamState::create(params.values.size(), learning_rate);
  Hyperparameters hp = to_constrained(params);
  for (Index step = 1; step <= steps; ++step) {
    const auto start = Clock::now();
    const ExactLml exact = exact_lml_with_grad(x, y, hp);
    TraceRecord rec;
    rec.step = step;
    rec.value = exact.value;
    rec.converged = true;
    rec.evaluated_at = hp;
    adam_step(adam, params, exact.gradient);
    hp = to_constrained(params);
    rec.hp = hp;
    if (eval && should_evaluate(step, steps, eval_every)) rec.rmse = eval(hp);
    rec.wall_ms = elapsed_ms(start);
    result.trace.push_back(std::move(rec));
  }
  result.hp = hp;
  return result;
}

PredictResult predict_mean(const Matrix& x_train, const Vector& y_train, const Matrix& x_test,
                           const Hyperparameters& hp, double tol, Index max_iters, Index precond_rank) {
  if (!(tol > 0.0)) throw std::invalid_argument("predict_mean: tol must be > 0");
  if (y_train.size() != x_train.rows()) {
    throw LengthMismatch(static_cast<std::size_t>(y_train.size()), static_cast<std::size_t>(x_train.rows()));
  }
  const Index n = x_train.rows();
  if (max_iters <= 0) max_iters = 10 * n;
  const KrylovProblem problem = make_problem(x_train, y_train, hp, std::min(precond_rank, n));
  std::optional<WoodburySolver> solver;
  if (problem.precond && problem.precond->rank() > 0) solver.emplace(problem.precond->factor, hp.noise_variance);
  const MatVec k = as_matvec(problem.kernel);

  CGState cg = cg_init(k, problem.target, hp.noise_variance, solver ? &*solver : nullptr);
  const double target_norm = problem.target.norm();
  const double threshold = tol * target_norm;
  PredictResult out;
  while (cg.residual_norm() > threshold && cg.iteration < max_iters) {
    const Index before = cg.iteration;
    cg_step(cg, k, problem.target, hp.noise_variance, solver ? &*solver : nullptr);
    if (cg.iteration == before) break;  // zero residual
  }
  out.iterations = cg.iteration;
  out.relative_residual = target_norm > 0.0 ? cg.residual_norm() / target_norm : 0.0;
  out.converged = cg.residual_norm() <= threshold;
  out.mean = (cross_kernel(x_test, x_train, hp) * cg.v).array() + hp.mean;
  return out;
}

double rmse(const Vector& pred, const Vector& truth) {
  if (pred.size() != truth.size()) {
    throw LengthMismatch(static_cast<std::size_t>(pred.size()), static_cast<std::size_t>(truth.size()));
  }
  if (pred.size() == 0) throw std::invalid_argument("rmse: empty input");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

}  // namespace bbgp
