#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "bbgp/kernel.hpp"
#include "bbgp/objective.hpp"

namespace bbgp {

struct AdamState {
  Index step = 0;
  Vector first_moment;
  Vector second_moment;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState create(Index size, double learning_rate = 0.1);
};

// Bias-corrected Adam ascent step (the objective is maximized).
void adam_step(AdamState& state, UnconstrainedParams& params, const Vector& grad);

struct TraceRecord {
  Index step = 0;             // 1-based outer step
  double value = 0.0;         // objective estimate (LML lower bound) at evaluated_at
  double bias_bound = 0.0;
  Index iterations = 0;       // Krylov rounds
  Index cg_iterations = 0;
  std::vector<Index> lanczos_steps;
  std::vector<double> probe_widths;  // min(gauss, radau upper) - radau lower per probe
  double quad_gap = 0.0;
  bool converged = false;
  Hyperparameters evaluated_at;  // parameters the objective was evaluated at
  Hyperparameters hp;            // parameters after this step's update
  std::optional<double> rmse;    // test RMSE at hp, when evaluated
  double wall_ms = 0.0;

  // Negative LML estimate, the quantity usually plotted.
  double objective() const { return -value; }
};

struct FitConfig {
  BBGPConfig bbgp;
  Index steps = 500;
  double learning_rate = 0.1;
  Index eval_every = 10;  // 0 evaluates only after the last step
  bool warm_start = true;
};

// Called with the current hyperparameters; returns the test RMSE.
using EvalHook = std::function<double(const Hyperparameters&)>;

struct FitResult {
  Hyperparameters hp;
  std::vector<TraceRecord> trace;
  Index total_iterations = 0;
  Index total_cg_iterations = 0;
};

// Block updates: Krylov estimate at the current parameters (warm-started v),
// then one Adam step on the unconstrained coordinates.
FitResult fit(const Matrix& x, const Vector& y, const FitConfig& cfg, const Hyperparameters& init,
              const EvalHook& eval = {});

// Same optimizer driven by the exact Cholesky gradient.
FitResult fit_exact(const Matrix& x, const Vector& y, Index steps, double learning_rate, const Hyperparameters& init,
                    const EvalHook& eval = {}, Index eval_every = 10);

struct PredictResult {
  Vector mean;
  bool converged = false;
  Index iterations = 0;
  double relative_residual = 0.0;
};

// Posterior mean m + K_*^T alpha with K alpha = y - m solved by (pivoted
// Cholesky preconditioned) CG to ||r|| <= tol ||y - m||.
PredictResult predict_mean(const Matrix& x_train, const Vector& y_train, const Matrix& x_test,
                           const Hyperparameters& hp, double tol = 1e-6, Index max_iters = 0,
                           Index precond_rank = 100);

double rmse(const Vector& pred, const Vector& truth);

}  // namespace bbgp
