#include "bbgp/validation.hpp"

#include <algorithm>
#include <cmath>

#include "bbgp/krylov.hpp"

namespace bbgp {

namespace {

double log_uniform(std::mt19937_64& gen, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(gen));
}

constexpr double kSlack = 1e-8;
constexpr double kGradTol = 1e-5;

void record(CheckResult& c, bool ok, double magnitude) {
  ok ? ++c.passed : ++c.failed;
  c.worst = std::max(c.worst, magnitude);
}

}  // namespace

RandomInstance random_instance(std::mt19937_64& gen, Index n, Index dims) {
  RandomInstance inst;
  inst.hp.lengthscales.resize(dims);
  for (Index d = 0; d < dims; ++d) inst.hp.lengthscales(d) = log_uniform(gen, 0.1, 2.0);
  inst.hp.signal_variance = log_uniform(gen, 0.1, 3.0);
  inst.hp.noise_variance = log_uniform(gen, 1e-2, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  inst.hp.mean = 0.5 * normal(gen);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  inst.x.resize(n, dims);
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < dims; ++d) inst.x(i, d) = unif(gen);
  }
  Vector xi(n);
  for (Index i = 0; i < n; ++i) xi(i) = normal(gen);
  const Matrix lower = cholesky(kernel_matrix(inst.x, inst.hp));
  inst.y = (lower.triangularView<Eigen::Lower>() * xi).array() + inst.hp.mean;
  return inst;
}

Matrix random_orthonormal(std::mt19937_64& gen, Index n, Index t) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, t);
  for (Index j = 0; j < t; ++j) {
    for (Index i = 0; i < n; ++i) g(i, j) = normal(gen);
  }
  // Two passes of Gram-Schmidt.
  for (Index j = 0; j < t; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      if (j > 0) g.col(j) -= g.leftCols(j) * (g.leftCols(j).transpose() * g.col(j));
    }
    g.col(j).normalize();
  }
  return g;
}

Matrix matrix_log(const SymmetricMatrix& k) {
  return spectral_function(sym_eigen(k), [](double v) { return std::log(v); });
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.failed == 0; });
}

ValidationReport validate_bounds(const ValidationOptions& opts) {
  std::mt19937_64 gen(opts.seed);
  std::uniform_int_distribution<Index> pick_dims(1, 3);
  CheckResult psd{"log-psd proposition"};
  CheckResult sandwich{"quadrature sandwich"};
  CheckResult bracket{"cg quadratic bracket"};
  CheckResult gradient{"frozen-objective gradient"};

  for (Index trial = 0; trial < opts.instances; ++trial) {
    // The first instances are n = 1 and n = 2 edge cases.
    const Index n = trial == 0 ? 1 : trial == 1 ? 2 : std::uniform_int_distribution<Index>(3, opts.max_n)(gen);
    const Index dims = pick_dims(gen);
    const RandomInstance inst = random_instance(gen, n, dims);
    const KrylovProblem problem = make_problem(inst.x, inst.y, inst.hp, std::min<Index>(n, 3));
    const SymmetricMatrix& k = problem.kernel;
    const Matrix logk = matrix_log(k);

    // log(T^T K T) - T^T log(K) T is PSD.
    const Index t_psd = n == 1 ? 1 : std::uniform_int_distribution<Index>(1, n - 1)(gen);
    const Matrix t = random_orthonormal(gen, n, t_psd);
    const Matrix diff = matrix_log(SymmetricMatrix(t.transpose() * k.dense() * t)) - t.transpose() * logk * t;
    const double min_eig = sym_eigen(SymmetricMatrix(diff)).values.minCoeff();
    record(psd, min_eig >= -kSlack, std::max(0.0, -min_eig));

    // Radau(floor) <= z^T log(K) z <= min(Gauss, Radau(ceiling)) for every t.
    const Matrix z = rademacher_probes(n, 1, opts.seed, static_cast<std::uint64_t>(trial));
    const double truth = z.col(0).dot(logk * z.col(0));
    LanczosState lanczos(z.col(0), lanczos_breakdown_scale(k));
    const MatVec mv = as_matvec(k);
    while (!lanczos.breakdown()) {
      lanczos.step(mv);
      const ProbeBracket pb = probe_bracket(lanczos, problem.envelope, opts.sides);
      const double slack = kSlack * std::max(1.0, std::abs(truth));
      const double violation =
          std::max({pb.radau_lower - truth, truth - pb.gauss, truth - pb.radau_upper, 0.0});
      record(sandwich, violation <= slack, violation);
    }

    // lower <= y^T K^{-1} y <= precond upper <= sigma2 upper at every iteration.
    const Matrix lower = cholesky(k);
    const double quad = problem.target.dot(cholesky_solve(lower, problem.target));
    std::optional<WoodburySolver> solver;
    if (problem.precond && problem.precond->rank() > 0) {
      solver.emplace(problem.precond->factor, problem.noise_variance);
    }
    CGState cg = cg_init(mv, problem.target, problem.noise_variance, solver ? &*solver : nullptr);
    for (Index it = 0; it <= n; ++it) {
      const double slack = kSlack * std::max(1.0, std::abs(quad));
      const double violation = std::max({cg.bracket.lower - quad, quad - cg.precond_upper,
                                         cg.precond_upper - cg.bracket.upper, 0.0});
      record(bracket, violation <= slack, violation);
      cg_step(cg, mv, problem.target, problem.noise_variance, solver ? &*solver : nullptr);
    }

    // Frozen-auxiliary gradient against central differences.
    const Index rounds = std::uniform_int_distribution<Index>(1, n)(gen);
    const KrylovRun run = run_krylov(problem, z, Vector(), 1e-300, rounds, opts.sides);
    FrozenAuxiliaries aux;
    aux.probes = probe_bases(run.lanczos);
    aux.v = run.cg.v;
    if (problem.precond && problem.precond->rank() > 0) aux.precond_factor = problem.precond->factor;
    const Vector analytic = frozen_objective_grad(inst.x, inst.y, inst.hp, aux);
    const Vector numeric = central_differences(
        [&](const Hyperparameters& hp) { return frozen_objective(inst.x, inst.y, hp, aux); }, inst.hp);
    double worst = 0.0;
    for (Index c = 0; c < analytic.size(); ++c) worst = std::max(worst, relative_error(analytic(c), numeric(c)));
    record(gradient, worst <= kGradTol, worst);
  }

  ValidationReport report;
  report.checks = {psd, sandwich, bracket, gradient};
  return report;
}

}  // namespace bbgp
