#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bbgp/objective.hpp"
#include "bbgp/validation.hpp"
#include "helpers.hpp"

using namespace bbgp;
using namespace bbgp::testing;

namespace {

struct Problem {
  Matrix x;
  Vector y;
  Hyperparameters hp;
};

Problem synthetic(std::uint64_t seed, Index n, Index dims = 2) {
  std::mt19937_64 gen(seed);
  const RandomInstance inst = random_instance(gen, n, dims);
  return {inst.x, inst.y, inst.hp};
}

// Quadratic term with v frozen, computed densely.
double frozen_quad(const Matrix& x, const Vector& y, const Hyperparameters& hp, const Vector& v) {
  const Matrix k = kernel_matrix(x, hp).dense();
  const Vector r = (y.array() - hp.mean).matrix() - k * v;
  return 2.0 * r.dot(v) + v.dot(k * v) + r.squaredNorm() / hp.noise_variance;
}

std::vector<ProbeBasis> lanczos_bases(const SymmetricMatrix& k, const Matrix& z, Index steps) {
  std::vector<LanczosState> states;
  for (Index j = 0; j < z.cols(); ++j) {
    states.emplace_back(z.col(j), lanczos_breakdown_scale(k));
    for (Index i = 0; i < steps && !states.back().breakdown(); ++i) states.back().step(as_matvec(k));
  }
  return probe_bases(states);
}

}  // namespace

TEST_CASE("config") {
  BBGPConfig cfg;
  CHECK(cfg.epsilon == 1.0);
  CHECK(cfg.probes == 1);
  CHECK(cfg.max_rounds(50) == 50);
  CHECK(cfg.max_rounds(5000) == 1000);
  cfg.max_krylov_iters = 7;
  CHECK(cfg.max_rounds(50) == 7);
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("rademacher probes") {
  const Matrix a = rademacher_probes(100, 3, 5, 2);
  CHECK((a.array().abs() == 1.0).all());
  CHECK(a == rademacher_probes(100, 3, 5, 2));
  CHECK(a != rademacher_probes(100, 3, 5, 3));
  CHECK(a != rademacher_probes(100, 3, 6, 2));
  // Probe j does not depend on how many probes were drawn.
  CHECK(a.col(1) == rademacher_probes(100, 2, 5, 2).col(1));
  const double mean = rademacher_probes(4000, 1, 1, 1).mean();
  CHECK(std::abs(mean) < 0.1);
}

TEST_CASE("bias bound arithmetic") {
  LogdetBracket flat;
  CHECK(bias_bound(flat, QuadBracket{3.0, 3.0}) == 0.0);
  LogdetBracket wide;
  wide.lower = 1.0;
  wide.upper = 3.0;
  wide.gauss_mean = 3.0;
  CHECK(bias_bound(wide, QuadBracket{1.0, 5.0}) == doctest::Approx(3.0));
}

TEST_CASE("log divided difference") {
  CHECK(log_divided_difference(2.0, 2.0) == 0.5);
  CHECK(log_divided_difference(1.0, std::numbers::e) == doctest::Approx(1.0 / (std::numbers::e - 1.0)));
  CHECK(log_divided_difference(3.0, 1.0) == log_divided_difference(1.0, 3.0));
  // Close eigenvalues stay accurate.
  CHECK(log_divided_difference(1.0, 1.0 + 1e-12) == doctest::Approx(1.0 - 0.5e-12).epsilon(1e-15));
}

TEST_CASE("exactness with a complete probe set") {
  const Problem p = synthetic(1, 20);
  const Index n = 20;
  // Probes sqrt(n) e_i average to the identity, so the trace term is exact.
  const Matrix probes = std::sqrt(static_cast<double>(n)) * Matrix::Identity(n, n);
  BBGPConfig cfg;
  cfg.epsilon = 1e-10;
  cfg.probes = n;
  cfg.max_krylov_iters = n;
  const BBGPEstimate est = estimate_lml(p.x, p.y, p.hp, cfg, Vector(), probes);
  CHECK(est.value == doctest::Approx(exact_lml(p.x, p.y, p.hp)).epsilon(1e-9));
  const Vector g = exact_lml_grad(p.x, p.y, p.hp);
  for (Index c = 0; c < g.size(); ++c) CHECK(relative_error(est.gradient(c), g(c)) < 1e-6);
}

TEST_CASE("certified bias on n = 64") {
  const Problem p = synthetic(2, 64);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    BBGPConfig cfg;
    cfg.seed = seed;
    const BBGPEstimate est = estimate_lml(p.x, p.y, p.hp, cfg);
    BBGPConfig full = cfg;
    full.epsilon = 1e-12;
    full.max_krylov_iters = 64;
    const BBGPEstimate ref = estimate_lml(p.x, p.y, p.hp, full);
    CHECK(est.converged);
    CHECK(est.bias_bound <= 1.0);
    CHECK(std::abs(est.value - ref.value) <= est.bias_bound + 1e-8);
    // At full iterations the quadratic term is exact; only probe noise remains.
    const Vector target = p.y.array() - p.hp.mean;
    const double quad = target.dot(cholesky_solve(cholesky(kernel_matrix(p.x, p.hp)), target));
    CHECK(ref.quad.upper == doctest::Approx(quad).epsilon(1e-8));
    CHECK(ref.value == doctest::Approx(objective_value(64, ref.logdet.gauss_mean, quad)).epsilon(1e-9));
  }
}

TEST_CASE("bias bound shrinks with work") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Problem p = synthetic(10 + seed, 40);
    BBGPConfig cfg;
    cfg.epsilon = 1e-9;
    cfg.probes = 2;
    cfg.seed = seed;
    const BBGPEstimate est = estimate_lml(p.x, p.y, p.hp, cfg);
    for (std::size_t i = 1; i < est.history.size(); ++i) {
      CHECK(est.history[i].bias_bound <= est.history[i - 1].bias_bound + 1e-8);
    }
  }
}

TEST_CASE("larger epsilon never costs more iterations") {
  const Problem p = synthetic(3, 64);
  Index previous = 1 << 30;
  for (double eps : {0.1, 1.0, 10.0, 100.0}) {
    BBGPConfig cfg;
    cfg.epsilon = eps;
    const Index used = estimate_lml(p.x, p.y, p.hp, cfg).iterations_used;
    CHECK(used <= previous);
    previous = used;
  }
}

TEST_CASE("quadratic term gradient") {
  const Problem p = synthetic(4, 8);
  const SymmetricMatrix k = kernel_matrix(p.x, p.hp);
  const KernelDerivatives dk = kernel_derivatives(p.x, p.hp);
  const Vector target = p.y.array() - p.hp.mean;
  const Index d = p.hp.dims();
  const UnconstrainedParams u = to_unconstrained(p.hp);

  SUBCASE("zero auxiliary vector") {
    const Vector g = grad_quad_term(Vector::Zero(8), target, dk, std::nullopt, p.hp.noise_variance);
    for (Index c = 0; c <= d; ++c) CHECK(g(c) == 0.0);
    const double expected = -target.squaredNorm() / (p.hp.noise_variance * p.hp.noise_variance);
    CHECK(g(d + 1) == doctest::Approx(expected * sigmoid(u.values(u.noise_index()))).epsilon(1e-12));
    CHECK(g(d + 2) == doctest::Approx(-2.0 * target.sum() / p.hp.noise_variance).epsilon(1e-12));
  }
  SUBCASE("exact auxiliary vector") {
    const Vector v = cholesky_solve(cholesky(k), target);
    const Vector g = grad_quad_term(v, target - k * v, dk, std::nullopt, p.hp.noise_variance);
    for (Index c = 0; c < d + 2; ++c) {
      CHECK(relative_error(g(c), -v.dot(dk.apply(c, v))) < 1e-8);
    }
  }
  SUBCASE("random frozen vector against finite differences") {
    std::mt19937_64 gen(5);
    const Vector v = random_vector(gen, 8);
    const Vector g = grad_quad_term(v, target - k * v, dk, std::nullopt, p.hp.noise_variance);
    const Vector fd = central_differences([&](const Hyperparameters& h) { return frozen_quad(p.x, p.y, h, v); }, p.hp);
    for (Index c = 0; c < g.size(); ++c) CHECK(relative_error(g(c), fd(c)) < 1e-5);
  }
}

TEST_CASE("log-determinant term gradient") {
  SUBCASE("scaled identity") {
    // Far-apart inputs: K = (signal + noise) I exactly.
    Matrix x(6, 1);
    for (Index i = 0; i < 6; ++i) x(i, 0) = 1e4 * static_cast<double>(i);
    const Hyperparameters hp = make_hp(Vector::Ones(1), 0.8, 0.3);
    const double c = 1.1;
    const SymmetricMatrix k = kernel_matrix(x, hp);
    const Matrix z = rademacher_probes(6, 1, 0, 0);
    const std::vector<ProbeBasis> bases = lanczos_bases(k, z, 6);
    CHECK(bases[0].basis.cols() == 1);
    const UnconstrainedParams u = to_unconstrained(hp);
    const Vector g = grad_logdet_term(bases, k, kernel_derivatives(x, hp));
    CHECK(g(2) == doctest::Approx(6.0 * sigmoid(u.values(u.noise_index())) / c).epsilon(1e-12));
    CHECK(g(1) == doctest::Approx(6.0 * sigmoid(u.values(u.signal_index())) / c).epsilon(1e-12));
  }
  SUBCASE("repeated Ritz values") {
    // A subspace spanned by two eigenvectors of equal eigenvalue.
    Matrix x(6, 1);
    for (Index i = 0; i < 6; ++i) x(i, 0) = 1e4 * static_cast<double>(i);
    x(5, 0) = 0.2;
    const Hyperparameters hp = make_hp(Vector::Constant(1, 0.5), 0.8, 0.3);
    const SymmetricMatrix k = kernel_matrix(x, hp);
    ProbeBasis pb;
    pb.basis = Matrix::Zero(6, 3);
    pb.basis(1, 0) = 1.0;
    pb.basis(2, 1) = 1.0;
    pb.basis(0, 2) = 1.0;
    pb.probe = Vector::Zero(6);
    pb.probe << 1.0, 1.0, -1.0, 0.0, 0.0, 0.0;
    const std::vector<ProbeBasis> bases{pb};
    FrozenAuxiliaries aux{bases, Vector::Zero(6), std::nullopt};
    const Vector g = frozen_objective_grad(x, Vector::Zero(6), hp, aux);
    const Vector fd = central_differences([&](const Hyperparameters& h) { return frozen_objective(x, Vector::Zero(6), h, aux); }, hp);
    for (Index c = 0; c < g.size(); ++c) CHECK(relative_error(g(c), fd(c)) < 1e-5);
  }
  SUBCASE("random subspace against finite differences") {
    const Problem p = synthetic(6, 12, 3);
    const SymmetricMatrix k = kernel_matrix(p.x, p.hp);
    const std::vector<ProbeBasis> bases = lanczos_bases(k, rademacher_probes(12, 2, 1, 0), 5);
    const Vector g = grad_logdet_term(bases, k, kernel_derivatives(p.x, p.hp));
    auto logdet_term = [&](const Hyperparameters& h) {
      const Matrix kh = kernel_matrix(p.x, h).dense();
      double total = 0.0;
      for (const ProbeBasis& pb : bases) {
        const Matrix m = pb.basis.transpose() * kh * pb.basis;
        const Vector w = pb.basis.transpose() * pb.probe;
        total += w.dot(matrix_log(SymmetricMatrix(m)) * w);
      }
      return total / static_cast<double>(bases.size());
    };
    const Vector fd = central_differences(logdet_term, p.hp);
    for (Index c = 0; c < g.size(); ++c) CHECK(relative_error(g(c), fd(c)) < 1e-5);
  }
}

TEST_CASE("frozen objective") {
  const Problem p = synthetic(7, 24);
  BBGPConfig cfg;
  cfg.probes = 2;
  cfg.epsilon = 5.0;
  cfg.precond_rank = 5;
  const BBGPEstimate est = estimate_lml(p.x, p.y, p.hp, cfg);
  const KrylovProblem problem = make_problem(p.x, p.y, p.hp, cfg.precond_rank);
  const Matrix z = rademacher_probes(24, 2, cfg.seed, cfg.stream);
  FrozenAuxiliaries aux;
  aux.probes = lanczos_bases(problem.kernel, z, est.iterations_used);
  aux.v = est.v;
  aux.precond_factor = problem.precond->factor;
  CHECK(frozen_objective(p.x, p.y, p.hp, aux) == doctest::Approx(est.value).epsilon(1e-9));
  const Vector g = frozen_objective_grad(p.x, p.y, p.hp, aux);
  CHECK((g - est.gradient).norm() <= 1e-8 * std::max(1.0, g.norm()));
  const Vector fd = central_differences([&](const Hyperparameters& h) { return frozen_objective(p.x, p.y, h, aux); }, p.hp);
  for (Index c = 0; c < g.size(); ++c) CHECK(relative_error(g(c), fd(c)) < 1e-5);
}
