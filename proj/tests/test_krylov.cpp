#include <doctest.h>

#include "bbgp/errors.hpp"
#include "bbgp/krylov.hpp"
#include "helpers.hpp"

using namespace bbgp;
using namespace bbgp::testing;

namespace {

double dense_quad(const SymmetricMatrix& k, const Vector& y) { return y.dot(cholesky_solve(cholesky(k), y)); }

// K = A + sigma2 I with A PSD of low numerical rank, like a kernel matrix.
SymmetricMatrix kernel_like(std::mt19937_64& gen, Index n, Index rank, double sigma2) {
  const Matrix g = random_matrix(gen, n, rank);
  return SymmetricMatrix(g * g.transpose() + sigma2 * Matrix::Identity(n, n));
}

}  // namespace

TEST_CASE("cg steps") {
  SUBCASE("identity converges in one step") {
    std::mt19937_64 gen(1);
    const Vector y = random_vector(gen, 5);
    const SymmetricMatrix k(Matrix::Identity(5, 5));
    CGState s = cg_init(as_matvec(k), y, 1.0, nullptr);
    cg_step(s, as_matvec(k), y, 1.0, nullptr);
    CHECK((s.v - y).norm() < 1e-15);
    CHECK(s.residual_norm() < 1e-15);
  }
  SUBCASE("diag(1,2) converges in two steps") {
    const SymmetricMatrix k = diag({1, 2});
    const Vector y = Vector::Ones(2);
    CGState s = cg_init(as_matvec(k), y, 1.0, nullptr);
    for (int i = 0; i < 2; ++i) cg_step(s, as_matvec(k), y, 1.0, nullptr);
    CHECK(s.v(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.v(1) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(s.iteration == 2);
  }
  SUBCASE("warm start at the solution stays put") {
    std::mt19937_64 gen(2);
    const SymmetricMatrix k = random_spd(gen, 6);
    const Vector y = random_vector(gen, 6);
    const Vector exact = cholesky_solve(cholesky(k), y);
    CGState s = cg_init(as_matvec(k), y, 1.0, nullptr, exact);
    CHECK(s.residual_norm() < 1e-12);
    const Vector before = s.v;
    cg_step(s, as_matvec(k), y, 1.0, nullptr);
    CHECK((s.v - before).norm() < 1e-12);
  }
  SUBCASE("finite termination on a random system") {
    std::mt19937_64 gen(3);
    const SymmetricMatrix k = random_spd(gen, 12);
    const Vector y = random_vector(gen, 12);
    CGState s = cg_init(as_matvec(k), y, 1.0, nullptr);
    for (int i = 0; i < 12; ++i) cg_step(s, as_matvec(k), y, 1.0, nullptr);
    CHECK((k.dense() * s.v - y).norm() < 1e-9 * y.norm());
  }
  SUBCASE("indefinite operator is reported") {
    const SymmetricMatrix k = diag({1, -1});
    Vector y(2);
    y << 0.0, 1.0;
    CGState s = cg_init(as_matvec(k), y, 1.0, nullptr);
    CHECK_THROWS_AS(cg_step(s, as_matvec(k), y, 1.0, nullptr), Breakdown);
  }
}

TEST_CASE("quadratic form bracket") {
  SUBCASE("noise-dominated scalar") {
    const SymmetricMatrix k = diag({2});
    const Vector y = Vector::Constant(1, 2.0);
    const QuadBracket b = quad_bounds(Vector::Zero(1), y, k, 2.0);
    CHECK(b.lower == 0.0);
    CHECK(b.upper == doctest::Approx(2.0));
    CHECK(dense_quad(k, y) == doctest::Approx(2.0));
  }
  SUBCASE("exact solve closes the bracket") {
    std::mt19937_64 gen(4);
    const SymmetricMatrix k = kernel_like(gen, 8, 3, 0.5);
    const Vector y = random_vector(gen, 8);
    const Vector v = cholesky_solve(cholesky(k), y);
    const QuadBracket b = quad_bounds(v, y - k.dense() * v, k, 0.5);
    CHECK(b.lower == doctest::Approx(dense_quad(k, y)).epsilon(1e-12));
    CHECK(b.gap() < 1e-12);
  }
  SUBCASE("partial CG iterates are bracketed") {
    std::mt19937_64 gen(5);
    const double sigma2 = 0.3;
    const SymmetricMatrix k = kernel_like(gen, 16, 10, sigma2);
    const Vector y = random_vector(gen, 16);
    const double truth = dense_quad(k, y);
    CGState s = cg_init(as_matvec(k), y, sigma2, nullptr);
    for (int i = 0; i < 16; ++i) {
      CHECK(s.bracket.lower <= truth + 1e-10);
      CHECK(s.bracket.upper >= truth - 1e-10);
      const QuadBracket direct = quad_bounds(s.v, y - k.dense() * s.v, k, sigma2);
      CHECK(direct.lower == doctest::Approx(s.bracket.lower).epsilon(1e-8));
      cg_step(s, as_matvec(k), y, sigma2, nullptr);
    }
  }
}

TEST_CASE("preconditioned quadratic bound") {
  std::mt19937_64 gen(6);
  const double sigma2 = 0.2;
  SUBCASE("empty factor reduces to the noise bound") {
    const SymmetricMatrix k = kernel_like(gen, 10, 4, sigma2);
    const Vector y = random_vector(gen, 10);
    const Vector v = 0.5 * y;
    const Vector r = y - k.dense() * v;
    LowRankFactor empty;
    empty.factor = Matrix::Zero(10, 0);
    const QuadBracket plain = quad_bounds(v, r, k, sigma2);
    const QuadBracket pre = precond_quad_bound(v, r, k, empty, sigma2);
    CHECK(pre.lower == plain.lower);
    CHECK(pre.upper == doctest::Approx(plain.upper).epsilon(1e-14));
  }
  SUBCASE("full-rank factor gives the exact value") {
    const SymmetricMatrix k = kernel_like(gen, 12, 12, sigma2);
    const Vector y = random_vector(gen, 12);
    const Vector v = random_vector(gen, 12);
    const LowRankFactor full =
        pivoted_cholesky(SymmetricMatrix(k.dense() - sigma2 * Matrix::Identity(12, 12)), 12, 0.0);
    const QuadBracket pre = precond_quad_bound(v, y - k.dense() * v, k, full, sigma2);
    CHECK(pre.upper == doctest::Approx(dense_quad(k, y)).epsilon(1e-8));
  }
  SUBCASE("ordering of the upper bounds") {
    const SymmetricMatrix k = kernel_like(gen, 16, 8, sigma2);
    const Vector y = random_vector(gen, 16);
    const LowRankFactor p4 =
        pivoted_cholesky(SymmetricMatrix(k.dense() - sigma2 * Matrix::Identity(16, 16)), 4, 0.0);
    const WoodburySolver solver(p4.factor, sigma2);
    const double truth = dense_quad(k, y);
    CGState s = cg_init(as_matvec(k), y, sigma2, &solver);
    for (int i = 0; i < 6; ++i) {
      const Vector r = y - k.dense() * s.v;
      const QuadBracket plain = quad_bounds(s.v, r, k, sigma2);
      const QuadBracket pre = precond_quad_bound(s.v, r, k, p4, sigma2);
      CHECK(plain.upper >= pre.upper - 1e-10);
      CHECK(pre.upper >= truth - 1e-10);
      CHECK(s.precond_upper == doctest::Approx(pre.upper).epsilon(1e-8));
      cg_step(s, as_matvec(k), y, sigma2, &solver);
    }
  }
}

TEST_CASE("lanczos") {
  SUBCASE("eigenvector start breaks down immediately") {
    const SymmetricMatrix k = diag({3, 1, 2});
    Vector z = Vector::Zero(3);
    z(0) = 2.0;
    LanczosState s(z, lanczos_breakdown_scale(k));
    s.step(as_matvec(k));
    CHECK(s.steps() == 1);
    CHECK(s.breakdown());
    CHECK(s.alpha()(0) == doctest::Approx(3.0));
  }
  SUBCASE("full run reproduces the spectrum") {
    std::mt19937_64 gen(7);
    const SymmetricMatrix k = random_spd(gen, 8);
    LanczosState s(random_vector(gen, 8), lanczos_breakdown_scale(k));
    while (!s.breakdown()) lanczos_step(s, as_matvec(k));
    CHECK(s.steps() == 8);
    const Vector ritz = tridiag_eigen(s.tridiagonal()).values;
    CHECK((ritz - sym_eigen(k).values).norm() < 1e-8);
    const Matrix q = s.basis();
    CHECK((q.transpose() * q - Matrix::Identity(8, 8)).norm() < 1e-12);
    CHECK(max_rel_diff(q.transpose() * k.dense() * q, s.tridiagonal().dense()) < 1e-10);
  }
  SUBCASE("partial run satisfies the three-term relation") {
    std::mt19937_64 gen(8);
    const SymmetricMatrix k = random_spd(gen, 20);
    const Vector z = random_vector(gen, 20);
    LanczosState s(z, lanczos_breakdown_scale(k));
    for (int i = 0; i < 5; ++i) s.step(as_matvec(k));
    CHECK(s.beta().size() == 4);
    CHECK(s.coupling() > 0.0);
    CHECK((s.basis().col(0) - z / z.norm()).norm() < 1e-14);
    CHECK(s.probe_norm2() == doctest::Approx(z.squaredNorm()));
    CHECK(max_rel_diff(s.basis().transpose() * k.dense() * s.basis(), s.tridiagonal().dense()) < 1e-10);
  }
}
