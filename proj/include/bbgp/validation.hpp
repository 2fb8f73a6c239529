#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bbgp/kernel.hpp"
#include "bbgp/objective.hpp"
#include "bbgp/quadrature.hpp"

namespace bbgp {

// Random GP regression problem: X uniform on [0,1]^D, hyperparameters drawn
// log-uniformly, y sampled from the GP they define.
struct RandomInstance {
  Matrix x;
  Vector y;
  Hyperparameters hp;
};

RandomInstance random_instance(std::mt19937_64& gen, Index n, Index dims);

// Random n x t matrix with orthonormal columns.
Matrix random_orthonormal(std::mt19937_64& gen, Index n, Index t);

// Matrix logarithm through sym_eigen.
Matrix matrix_log(const SymmetricMatrix& k);

// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-3);

// Central finite differences of f over the unconstrained coordinates.
template <typename F>
Vector central_differences(F&& f, const Hyperparameters& hp, double step = 1e-4) {
  const UnconstrainedParams base = to_unconstrained(hp);
  Vector g(base.values.size());
  for (Index c = 0; c < g.size(); ++c) {
    UnconstrainedParams up = base;
    UnconstrainedParams down = base;
    up.values(c) += step;
    down.values(c) -= step;
    g(c) = (f(to_constrained(up)) - f(to_constrained(down))) / (2.0 * step);
  }
  return g;
}

struct CheckResult {
  std::string name;
  Index passed = 0;
  Index failed = 0;
  double worst = 0.0;  // largest violation / error seen
};

struct ValidationOptions {
  Index instances = 25;
  Index max_n = 16;
  std::uint64_t seed = 0;
  RadauSides sides = RadauSides::kCorrect;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool all_passed() const;
};

// Property suite over random instances (n = 1 included): the log-PSD
// proposition, the quadrature sandwich, the CG quadratic-form bracket and
// the frozen-auxiliary gradient against finite differences.
ValidationReport validate_bounds(const ValidationOptions& opts);

}  // namespace bbgp
