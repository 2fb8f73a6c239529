#pragma once

#include <vector>

#include "bbgp/linalg.hpp"

namespace bbgp {

// Floor applied to every constrained-positive hyperparameter.
inline constexpr double kPositiveFloor = 1e-6;

// Matern-3/2 ARD kernel hyperparameters plus noise and constant mean.
struct Hyperparameters {
  Vector lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1.0;
  double mean = 0.0;

  // Initial values used before training: unit lengthscales, signal and
  // noise variances, zero mean.
  static Hyperparameters initial(Index dims);

  Index dims() const { return lengthscales.size(); }
  // Number of optimizer coordinates, D + 3.
  Index size() const { return lengthscales.size() + 3; }

  // Throws std::invalid_argument when a value is non-finite or below the floor.
  void validate() const;
};

// Optimizer coordinates. Layout: [lengthscales (D), signal, noise, mean].
// Positive parameters map through c = floor + softplus(u); the mean is raw.
struct UnconstrainedParams {
  Vector values;

  Index dims() const { return values.size() - 3; }
  Index signal_index() const { return values.size() - 3; }
  Index noise_index() const { return values.size() - 2; }
  Index mean_index() const { return values.size() - 1; }
};

double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);

UnconstrainedParams to_unconstrained(const Hyperparameters& hp);
Hyperparameters to_constrained(const UnconstrainedParams& u);

// d(constrained)/d(unconstrained) for every coordinate (1 for the mean).
Vector transform_jacobian(const UnconstrainedParams& u);

double matern32(const Vector& x, const Vector& x2, const Vector& lengthscales, double signal_variance);

// K = k(X, X) + noise * I. Rows of X are inputs.
SymmetricMatrix kernel_matrix(const Matrix& x, const Hyperparameters& hp);

// k(A, B) without noise; rows of A and B are inputs.
Matrix cross_kernel(const Matrix& a, const Matrix& b, const Hyperparameters& hp);

// dK/du for the kernel coordinates (lengthscales, signal, noise). The mean
// coordinate does not enter K. The noise derivative is noise_scale * I.
struct KernelDerivatives {
  std::vector<Matrix> lengthscale;
  Matrix signal;
  double noise_scale = 0.0;

  Index dims() const { return static_cast<Index>(lengthscale.size()); }
  // Number of kernel coordinates, D + 2.
  Index count() const { return dims() + 2; }
  // y = dK/du_c x, c indexing [lengthscales, signal, noise].
  Vector apply(Index c, const Vector& x) const;
  Matrix apply(Index c, const Matrix& x) const;
  Matrix dense(Index c) const;
};

KernelDerivatives kernel_derivatives(const Matrix& x, const Hyperparameters& hp);

// Exact log marginal likelihood via Cholesky:
//   -(n/2) log 2pi - 1/2 log det K - 1/2 (y - m)^T K^{-1} (y - m).
double exact_lml(const Matrix& x, const Vector& y, const Hyperparameters& hp);

// Gradient of exact_lml with respect to the unconstrained coordinates.
Vector exact_lml_grad(const Matrix& x, const Vector& y, const Hyperparameters& hp);

struct ExactLml {
  double value;
  Vector gradient;
};

// Value and gradient sharing one factorization.
ExactLml exact_lml_with_grad(const Matrix& x, const Vector& y, const Hyperparameters& hp);

}  // namespace bbgp
