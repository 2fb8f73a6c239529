#include "bbgp/kernel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bbgp/errors.hpp"

namespace bbgp {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

// Scaled distance and Matern-3/2 value for one pair.
inline double scaled_distance(const double* a, const double* b, Index stride_a, Index stride_b,
                              const Vector& lengthscales) {
  double d2 = 0.0;
  for (Index k = 0; k < lengthscales.size(); ++k) {
    const double diff = (a[k * stride_a] - b[k * stride_b]) / lengthscales(k);
    d2 += diff * diff;
  }
  return std::sqrt(d2);
}

inline double matern32_of_distance(double d, double signal_variance) {
  return signal_variance * (1.0 + kSqrt3 * d) * std::exp(-kSqrt3 * d);
}

void check_inputs(const Matrix& x, const Hyperparameters& hp) {
  if (x.cols() != hp.dims()) {
    throw std::invalid_argument("input dimension " + std::to_string(x.cols()) +
                                " does not match " + std::to_string(hp.dims()) + " lengthscales");
  }
  hp.validate();
}

}  // namespace

Hyperparameters Hyperparameters::initial(Index dims) {
  Hyperparameters hp;
  hp.lengthscales = Vector::Ones(dims);
  hp.signal_variance = 1.0;
  hp.noise_variance = 1.0;
  hp.mean = 0.0;
  return hp;
}

void Hyperparameters::validate() const {
  auto positive = [](double v, const char* name) {
    if (!std::isfinite(v) || v < kPositiveFloor) {
      throw std::invalid_argument(std::string(name) + " must be finite and >= 1e-6");
    }
  };
  for (Index d = 0; d < lengthscales.size(); ++d) positive(lengthscales(d), "lengthscale");
  positive(signal_variance, "signal variance");
  positive(noise_variance, "noise variance");
  if (!std::isfinite(mean)) throw std::invalid_argument("mean must be finite");
}

double softplus(double x) {
  // log(1 + e^x) without overflow.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  // log(e^y - 1); y at or below the smallest normal maps to a large negative value.
  constexpr double tiny = 1e-300;
  if (y <= tiny) return std::log(tiny);
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

UnconstrainedParams to_unconstrained(const Hyperparameters& hp) {
  const Index dims = hp.dims();
  UnconstrainedParams u;
  u.values.resize(dims + 3);
  for (Index d = 0; d < dims; ++d) u.values(d) = softplus_inverse(hp.lengthscales(d) - kPositiveFloor);
  u.values(dims) = softplus_inverse(hp.signal_variance - kPositiveFloor);
  u.values(dims + 1) = softplus_inverse(hp.noise_variance - kPositiveFloor);
  u.values(dims + 2) = hp.mean;
  return u;
}

Hyperparameters to_constrained(const UnconstrainedParams& u) {
  if (u.values.size() < 3) throw std::invalid_argument("unconstrained vector needs at least 3 entries");
  const Index dims = u.dims();
  Hyperparameters hp;
  hp.lengthscales.resize(dims);
  for (Index d = 0; d < dims; ++d) hp.lengthscales(d) = kPositiveFloor + softplus(u.values(d));
  hp.signal_variance = kPositiveFloor + softplus(u.values(dims));
  hp.noise_variance = kPositiveFloor + softplus(u.values(dims + 1));
  hp.mean = u.values(dims + 2);
  return hp;
}

Vector transform_jacobian(const UnconstrainedParams& u) {
  Vector j = u.values.unaryExpr([](double v) { return sigmoid(v); });
  j(u.mean_index()) = 1.0;
  return j;
}

double matern32(const Vector& x, const Vector& x2, const Vector& lengthscales, double signal_variance) {
  if (x.size() != x2.size() || x.size() != lengthscales.size()) {
    throw LengthMismatch(static_cast<std::size_t>(x.size()), static_cast<std::size_t>(x2.size()));
  }
  const double d = scaled_distance(x.data(), x2.data(), 1, 1, lengthscales);
  return matern32_of_distance(d, signal_variance);
}

Matrix cross_kernel(const Matrix& a, const Matrix& b, const Hyperparameters& hp) {
  check_inputs(a, hp);
  check_inputs(b, hp);
  Matrix k(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      const double d = scaled_distance(&a(i, 0), &b(j, 0), a.rows(), b.rows(), hp.lengthscales);
      k(i, j) = matern32_of_distance(d, hp.signal_variance);
    }
  }
  return k;
}

SymmetricMatrix kernel_matrix(const Matrix& x, const Hyperparameters& hp) {
  check_inputs(x, hp);
  const Index n = x.rows();
  if (n < 1) throw std::invalid_argument("kernel_matrix: need at least one input");
  Matrix k(n, n);
  for (Index j = 0; j < n; ++j) {
    k(j, j) = hp.signal_variance + hp.noise_variance;
    for (Index i = j + 1; i < n; ++i) {
      const double d = scaled_distance(&x(i, 0), &x(j, 0), n, n, hp.lengthscales);
      const double v = matern32_of_distance(d, hp.signal_variance);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return SymmetricMatrix(std::move(k));
}

KernelDerivatives kernel_derivatives(const Matrix& x, const Hyperparameters& hp) {
  check_inputs(x, hp);
  const Index n = x.rows();
  const Index dims = hp.dims();
  const Vector jac = transform_jacobian(to_unconstrained(hp));

  KernelDerivatives out;
  out.lengthscale.assign(static_cast<std::size_t>(dims), Matrix::Zero(n, n));
  out.signal.resize(n, n);
  out.noise_scale = jac(dims + 1);

  // dk/dl_k = 3 s exp(-sqrt3 d) (x_k - x'_k)^2 / l_k^3; zero at coincident points.
  Vector inv_cube = hp.lengthscales.array().cube().inverse();
  for (Index j = 0; j < n; ++j) {
    out.signal(j, j) = jac(dims);
    for (Index i = j + 1; i < n; ++i) {
      const double d = scaled_distance(&x(i, 0), &x(j, 0), n, n, hp.lengthscales);
      const double e = std::exp(-kSqrt3 * d);
      const double ds = (1.0 + kSqrt3 * d) * e * jac(dims);
      out.signal(i, j) = ds;
      out.signal(j, i) = ds;
      const double common = 3.0 * hp.signal_variance * e;
      for (Index k = 0; k < dims; ++k) {
        const double diff = x(i, k) - x(j, k);
        const double v = common * diff * diff * inv_cube(k) * jac(k);
        out.lengthscale[static_cast<std::size_t>(k)](i, j) = v;
        out.lengthscale[static_cast<std::size_t>(k)](j, i) = v;
      }
    }
  }
  return out;
}

Vector KernelDerivatives::apply(Index c, const Vector& x) const {
  if (c < dims()) return lengthscale[static_cast<std::size_t>(c)] * x;
  if (c == dims()) return signal * x;
  if (c == dims() + 1) return noise_scale * x;
  throw std::out_of_range("KernelDerivatives: coordinate out of range");
}

Matrix KernelDerivatives::apply(Index c, const Matrix& x) const {
  if (c < dims()) return lengthscale[static_cast<std::size_t>(c)] * x;
  if (c == dims()) return signal * x;
  if (c == dims() + 1) return noise_scale * x;
  throw std::out_of_range("KernelDerivatives: coordinate out of range");
}

Matrix KernelDerivatives::dense(Index c) const {
  if (c < dims()) return lengthscale[static_cast<std::size_t>(c)];
  if (c == dims()) return signal;
  if (c == dims() + 1) return noise_scale * Matrix::Identity(signal.rows(), signal.cols());
  throw std::out_of_range("KernelDerivatives: coordinate out of range");
}

namespace {

struct Factorized {
  Matrix lower;
  Vector alpha;  // K^{-1} (y - m)
  double value;
};

Factorized factorize(const Matrix& x, const Vector& y, const Hyperparameters& hp) {
  if (y.size() != x.rows()) {
    throw LengthMismatch(static_cast<std::size_t>(y.size()), static_cast<std::size_t>(x.rows()));
  }
  Factorized f;
  f.lower = cholesky(kernel_matrix(x, hp));
  const Vector centered = y.array() - hp.mean;
  f.alpha = cholesky_solve(f.lower, centered);
  const double n = static_cast<double>(y.size());
  f.value = -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * cholesky_logdet(f.lower) -
            0.5 * centered.dot(f.alpha);
  return f;
}

}  // namespace

double exact_lml(const Matrix& x, const Vector& y, const Hyperparameters& hp) {
  return factorize(x, y, hp).value;
}

ExactLml exact_lml_with_grad(const Matrix& x, const Vector& y, const Hyperparameters& hp) {
  const Factorized f = factorize(x, y, hp);
  const Index n = x.rows();
  const Index dims = hp.dims();
  Matrix lower_inv = f.lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  // W = alpha alpha^T - K^{-1}; dL/du_c = 1/2 sum(W .* dK_c).
  Matrix w = -(lower_inv.transpose() * lower_inv);
  w.noalias() += f.alpha * f.alpha.transpose();
  const KernelDerivatives dk = kernel_derivatives(x, hp);

  ExactLml out;
  out.value = f.value;
  out.gradient.resize(dims + 3);
  for (Index k = 0; k < dims; ++k) {
    out.gradient(k) = 0.5 * w.cwiseProduct(dk.lengthscale[static_cast<std::size_t>(k)]).sum();
  }
  out.gradient(dims) = 0.5 * w.cwiseProduct(dk.signal).sum();
  out.gradient(dims + 1) = 0.5 * dk.noise_scale * w.trace();
  out.gradient(dims + 2) = f.alpha.sum();
  return out;
}

Vector exact_lml_grad(const Matrix& x, const Vector& y, const Hyperparameters& hp) {
  return exact_lml_with_grad(x, y, hp).gradient;
}

}  // namespace bbgp
