#include "bbgp/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bbgp/errors.hpp"

namespace bbgp {

double lambda_max_upper(const SymmetricMatrix& k) {
  if (k.order() == 0) return 0.0;
  return k.dense().cwiseAbs().colwise().sum().maxCoeff();
}

SpectralEnvelope spectral_envelope(const SymmetricMatrix& k, double noise_variance) {
  SpectralEnvelope e;
  e.lambda_min_floor = noise_variance;
  e.lambda_max_ceiling = std::max(lambda_max_upper(k), noise_variance);
  return e;
}

double gauss_logdet_estimate(const TridiagonalMatrix& t, double probe_norm2) {
  const SpectralWeights w = tridiag_spectral_weights(t);
  double sum = 0.0;
  for (Index i = 0; i < w.values.size(); ++i) {
    if (!(w.values(i) > 0.0)) throw NonPositiveRitzValue(w.values(i));
    const double c = w.first_components(i);
    sum += c * c * std::log(w.values(i));
  }
  return probe_norm2 * sum;
}

double gauss_logdet_estimate(const Vector& alpha, const Vector& beta, double probe_norm2) {
  return gauss_logdet_estimate(TridiagonalMatrix(alpha, beta), probe_norm2);
}

TridiagonalMatrix radau_modify(const Vector& alpha, const Vector& beta, double mu) {
  const Index t = alpha.size();
  if (t < 1 || beta.size() != t) {
    throw std::invalid_argument("radau_modify: need t >= 1 diagonal entries and t couplings");
  }
  const double coupling2 = beta(t - 1) * beta(t - 1);
  double alpha_hat = mu;
  if (coupling2 > 0.0) {
    // Forward elimination of (T_t - mu I). With right-hand side e_t only the
    // last pivot matters: delta_t = beta_t^2 / d_t.
    constexpr double eps = std::numeric_limits<double>::epsilon();
    double d = 0.0;
    for (Index j = 0; j < t; ++j) {
      const double diag = alpha(j) - mu;
      d = j == 0 ? diag : diag - beta(j - 1) * beta(j - 1) / d;
      const double scale = std::abs(alpha(j)) + std::abs(mu) + (j > 0 ? std::abs(beta(j - 1)) : 0.0);
      if (std::abs(d) <= eps * scale) {
        throw SingularShift("radau_modify: prescribed node coincides with a Ritz value");
      }
    }
    alpha_hat = mu + coupling2 / d;
  }
  Vector diag(t + 1);
  diag.head(t) = alpha;
  diag(t) = alpha_hat;
  return TridiagonalMatrix(std::move(diag), beta);
}

double radau_estimate(const Vector& alpha, const Vector& beta, double mu, double probe_norm2) {
  return gauss_logdet_estimate(radau_modify(alpha, beta, mu), probe_norm2);
}

ProbeBracket probe_bracket(const LanczosState& state, const SpectralEnvelope& envelope, RadauSides sides) {
  if (state.steps() < 1) throw std::invalid_argument("probe_bracket: Lanczos state has no steps");
  ProbeBracket b;
  b.gauss = gauss_logdet_estimate(state.tridiagonal(), state.probe_norm2());
  if (state.breakdown()) {
    b.radau_lower = b.gauss;
    b.radau_upper = b.gauss;
    b.exact = true;
    return b;
  }
  const Index t = state.steps();
  const Vector alpha = state.alpha();
  Vector beta(t);
  beta.head(t - 1) = state.beta();
  beta(t - 1) = state.coupling();

  double low_node = envelope.lambda_min_floor;
  double high_node = envelope.lambda_max_ceiling;
  if (sides == RadauSides::kSwapped) std::swap(low_node, high_node);

  // If a node hits a Ritz value exactly, fall back to the trivial spectral
  // bounds ||z||^2 log(node), which hold for any probe.
  const double z2 = state.probe_norm2();
  try {
    b.radau_lower = radau_estimate(alpha, beta, low_node, z2);
  } catch (const SingularShift&) {
    b.radau_lower = z2 * std::log(low_node);
  }
  try {
    b.radau_upper = radau_estimate(alpha, beta, high_node, z2);
  } catch (const SingularShift&) {
    b.radau_upper = z2 * std::log(high_node);
  }
  return b;
}

LogdetBracket logdet_bracket(std::span<const LanczosState> states, const SpectralEnvelope& envelope,
                             RadauSides sides) {
  if (states.empty()) throw std::invalid_argument("logdet_bracket: no probes");
  LogdetBracket out;
  out.probes.reserve(states.size());
  for (const LanczosState& s : states) {
    const ProbeBracket b = probe_bracket(s, envelope, sides);
    out.lower += b.radau_lower;
    out.upper += std::min(b.gauss, b.radau_upper);
    out.gauss_mean += b.gauss;
    out.probes.push_back(b);
  }
  const double count = static_cast<double>(states.size());
  out.lower /= count;
  out.upper /= count;
  out.gauss_mean /= count;
  return out;
}

}  // namespace bbgp
