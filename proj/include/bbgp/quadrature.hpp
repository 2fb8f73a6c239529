#pragma once

#include <span>
#include <vector>

#include "bbgp/krylov.hpp"
#include "bbgp/linalg.hpp"

namespace bbgp {

// Spectral interval known to contain the spectrum of K without computing
// eigenvalues: the noise variance below, a Gershgorin bound above.
struct SpectralEnvelope {
  double lambda_min_floor = 0.0;
  double lambda_max_ceiling = 0.0;
};

SpectralEnvelope spectral_envelope(const SymmetricMatrix& k, double noise_variance);

// Gershgorin bound max_i sum_j |K_ij| >= lambda_max(K).
double lambda_max_upper(const SymmetricMatrix& k);

// ||z||^2 e1^T log(T) e1 for the Lanczos tridiagonal T of probe z.
double gauss_logdet_estimate(const TridiagonalMatrix& t, double probe_norm2);
double gauss_logdet_estimate(const Vector& alpha, const Vector& beta, double probe_norm2);

// Extends T_t by one row/column so that mu becomes an eigenvalue: solves
// (T_t - mu I) delta = beta_t^2 e_t and appends alpha_hat = mu + delta_t.
// `beta` has length t; its last entry is beta_t. Throws SingularShift when
// mu coincides with a Ritz value.
TridiagonalMatrix radau_modify(const Vector& alpha, const Vector& beta, double mu);

// Gauss-Radau estimate of z^T log(K) z with prescribed node mu. A node at or
// below lambda_min(K) gives a lower bound, at or above lambda_max(K) an upper one.
double radau_estimate(const Vector& alpha, const Vector& beta, double mu, double probe_norm2);

struct ProbeBracket {
  double gauss = 0.0;
  double radau_lower = 0.0;
  double radau_upper = 0.0;
  bool exact = false;  // Lanczos broke down or exhausted the space
};

struct LogdetBracket {
  std::vector<ProbeBracket> probes;
  double lower = 0.0;       // mean of radau_lower
  double upper = 0.0;       // mean of min(gauss, radau_upper)
  double gauss_mean = 0.0;  // the log-det estimate used by the objective

  Index probe_count() const { return static_cast<Index>(probes.size()); }
  double width() const { return upper - lower; }
};

// Which side each Radau node is placed on. Swapping them is a fault
// injection used to check that the validation suite notices wrong bounds.
enum class RadauSides { kCorrect, kSwapped };

ProbeBracket probe_bracket(const LanczosState& state, const SpectralEnvelope& envelope,
                           RadauSides sides = RadauSides::kCorrect);

LogdetBracket logdet_bracket(std::span<const LanczosState> states, const SpectralEnvelope& envelope,
                             RadauSides sides = RadauSides::kCorrect);

}  // namespace bbgp
