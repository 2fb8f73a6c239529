#pragma once

#include <doctest.h>

#include <initializer_list>
#include <random>

#include "bbgp/kernel.hpp"
#include "bbgp/linalg.hpp"

namespace bbgp::testing {

inline Matrix random_matrix(std::mt19937_64& gen, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(gen);
  }
  return m;
}

inline Vector random_vector(std::mt19937_64& gen, Index n) { return random_matrix(gen, n, 1).col(0); }

// Well-conditioned random SPD matrix.
inline SymmetricMatrix random_spd(std::mt19937_64& gen, Index n, double shift = 1.0) {
  const Matrix g = random_matrix(gen, n, n);
  return SymmetricMatrix(g * g.transpose() / static_cast<double>(n) + shift * Matrix::Identity(n, n));
}

inline SymmetricMatrix diag(std::initializer_list<double> values) {
  const Vector d = Vector::Map(values.begin(), static_cast<Index>(values.size()));
  return SymmetricMatrix(d.asDiagonal().toDenseMatrix());
}

inline Matrix random_inputs(std::mt19937_64& gen, Index n, Index dims) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix x(n, dims);
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < dims; ++d) x(i, d) = unif(gen);
  }
  return x;
}

inline Hyperparameters make_hp(Vector lengthscales, double signal, double noise, double mean = 0.0) {
  Hyperparameters hp;
  hp.lengthscales = std::move(lengthscales);
  hp.signal_variance = signal;
  hp.noise_variance = noise;
  hp.mean = mean;
  return hp;
}

inline double max_rel_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace bbgp::testing
