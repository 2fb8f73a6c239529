#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bbgp/data.hpp"
#include "bbgp/kernel.hpp"
#include "bbgp/training.hpp"

namespace bbgp::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kDataError = 2,
  kNumericalError = 3,
};

struct SynthSpec {
  Index n = 0;
  Index dims = 0;
  double noise_variance = 0.1;
  double lengthscale = 0.2;
  double signal_variance = 1.0;
  std::uint64_t data_seed = 0;
};

struct RunConfig {
  std::string command;
  std::string data_path;
  std::optional<SynthSpec> synth;
  std::string target = "-1";
  bool header = true;
  double epsilon = 1.0;
  Index probes = 1;
  Index max_iters = 0;
  Index precond_rank = 100;
  Index steps = 500;
  double learning_rate = 0.1;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out = ".";
  Index eval_every = 10;

  // Hex FNV-1a hash of the canonical JSON form; identical configs rerun
  // identically.
  std::string fingerprint() const;
};

// Raw dataset from --data or --synth.
Dataset load_dataset(const RunConfig& cfg);

// Split with `seed`, then z-score on the training rows.
Dataset prepare_dataset(const Dataset& raw, std::uint64_t seed);

// Test RMSE in original target units.
double test_rmse(const Dataset& prepared, const Hyperparameters& hp);

void write_params(const std::string& path, const Hyperparameters& hp, std::uint64_t seed);
// Throws std::invalid_argument on malformed files.
Hyperparameters read_params(const std::string& path);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bbgp::cli
