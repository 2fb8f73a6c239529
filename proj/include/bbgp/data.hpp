#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bbgp/kernel.hpp"
#include "bbgp/linalg.hpp"

namespace bbgp {

struct NormalizationStats {
  Vector x_mean;
  Vector x_std;
  double y_mean = 0.0;
  double y_std = 1.0;
};

struct Dataset {
  Matrix x;  // n x D
  Vector y;
  std::vector<std::string> feature_names;
  std::string target_name;
  std::optional<NormalizationStats> stats;
  std::vector<Index> train;
  std::vector<Index> test;

  Index size() const { return x.rows(); }
  Index dims() const { return x.cols(); }
  bool has_split() const { return !train.empty(); }

  Matrix rows(const std::vector<Index>& idx) const;
  Vector targets(const std::vector<Index>& idx) const;
  Matrix train_x() const { return rows(train); }
  Vector train_y() const { return targets(train); }
  Matrix test_x() const { return rows(test); }
  Vector test_y() const { return targets(test); }
};

// Target column by header name or 0-based column index (negative counts from
// the end, -1 being the last column).
using TargetColumn = std::variant<std::string, long>;

struct CsvOptions {
  bool header = true;
};

// Comma-separated numeric table. Throws ParseError (1-based data row and
// column) and MissingTarget.
Dataset load_csv(const std::filesystem::path& path, const TargetColumn& target = -1L, const CsvOptions& opts = {});
Dataset parse_csv(const std::string& text, const TargetColumn& target = -1L, const CsvOptions& opts = {});

void write_csv(const Dataset& ds, const std::filesystem::path& path);

// Uniform random permutation; the first ceil(2n/3) indices train.
Dataset split(Dataset ds, std::uint64_t seed);

// z-scores inputs and targets with training-split statistics (all rows when
// no split exists). Constant columns throw ConstantColumn unless
// drop_constant is set, in which case they are removed.
Dataset normalize(Dataset ds, bool drop_constant = false);

Vector denormalize_targets(const NormalizationStats& stats, const Vector& y);

// X uniform on [0,1]^D and y ~ N(mean, K) through a Cholesky factor of K.
Dataset synth_gp(Index n, Index dims, const Hyperparameters& hp, std::uint64_t seed);

}  // namespace bbgp
