#include "bbgp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "bbgp/errors.hpp"

namespace bbgp {

Matrix Dataset::rows(const std::vector<Index>& idx) const {
  Matrix out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = x.row(idx[i]);
  return out;
}

Vector Dataset::targets(const std::vector<Index>& idx) const {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = y(idx[i]);
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                                            : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

Dataset parse_csv(const std::string& text, const TargetColumn& target, const CsvOptions& opts) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::size_t columns = 0;
  bool header_pending = opts.header;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (header_pending) {
      header = fields;
      columns = fields.size();
      header_pending = false;
      continue;
    }
    const std::size_t row = rows.size() + 1;
    if (columns == 0) columns = fields.size();
    if (fields.size() != columns) {
      throw ParseError(row, std::min(fields.size(), columns) + 1,
                       "expected " + std::to_string(columns) + " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> values(columns);
    for (std::size_t c = 0; c < columns; ++c) {
      if (!parse_double(fields[c], values[c])) {
        throw ParseError(row, c + 1, "'" + fields[c] + "' is not a finite number");
      }
    }
    rows.push_back(std::move(values));
  }
  if (columns == 0) throw DataError("CSV input has no columns");
  if (header.empty()) {
    for (std::size_t c = 0; c < columns; ++c) header.push_back("x" + std::to_string(c));
  }

  std::size_t target_col = 0;
  if (const auto* name = std::get_if<std::string>(&target)) {
    const auto it = std::find(header.begin(), header.end(), *name);
    if (it == header.end()) throw MissingTarget("target column '" + *name + "' not found");
    target_col = static_cast<std::size_t>(it - header.begin());
  } else {
    const long idx = std::get<long>(target);
    const long resolved = idx < 0 ? static_cast<long>(columns) + idx : idx;
    if (resolved < 0 || resolved >= static_cast<long>(columns)) {
      throw MissingTarget("target column index " + std::to_string(idx) + " out of range");
    }
    target_col = static_cast<std::size_t>(resolved);
  }
  if (columns < 2) throw MissingTarget("no feature columns besides the target");

  Dataset ds;
  const Index n = static_cast<Index>(rows.size());
  const Index dims = static_cast<Index>(columns - 1);
  ds.x.resize(n, dims);
  ds.y.resize(n);
  ds.target_name = header[target_col];
  for (std::size_t c = 0; c < columns; ++c) {
    if (c != target_col) ds.feature_names.push_back(header[c]);
  }
  for (Index i = 0; i < n; ++i) {
    Index d = 0;
    for (std::size_t c = 0; c < columns; ++c) {
      if (c == target_col) {
        ds.y(i) = rows[static_cast<std::size_t>(i)][c];
      } else {
        ds.x(i, d++) = rows[static_cast<std::size_t>(i)][c];
      }
    }
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const TargetColumn& target, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), target, opts);
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& name : ds.feature_names) out << name << ',';
  out << ds.target_name << '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index d = 0; d < ds.dims(); ++d) out << ds.x(i, d) << ',';
    out << ds.y(i) << '\n';
  }
}

Dataset split(Dataset ds, std::uint64_t seed) {
  const Index n = ds.size();
  if (n < 3) throw DataError("split needs at least 3 rows");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 gen(seed);
  std::shuffle(perm.begin(), perm.end(), gen);
  const auto n_train = static_cast<std::size_t>((2 * n + 2) / 3);
  ds.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  return ds;
}

namespace {

std::pair<double, double> mean_std(const Vector& v) {
  const double mean = v.mean();
  const double var = v.size() > 1 ? (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1) : 0.0;
  return {mean, std::sqrt(var)};
}

}  // namespace

Dataset normalize(Dataset ds, bool drop_constant) {
  if (ds.stats) throw DataError("dataset is already normalized");
  std::vector<Index> rows = ds.train;
  if (rows.empty()) {
    rows.resize(static_cast<std::size_t>(ds.size()));
    std::iota(rows.begin(), rows.end(), Index{0});
  }
  const Matrix xr = ds.rows(rows);
  const Vector yr = ds.targets(rows);

  std::vector<Index> keep;
  NormalizationStats stats;
  std::vector<double> means, stds;
  for (Index d = 0; d < ds.dims(); ++d) {
    const auto [m, s] = mean_std(xr.col(d));
    if (!(s > 0.0)) {
      const std::string& name = ds.feature_names[static_cast<std::size_t>(d)];
      if (!drop_constant) throw ConstantColumn(name);
      std::cerr << "warning: dropping constant column '" << name << "'\n";
      continue;
    }
    keep.push_back(d);
    means.push_back(m);
    stds.push_back(s);
  }
  const auto [ym, ys] = mean_std(yr);
  if (!(ys > 0.0)) throw ConstantColumn(ds.target_name);

  const Index kept = static_cast<Index>(keep.size());
  Matrix x(ds.size(), kept);
  std::vector<std::string> names;
  stats.x_mean.resize(kept);
  stats.x_std.resize(kept);
  for (Index j = 0; j < kept; ++j) {
    const Index d = keep[static_cast<std::size_t>(j)];
    stats.x_mean(j) = means[static_cast<std::size_t>(j)];
    stats.x_std(j) = stds[static_cast<std::size_t>(j)];
    x.col(j) = (ds.x.col(d).array() - stats.x_mean(j)) / stats.x_std(j);
    names.push_back(ds.feature_names[static_cast<std::size_t>(d)]);
  }
  stats.y_mean = ym;
  stats.y_std = ys;
  ds.x = std::move(x);
  ds.y = (ds.y.array() - ym) / ys;
  ds.feature_names = std::move(names);
  ds.stats = stats;
  return ds;
}

Vector denormalize_targets(const NormalizationStats& stats, const Vector& y) {
  return (y.array() * stats.y_std + stats.y_mean).matrix();
}

Dataset synth_gp(Index n, Index dims, const Hyperparameters& hp, std::uint64_t seed) {
  if (n < 1 || n > 4096) throw std::invalid_argument("synth_gp: n must be in [1, 4096]");
  if (hp.dims() != dims) throw std::invalid_argument("synth_gp: lengthscale count must equal D");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset ds;
  ds.x.resize(n, dims);
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < dims; ++d) ds.x(i, d) = unif(gen);
  }
  Vector xi(n);
  for (Index i = 0; i < n; ++i) xi(i) = normal(gen);
  const Matrix lower = cholesky(kernel_matrix(ds.x, hp));
  ds.y = (lower.triangularView<Eigen::Lower>() * xi).array() + hp.mean;
  for (Index d = 0; d < dims; ++d) ds.feature_names.push_back("x" + std::to_string(d));
  ds.target_name = "y";
  return ds;
}

}  // namespace bbgp
