#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "bbgp/errors.hpp"
#include "bbgp/validation.hpp"

namespace bbgp::cli {

using json = nlohmann::json;

namespace {

// Configuration problems detected after parsing (exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json hp_json(const Hyperparameters& hp) {
  return {{"lengthscales", std::vector<double>(hp.lengthscales.data(), hp.lengthscales.data() + hp.dims())},
          {"signal_variance", hp.signal_variance},
          {"noise_variance", hp.noise_variance},
          {"mean", hp.mean}};
}

json config_json(const RunConfig& c) {
  json j = {{"command", c.command},       {"data", c.data_path},         {"target", c.target},
            {"header", c.header},         {"epsilon", c.epsilon},        {"probes", c.probes},
            {"max_iters", c.max_iters},   {"precond_rank", c.precond_rank}, {"steps", c.steps},
            {"lr", c.learning_rate},      {"seeds", c.seeds},            {"eval_every", c.eval_every}};
  if (c.synth) {
    j["synth"] = {{"n", c.synth->n},
                  {"dims", c.synth->dims},
                  {"noise_variance", c.synth->noise_variance},
                  {"lengthscale", c.synth->lengthscale},
                  {"signal_variance", c.synth->signal_variance},
                  {"data_seed", c.synth->data_seed}};
  }
  return j;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

json quartiles(const std::vector<double>& v) {
  return {{"q25", quantile(v, 0.25)}, {"median", quantile(v, 0.5)}, {"q75", quantile(v, 0.75)}};
}

std::optional<SynthSpec> parse_synth(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("--synth expects n,D");
  SynthSpec s;
  try {
    std::size_t used = 0;
    s.n = std::stol(text.substr(0, comma), &used);
    s.dims = std::stol(text.substr(comma + 1), &used);
  } catch (const std::exception&) {
    throw ConfigError("--synth expects two integers n,D, got '" + text + "'");
  }
  if (s.n < 3 || s.n > 4096 || s.dims < 1) throw ConfigError("--synth needs 3 <= n <= 4096 and D >= 1");
  return s;
}

TargetColumn target_column(const std::string& target) {
  long idx = 0;
  const char* end = target.data() + target.size();
  const auto [ptr, ec] = std::from_chars(target.data(), end, idx);
  if (ec == std::errc() && ptr == end) return idx;
  return target;
}

unsigned worker_count(std::size_t jobs) {
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BBGP_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) threads = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(jobs, 1)));
}

// Runs job(i) for i in [0, count) on a small pool; rethrows the first failure.
template <typename Job>
void parallel_for(std::size_t count, Job&& job) {
  const unsigned workers = worker_count(count);
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      std::size_t i = 0;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= count || failure) return;
        i = next++;
      }
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  double final_rmse = 0.0;
  double final_objective = 0.0;
  Index total_iterations = 0;
  std::string trace_path;
  std::string params_path;
};

json trace_json(const TraceRecord& rec, const std::string& fp, std::uint64_t seed) {
  json j = {{"step", rec.step},
            {"objective", rec.objective()},
            {"lml_estimate", rec.value},
            {"bias_bound", rec.bias_bound},
            {"iters", rec.iterations},
            {"cg_iters", rec.cg_iterations},
            {"lanczos_t", rec.lanczos_steps},
            {"probe_widths", rec.probe_widths},
            {"quad_gap", rec.quad_gap},
            {"converged", rec.converged},
            {"hp", hp_json(rec.hp)},
            {"hp_evaluated", hp_json(rec.evaluated_at)},
            {"wall_ms", static_cast<long long>(std::llround(rec.wall_ms))},
            {"config_fp", fp},
            {"seed", seed}};
  if (rec.rmse) j["rmse"] = *rec.rmse;
  return j;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Dataset raw = load_dataset(cfg);
  std::filesystem::create_directories(cfg.out);
  const std::string fp = cfg.fingerprint();
  std::vector<SeedOutcome> outcomes(cfg.seeds.size());

  parallel_for(cfg.seeds.size(), [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    const Dataset ds = prepare_dataset(raw, seed);
    FitConfig fc;
    fc.bbgp.epsilon = cfg.epsilon;
    fc.bbgp.probes = cfg.probes;
    fc.bbgp.max_krylov_iters = cfg.max_iters;
    fc.bbgp.precond_rank = cfg.precond_rank;
    fc.bbgp.seed = seed;
    fc.steps = cfg.steps;
    fc.learning_rate = cfg.learning_rate;
    fc.eval_every = cfg.eval_every;
    const FitResult fit_result = fit(ds.train_x(), ds.train_y(), fc, Hyperparameters::initial(ds.dims()),
                                     [&](const Hyperparameters& hp) { return test_rmse(ds, hp); });

    SeedOutcome& o = outcomes[i];
    o.seed = seed;
    o.total_iterations = fit_result.total_iterations;
    o.trace_path = (std::filesystem::path(cfg.out) / ("trace_seed" + std::to_string(seed) + ".jsonl")).string();
    o.params_path = (std::filesystem::path(cfg.out) / ("params_seed" + std::to_string(seed) + ".txt")).string();
    std::ofstream trace(o.trace_path);
    if (!trace) throw DataError("cannot write " + o.trace_path);
    for (const TraceRecord& rec : fit_result.trace) trace << trace_json(rec, fp, seed).dump() << '\n';
    write_params(o.params_path, fit_result.hp, seed);
    if (!fit_result.trace.empty()) {
      o.final_objective = fit_result.trace.back().objective();
      o.final_rmse = fit_result.trace.back().rmse.value_or(test_rmse(ds, fit_result.hp));
    } else {
      o.final_rmse = test_rmse(ds, fit_result.hp);
    }
  });

  std::vector<double> rmses, objectives, iters;
  json seeds = json::array();
  for (const SeedOutcome& o : outcomes) {
    rmses.push_back(o.final_rmse);
    objectives.push_back(o.final_objective);
    iters.push_back(static_cast<double>(o.total_iterations));
    seeds.push_back({{"seed", o.seed},
                     {"final_rmse", o.final_rmse},
                     {"final_objective", o.final_objective},
                     {"total_iters", o.total_iterations},
                     {"trace", o.trace_path},
                     {"params", o.params_path}});
  }
  const json summary = {{"record", "summary"},
                        {"config_fp", fp},
                        {"config", config_json(cfg)},
                        {"rmse", quartiles(rmses)},
                        {"objective", quartiles(objectives)},
                        {"total_iters", quartiles(iters)},
                        {"seeds", seeds}};
  const std::string summary_path = (std::filesystem::path(cfg.out) / "summary.json").string();
  std::ofstream(summary_path) << summary.dump(2) << '\n';
  out << summary.dump() << '\n';
  err << "wrote " << cfg.seeds.size() << " trace file(s) and " << summary_path << '\n';
  return kOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& params_path, std::uint64_t seed, std::ostream& out) {
  if (!std::filesystem::exists(params_path)) throw ConfigError("parameter file not found: " + params_path);
  const Hyperparameters hp = read_params(params_path);
  const Dataset ds = prepare_dataset(load_dataset(cfg), seed);
  if (hp.dims() != ds.dims()) throw ConfigError("parameter file dimension does not match the dataset");
  const Matrix xt = ds.train_x();
  const Vector yt = ds.train_y();
  json j = {{"rmse", test_rmse(ds, hp)},
            {"n_train", static_cast<long>(ds.train.size())},
            {"n_test", static_cast<long>(ds.test.size())},
            {"seed", seed},
            {"config_fp", cfg.fingerprint()}};
  constexpr Index kExactLimit = 4096;
  if (xt.rows() <= kExactLimit) {
    j["lml"] = exact_lml(xt, yt, hp);
    j["lml_kind"] = "exact";
  } else {
    BBGPConfig bc;
    bc.epsilon = cfg.epsilon;
    bc.probes = cfg.probes;
    bc.max_krylov_iters = cfg.max_iters;
    bc.precond_rank = cfg.precond_rank;
    bc.seed = seed;
    const BBGPEstimate est = estimate_lml(xt, yt, hp, bc);
    j["lml"] = est.value;
    j["lml_kind"] = "bounded";
    j["bias_bound"] = est.bias_bound;
  }
  out << j.dump() << '\n';
  return kOk;
}

int cmd_validate(const ValidationOptions& opts, std::ostream& out) {
  const ValidationReport report = validate_bounds(opts);
  for (const CheckResult& c : report.checks) {
    out << json{{"check", c.name}, {"passed", c.passed}, {"failed", c.failed}, {"worst", c.worst}}.dump() << '\n';
  }
  out << json{{"record", "summary"}, {"all_passed", report.all_passed()}}.dump() << '\n';
  return report.all_passed() ? kOk : kNumericalError;
}

int cmd_synth(const RunConfig& cfg, std::ostream& err) {
  if (!cfg.synth) throw ConfigError("synth requires --synth n,D");
  const Dataset ds = load_dataset(cfg);
  const std::filesystem::path path = cfg.out == "." ? std::filesystem::path("synth.csv") : std::filesystem::path(cfg.out);
  write_csv(ds, path);
  err << "wrote " << ds.size() << " rows to " << path.string() << '\n';
  return kOk;
}

}  // namespace

std::string RunConfig::fingerprint() const {
  const std::string canonical = config_json(*this).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.synth) {
    Hyperparameters truth;
    truth.lengthscales = Vector::Constant(cfg.synth->dims, cfg.synth->lengthscale);
    truth.signal_variance = cfg.synth->signal_variance;
    truth.noise_variance = cfg.synth->noise_variance;
    truth.mean = 0.0;
    return synth_gp(cfg.synth->n, cfg.synth->dims, truth, cfg.synth->data_seed);
  }
  if (cfg.data_path.empty()) throw ConfigError("one of --data or --synth is required");
  if (!std::filesystem::exists(cfg.data_path)) throw DataError("data file not found: " + cfg.data_path);
  return load_csv(cfg.data_path, target_column(cfg.target), CsvOptions{cfg.header});
}

Dataset prepare_dataset(const Dataset& raw, std::uint64_t seed) { return normalize(split(raw, seed)); }

double test_rmse(const Dataset& ds, const Hyperparameters& hp) {
  const PredictResult pred = predict_mean(ds.train_x(), ds.train_y(), ds.test_x(), hp);
  return rmse(denormalize_targets(*ds.stats, pred.mean), denormalize_targets(*ds.stats, ds.test_y()));
}

void write_params(const std::string& path, const Hyperparameters& hp, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << std::setprecision(17);
  out << "# constrained hyperparameters\n";
  out << "seed = " << seed << '\n';
  out << "dims = " << hp.dims() << '\n';
  for (Index d = 0; d < hp.dims(); ++d) out << "lengthscale." << d << " = " << hp.lengthscales(d) << '\n';
  out << "signal_variance = " << hp.signal_variance << '\n';
  out << "noise_variance = " << hp.noise_variance << '\n';
  out << "mean = " << hp.mean << '\n';
}

Hyperparameters read_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read parameter file " + path);
  std::map<std::string, double> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key = value");
    auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (key.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": malformed entry");
    }
    kv[key] = v;
  }
  auto need = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("parameter file is missing '" + key + "'");
    return it->second;
  };
  const double dims = need("dims");
  if (dims < 1 || dims != std::floor(dims)) throw std::invalid_argument("parameter file has invalid dims");
  Hyperparameters hp;
  hp.lengthscales.resize(static_cast<Index>(dims));
  for (Index d = 0; d < hp.dims(); ++d) hp.lengthscales(d) = need("lengthscale." + std::to_string(d));
  hp.signal_variance = need("signal_variance");
  hp.noise_variance = need("noise_variance");
  hp.mean = need("mean");
  hp.validate();
  return hp;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive-bias Krylov estimation and training of Gaussian process hyperparameters", "bbgp"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string synth_text;
  std::string params_path;
  std::uint64_t eval_seed = 0;
  ValidationOptions vopts;
  std::string fault;
  SynthSpec synth_defaults;

  auto add_data_options = [&](CLI::App* sub) {
    auto* data = sub->add_option("--data", cfg.data_path, "CSV dataset path");
    auto* synth = sub->add_option("--synth", synth_text, "synthetic GP dataset size n,D");
    data->excludes(synth);
    sub->add_option("--target", cfg.target, "target column name or index (default: last column)");
    sub->add_flag("!--no-header", cfg.header, "the CSV has no header row");
    sub->add_option("--synth-noise", synth_defaults.noise_variance, "noise variance of synthetic data");
    sub->add_option("--synth-lengthscale", synth_defaults.lengthscale, "lengthscale of synthetic data");
    sub->add_option("--synth-signal", synth_defaults.signal_variance, "signal variance of synthetic data");
    sub->add_option("--data-seed", synth_defaults.data_seed, "seed of the synthetic data draw");
  };
  auto add_estimator_options = [&](CLI::App* sub) {
    sub->add_option("--epsilon", cfg.epsilon, "certified bias target in nats")->check(CLI::PositiveNumber);
    sub->add_option("--probes", cfg.probes, "number of probe vectors")->check(CLI::PositiveNumber);
    sub->add_option("--max-iters", cfg.max_iters, "Krylov iteration cap (0: min(n, 1000))")->check(CLI::NonNegativeNumber);
    sub->add_option("--precond-rank", cfg.precond_rank, "pivoted Cholesky preconditioner rank")
        ->check(CLI::NonNegativeNumber);
  };

  CLI::App* train = app.add_subcommand("train", "fit hyperparameters for each seed and write traces");
  add_data_options(train);
  add_estimator_options(train);
  train->add_option("--steps", cfg.steps, "optimizer steps")->check(CLI::NonNegativeNumber);
  train->add_option("--lr", cfg.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  train->add_option("--seeds", cfg.seeds, "comma-separated seeds")->delimiter(',');
  train->add_option("--out", cfg.out, "output directory");
  train->add_option("--eval-every", cfg.eval_every, "test RMSE cadence in steps (0: final only)")
      ->check(CLI::NonNegativeNumber);

  CLI::App* eval = app.add_subcommand("eval", "test RMSE and LML for a saved parameter file");
  add_data_options(eval);
  add_estimator_options(eval);
  eval->add_option("--params", params_path, "parameter file written by train")->required();
  eval->add_option("--seed", eval_seed, "split seed (default: the seed stored in the parameter file)");

  CLI::App* validate = app.add_subcommand("validate-bounds", "run the bound property suite on random instances");
  validate->add_option("--instances", vopts.instances, "number of random instances")->check(CLI::PositiveNumber);
  validate->add_option("--max-n", vopts.max_n, "largest instance size")->check(CLI::Range(3, 256));
  validate->add_option("--seed", vopts.seed, "random seed");
  validate->add_option("--inject-fault", fault, "test hook: radau-swap places the Radau nodes on the wrong sides")
      ->check(CLI::IsMember({"radau-swap"}))
      ->group("");

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic GP dataset as CSV");
  add_data_options(synth);
  synth->add_option("--out", cfg.out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    cfg.synth = parse_synth(synth_text);
    if (cfg.synth) {
      const Index n = cfg.synth->n;
      const Index dims = cfg.synth->dims;
      *cfg.synth = synth_defaults;
      cfg.synth->n = n;
      cfg.synth->dims = dims;
    }
    if (*train) {
      cfg.command = "train";
      if (cfg.seeds.empty()) throw ConfigError("--seeds must name at least one seed");
      return cmd_train(cfg, out, err);
    }
    if (*eval) {
      cfg.command = "eval";
      std::uint64_t seed = eval_seed;
      if (eval->count("--seed") == 0 && std::filesystem::exists(params_path)) {
        std::ifstream in(params_path);
        std::string line;
        while (std::getline(in, line)) {
          if (line.rfind("seed", 0) == 0 && line.find('=') != std::string::npos) {
            seed = std::strtoull(line.substr(line.find('=') + 1).c_str(), nullptr, 10);
          }
        }
      }
      return cmd_eval(cfg, params_path, seed, out);
    }
    if (*validate) {
      if (fault == "radau-swap") vopts.sides = RadauSides::kSwapped;
      return cmd_validate(vopts, out);
    }
    if (*synth) {
      cfg.command = "synth";
      return cmd_synth(cfg, err);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  }
  return kConfigError;
}

}  // namespace bbgp::cli
