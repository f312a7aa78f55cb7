#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "condwalk/environment.hpp"
#include "condwalk/error.hpp"
#include "condwalk/geometry.hpp"
#include "condwalk/network.hpp"
#include "condwalk/oracles.hpp"
#include "condwalk/regeneration.hpp"
#include "condwalk/rng.hpp"
#include "condwalk/sealing.hpp"
#include "condwalk/stats.hpp"
#include "condwalk/walk.hpp"

namespace condwalk {

inline constexpr std::uint64_t kDefaultSeed = 12345;

// ---------------------------------------------------------------------------
// Configuration

/// Flat experiment configuration. Environment keys (d, lambda, ell_hat, law,
/// planted) and analysis keys (K, good_depth, moves) sit beside the
/// experiment keys; a "preset" supplies a base that explicit keys override.
struct ExperimentConfig {
  std::string preset;
  EnvironmentSpec spec = EnvironmentSpec::axis_aligned(2, 1.0, ConductanceLaw::constant(1.0), kDefaultSeed);
  AnalysisParams params;
  std::size_t horizon = 1000000;
  std::size_t replicas = 30;
  std::vector<std::size_t> checkpoints;
  std::uint64_t seed = kDefaultSeed;
  std::size_t buffer = 0;  // 0 selects default_buffer(horizon)
  std::vector<double> L_list{4, 8, 12};
  double alpha_prime = 1.5;
  std::size_t exit_replicas = 10000;
  std::size_t exit_max_steps = 100000000;
  std::vector<int> k_list{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> trap_conductances{1e2, 1e3, 1e4};
  std::size_t trap_replicas = 2000;
  std::size_t samples = 1000000;
  std::string variant = "X1";
  std::vector<double> eigen_L{8, 16, 32};
  std::size_t eigen_replicas = 3;
  std::int64_t survey_radius = 60;
  std::size_t survey_samples = 2000;
  std::size_t stride = 1;
  std::vector<std::string> defaulted;  // keys filled from built-in defaults

  std::size_t effective_buffer() const { return buffer ? buffer : std::min(default_buffer(horizon), horizon / 2); }
  EnvironmentSpec replica_spec(std::size_t r) const { return spec.with_seed(derive_seed(seed, 0, r)); }
  std::uint64_t replica_walk_seed(std::size_t r) const { return derive_seed(seed, 1, r); }

  Json to_json() const {
    Json j = spec.to_json();
    j.erase("seed");
    if (!preset.empty()) j["preset"] = preset;
    const Json a = params.to_json();
    j.update(a);
    j["horizon"] = horizon;
    j["replicas"] = replicas;
    j["checkpoints"] = checkpoints;
    j["seed"] = seed;
    j["buffer"] = effective_buffer();
    j["L_list"] = L_list;
    j["alpha_prime"] = alpha_prime;
    j["exit_replicas"] = exit_replicas;
    j["exit_max_steps"] = exit_max_steps;
    j["k_list"] = k_list;
    j["trap_conductances"] = trap_conductances;
    j["trap_replicas"] = trap_replicas;
    j["samples"] = samples;
    j["variant"] = variant;
    j["eigen_L"] = eigen_L;
    j["eigen_replicas"] = eigen_replicas;
    j["survey_radius"] = survey_radius;
    j["survey_samples"] = survey_samples;
    j["stride"] = stride;
    j["defaulted"] = defaulted;
    return j;
  }
};

/// Named base configurations.
///   elliptic    log_uniform(K_law = e^3), K = 100
///   loguniform2 log_uniform(K_law = 2),   K = 100
///   gamma05     pareto(0.5),  K = 10^4
///   gamma075    pareto(0.75), K = 10^3
///   pareto2     pareto(2),    K = 100
/// All: d = 2, lambda = 1, ell_hat = e_1, good_depth = 30.
inline Json preset_json(const std::string& name) {
  Json base{{"d", 2}, {"lambda", 1.0}, {"ell_hat", {1.0, 0.0}}, {"K", 100.0}, {"good_depth", 30}};
  if (name == "elliptic") {
    base["law"] = {{"variant", "log_uniform"}, {"K_law", std::exp(3.0)}};
  } else if (name == "loguniform2") {
    base["law"] = {{"variant", "log_uniform"}, {"K_law", 2.0}};
  } else if (name == "gamma05") {
    base["law"] = {{"variant", "pareto"}, {"gamma", 0.5}};
    base["K"] = 1e4;
  } else if (name == "gamma075") {
    base["law"] = {{"variant", "pareto"}, {"gamma", 0.75}};
    base["K"] = 1e3;
  } else if (name == "pareto2") {
    base["law"] = {{"variant", "pareto"}, {"gamma", 2.0}};
  } else {
    fail(ErrorKind::kConfig, "unknown preset \"" + name + "\"");
  }
  base["preset"] = name;
  return base;
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"elliptic", "loguniform2", "gamma05", "gamma075", "pareto2"};
  return names;
}

/// Powers of two and of ten up to the horizon, plus the horizon.
inline std::vector<std::size_t> default_checkpoints(std::size_t horizon) {
  std::vector<std::size_t> c;
  for (std::size_t t = 1; t <= horizon; t *= 2) c.push_back(t);
  for (std::size_t t = 10; t <= horizon; t *= 10) c.push_back(t);
  c.push_back(horizon);
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

/// Applies "key=value" overrides; the value is parsed as JSON when possible
/// and taken as a string otherwise. Dotted keys address nested objects.
inline void apply_overrides(Json& j, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) fail(ErrorKind::kConfig, "override \"" + o + "\" is not key=value");
    const std::string key = o.substr(0, eq), raw = o.substr(eq + 1);
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    std::string ptr = "/" + key;
    std::replace(ptr.begin(), ptr.end(), '.', '/');
    j[Json::json_pointer(ptr)] = value;
  }
}

/// Validates a parsed configuration; errors name the first violated invariant.
inline ExperimentConfig config_from_json(Json j) {
  static const std::vector<std::string> kKnown{
      "preset", "d", "lambda", "ell_hat", "law", "planted", "K", "good_depth", "moves", "horizon", "replicas",
      "checkpoints", "seed", "buffer", "L_list", "alpha_prime", "exit_replicas", "exit_max_steps", "k_list",
      "trap_conductances", "trap_replicas", "samples", "variant", "eigen_L", "eigen_replicas", "survey_radius",
      "survey_samples", "stride", "defaulted"};
  if (!j.is_object()) fail(ErrorKind::kConfig, "configuration must be a JSON object");
  if (j.contains("preset")) {
    Json merged = preset_json(j.at("preset").get<std::string>());
    // A law without "variant" refines the preset's law field by field.
    if (j.contains("law") && j.at("law").is_object() && !j.at("law").contains("variant")) {
      Json law = merged.at("law");
      law.update(j.at("law"));
      j["law"] = std::move(law);
    }
    merged.update(j);
    j = std::move(merged);
  }
  for (const auto& [k, v] : j.items())
    if (std::find(kKnown.begin(), kKnown.end(), k) == kKnown.end()) fail(ErrorKind::kConfig, "unknown key \"" + k + "\"");

  ExperimentConfig c;
  auto get = [&](const char* key, auto& target) {
    using T = std::decay_t<decltype(target)>;
    if (!j.contains(key)) {
      c.defaulted.emplace_back(key);
      return;
    }
    try {
      target = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::kConfig, std::string("key \"") + key + "\" has the wrong type");
    }
  };
  try {
    if (!j.contains("seed")) {
      c.defaulted.emplace_back("seed");
    } else {
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    Json env{{"seed", c.seed}};
    for (const char* k : {"d", "lambda", "ell_hat", "law", "planted"})
      if (j.contains(k)) env[k] = j.at(k);
    c.spec = EnvironmentSpec::from_json(env);
    c.params = AnalysisParams::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("malformed environment: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }
  if (j.contains("preset")) c.preset = j.at("preset").get<std::string>();
  get("horizon", c.horizon);
  get("replicas", c.replicas);
  get("checkpoints", c.checkpoints);
  get("buffer", c.buffer);
  get("L_list", c.L_list);
  get("alpha_prime", c.alpha_prime);
  get("exit_replicas", c.exit_replicas);
  get("exit_max_steps", c.exit_max_steps);
  get("k_list", c.k_list);
  get("trap_conductances", c.trap_conductances);
  get("trap_replicas", c.trap_replicas);
  get("samples", c.samples);
  get("variant", c.variant);
  get("eigen_L", c.eigen_L);
  get("eigen_replicas", c.eigen_replicas);
  get("survey_radius", c.survey_radius);
  get("survey_samples", c.survey_samples);
  get("stride", c.stride);
  if (c.checkpoints.empty()) c.checkpoints = default_checkpoints(c.horizon);

  if (c.horizon < 1) fail(ErrorKind::kConfig, "horizon must be at least 1");
  if (c.replicas < 1) fail(ErrorKind::kConfig, "replicas must be at least 1");
  if (!std::is_sorted(c.checkpoints.begin(), c.checkpoints.end()) ||
      std::adjacent_find(c.checkpoints.begin(), c.checkpoints.end()) != c.checkpoints.end())
    fail(ErrorKind::kConfig, "checkpoints must be strictly increasing");
  if (c.checkpoints.front() < 1 || c.checkpoints.back() > c.horizon)
    fail(ErrorKind::kConfig, "checkpoints must lie in [1, horizon]");
  if (c.buffer >= c.horizon && c.buffer != 0) fail(ErrorKind::kConfig, "buffer must be below the horizon");
  if (c.L_list.empty() || !std::is_sorted(c.L_list.begin(), c.L_list.end()) || c.L_list.front() <= 0.0)
    fail(ErrorKind::kConfig, "L_list must be positive and increasing");
  if (!(c.alpha_prime >= 1.0 && c.alpha_prime <= 2.0)) fail(ErrorKind::kConfig, "alpha_prime must lie in [1, 2]");
  if (c.exit_replicas < 1) fail(ErrorKind::kConfig, "exit_replicas must be at least 1");
  if (c.k_list.empty() || !std::is_sorted(c.k_list.begin(), c.k_list.end()) || c.k_list.front() < 0)
    fail(ErrorKind::kConfig, "k_list must be nonnegative and increasing");
  for (double v : c.trap_conductances)
    if (!(v > 0.0)) fail(ErrorKind::kConfig, "trap_conductances must be positive");
  if (c.variant != "X1" && c.variant != "X2") fail(ErrorKind::kConfig, "variant must be X1 or X2");
  if (c.eigen_L.empty() || c.eigen_L.front() < 2.0) fail(ErrorKind::kConfig, "eigen_L entries must be at least 2");
  if (c.survey_radius < 1 || c.survey_samples < 1) fail(ErrorKind::kConfig, "cluster survey needs a positive radius and sample count");
  if (c.stride < 1) fail(ErrorKind::kConfig, "stride must be at least 1");
  if (j.contains("defaulted")) c.defaulted.clear();
  std::erase(c.defaulted, std::string("defaulted"));
  return c;
}

inline ExperimentConfig validate_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kConfig, "cannot read config file " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::kConfig, "config file " + path + " is not valid JSON");
  apply_overrides(j, overrides);
  return config_from_json(std::move(j));
}

// ---------------------------------------------------------------------------
// Replica execution

/// f(0..n-1) on `workers` threads; results are ordered by index. The
/// exception of the lowest failing index is rethrown.
template <class F>
auto parallel_map(std::size_t n, unsigned workers, F&& f) -> std::vector<decltype(f(std::size_t{0}))> {
  using R = decltype(f(std::size_t{0}));
  std::vector<std::optional<R>> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i].emplace(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> res;
  res.reserve(n);
  for (auto& o : out) res.push_back(std::move(*o));
  return res;
}

/// X at each checkpoint (checkpoints sorted, all <= horizon).
inline std::vector<Site> positions_at(const EnvironmentSpec& spec, const Site& start,
                                      const std::vector<std::size_t>& checkpoints, std::uint64_t walk_seed) {
  std::vector<Site> out;
  out.reserve(checkpoints.size());
  std::size_t k = 0;
  walk(spec, start, checkpoints.back(), walk_seed, [&](std::size_t t, const Site& x) {
    while (k < checkpoints.size() && checkpoints[k] == t) {
      out.push_back(x);
      ++k;
    }
    return k < checkpoints.size();
  });
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline Json interval_json(const stats::Interval& iv) {
  return {{"estimate", iv.estimate}, {"lo", iv.lo}, {"hi", iv.hi}, {"stderr", iv.stderr_}, {"batches", iv.batches}};
}

inline Json fit_json(const std::optional<stats::LinearFit>& f) {
  if (!f) return nullptr;
  return {{"slope", f->slope}, {"intercept", f->intercept}, {"slope_stderr", f->slope_stderr}, {"points", f->n}};
}

/// Batch-means interval of indicator / real data; an all-equal sample gets a
/// zero-width interval.
inline stats::Interval batch_interval(const std::vector<double>& x) {
  return stats::batch_means(x, stats::kMinBatches);
}

// ---------------------------------------------------------------------------
// Speed

struct SpeedRow {
  std::size_t n = 0;
  stats::Interval v_level;     // (X_n . ell_hat) / n
  std::vector<double> v_mean;  // X_n / n, coordinatewise mean
};

struct SpeedResult {
  std::vector<SpeedRow> rows;
  std::vector<std::vector<Site>> positions;  // [replica][checkpoint]
  std::vector<std::size_t> checkpoints;

  const SpeedRow& at(std::size_t n) const {
    for (const auto& r : rows)
      if (r.n == n) return r;
    fail(ErrorKind::kInvalidArgument, "no checkpoint " + std::to_string(n));
  }
  /// |v(b) - v(a)| / |v(b)| on the level component.
  double relative_drift(std::size_t a, std::size_t b) const {
    return std::abs(at(b).v_level.estimate - at(a).v_level.estimate) / std::abs(at(b).v_level.estimate);
  }
};

inline SpeedResult estimate_speed(const ExperimentConfig& cfg, unsigned workers = 1) {
  if (cfg.replicas < stats::kMinBatches) fail(ErrorKind::kInsufficientData, "speed estimates need at least 10 replicas");
  SpeedResult res;
  res.checkpoints = cfg.checkpoints;
  res.positions = parallel_map(cfg.replicas, workers, [&](std::size_t r) {
    return positions_at(cfg.replica_spec(r), Site(cfg.spec.dim()), cfg.checkpoints, cfg.replica_walk_seed(r));
  });
  const int d = cfg.spec.dim();
  for (std::size_t k = 0; k < cfg.checkpoints.size(); ++k) {
    SpeedRow row;
    row.n = cfg.checkpoints[k];
    std::vector<double> lv;
    row.v_mean.assign(d, 0.0);
    for (const auto& p : res.positions) {
      lv.push_back(cfg.spec.level(p[k]) / static_cast<double>(row.n));
      for (int i = 0; i < d; ++i) row.v_mean[i] += static_cast<double>(p[k][i]) / static_cast<double>(row.n);
    }
    for (auto& v : row.v_mean) v /= static_cast<double>(res.positions.size());
    row.v_level = batch_interval(lv);
    res.rows.push_back(row);
  }
  return res;
}

inline Json speed_summary(const SpeedResult& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) rows.push_back({{"n", row.n}, {"v_level", interval_json(row.v_level)}, {"v_mean", row.v_mean}});
  return {{"experiment", "speed"}, {"checkpoints", rows}};
}

inline std::string speed_csv(const SpeedResult& r, const EnvironmentSpec& spec) {
  std::ostringstream os;
  os << "replica,n,level";
  for (int i = 1; i <= spec.dim(); ++i) os << ",x_" << i;
  os << '\n';
  for (std::size_t rep = 0; rep < r.positions.size(); ++rep) {
    for (std::size_t k = 0; k < r.checkpoints.size(); ++k) {
      const Site& x = r.positions[rep][k];
      os << rep << ',' << r.checkpoints[k] << ',' << format_double(spec.level(x));
      for (int i = 0; i < spec.dim(); ++i) os << ',' << x[i];
      os << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Exponent

enum class ExponentMethod { kTerminalRatio, kDyadicRegression };

inline std::string to_string(ExponentMethod m) {
  return m == ExponentMethod::kTerminalRatio ? "terminal_ratio" : "dyadic_regression";
}

struct ExponentEstimate {
  double slope = 0.0;
  double stderr_ = 0.0;
  std::vector<std::pair<std::size_t, double>> per_checkpoint_levels;  // (n, median level)
  ExponentMethod method = ExponentMethod::kTerminalRatio;
};

struct ExponentReport {
  ExponentEstimate terminal;
  ExponentEstimate regression;
  std::vector<double> terminal_ratios;   // per used replica
  std::vector<double> regression_slopes;  // per used replica
  std::size_t used = 0;
  std::size_t excluded = 0;  // final level <= 0
  std::vector<std::size_t> checkpoints;
  std::vector<std::vector<double>> levels;  // [replica][checkpoint]
};

/// Both estimators from a table levels[replica][checkpoint]. The terminal
/// ratio is the median of ln(level_N) / ln N; the regression is the median
/// per-replica least-squares slope of ln level on ln n over checkpoints
/// n >= sqrt(N) with positive level. Median standard errors use the normal
/// approximation 1.2533 sd / sqrt(m).
inline ExponentReport exponent_from_levels(const std::vector<std::size_t>& checkpoints,
                                           const std::vector<std::vector<double>>& levels) {
  if (checkpoints.empty() || checkpoints.back() < 2) fail(ErrorKind::kInvalidArgument, "need a final checkpoint >= 2");
  const std::size_t last = checkpoints.size() - 1;
  const double N = static_cast<double>(checkpoints.back());
  ExponentReport rep;
  rep.checkpoints = checkpoints;
  rep.levels = levels;
  for (const auto& lv : levels) {
    if (!(lv[last] > 0.0)) {
      ++rep.excluded;
      continue;
    }
    ++rep.used;
    rep.terminal_ratios.push_back(std::log(lv[last]) / std::log(N));
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
      const double n = static_cast<double>(checkpoints[k]);
      if (n * n < N || !(lv[k] > 0.0) || n < 2.0) continue;
      xs.push_back(std::log(n));
      ys.push_back(std::log(lv[k]));
    }
    if (xs.size() >= 2) rep.regression_slopes.push_back(stats::least_squares(xs, ys).slope);
  }
  if (rep.used == 0) fail(ErrorKind::kNonPositiveLevel, "every replica ended at a nonpositive level");
  auto med_se = [](const std::vector<double>& v) {
    return v.size() < 2 ? 0.0 : 1.2533 * std::sqrt(stats::variance(v) / static_cast<double>(v.size()));
  };
  std::vector<std::pair<std::size_t, double>> table;
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    std::vector<double> col;
    for (const auto& lv : levels) col.push_back(lv[k]);
    table.emplace_back(checkpoints[k], stats::median(col));
  }
  rep.terminal = {stats::median(rep.terminal_ratios), med_se(rep.terminal_ratios), table, ExponentMethod::kTerminalRatio};
  if (!rep.regression_slopes.empty())
    rep.regression = {stats::median(rep.regression_slopes), med_se(rep.regression_slopes), table,
                      ExponentMethod::kDyadicRegression};
  else
    rep.regression = {std::numeric_limits<double>::quiet_NaN(), 0.0, table, ExponentMethod::kDyadicRegression};
  return rep;
}

inline ExponentReport estimate_exponent(const ExperimentConfig& cfg, unsigned workers = 1) {
  const auto pos = parallel_map(cfg.replicas, workers, [&](std::size_t r) {
    return positions_at(cfg.replica_spec(r), Site(cfg.spec.dim()), cfg.checkpoints, cfg.replica_walk_seed(r));
  });
  std::vector<std::vector<double>> levels;
  for (const auto& p : pos) {
    std::vector<double> lv;
    for (const auto& x : p) lv.push_back(cfg.spec.level(x));
    levels.push_back(std::move(lv));
  }
  return exponent_from_levels(cfg.checkpoints, levels);
}

inline Json exponent_summary(const ExponentReport& r) {
  Json table = Json::array();
  for (const auto& [n, lv] : r.terminal.per_checkpoint_levels) table.push_back({{"n", n}, {"median_level", lv}});
  Json j{{"experiment", "exponent"},
         {"exponent_median", r.terminal.slope},
         {"exponent_median_stderr", r.terminal.stderr_},
         {"method", to_string(r.terminal.method)},
         {"regression_slope", std::isnan(r.regression.slope) ? Json(nullptr) : Json(r.regression.slope)},
         {"regression_stderr", r.regression.stderr_},
         {"used_replicas", r.used},
         {"excluded_nonpositive", r.excluded},
         {"per_checkpoint_levels", table}};
  return j;
}

inline std::string exponent_csv(const ExponentReport& r) {
  std::ostringstream os;
  os << "replica,n,level\n";
  for (std::size_t rep = 0; rep < r.levels.size(); ++rep)
    for (std::size_t k = 0; k < r.checkpoints.size(); ++k)
      os << rep << ',' << r.checkpoints[k] << ',' << format_double(r.levels[rep][k]) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Box exits

struct ExitRow {
  double L = 0.0;
  double Lp = 0.0;
  std::size_t replicas = 0;
  std::size_t wrong = 0;
  std::size_t unfinished = 0;
  stats::Interval p_wrong;
};

struct ExitResult {
  std::vector<ExitRow> rows;
  std::optional<stats::LinearFit> fit;  // ln P_wrong against L, rows with P_wrong > 0
  bool strictly_decreasing = false;
};

/// Exit side of one replica; replaceable for deterministic stubs.
using ExitSampler = std::function<ExitSide(const EnvironmentSpec&, const Box&, std::uint64_t walk_seed)>;

inline ExitResult exit_probability_experiment(const ExperimentConfig& cfg, const std::vector<double>& L_list,
                                              double alpha_prime, unsigned workers = 1, ExitSampler sampler = {}) {
  if (L_list.empty() || !std::is_sorted(L_list.begin(), L_list.end()))
    fail(ErrorKind::kInvalidArgument, "L_list must be increasing");
  if (!sampler) {
    sampler = [&cfg](const EnvironmentSpec& spec, const Box& box, std::uint64_t seed) {
      return walk_until_exit(spec, box, box.center(), cfg.exit_max_steps, seed);
    };
  }
  ExitResult res;
  for (double L : L_list) {
    ExitRow row;
    row.L = L;
    row.Lp = std::pow(L, alpha_prime);
    row.replicas = cfg.exit_replicas;
    const auto sides = parallel_map(cfg.exit_replicas, workers, [&](std::size_t r) {
      const EnvironmentSpec spec = cfg.replica_spec(r);
      return sampler(spec, Box(spec, Site(spec.dim()), L, row.Lp), cfg.replica_walk_seed(r));
    });
    std::vector<double> ind;
    for (auto s : sides) {
      if (s == ExitSide::kNotExited) ++row.unfinished;
      const bool wrong = s == ExitSide::kThroughOtherSide;
      row.wrong += wrong ? 1 : 0;
      ind.push_back(wrong ? 1.0 : 0.0);
    }
    row.p_wrong = batch_interval(ind);
    res.rows.push_back(row);
  }
  res.strictly_decreasing = true;
  for (std::size_t i = 1; i < res.rows.size(); ++i)
    if (!(res.rows[i].p_wrong.estimate < res.rows[i - 1].p_wrong.estimate)) res.strictly_decreasing = false;
  std::vector<double> xs, ys;
  for (const auto& r : res.rows) {
    if (r.wrong == 0) continue;
    xs.push_back(r.L);
    ys.push_back(std::log(r.p_wrong.estimate));
  }
  if (xs.size() >= 2) res.fit = stats::least_squares(xs, ys);
  return res;
}

inline Json exit_summary(const ExitResult& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"L", row.L}, {"L_transverse", row.Lp}, {"replicas", row.replicas}, {"wrong_exits", row.wrong},
                    {"unfinished", row.unfinished}, {"p_wrong", interval_json(row.p_wrong)}});
  return {{"experiment", "exit_probability"}, {"rows", rows}, {"log_linear_fit", fit_json(r.fit)},
          {"strictly_decreasing", r.strictly_decreasing}};
}

inline std::string exit_csv(const ExitResult& r) {
  std::ostringstream os;
  os << "L,L_transverse,replicas,wrong_exits,unfinished,p_wrong,lo,hi\n";
  for (const auto& row : r.rows)
    os << format_double(row.L) << ',' << format_double(row.Lp) << ',' << row.replicas << ',' << row.wrong << ','
       << row.unfinished << ',' << format_double(row.p_wrong.estimate) << ',' << format_double(row.p_wrong.lo) << ','
       << format_double(row.p_wrong.hi) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Backtracking

struct BacktrackRow {
  int k = 0;
  std::size_t hits = 0;
  stats::Interval p;
};

struct BacktrackResult {
  std::vector<BacktrackRow> rows;
  std::vector<double> min_levels;       // per replica, relative to the start
  std::optional<stats::LinearFit> fit;  // ln p against k over [fit_lo, fit_hi], p > 0
  bool nonincreasing = true;
};

inline BacktrackResult backtrack_tail_experiment(const ExperimentConfig& cfg, const std::vector<int>& k_list,
                                                 unsigned workers = 1, int fit_lo = 2, int fit_hi = 10) {
  BacktrackResult res;
  res.min_levels = parallel_map(cfg.replicas, workers, [&](std::size_t r) {
    const EnvironmentSpec spec = cfg.replica_spec(r);
    double m = 0.0;
    walk(spec, Site(spec.dim()), cfg.horizon, cfg.replica_walk_seed(r), [&](std::size_t, const Site& x) {
      m = std::min(m, spec.level(x));
      return true;
    });
    return m;
  });
  std::vector<double> xs, ys;
  for (int k : k_list) {
    BacktrackRow row;
    row.k = k;
    std::vector<double> ind;
    for (double m : res.min_levels) {
      const bool hit = m <= -static_cast<double>(k) + 1e-9;
      row.hits += hit ? 1 : 0;
      ind.push_back(hit ? 1.0 : 0.0);
    }
    row.p = batch_interval(ind);
    if (!res.rows.empty() && row.p.estimate > res.rows.back().p.estimate) res.nonincreasing = false;
    if (k >= fit_lo && k <= fit_hi && row.hits > 0) {
      xs.push_back(static_cast<double>(k));
      ys.push_back(std::log(row.p.estimate));
    }
    res.rows.push_back(row);
  }
  if (xs.size() >= 2) res.fit = stats::least_squares(xs, ys);
  return res;
}

inline Json backtrack_summary(const BacktrackResult& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) rows.push_back({{"k", row.k}, {"hits", row.hits}, {"p", interval_json(row.p)}});
  return {{"experiment", "backtrack_tail"}, {"rows", rows}, {"log_linear_fit", fit_json(r.fit)},
          {"nonincreasing", r.nonincreasing}, {"replicas", r.min_levels.size()}};
}

inline std::string backtrack_csv(const BacktrackResult& r) {
  std::ostringstream os;
  os << "replica,min_level\n";
  for (std::size_t rep = 0; rep < r.min_levels.size(); ++rep) os << rep << ',' << format_double(r.min_levels[rep]) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Idealized traps

enum class TrapVariant { kX1, kX2 };

/// Geom(p) on {1, 2, ...} with mean 1/p.
inline double sample_geometric(double p, StreamRng& rng) {
  if (p >= 1.0) return 1.0;
  return 1.0 + std::floor(std::log(rng.uniform()) / std::log1p(-p));
}

struct TrapSamples {
  std::vector<double> samples;
  std::optional<stats::LinearFit> tail;  // log-log survival slope
  double tail_lo = 0.0, tail_hi = 0.0;
  double zero_mass = 0.0;
  double zero_mass_se = 0.0;
};

/// X1 = Geom(min(1/c, 1)); X2 = Geom(min(c', 1)) with probability min(c', 1)
/// and 0 otherwise, c' the max of 4d - 2 copies. The tail is fitted from
/// `t_lo` to the level with 1000 exceedances left.
inline TrapSamples idealized_trap_sampler(const ConductanceLaw& law, TrapVariant variant, int d, std::size_t n_samples,
                                          std::uint64_t seed, double t_lo = 10.0) {
  if (n_samples < 1000) fail(ErrorKind::kInvalidArgument, "idealized trap sampler needs at least 10^3 samples");
  StreamRng rng(seed);
  TrapSamples out;
  out.samples.reserve(n_samples);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    if (variant == TrapVariant::kX1) {
      const double c = law.sample(rng);
      out.samples.push_back(sample_geometric(std::min(1.0 / c, 1.0), rng));
    } else {
      double cm = 0.0;
      for (int k = 0; k < 4 * d - 2; ++k) cm = std::max(cm, law.sample(rng));
      const double p = std::min(cm, 1.0);
      if (rng.uniform() < p) {
        out.samples.push_back(sample_geometric(p, rng));
      } else {
        out.samples.push_back(0.0);
        ++zeros;
      }
    }
  }
  const double n = static_cast<double>(n_samples);
  out.zero_mass = static_cast<double>(zeros) / n;
  out.zero_mass_se = std::sqrt(out.zero_mass * (1.0 - out.zero_mass) / n);
  out.tail_lo = t_lo;
  out.tail_hi = stats::quantile(out.samples, 1.0 - 1000.0 / n);
  if (out.tail_hi > t_lo) out.tail = stats::survival_slope(out.samples, t_lo, out.tail_hi);
  return out;
}

/// Log-log slope of the exact P[X_1 > n] over the thresholds survival_slope
/// would use on [t_lo, t_hi].
inline std::optional<stats::LinearFit> x1_oracle_slope(const ConductanceLaw& law, double t_lo, double t_hi,
                                                       int n_points = 20) {
  if (!(t_lo > 0.0) || !(t_hi > t_lo)) return std::nullopt;
  std::vector<double> xs, ys;
  for (int k = 0; k < n_points; ++k) {
    const double t = t_lo * std::pow(t_hi / t_lo, static_cast<double>(k) / (n_points - 1));
    // The empirical fit counts samples > t on an integer variable.
    const double p = oracle::x1_survival(law, std::floor(t));
    if (!(p > 0.0)) continue;
    xs.push_back(std::log(t));
    ys.push_back(std::log(p));
  }
  if (xs.size() < 2) return std::nullopt;
  return stats::least_squares(xs, ys);
}

/// Survival table of the samples at log-spaced thresholds, with the exact X1
/// survival beside it.
inline std::string trap_samples_csv(const TrapSamples& t, const ConductanceLaw& law, TrapVariant variant) {
  std::vector<double> sorted = t.samples;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::ostringstream os;
  os << "threshold,survival,exceedances,oracle\n";
  const double top = sorted.back();
  for (double x = 1.0; x <= top; x *= std::pow(10.0, 0.1)) {
    const double th = std::floor(x);
    const auto above = static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), th));
    os << format_double(th) << ',' << format_double(static_cast<double>(above) / n) << ',' << above << ',';
    if (variant == TrapVariant::kX1) os << format_double(oracle::x1_survival(law, th));
    os << '\n';
  }
  return os.str();
}

inline Json trap_samples_summary(const TrapSamples& t, const ConductanceLaw& law, TrapVariant variant, int d) {
  Json j{{"experiment", "idealized_trap"},
         {"law", law.name()},
         {"variant", variant == TrapVariant::kX1 ? "X1" : "X2"},
         {"samples", t.samples.size()},
         {"tail_lo", t.tail_lo},
         {"tail_hi", t.tail_hi},
         {"tail_fit", fit_json(t.tail)},
         {"zero_mass", t.zero_mass},
         {"zero_mass_se", t.zero_mass_se}};
  if (variant == TrapVariant::kX1) {
    j["oracle_tail_fit"] = fit_json(x1_oracle_slope(law, t.tail_lo, t.tail_hi));
  } else {
    j["oracle_zero_mass"] = oracle::x2_zero_mass(law, d);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Regeneration

struct RegenResult {
  std::vector<std::vector<RegenRecord>> records;
  std::optional<RegenStats> stats;
  std::size_t buffer = 0;
  std::optional<double> buffer_doubling_change;  // relative change of mean Z . ell_hat
};

inline RegenResult regen_experiment(const ExperimentConfig& cfg, unsigned workers = 1, bool doubling = true) {
  RegenResult res;
  res.buffer = cfg.effective_buffer();
  const std::size_t buf2 = 2 * res.buffer;
  struct Pair {
    std::vector<RegenRecord> a, b;
  };
  const auto pairs = parallel_map(cfg.replicas, workers, [&](std::size_t r) {
    const EnvironmentSpec spec = cfg.replica_spec(r);
    const Trajectory traj = run(spec, Site(spec.dim()), cfg.horizon, cfg.replica_walk_seed(r));
    Classifier cls(spec, cfg.params);
    Pair p;
    p.a = detect_regenerations(traj, cls, res.buffer);
    if (doubling && buf2 < traj.size()) p.b = detect_regenerations(traj, cls, buf2);
    return p;
  });
  std::vector<std::vector<RegenRecord>> second;
  for (const auto& p : pairs) {
    res.records.push_back(p.a);
    second.push_back(p.b);
  }
  try {
    res.stats = regen_chain_stats(res.records, cfg.params.K);
    if (doubling && buf2 < cfg.horizon) {
      const RegenStats s2 = regen_chain_stats(second, cfg.params.K);
      res.buffer_doubling_change = std::abs(s2.mean_Z_level - res.stats->mean_Z_level) / std::abs(res.stats->mean_Z_level);
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kInsufficientData) throw;
  }
  return res;
}

inline Json regen_summary(const RegenResult& r) {
  Json j{{"experiment", "regeneration"}, {"buffer", r.buffer}};
  j["stats"] = r.stats ? r.stats->to_json() : Json(nullptr);
  j["buffer_doubling_change"] = r.buffer_doubling_change ? Json(*r.buffer_doubling_change) : Json(nullptr);
  return j;
}

inline std::string regen_csv(const RegenResult& r, int dim) {
  std::ostringstream os;
  std::size_t a_len = 0;
  for (const auto& recs : r.records)
    if (!recs.empty()) a_len = recs.front().A.size();
  write_records_csv(os, r.records, dim, a_len);
  return os.str();
}

// ---------------------------------------------------------------------------
// Trap occupation

struct EntryStats {
  Site entry;
  std::size_t entries = 0;
  double mean = 0.0;
  double se = 0.0;
  double exact = 0.0;  // E_entry[exit time of the trap edge]
};

struct SingleEdgeTrap {
  double c = 0.0;
  std::size_t sojourns = 0;
  double mean_sojourn = 0.0;
  std::vector<EntryStats> per_entry;
  double max_z = 0.0;  // max over entry points of |mean - exact| / se
};

struct TrapOccupation {
  double bad_fraction = 0.0;
  std::size_t bad_visits = 0;
  double mean_bad_sojourn = 0.0;
  std::size_t max_bad_sojourn = 0;
  std::vector<SingleEdgeTrap> single_edge;
  std::optional<stats::LinearFit> sojourn_slope;  // ln mean sojourn against ln c
};

/// Classifies every step of each replica as good/bad and records sojourns in
/// BAD_K. For the single-edge part, replica walks from 0 in the homogeneous
/// field c_* = 1 with c_*([2e1, 3e1]) = c run until they are 40 levels past
/// the trap or reach the horizon; each stay on {2e1, 3e1} is one sojourn.
inline TrapOccupation trap_occupation_experiment(const ExperimentConfig& cfg, unsigned workers = 1,
                                                 bool classify = true) {
  TrapOccupation res;
  if (classify) {
    struct Occ {
      std::size_t bad_steps = 0, visits = 0, longest = 0;
      double total_sojourn = 0.0;
    };
    const auto occ = parallel_map(cfg.replicas, workers, [&](std::size_t r) {
      const EnvironmentSpec spec = cfg.replica_spec(r);
      Classifier cls(spec, cfg.params);
      Occ o;
      std::size_t run_len = 0;
      walk(spec, Site(spec.dim()), cfg.horizon, cfg.replica_walk_seed(r), [&](std::size_t, const Site& x) {
        if (!cls.is_good(x)) {
          ++o.bad_steps;
          ++run_len;
        } else if (run_len > 0) {
          ++o.visits;
          o.total_sojourn += static_cast<double>(run_len);
          o.longest = std::max(o.longest, run_len);
          run_len = 0;
        }
        return true;
      });
      return o;
    });
    std::size_t bad = 0;
    double soj = 0.0;
    for (const auto& o : occ) {
      bad += o.bad_steps;
      res.bad_visits += o.visits;
      soj += o.total_sojourn;
      res.max_bad_sojourn = std::max(res.max_bad_sojourn, o.longest);
    }
    res.bad_fraction = static_cast<double>(bad) / (static_cast<double>(cfg.replicas) * static_cast<double>(cfg.horizon + 1));
    res.mean_bad_sojourn = res.bad_visits ? soj / static_cast<double>(res.bad_visits) : 0.0;
  }

  const int d = cfg.spec.dim();
  const Site e1 = cfg.spec.unit(0);
  const Site a = e1 + e1, b = a + e1;
  std::vector<double> xs, ys;
  for (std::size_t ci = 0; ci < cfg.trap_conductances.size(); ++ci) {
    const double c = cfg.trap_conductances[ci];
    EnvironmentSpec spec(d, cfg.spec.lambda(), std::vector<double>(cfg.spec.ell_hat().begin(), cfg.spec.ell_hat().end()),
                         ConductanceLaw::constant(1.0), cfg.seed);
    spec.plant(canonical_edge(a, b), c);

    // Exact exit times of {a, b} from each endpoint.
    FiniteNetwork net = build_network(spec, [&] {
      std::vector<Site> v{a, b};
      for (const Site& s : {a, b})
        for (int dir = 0; dir < 2 * d; ++dir) {
          const Site y = s.step(dir);
          if (y != a && y != b) v.push_back(y);
        }
      return v;
    }());
    std::vector<char> absorbing(net.size(), 1);
    absorbing[net.at(a)] = absorbing[net.at(b)] = 0;
    const auto h = expected_hitting_time(net, absorbing);

    const double trap_level = spec.level(b);
    struct Soj {
      std::vector<double> from_a, from_b;
    };
    const auto sj = parallel_map(cfg.trap_replicas, workers, [&](std::size_t r) {
      Soj s;
      bool inside = false;
      bool from_a = false;
      std::size_t len = 0;
      walk(spec, Site(d), cfg.horizon, derive_seed(cfg.seed, 2 + ci, r), [&](std::size_t t, const Site& x) {
        const bool in = x == a || x == b;
        if (in && !inside) {
          inside = true;
          from_a = x == a;
          len = 0;
          if (t == 0) inside = false;
        } else if (in) {
          ++len;
        } else if (inside) {
          (from_a ? s.from_a : s.from_b).push_back(static_cast<double>(len + 1));
          inside = false;
        }
        return spec.level(x) < trap_level + 40.0;
      });
      return s;
    });
    SingleEdgeTrap tr;
    tr.c = c;
    std::vector<double> all;
    for (int side = 0; side < 2; ++side) {
      EntryStats es;
      es.entry = side == 0 ? a : b;
      std::vector<double> v;
      for (const auto& s : sj) {
        const auto& src = side == 0 ? s.from_a : s.from_b;
        v.insert(v.end(), src.begin(), src.end());
      }
      all.insert(all.end(), v.begin(), v.end());
      es.entries = v.size();
      es.exact = h[net.at(es.entry)];
      if (!v.empty()) {
        es.mean = stats::mean(v);
        es.se = stats::standard_error(v);
        if (es.se > 0.0) tr.max_z = std::max(tr.max_z, std::abs(es.mean - es.exact) / es.se);
      }
      tr.per_entry.push_back(es);
    }
    tr.sojourns = all.size();
    tr.mean_sojourn = all.empty() ? 0.0 : stats::mean(all);
    if (tr.sojourns > 0) {
      xs.push_back(std::log(c));
      ys.push_back(std::log(tr.mean_sojourn));
    }
    res.single_edge.push_back(std::move(tr));
  }
  if (xs.size() >= 2) res.sojourn_slope = stats::least_squares(xs, ys);
  return res;
}

inline Json trap_summary(const TrapOccupation& r) {
  Json edges = Json::array();
  for (const auto& t : r.single_edge) {
    Json pe = Json::array();
    for (const auto& e : t.per_entry)
      pe.push_back({{"entry", std::vector<std::int64_t>(e.entry.coords().begin(), e.entry.coords().end())},
                    {"entries", e.entries}, {"mean", e.mean}, {"se", e.se}, {"exact", e.exact}});
    edges.push_back({{"c", t.c}, {"sojourns", t.sojourns}, {"mean_sojourn", t.mean_sojourn}, {"per_entry", pe},
                     {"max_z", t.max_z}});
  }
  return {{"experiment", "trap_occupation"}, {"bad_fraction", r.bad_fraction}, {"bad_visits", r.bad_visits},
          {"mean_bad_sojourn", r.mean_bad_sojourn}, {"max_bad_sojourn", r.max_bad_sojourn},
          {"single_edge", edges}, {"sojourn_slope", fit_json(r.sojourn_slope)}};
}

inline std::string trap_csv(const TrapOccupation& r) {
  std::ostringstream os;
  os << "c,entry,entries,mean,se,exact\n";
  for (const auto& t : r.single_edge)
    for (const auto& e : t.per_entry) {
      os << format_double(t.c) << ',';
      for (int i = 0; i < e.entry.dim(); ++i) os << (i ? ";" : "") << e.entry[i];
      os << ',' << e.entries << ',' << format_double(e.mean) << ',' << format_double(e.se) << ','
         << format_double(e.exact) << '\n';
    }
  return os.str();
}

// ---------------------------------------------------------------------------
// Cluster survey

struct ClusterResult {
  WidthSurvey survey;
  double bad_fraction = 0.0;  // sampled sites that are bad
  LatticeBox box;
};

/// BAD_K widths at uniform sites of the cube of radius survey_radius around
/// the origin, in the environment of replica 0.
inline ClusterResult cluster_experiment(const ExperimentConfig& cfg, bool weak = false) {
  ClusterResult res;
  res.box = LatticeBox::centered(Site(cfg.spec.dim()), cfg.survey_radius);
  res.survey = cluster_width_survey(cfg.replica_spec(0), cfg.params, res.box, cfg.survey_samples,
                                    derive_seed(cfg.seed, 3, 0), weak);
  std::size_t bad = 0;
  for (const auto& s : res.survey.samples) bad += s.volume > 0 ? 1 : 0;
  res.bad_fraction = static_cast<double>(bad) / static_cast<double>(res.survey.samples.size());
  return res;
}

inline Json cluster_summary(const ClusterResult& r) {
  Json hist = Json::object();
  for (const auto& [w, n] : r.survey.histogram) hist[std::to_string(w)] = n;
  return {{"experiment", "clusters"},
          {"samples", r.survey.samples.size()},
          {"bad_fraction", r.bad_fraction},
          {"width_histogram", hist},
          {"tail_slope", r.survey.tail_slope ? Json(*r.survey.tail_slope) : Json(nullptr)},
          {"depth_stability", r.survey.depth_stability},
          {"truncated", r.survey.truncated}};
}

inline std::string cluster_csv(const ClusterResult& r) {
  std::ostringstream os;
  const int d = r.box.lo.dim();
  for (int i = 1; i <= d; ++i) os << "x_" << i << ',';
  os << "width,volume,truncated\n";
  for (const auto& s : r.survey.samples) {
    for (int i = 0; i < d; ++i) os << s.site[i] << ',';
    os << s.width << ',' << s.volume << ',' << (s.truncated ? 1 : 0) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Networks: Dirichlet eigenvalues of sealed boxes and expected visits

struct EigenRow {
  double L = 0.0;
  double Lp = 0.0;
  std::vector<double> values;  // per replica
  double median = 0.0;
  std::size_t truncated = 0;   // replicas skipped for a truncated trap
  std::size_t traps = 0;
};

struct NetworkResult {
  std::vector<EigenRow> rows;
  std::optional<stats::LinearFit> decay;  // ln Lambda against ln L
  std::optional<ConvergedVisits> visits;  // at the origin, first replica
};

inline NetworkResult network_experiment(const ExperimentConfig& cfg, unsigned workers = 1, bool visits = true) {
  NetworkResult res;
  std::vector<double> xs, ys;
  for (double L : cfg.eigen_L) {
    EigenRow row;
    row.L = L;
    row.Lp = std::pow(L, cfg.alpha_prime);
    struct One {
      std::optional<double> value;
      std::size_t traps = 0;
    };
    const auto vals = parallel_map(cfg.eigen_replicas, workers, [&](std::size_t r) {
      const EnvironmentSpec spec = cfg.replica_spec(r);
      One o;
      try {
        const SealedNetwork s = seal_traps(spec, cfg.params, region_of(Box(spec, Site(spec.dim()), L, row.Lp)));
        o.value = dirichlet_eigenvalue(s.net, s.interior).value;
        o.traps = s.report.traps;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kTruncatedTrap) throw;
      }
      return o;
    });
    for (const auto& o : vals) {
      if (o.value) {
        row.values.push_back(*o.value);
      } else {
        ++row.truncated;
      }
      row.traps += o.traps;
    }
    if (!row.values.empty()) {
      row.median = stats::median(row.values);
      xs.push_back(std::log(L));
      ys.push_back(std::log(row.median));
    }
    res.rows.push_back(row);
  }
  if (xs.size() >= 2) res.decay = stats::least_squares(xs, ys);
  if (visits) res.visits = expected_visits_converged(cfg.replica_spec(0), Site(cfg.spec.dim()));
  return res;
}

inline Json network_summary(const NetworkResult& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"L", row.L}, {"L_transverse", row.Lp}, {"values", row.values}, {"median", row.median},
                    {"truncated", row.truncated}, {"traps", row.traps}});
  Json j{{"experiment", "networks"}, {"eigenvalues", rows}, {"decay_fit", fit_json(r.decay)}};
  if (r.visits)
    j["expected_visits"] = {{"value", r.visits->value}, {"radius", r.visits->radius},
                            {"relative_change", r.visits->relative_change}};
  return j;
}

inline std::string network_csv(const NetworkResult& r) {
  std::ostringstream os;
  os << "L,L_transverse,index,eigenvalue\n";
  for (const auto& row : r.rows)
    for (std::size_t i = 0; i < row.values.size(); ++i)
      os << format_double(row.L) << ',' << format_double(row.Lp) << ',' << i << ',' << format_double(row.values[i]) << '\n';
  return os.str();
}

}  // namespace condwalk
