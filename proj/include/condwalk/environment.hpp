#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "condwalk/error.hpp"
#include "condwalk/rng.hpp"
#include "condwalk/site.hpp"
#include "json.hpp"

namespace condwalk {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Conductance laws

/// Law of the i.i.d. base conductance. Every variant has support in (0, inf).
class ConductanceLaw {
 public:
  struct Constant { double c; };
  struct LogUniform { double k_law; };          // c = exp(U(-ln k, ln k))
  struct Pareto { double gamma; };              // P[c > t] = t^-gamma, t >= 1
  struct InversePareto { double beta; };        // c = U^(1/beta) on (0,1]
  struct TwoSided { double gamma, beta, p; };   // pareto w.p. p, inverse pareto otherwise
  using Variant = std::variant<Constant, LogUniform, Pareto, InversePareto, TwoSided>;

  ConductanceLaw() : v_(Constant{1.0}) {}
  ConductanceLaw(Variant v) : v_(v) { validate(); }  // NOLINT(google-explicit-constructor)

  static ConductanceLaw constant(double c) { return Variant{Constant{c}}; }
  static ConductanceLaw log_uniform(double k) { return Variant{LogUniform{k}}; }
  static ConductanceLaw pareto(double gamma) { return Variant{Pareto{gamma}}; }
  static ConductanceLaw inverse_pareto(double beta) { return Variant{InversePareto{beta}}; }
  static ConductanceLaw two_sided(double gamma, double beta, double p) { return Variant{TwoSided{gamma, beta, p}}; }

  const Variant& variant() const noexcept { return v_; }

  /// Maps 64 hash bits to a conductance with this law.
  double sample_bits(std::uint64_t h) const noexcept {
    const double u = to_open_unit(h);
    return std::visit(
        [&](const auto& law) -> double {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, Constant>) {
            return law.c;
          } else if constexpr (std::is_same_v<T, LogUniform>) {
            return std::exp((2.0 * u - 1.0) * std::log(law.k_law));
          } else if constexpr (std::is_same_v<T, Pareto>) {
            return std::pow(u, -1.0 / law.gamma);
          } else if constexpr (std::is_same_v<T, InversePareto>) {
            return std::pow(u, 1.0 / law.beta);
          } else {
            const double v = to_open_unit(fmix64(h ^ 0x2545F4914F6CDD1DULL));
            return u < law.p ? std::pow(v, -1.0 / law.gamma) : std::pow(v, 1.0 / law.beta);
          }
        },
        v_);
  }

  double sample(StreamRng& rng) const noexcept { return sample_bits(rng.bits()); }

  /// Analytic CDF P[c <= t].
  double cdf(double t) const noexcept {
    return std::visit(
        [&](const auto& law) -> double {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, Constant>) {
            return t >= law.c ? 1.0 : 0.0;
          } else if constexpr (std::is_same_v<T, LogUniform>) {
            const double lk = std::log(law.k_law);
            return std::clamp((std::log(t) + lk) / (2.0 * lk), 0.0, 1.0);
          } else if constexpr (std::is_same_v<T, Pareto>) {
            return t <= 1.0 ? 0.0 : 1.0 - std::pow(t, -law.gamma);
          } else if constexpr (std::is_same_v<T, InversePareto>) {
            return t >= 1.0 ? 1.0 : (t <= 0.0 ? 0.0 : std::pow(t, law.beta));
          } else {
            const double hi = t <= 1.0 ? 0.0 : 1.0 - std::pow(t, -law.gamma);
            const double lo = t >= 1.0 ? 1.0 : (t <= 0.0 ? 0.0 : std::pow(t, law.beta));
            return law.p * hi + (1.0 - law.p) * lo;
          }
        },
        v_);
  }

  /// P[c > t], computed without cancellation in the tails.
  double survival(double t) const noexcept {
    return std::visit(
        [&](const auto& law) -> double {
          using T = std::decay_t<decltype(law)>;
          auto lo = [&](double beta) { return t >= 1.0 ? 0.0 : (t <= 0.0 ? 1.0 : -std::expm1(beta * std::log(t))); };
          if constexpr (std::is_same_v<T, Constant>) {
            return t >= law.c ? 0.0 : 1.0;
          } else if constexpr (std::is_same_v<T, LogUniform>) {
            const double lk = std::log(law.k_law);
            return std::clamp((lk - std::log(t)) / (2.0 * lk), 0.0, 1.0);
          } else if constexpr (std::is_same_v<T, Pareto>) {
            return t <= 1.0 ? 1.0 : std::pow(t, -law.gamma);
          } else if constexpr (std::is_same_v<T, InversePareto>) {
            return lo(law.beta);
          } else {
            const double hi = t <= 1.0 ? 1.0 : std::pow(t, -law.gamma);
            return law.p * hi + (1.0 - law.p) * lo(law.beta);
          }
        },
        v_);
  }

  /// E[c] < inf. For pareto this holds iff gamma > 1.
  bool finite_mean() const noexcept {
    return std::visit(
        [](const auto& law) -> bool {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, Pareto> || std::is_same_v<T, TwoSided>) {
            return law.gamma > 1.0;
          } else {
            return true;
          }
        },
        v_);
  }

  bool is_constant() const noexcept { return std::holds_alternative<Constant>(v_); }

  std::string name() const {
    static constexpr std::array<const char*, 5> kNames{"constant", "log_uniform", "pareto", "inverse_pareto",
                                                       "two_sided"};
    return kNames[v_.index()];
  }

  Json to_json() const {
    return std::visit(
        [&](const auto& law) -> Json {
          using T = std::decay_t<decltype(law)>;
          Json j{{"variant", name()}};
          if constexpr (std::is_same_v<T, Constant>) {
            j["c"] = law.c;
          } else if constexpr (std::is_same_v<T, LogUniform>) {
            j["K_law"] = law.k_law;
          } else if constexpr (std::is_same_v<T, Pareto>) {
            j["gamma"] = law.gamma;
          } else if constexpr (std::is_same_v<T, InversePareto>) {
            j["beta"] = law.beta;
          } else {
            j["gamma"] = law.gamma;
            j["beta"] = law.beta;
            j["p"] = law.p;
          }
          return j;
        },
        v_);
  }

  static ConductanceLaw from_json(const Json& j) {
    if (!j.is_object() || !j.contains("variant")) fail(ErrorKind::kConfig, "law must be an object with a \"variant\"");
    const auto v = j.at("variant").get<std::string>();
    auto num = [&](const char* key) {
      if (!j.contains(key) || !j.at(key).is_number())
        fail(ErrorKind::kConfig, "law " + v + " needs numeric field \"" + key + "\"");
      return j.at(key).get<double>();
    };
    if (v == "constant") return constant(num("c"));
    if (v == "log_uniform") return log_uniform(num("K_law"));
    if (v == "pareto") return pareto(num("gamma"));
    if (v == "inverse_pareto") return inverse_pareto(num("beta"));
    if (v == "two_sided") return two_sided(num("gamma"), num("beta"), num("p"));
    fail(ErrorKind::kConfig, "unknown law variant \"" + v + "\"");
  }

 private:
  void validate() const {
    std::visit(
        [](const auto& law) {
          using T = std::decay_t<decltype(law)>;
          auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, m); };
          if constexpr (std::is_same_v<T, Constant>) {
            if (!(law.c > 0.0) || !std::isfinite(law.c)) bad("constant conductance must be positive");
          } else if constexpr (std::is_same_v<T, LogUniform>) {
            if (!(law.k_law > 1.0)) bad("log_uniform K_law must exceed 1");
          } else if constexpr (std::is_same_v<T, Pareto>) {
            if (!(law.gamma > 0.0)) bad("pareto gamma must be positive");
          } else if constexpr (std::is_same_v<T, InversePareto>) {
            if (!(law.beta > 0.0)) bad("inverse_pareto beta must be positive");
          } else {
            if (!(law.gamma > 0.0) || !(law.beta > 0.0)) bad("two_sided exponents must be positive");
            if (!(law.p > 0.0 && law.p < 1.0)) bad("two_sided mixture weight must lie in (0,1)");
          }
        },
        v_);
  }

  Variant v_;
};

// ---------------------------------------------------------------------------
// Edges

/// Undirected edge [base, base + e_axis]; `axis` is 0-based.
struct EdgeKey {
  Site base;
  int axis = 0;

  friend bool operator==(const EdgeKey&, const EdgeKey&) = default;
  friend auto operator<=>(const EdgeKey&, const EdgeKey&) = default;

  Site other() const { return base.step(2 * axis); }
};

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& e) const noexcept {
    return SiteHash{}(e.base) ^ (static_cast<std::size_t>(e.axis + 1) * 0x9E3779B97F4A7C15ULL);
  }
};

inline EdgeKey canonical_edge(const Site& x, const Site& y) {
  if (x.dim() != y.dim() || (x - y).l1_norm() != 1)
    fail(ErrorKind::kNotAdjacent, x.str() + " and " + y.str() + " are not nearest neighbours");
  for (int i = 0; i < x.dim(); ++i) {
    if (y[i] == x[i] + 1) return {x, i};
    if (y[i] == x[i] - 1) return {y, i};
  }
  fail(ErrorKind::kNotAdjacent, "unreachable");
}

/// Edge leaving x in direction index `dir` (+e1, -e1, +e2, ...), without the adjacency check.
inline EdgeKey edge_at(const Site& x, int dir) {
  return (dir % 2 == 0) ? EdgeKey{x, dir / 2} : EdgeKey{x.step(dir), dir / 2};
}

// ---------------------------------------------------------------------------
// Environment

/// Fixed-capacity vector of the 2d weights around a site.
struct LocalWeights {
  std::array<double, 2 * kMaxDim> w{};
  int n = 0;

  std::span<const double> values() const noexcept { return {w.data(), static_cast<std::size_t>(n)}; }
  double operator[](int i) const noexcept { return w[i]; }
  double sum() const noexcept { return std::accumulate(w.begin(), w.begin() + n, 0.0); }
};

/// Immutable description of the random field: dimension, bias, base law and
/// master seed, plus optional planted edges for synthetic environments.
///
/// Sites handed in and out are in the caller's coordinates. Internally the
/// axes are also described by a signed permutation under which the bias
/// direction has nonnegative, descending components; `unit(k)` returns the
/// caller-coordinate vector of the k-th such axis.
class EnvironmentSpec {
 public:
  EnvironmentSpec(int d, double lambda, std::vector<double> ell_hat, ConductanceLaw law, std::uint64_t seed,
                  bool test_mode = false)
      : d_(d), lambda_(lambda), ell_(std::move(ell_hat)), law_(law), seed_(seed), test_mode_(test_mode) {
    if (d_ < 2 || d_ > kMaxDim) fail(ErrorKind::kConfig, "dimension must lie in [2," + std::to_string(kMaxDim) + "]");
    if (static_cast<int>(ell_.size()) != d_) fail(ErrorKind::kConfig, "ell_hat must have d components");
    double n2 = 0.0;
    for (double v : ell_) n2 += v * v;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-12) fail(ErrorKind::kConfig, "ell_hat must have unit Euclidean norm");
    if (!std::isfinite(lambda_) || lambda_ < 0.0 || (lambda_ == 0.0 && !test_mode_))
      fail(ErrorKind::kConfig, "bias strength must be positive");
    if (lambda_ * std::sqrt(n2) > 300.0) fail(ErrorKind::kConfig, "bias strength too large");

    std::vector<int> order(d_);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(ell_[a]) > std::abs(ell_[b]); });
    for (int k = 0; k < d_; ++k) {
      perm_[k] = order[k];
      sign_[k] = ell_[order[k]] < 0.0 ? -1 : 1;
    }
    for (int i = 0; i < d_; ++i) {
      fwd_[i] = std::exp(lambda_ * ell_[i]);
      bwd_[i] = std::exp(-lambda_ * ell_[i]);
    }
  }

  static EnvironmentSpec axis_aligned(int d, double lambda, ConductanceLaw law, std::uint64_t seed,
                                      bool test_mode = false) {
    std::vector<double> e(d, 0.0);
    e[0] = 1.0;
    return {d, lambda, e, law, seed, test_mode};
  }

  int dim() const noexcept { return d_; }
  double lambda() const noexcept { return lambda_; }
  std::span<const double> ell_hat() const noexcept { return ell_; }
  const ConductanceLaw& law() const noexcept { return law_; }
  std::uint64_t seed() const noexcept { return seed_; }
  bool test_mode() const noexcept { return test_mode_; }

  /// Same field parameters with another master seed (planted edges kept).
  EnvironmentSpec with_seed(std::uint64_t seed) const {
    EnvironmentSpec s = *this;
    s.seed_ = seed;
    return s;
  }

  /// Level x . ell_hat.
  double level(const Site& x) const noexcept { return x.dot(ell_); }

  /// Caller-coordinate vector of the k-th normalized axis (k = 0 is e_1).
  Site unit(int k) const { return Site::unit(d_, perm_[k], sign_[k]); }
  /// Direction index (+e1, -e1, ...) of the k-th normalized axis, with sign.
  int unit_direction(int k, int sign = 1) const noexcept { return 2 * perm_[k] + ((sign_[k] * sign) > 0 ? 0 : 1); }
  /// ell_hat . e_k for the normalized axis k (nonnegative, descending).
  double ell_component(int k) const noexcept { return std::abs(ell_[perm_[k]]); }

  /// Overrides the base conductance of one edge (synthetic environments).
  void plant(const EdgeKey& e, double c) {
    if (!(c > 0.0) || !std::isfinite(c)) fail(ErrorKind::kInvalidArgument, "planted conductance must be positive");
    if (e.base.dim() != d_ || e.axis < 0 || e.axis >= d_) fail(ErrorKind::kInvalidArgument, "planted edge key invalid");
    planted_[e] = c;
  }
  const std::unordered_map<EdgeKey, double, EdgeKeyHash>& planted() const noexcept { return planted_; }

  double base_conductance(const EdgeKey& e) const noexcept {
    if (!planted_.empty()) {
      if (auto it = planted_.find(e); it != planted_.end()) return it->second;
    }
    return law_.sample_bits(hash_edge(seed_, e.base.coords(), e.axis));
  }

  /// c(x,y) = c_*([x,y]) exp((x+y) . lambda ell_hat).
  double full_conductance(const Site& x, const Site& y) const {
    const EdgeKey e = canonical_edge(x, y);
    const double expo = lambda_ * ((x + y).dot(ell_));
    if (std::abs(expo) > 700.0) fail(ErrorKind::kOverflow, "conductance exponent exceeds 700 at " + x.str());
    return base_conductance(e) * std::exp(expo);
  }

  /// Weights c(x, x +- e_i) exp(-2 lambda x . ell_hat), order (+e1, -e1, +e2, -e2, ...).
  LocalWeights local_weights(const Site& x) const noexcept {
    LocalWeights lw;
    lw.n = 2 * d_;
    for (int i = 0; i < d_; ++i) {
      lw.w[2 * i] = base_conductance(EdgeKey{x, i}) * fwd_[i];
      Site b = x;
      b[i] -= 1;
      lw.w[2 * i + 1] = base_conductance(EdgeKey{b, i}) * bwd_[i];
    }
    return lw;
  }

  /// pi(x) exp(-2 lambda x . ell_hat).
  double stationary_weight(const Site& x) const noexcept { return local_weights(x).sum(); }

  Json to_json() const {
    Json j{{"d", d_}, {"lambda", lambda_}, {"ell_hat", ell_}, {"law", law_.to_json()}, {"seed", seed_}};
    if (!planted_.empty()) {
      std::vector<EdgeKey> keys;
      for (const auto& [k, v] : planted_) keys.push_back(k);
      std::sort(keys.begin(), keys.end());
      Json arr = Json::array();
      for (const auto& k : keys) {
        std::vector<std::int64_t> b(k.base.coords().begin(), k.base.coords().end());
        arr.push_back({{"base", b}, {"axis", k.axis + 1}, {"c", planted_.at(k)}});
      }
      j["planted"] = arr;
    }
    return j;
  }

  static EnvironmentSpec from_json(const Json& j, bool test_mode = false) {
    auto need = [&](const char* key) -> const Json& {
      if (!j.contains(key)) fail(ErrorKind::kConfig, std::string("environment is missing \"") + key + "\"");
      return j.at(key);
    };
    EnvironmentSpec s(need("d").get<int>(), need("lambda").get<double>(), need("ell_hat").get<std::vector<double>>(),
                      ConductanceLaw::from_json(need("law")), need("seed").get<std::uint64_t>(), test_mode);
    if (j.contains("planted")) {
      for (const auto& p : j.at("planted")) {
        Site b(p.at("base").get<std::vector<std::int64_t>>());
        s.plant(EdgeKey{b, p.at("axis").get<int>() - 1}, p.at("c").get<double>());
      }
    }
    return s;
  }

 private:
  int d_;
  double lambda_;
  std::vector<double> ell_;
  ConductanceLaw law_;
  std::uint64_t seed_;
  bool test_mode_;
  std::array<int, kMaxDim> perm_{};
  std::array<int, kMaxDim> sign_{};
  std::array<double, kMaxDim> fwd_{};
  std::array<double, kMaxDim> bwd_{};
  std::unordered_map<EdgeKey, double, EdgeKeyHash> planted_;
};

// Free-function surface.

inline double base_conductance(const EnvironmentSpec& spec, const EdgeKey& e) { return spec.base_conductance(e); }
inline double full_conductance(const EnvironmentSpec& spec, const Site& x, const Site& y) {
  return spec.full_conductance(x, y);
}
inline LocalWeights local_weights(const EnvironmentSpec& spec, const Site& x) { return spec.local_weights(x); }
inline double stationary_weight(const EnvironmentSpec& spec, const Site& x) { return spec.stationary_weight(x); }

}  // namespace condwalk
