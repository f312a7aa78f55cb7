#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "condwalk/environment.hpp"
#include "condwalk/error.hpp"
#include "condwalk/geometry.hpp"
#include "condwalk/stats.hpp"
#include "condwalk/walk.hpp"

namespace condwalk {

/// Indices of strict running maxima of the level; W_0 = 0.
inline std::vector<std::size_t> ladder_times(const Trajectory& traj) {
  std::vector<std::size_t> w;
  if (traj.size() == 0) return w;
  w.push_back(0);
  double best = traj.level(0);
  for (std::size_t i = 1; i < traj.size(); ++i) {
    if (traj.level(i) > best) {
      best = traj.level(i);
      w.push_back(i);
    }
  }
  return w;
}

/// Unit directions e with e . ell_hat = e_1 . ell_hat (normalized e_1).
inline std::vector<Site> forward_set(const EnvironmentSpec& spec) {
  std::vector<Site> out;
  const double top = spec.ell_component(0);
  for (int dir = 0; dir < 2 * spec.dim(); ++dir) {
    const Site e = Site(spec.dim()).step(dir);
    if (std::abs(spec.level(e) - top) < 1e-12) out.push_back(e);
  }
  return out;
}

/// a_x = (c_*([x - e1, x - e1 + f]))_f over the forward set.
inline std::vector<double> boundary_conductances(const EnvironmentSpec& spec, const Site& x) {
  const Site back = x - spec.unit(0);
  std::vector<double> a;
  for (const auto& f : forward_set(spec)) a.push_back(spec.base_conductance(canonical_edge(back, back + f)));
  return a;
}

namespace detail {

inline bool two_forward_steps(const Trajectory& traj, const Site& e1, std::size_t i) {
  return traj.site(i) - traj.site(i - 1) == e1 && traj.site(i - 1) - traj.site(i - 2) == e1;
}

}  // namespace detail

/// First index i >= from + 2 with X_i = X_{i-1} + e1 = X_{i-2} + 2 e1, X_i
/// K-open, and X_{i-2} . ell_hat > X_j . ell_hat for every from <= j < i-2.
inline std::optional<std::size_t> open_ladder_index(const Trajectory& traj, Classifier& cls, std::size_t from = 0) {
  if (traj.thinned()) fail(ErrorKind::kInvalidArgument, "open ladder search needs an unthinned trajectory");
  const Site e1 = cls.spec().unit(0);
  double before = -std::numeric_limits<double>::infinity();  // max level over [from, i-2)
  for (std::size_t i = from + 2; i < traj.size(); ++i) {
    if (traj.level(i - 2) > before && detail::two_forward_steps(traj, e1, i) && cls.is_open(traj.site(i))) return i;
    before = std::max(before, traj.level(i - 2));
  }
  return std::nullopt;
}

inline std::optional<std::size_t> open_ladder_index(const Trajectory& traj, const EnvironmentSpec& spec,
                                                    const AnalysisParams& params) {
  Classifier cls(spec, params);
  return open_ladder_index(traj, cls);
}

struct RegenRecord {
  std::size_t tau = 0;             // trajectory index
  std::size_t J = 0;               // steps to the next record (0 when none)
  std::vector<std::int64_t> Z;     // displacement to the next record
  double Z_level = 0.0;            // Z . ell_hat
  std::vector<double> A;           // a_x at the record site
  bool censored = false;
};

/// max(10^4, 1% of the horizon).
inline std::size_t default_buffer(std::size_t horizon) { return std::max<std::size_t>(10000, horizon / 100); }

namespace detail {

// Records at `taus` with increments between consecutive entries. A record is
// censored when it or its successor lies in the final `buffer` steps, or it
// has no successor.
inline std::vector<RegenRecord> make_records(const Trajectory& traj, const EnvironmentSpec& spec,
                                             const std::vector<std::size_t>& taus, std::size_t buffer) {
  const std::size_t last = traj.size() - 1;
  const auto late = [&](std::size_t t) { return t + buffer > last; };
  std::vector<RegenRecord> out;
  for (std::size_t k = 0; k < taus.size(); ++k) {
    RegenRecord r;
    r.tau = taus[k];
    r.A = boundary_conductances(spec, traj.site(r.tau));
    const bool has_next = k + 1 < taus.size();
    r.censored = late(r.tau) || !has_next || late(taus[k + 1]);
    if (has_next) {
      r.J = traj.time(taus[k + 1]) - traj.time(r.tau);
      const Site z = traj.site(taus[k + 1]) - traj.site(r.tau);
      r.Z.assign(z.coords().begin(), z.coords().end());
      r.Z_level = traj.level(taus[k + 1]) - traj.level(r.tau);
    } else {
      r.Z.assign(static_cast<std::size_t>(spec.dim()), 0);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

/// Separation-based detector: t is a record when X_t completes two +e1 steps
/// from a strict running maximum X_{t-2}, X_t is K-open and K-good, and every
/// later level exceeds X_t . ell_hat.
inline std::vector<RegenRecord> detect_regenerations(const Trajectory& traj, Classifier& cls, std::size_t buffer) {
  if (traj.thinned()) fail(ErrorKind::kInvalidArgument, "regeneration detection needs an unthinned trajectory");
  if (buffer >= traj.size()) fail(ErrorKind::kInvalidArgument, "buffer must be shorter than the trajectory");
  const std::size_t n = traj.size();
  std::vector<double> suffix_min(n + 1, std::numeric_limits<double>::infinity());  // min over (t, N]
  for (std::size_t t = n - 1; t > 0; --t) suffix_min[t - 1] = std::min(suffix_min[t], traj.level(t));
  const Site e1 = cls.spec().unit(0);
  std::vector<std::size_t> taus;
  double before = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 2; t < n; ++t) {
    const bool ladder = traj.level(t - 2) > before;
    before = std::max(before, traj.level(t - 2));
    if (!ladder || !(suffix_min[t] > traj.level(t))) continue;
    if (!detail::two_forward_steps(traj, e1, t)) continue;
    const Site x = traj.site(t);
    if (cls.is_open(x) && cls.is_good(x)) taus.push_back(t);
  }
  return detail::make_records(traj, cls.spec(), taus, buffer);
}

inline std::vector<RegenRecord> detect_regenerations(const Trajectory& traj, const EnvironmentSpec& spec,
                                                     const AnalysisParams& params, std::size_t buffer) {
  Classifier cls(spec, params);
  return detect_regenerations(traj, cls, buffer);
}

/// Literal replay of the S_k / M_k / R_k ladder: S_{k+1} is the first open
/// ladder point after the walk first exceeds M_k; R_k is the first return to
/// or below X_{S_k} . ell_hat when X_{S_k} is good, otherwise the first time
/// beyond the directed-open reach of X_{S_k}. A regeneration is an S_k with
/// M_k infinite (no return up to the horizon); the construction restarts
/// from it.
inline std::vector<RegenRecord> replay_ladder_construction(const Trajectory& traj, Classifier& cls,
                                                           std::size_t buffer) {
  if (traj.thinned()) fail(ErrorKind::kInvalidArgument, "ladder replay needs an unthinned trajectory");
  const std::size_t n = traj.size();
  auto first_above = [&](std::size_t from, double level) -> std::optional<std::size_t> {
    for (std::size_t i = from; i < n; ++i)
      if (traj.level(i) > level) return i;
    return std::nullopt;
  };
  auto first_return = [&](std::size_t s) -> std::optional<std::size_t> {
    for (std::size_t i = s + 1; i < n; ++i)
      if (traj.level(i) <= traj.level(s)) return i;
    return std::nullopt;
  };
  auto max_level = [&](std::size_t a, std::size_t b) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = a; i <= b; ++i) m = std::max(m, traj.level(i));
    return m;
  };

  std::vector<std::size_t> taus;
  std::size_t origin = 0;
  double M = traj.level(0);
  while (true) {
    const auto T = first_above(origin, M);
    if (!T) break;
    const auto S = open_ladder_index(traj, cls, *T);
    if (!S) break;
    const Site x = traj.site(*S);
    std::optional<std::size_t> R;
    if (cls.is_good(x)) {
      R = first_return(*S);
      if (!R) {
        taus.push_back(*S);
        origin = *S;
        M = traj.level(*S);
        continue;
      }
    } else {
      R = first_above(origin, cls.reach_extent(x) + traj.level(*S));
      if (!R) break;
    }
    M = max_level(origin, *R);
  }
  return detail::make_records(traj, cls.spec(), taus, buffer);
}

struct CrossValidation {
  std::size_t replay_records = 0;     // non-censored
  std::size_t detector_records = 0;   // non-censored
  std::size_t replay_missing = 0;     // non-censored replay records absent from the detector
  std::size_t detector_only = 0;      // non-censored detector records not produced by the replay
  bool agree() const noexcept { return replay_missing == 0; }
};

/// Runs both detectors on one trajectory. Agreement means every non-censored
/// regeneration of the replay is a non-censored record of the separation
/// detector with the same site data; the replay restarts after each
/// regeneration, so the detector may report additional separating points.
inline CrossValidation cross_validate_detectors(const Trajectory& traj, const EnvironmentSpec& spec,
                                                const AnalysisParams& params, std::size_t buffer) {
  Classifier cls(spec, params);
  const auto det = detect_regenerations(traj, cls, buffer);
  const auto rep = replay_ladder_construction(traj, cls, buffer);
  CrossValidation cv;
  std::vector<std::size_t> det_taus;
  for (const auto& r : det) {
    if (r.censored) continue;
    ++cv.detector_records;
    det_taus.push_back(r.tau);
  }
  std::vector<std::size_t> rep_taus;
  for (const auto& r : rep) {
    if (r.censored) continue;
    ++cv.replay_records;
    rep_taus.push_back(r.tau);
    const auto it = std::find_if(det.begin(), det.end(), [&](const RegenRecord& d) { return d.tau == r.tau; });
    if (it == det.end() || it->censored || it->A != r.A) ++cv.replay_missing;
  }
  for (auto t : det_taus)
    if (!std::binary_search(rep_taus.begin(), rep_taus.end(), t)) ++cv.detector_only;
  return cv;
}

struct RegenStats {
  std::size_t records = 0;      // all
  std::size_t used = 0;         // non-censored
  double mean_J = 0.0;
  std::vector<double> mean_Z;
  double mean_Z_level = 0.0;
  std::vector<double> speed;    // mean Z / mean J
  double speed_level = 0.0;
  std::optional<stats::LinearFit> J_tail;  // log-log survival fit over the upper range
  std::optional<double> acf_J;
  std::optional<double> acf_Z_level;
  std::vector<double> A_mean;
  double A_normal_fraction = 0.0;  // fraction of A entries inside [1/K, K]

  Json to_json() const {
    Json j{{"records", records}, {"used", used}, {"mean_J", mean_J}, {"mean_Z", mean_Z},
           {"mean_Z_level", mean_Z_level}, {"speed", speed}, {"speed_level", speed_level},
           {"A_mean", A_mean}, {"A_normal_fraction", A_normal_fraction}};
    j["J_tail_slope"] = J_tail ? Json(J_tail->slope) : Json(nullptr);
    j["J_tail_points"] = J_tail ? Json(J_tail->n) : Json(nullptr);
    j["acf_J"] = acf_J ? Json(*acf_J) : Json(nullptr);
    j["acf_Z_level"] = acf_Z_level ? Json(*acf_Z_level) : Json(nullptr);
    return j;
  }
};

/// Summary over per-replica record lists; lag-1 correlations never pair
/// records of different replicas or across a censored record. The J tail is
/// fitted on log-spaced thresholds from the `tail_from` quantile of J up to
/// the point where 10 exceedances remain.
inline RegenStats regen_chain_stats(const std::vector<std::vector<RegenRecord>>& replicas, double K,
                                    double tail_from = 0.5) {
  RegenStats s;
  std::vector<double> J, Zl;
  std::vector<std::vector<double>> segJ, segZ;
  std::size_t dim = 0, a_len = 0, a_normal = 0, a_total = 0;
  for (const auto& recs : replicas) {
    segJ.emplace_back();
    segZ.emplace_back();
    for (const auto& r : recs) {
      ++s.records;
      if (r.censored) {
        if (!segJ.back().empty()) {
          segJ.emplace_back();
          segZ.emplace_back();
        }
        continue;
      }
      dim = r.Z.size();
      a_len = r.A.size();
      J.push_back(static_cast<double>(r.J));
      Zl.push_back(r.Z_level);
      segJ.back().push_back(static_cast<double>(r.J));
      segZ.back().push_back(r.Z_level);
      if (s.mean_Z.size() < dim) s.mean_Z.assign(dim, 0.0);
      for (std::size_t i = 0; i < dim; ++i) s.mean_Z[i] += static_cast<double>(r.Z[i]);
      if (s.A_mean.size() < a_len) s.A_mean.assign(a_len, 0.0);
      for (std::size_t i = 0; i < a_len; ++i) {
        s.A_mean[i] += r.A[i];
        ++a_total;
        if (r.A[i] >= 1.0 / K && r.A[i] <= K) ++a_normal;
      }
    }
  }
  s.used = J.size();
  if (s.used < 2) fail(ErrorKind::kInsufficientData, "need at least two uncensored regeneration records");
  const double n = static_cast<double>(s.used);
  s.mean_J = stats::mean(J);
  s.mean_Z_level = stats::mean(Zl);
  for (auto& z : s.mean_Z) z /= n;
  for (auto& a : s.A_mean) a /= n;
  s.A_normal_fraction = a_total ? static_cast<double>(a_normal) / static_cast<double>(a_total) : 0.0;
  for (double z : s.mean_Z) s.speed.push_back(z / s.mean_J);
  s.speed_level = s.mean_Z_level / s.mean_J;
  s.acf_J = stats::lag1_autocorrelation(segJ);
  s.acf_Z_level = stats::lag1_autocorrelation(segZ);
  if (s.used >= 20) {
    const double lo = std::max(1.0, stats::quantile(J, tail_from));
    const double hi = stats::quantile(J, 1.0 - 10.0 / n);
    s.J_tail = stats::survival_slope(J, lo, hi);
  }
  return s;
}

/// CSV: replica,tau,J,Z_1..Z_d,Z_level,censored,A_1..A_m
inline void write_records_csv(std::ostream& os, const std::vector<std::vector<RegenRecord>>& replicas, int dim,
                              std::size_t a_len, bool header = true) {
  if (header) {
    os << "replica,tau,J";
    for (int i = 1; i <= dim; ++i) os << ",Z_" << i;
    os << ",Z_level,censored";
    for (std::size_t i = 1; i <= a_len; ++i) os << ",A_" << i;
    os << '\n';
  }
  for (std::size_t rep = 0; rep < replicas.size(); ++rep) {
    for (const auto& r : replicas[rep]) {
      os << rep << ',' << r.tau << ',' << r.J;
      for (auto z : r.Z) os << ',' << z;
      os << ',' << r.Z_level << ',' << (r.censored ? 1 : 0);
      for (auto a : r.A) os << ',' << a;
      os << '\n';
    }
  }
}

}  // namespace condwalk
