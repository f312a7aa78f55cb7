#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "condwalk/environment.hpp"
#include "condwalk/error.hpp"
#include "condwalk/rng.hpp"
#include "condwalk/site.hpp"
#include "condwalk/stats.hpp"

namespace condwalk {

/// Moves allowed along a directed open path. Steps from even positions are
/// +e1; steps from odd positions are taken from the set below.
enum class MoveSet {
  kForwardPairs,       ///< {+e1, ..., +ed}
  kSymmetricLateral,   ///< {+e1, +-e2, ..., +-ed}
};

struct AnalysisParams {
  double K = 100.0;
  int good_depth = 30;
  MoveSet moves = MoveSet::kForwardPairs;

  void validate() const {
    if (!(K > 1.0)) fail(ErrorKind::kConfig, "K must exceed 1");
    if (good_depth < 1) fail(ErrorKind::kConfig, "good_depth must be at least 1");
  }

  Json to_json() const {
    return {{"K", K},
            {"good_depth", good_depth},
            {"moves", moves == MoveSet::kForwardPairs ? "forward_pairs" : "symmetric_lateral"}};
  }
  static AnalysisParams from_json(const Json& j) {
    AnalysisParams p;
    if (j.contains("K")) p.K = j.at("K").get<double>();
    if (j.contains("good_depth")) p.good_depth = j.at("good_depth").get<int>();
    if (j.contains("moves")) {
      const auto m = j.at("moves").get<std::string>();
      if (m == "forward_pairs") p.moves = MoveSet::kForwardPairs;
      else if (m == "symmetric_lateral") p.moves = MoveSet::kSymmetricLateral;
      else fail(ErrorKind::kConfig, "unknown move set \"" + m + "\"");
    }
    p.validate();
    return p;
  }
};

/// A connected component of bad vertices. `boundary` is the outer vertex
/// boundary: sites outside the component adjacent to it.
struct ClusterReport {
  std::vector<Site> sites;
  std::int64_t width = 0;
  std::size_t volume = 0;
  std::vector<Site> boundary;
  bool truncated = false;

  bool empty() const noexcept { return sites.empty(); }
};

/// W(A) = max_i (max y.e_i - min y.e_i).
inline std::int64_t width_of(const std::vector<Site>& a) {
  if (a.empty()) return 0;
  std::int64_t w = 0;
  for (int i = 0; i < a.front().dim(); ++i) {
    std::int64_t lo = a.front()[i], hi = lo;
    for (const auto& s : a) {
      lo = std::min(lo, s[i]);
      hi = std::max(hi, s[i]);
    }
    w = std::max(w, hi - lo);
  }
  return w;
}

/// K-normal / open / good classification with per-instance memoisation.
/// Not thread-safe; use one per worker.
class Classifier {
 public:
  Classifier(const EnvironmentSpec& spec, AnalysisParams params) : spec_(spec), params_(params) {
    params_.validate();
  }

  const EnvironmentSpec& spec() const noexcept { return spec_; }
  const AnalysisParams& params() const noexcept { return params_; }

  bool edge_is_normal(const EdgeKey& e) const {
    const double c = spec_.base_conductance(e);
    return c >= 1.0 / params_.K && c <= params_.K;
  }

  bool is_open(const Site& x) {
    if (auto it = open_.find(x); it != open_.end()) return it->second;
    bool ok = true;
    for (int dir = 0; dir < 2 * spec_.dim() && ok; ++dir) ok = edge_is_normal(edge_at(x, dir));
    open_.emplace(x, ok);
    return ok;
  }

  bool is_super_open(const Site& x) {
    if (auto it = super_open_.find(x); it != super_open_.end()) return it->second;
    bool ok = true;
    for (int dir = 0; dir < 2 * spec_.dim() && ok; ++dir) ok = is_open(x.step(dir));
    super_open_.emplace(x, ok);
    return ok;
  }

  bool is_good(const Site& x) { return cached_good(x, false); }
  bool is_super_good(const Site& x) { return cached_good(x, true); }

  /// Uncached goodness at an explicit depth.
  bool is_good_at_depth(const Site& x, int depth, bool super = false) {
    return directed_search(x, depth, super, nullptr);
  }

  /// sup (y - x) . ell_hat over sites y reachable from x by directed open
  /// paths; +inf when such paths reach the truncation depth.
  double reach_extent(const Site& x) {
    double best = -std::numeric_limits<double>::infinity();
    const bool deep = directed_search(x, params_.good_depth, false, &best);
    if (deep) return std::numeric_limits<double>::infinity();
    return best == -std::numeric_limits<double>::infinity() ? 0.0 : best - spec_.level(x);
  }

  ClusterReport bad_cluster(const Site& x, const LatticeBox& survey) { return cluster(x, survey, false); }
  ClusterReport weakly_bad_cluster(const Site& x, const LatticeBox& survey) { return cluster(x, survey, true); }

 private:
  bool cached_good(const Site& x, bool super) {
    auto& cache = super ? super_good_ : good_;
    if (auto it = cache.find(x); it != cache.end()) return it->second;
    const bool g = directed_search(x, params_.good_depth, super, nullptr);
    cache.emplace(x, g);
    return g;
  }

  bool passable(const Site& x, bool super) { return super ? is_super_open(x) : is_open(x); }

  // Layered search over directed open paths of `depth` steps from x.
  bool directed_search(const Site& x, int depth, bool super, double* max_level) {
    if (!passable(x, super)) return false;
    const int d = spec_.dim();
    std::vector<Site> frontier{x}, next;
    if (max_level) *max_level = std::max(*max_level, spec_.level(x));
    const int fwd = spec_.unit_direction(0);
    for (int s = 0; s < depth; ++s) {
      next.clear();
      for (const auto& y : frontier) {
        if (s % 2 == 0) {
          next.push_back(y.step(fwd));
        } else {
          for (int k = 0; k < d; ++k) {
            next.push_back(y.step(spec_.unit_direction(k, 1)));
            if (k > 0 && params_.moves == MoveSet::kSymmetricLateral) next.push_back(y.step(spec_.unit_direction(k, -1)));
          }
        }
      }
      std::sort(next.begin(), next.end());
      next.erase(std::unique(next.begin(), next.end()), next.end());
      std::erase_if(next, [&](const Site& y) { return !passable(y, super); });
      if (next.empty()) return false;
      if (max_level)
        for (const auto& y : next) *max_level = std::max(*max_level, spec_.level(y));
      frontier.swap(next);
    }
    return true;
  }

  ClusterReport cluster(const Site& x, const LatticeBox& survey, bool weak) {
    ClusterReport r;
    auto bad = [&](const Site& y) { return weak ? !is_super_good(y) : !is_good(y); };
    if (!bad(x)) return r;
    std::unordered_set<Site, SiteHash> seen{x};
    std::unordered_set<Site, SiteHash> boundary;
    std::deque<Site> queue{x};
    while (!queue.empty()) {
      const Site v = queue.front();
      queue.pop_front();
      r.sites.push_back(v);
      for (int dir = 0; dir < 2 * spec_.dim(); ++dir) {
        const Site n = v.step(dir);
        if (seen.contains(n) || boundary.contains(n)) continue;
        if (bad(n)) {
          if (survey.contains(n)) {
            seen.insert(n);
            queue.push_back(n);
          } else {
            r.truncated = true;
          }
        } else {
          boundary.insert(n);
        }
      }
    }
    std::sort(r.sites.begin(), r.sites.end());
    r.boundary.assign(boundary.begin(), boundary.end());
    std::sort(r.boundary.begin(), r.boundary.end());
    r.volume = r.sites.size();
    r.width = width_of(r.sites);
    return r;
  }

  EnvironmentSpec spec_;
  AnalysisParams params_;
  std::unordered_map<Site, bool, SiteHash> open_, super_open_, good_, super_good_;
};

// Free-function surface; each call uses a fresh classifier.

inline bool edge_is_normal(const EnvironmentSpec& spec, const AnalysisParams& p, const EdgeKey& e) {
  return Classifier(spec, p).edge_is_normal(e);
}
inline bool vertex_is_open(const EnvironmentSpec& spec, const AnalysisParams& p, const Site& x) {
  return Classifier(spec, p).is_open(x);
}
inline bool vertex_is_super_open(const EnvironmentSpec& spec, const AnalysisParams& p, const Site& x) {
  return Classifier(spec, p).is_super_open(x);
}
inline bool is_good(const EnvironmentSpec& spec, const AnalysisParams& p, const Site& x) {
  return Classifier(spec, p).is_good(x);
}
inline ClusterReport bad_cluster(const EnvironmentSpec& spec, const AnalysisParams& p, const Site& x,
                                 const LatticeBox& survey) {
  return Classifier(spec, p).bad_cluster(x, survey);
}
inline ClusterReport weakly_bad_cluster(const EnvironmentSpec& spec, const AnalysisParams& p, const Site& x,
                                        const LatticeBox& survey) {
  return Classifier(spec, p).weakly_bad_cluster(x, survey);
}

struct SurveySample {
  Site site;
  std::int64_t width = 0;
  std::size_t volume = 0;
  bool truncated = false;
};

struct WidthSurvey {
  std::vector<SurveySample> samples;
  std::map<std::int64_t, std::size_t> histogram;  // width -> count, all samples
  std::optional<double> tail_slope;               // slope of ln P[W >= n] vs n, non-truncated only
  double depth_stability = 1.0;                   // agreement of goodness at depth D and 2D
  std::size_t truncated = 0;
};

/// Widths of BAD_K clusters at `n_samples` uniform sites of `box`.
inline WidthSurvey cluster_width_survey(const EnvironmentSpec& spec, const AnalysisParams& params, const LatticeBox& box,
                                        std::size_t n_samples, std::uint64_t survey_seed, bool weak = false) {
  if (n_samples < 1) fail(ErrorKind::kInvalidArgument, "survey needs at least one sample");
  Classifier cls(spec, params);
  StreamRng rng(survey_seed);
  WidthSurvey out;
  std::size_t agree = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    Site x(spec.dim());
    for (int i = 0; i < spec.dim(); ++i)
      x[i] = box.lo[i] + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(box.hi[i] - box.lo[i] + 1)));
    const ClusterReport r = weak ? cls.weakly_bad_cluster(x, box) : cls.bad_cluster(x, box);
    out.samples.push_back({x, r.width, r.volume, r.truncated});
    ++out.histogram[r.width];
    if (r.truncated) ++out.truncated;
    const bool g1 = weak ? cls.is_super_good(x) : cls.is_good(x);
    const bool g2 = cls.is_good_at_depth(x, 2 * params.good_depth, weak);
    agree += (g1 == g2) ? 1 : 0;
  }
  out.depth_stability = static_cast<double>(agree) / static_cast<double>(n_samples);

  std::vector<std::int64_t> widths;
  for (const auto& s : out.samples)
    if (!s.truncated) widths.push_back(s.width);
  const std::int64_t wmax = widths.empty() ? 0 : *std::max_element(widths.begin(), widths.end());
  std::vector<double> xs, ys;
  for (std::int64_t n = 1; n <= wmax; ++n) {
    const auto cnt = std::count_if(widths.begin(), widths.end(), [&](std::int64_t w) { return w >= n; });
    if (cnt == 0) continue;
    xs.push_back(static_cast<double>(n));
    ys.push_back(std::log(static_cast<double>(cnt) / static_cast<double>(widths.size())));
  }
  if (xs.size() >= 2) out.tail_slope = stats::least_squares(xs, ys).slope;
  return out;
}

}  // namespace condwalk
