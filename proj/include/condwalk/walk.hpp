#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "condwalk/environment.hpp"
#include "condwalk/error.hpp"
#include "condwalk/rng.hpp"
#include "condwalk/site.hpp"

namespace condwalk {

/// p(x, x +- e_i) in the order (+e1, -e1, +e2, -e2, ...).
inline LocalWeights transition_distribution(const EnvironmentSpec& spec, const Site& x) {
  LocalWeights p = spec.local_weights(x);
  const double total = p.sum();
  for (int i = 0; i < p.n; ++i) p.w[i] /= total;
  return p;
}

/// Visits X_0, X_1, ... X_n of the quenched chain; `visit(t, x)` may return
/// false to stop early. Returns the last site visited.
template <class Visitor>
Site walk(const EnvironmentSpec& spec, Site x, std::size_t n_steps, std::uint64_t walk_seed, Visitor&& visit) {
  constexpr std::int64_t kLimit = std::int64_t{1} << 62;
  for (int i = 0; i < x.dim(); ++i) {
    const auto room = static_cast<std::uint64_t>(kLimit - (x[i] < 0 ? -x[i] : x[i]));
    if (x[i] >= kLimit || x[i] <= -kLimit || n_steps > room) fail(ErrorKind::kOverflow, "site coordinate may exceed 2^62");
  }
  StreamRng rng(walk_seed);
  if (!visit(std::size_t{0}, static_cast<const Site&>(x))) return x;
  const int nd = 2 * spec.dim();
  for (std::size_t t = 1; t <= n_steps; ++t) {
    const LocalWeights lw = spec.local_weights(x);
    double u = rng.uniform() * lw.sum();
    int dir = 0;
    for (; dir < nd - 1; ++dir) {
      u -= lw.w[dir];
      if (u < 0.0) break;
    }
    x[dir / 2] += (dir % 2 == 0) ? 1 : -1;
    if (!visit(t, static_cast<const Site&>(x))) return x;
  }
  return x;
}

/// Time-ordered sites X_0..X_N together with their levels X_n . ell_hat.
/// A thinned trajectory keeps a subset of times (see RunOptions) and records
/// them in `time(i)`.
class Trajectory {
 public:
  Trajectory(int dim, std::vector<double> ell, Site start, std::uint64_t walk_seed)
      : dim_(dim), ell_(std::move(ell)), start_(start), walk_seed_(walk_seed) {}

  /// Builds a trajectory from explicit sites (synthetic paths); consecutive
  /// sites must be nearest neighbours.
  static Trajectory from_sites(std::span<const Site> sites, std::vector<double> ell) {
    if (sites.empty()) fail(ErrorKind::kInvalidArgument, "trajectory needs at least one site");
    Trajectory t(sites.front().dim(), std::move(ell), sites.front(), 0);
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (i > 0 && !adjacent(sites[i - 1], sites[i]))
        fail(ErrorKind::kNotAdjacent, "trajectory step " + std::to_string(i) + " is not a nearest-neighbour move");
      t.push(sites[i], i);
    }
    return t;
  }

  void push(const Site& x, std::size_t time) {
    if (!times_.empty() || time != size()) {
      if (times_.empty())
        for (std::size_t i = 0; i < size(); ++i) times_.push_back(i);
      times_.push_back(time);
    }
    coords_.insert(coords_.end(), x.coords().begin(), x.coords().end());
    levels_.push_back(x.dot(ell_));
  }

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return levels_.size(); }
  bool thinned() const noexcept { return !times_.empty(); }
  const Site& start() const noexcept { return start_; }
  std::uint64_t walk_seed() const noexcept { return walk_seed_; }
  std::span<const double> ell_hat() const noexcept { return ell_; }

  Site site(std::size_t i) const {
    return Site(std::span<const std::int64_t>(coords_.data() + i * dim_, static_cast<std::size_t>(dim_)));
  }
  std::span<const std::int64_t> coords(std::size_t i) const noexcept {
    return {coords_.data() + i * dim_, static_cast<std::size_t>(dim_)};
  }
  double level(std::size_t i) const noexcept { return levels_[i]; }
  std::span<const double> levels() const noexcept { return levels_; }
  std::size_t time(std::size_t i) const noexcept { return times_.empty() ? i : times_[i]; }
  std::size_t final_time() const noexcept { return time(size() - 1); }

  /// max_{j <= n} X_j . ell_hat, nondecreasing.
  std::vector<double> running_max_level() const {
    std::vector<double> m(levels_.size());
    double cur = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < levels_.size(); ++i) m[i] = cur = std::max(cur, levels_[i]);
    return m;
  }

 private:
  int dim_;
  std::vector<double> ell_;
  Site start_;
  std::uint64_t walk_seed_;
  std::vector<std::int64_t> coords_;
  std::vector<double> levels_;
  std::vector<std::size_t> times_;
};

struct RunOptions {
  /// Keep every `stride`-th site plus every strict ladder point and the last site.
  std::size_t stride = 1;
};

inline Trajectory run(const EnvironmentSpec& spec, const Site& start, std::size_t n_steps, std::uint64_t walk_seed,
                      RunOptions opts = {}) {
  if (start.dim() != spec.dim()) fail(ErrorKind::kInvalidArgument, "start site has wrong dimension");
  Trajectory traj(spec.dim(), std::vector<double>(spec.ell_hat().begin(), spec.ell_hat().end()), start, walk_seed);
  if (opts.stride <= 1) {
    walk(spec, start, n_steps, walk_seed, [&](std::size_t t, const Site& x) {
      traj.push(x, t);
      return true;
    });
    return traj;
  }
  double best = -std::numeric_limits<double>::infinity();
  walk(spec, start, n_steps, walk_seed, [&](std::size_t t, const Site& x) {
    const double lv = spec.level(x);
    const bool ladder = lv > best;
    best = std::max(best, lv);
    if (t % opts.stride == 0 || ladder || t == n_steps) traj.push(x, t);
    return true;
  });
  return traj;
}

/// First stored index whose site satisfies `pred`.
inline std::optional<std::size_t> hitting_time(const Trajectory& traj, const std::function<bool(const Site&)>& pred) {
  for (std::size_t i = 0; i < traj.size(); ++i)
    if (pred(traj.site(i))) return i;
  return std::nullopt;
}

/// min_n (X_n - X_0) . ell_hat, always <= 0.
inline double min_level(const Trajectory& traj) {
  double m = 0.0;
  for (double lv : traj.levels()) m = std::min(m, lv - traj.level(0));
  return m;
}

// ---------------------------------------------------------------------------
// Boxes B(L, L') in the frame (ell_hat, f_2, ..., f_d)

class Box {
 public:
  Box(const EnvironmentSpec& spec, Site center, double L, double Lp) : L_(L), Lp_(Lp), center_(center) {
    if (!(L > 0.0) || !(Lp > 0.0)) fail(ErrorKind::kInvalidArgument, "box sizes must be positive");
    const int d = spec.dim();
    frame_.push_back(std::vector<double>(spec.ell_hat().begin(), spec.ell_hat().end()));
    // Gram-Schmidt completion with the normalized axes, most aligned first.
    for (int k = 0; k < d && static_cast<int>(frame_.size()) < d; ++k) {
      const Site u = spec.unit(k);
      std::vector<double> v(d);
      for (int i = 0; i < d; ++i) v[i] = static_cast<double>(u[i]);
      for (const auto& f : frame_) {
        double p = 0.0;
        for (int i = 0; i < d; ++i) p += v[i] * f[i];
        for (int i = 0; i < d; ++i) v[i] -= p * f[i];
      }
      double n = 0.0;
      for (double c : v) n += c * c;
      n = std::sqrt(n);
      if (n < 1e-8) continue;
      for (double& c : v) c /= n;
      frame_.push_back(std::move(v));
    }
  }

  double L() const noexcept { return L_; }
  double Lp() const noexcept { return Lp_; }
  const Site& center() const noexcept { return center_; }
  const std::vector<std::vector<double>>& frame() const noexcept { return frame_; }

  /// (z - center) . f_i
  double coordinate(const Site& z, int i) const noexcept { return (z - center_).dot(frame_[i]); }

  bool contains(const Site& z) const noexcept {
    if (std::abs(coordinate(z, 0)) >= L_) return false;
    for (std::size_t i = 1; i < frame_.size(); ++i)
      if (std::abs(coordinate(z, static_cast<int>(i))) >= Lp_) return false;
    return true;
  }

  /// z lies on the positive side: (z - center) . ell_hat >= L.
  bool positive_side(const Site& z) const noexcept { return coordinate(z, 0) >= L_; }

 private:
  double L_, Lp_;
  Site center_;
  std::vector<std::vector<double>> frame_;
};

enum class ExitSide { kThroughPositiveSide, kThroughOtherSide, kNotExited };

inline ExitSide exit_classification(const Trajectory& traj, const Box& box) {
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Site z = traj.site(i);
    if (!box.contains(z)) return box.positive_side(z) ? ExitSide::kThroughPositiveSide : ExitSide::kThroughOtherSide;
  }
  return ExitSide::kNotExited;
}

/// Runs the chain from `start` until it leaves `box` or `max_steps` elapse.
inline ExitSide walk_until_exit(const EnvironmentSpec& spec, const Box& box, const Site& start, std::size_t max_steps,
                                std::uint64_t walk_seed) {
  ExitSide side = ExitSide::kNotExited;
  walk(spec, start, max_steps, walk_seed, [&](std::size_t, const Site& x) {
    if (box.contains(x)) return true;
    side = box.positive_side(x) ? ExitSide::kThroughPositiveSide : ExitSide::kThroughOtherSide;
    return false;
  });
  return side;
}

/// JSONL export: one record per stored step, then a summary record with
/// min/max level relative to the start.
inline void write_trajectory_jsonl(std::ostream& os, const Trajectory& traj) {
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto c = traj.coords(i);
    Json rec{{"t", traj.time(i)}, {"site", std::vector<std::int64_t>(c.begin(), c.end())}, {"level", traj.level(i)}};
    os << rec.dump() << '\n';
    lo = std::min(lo, traj.level(i) - traj.level(0));
    hi = std::max(hi, traj.level(i) - traj.level(0));
  }
  const auto c = traj.coords(traj.size() - 1);
  Json summary{{"final_site", std::vector<std::int64_t>(c.begin(), c.end())}, {"min_level", lo}, {"max_level", hi}};
  os << summary.dump() << '\n';
}

}  // namespace condwalk
