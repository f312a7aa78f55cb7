#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "condwalk/environment.hpp"
#include "condwalk/experiments.hpp"
#include "condwalk/network.hpp"
#include "condwalk/oracles.hpp"
#include "condwalk/regeneration.hpp"
#include "condwalk/sealing.hpp"
#include "condwalk/stats.hpp"
#include "condwalk/walk.hpp"

namespace condwalk::verify {

/// Outcome of one family of exact checks.
struct CheckResult {
  std::string name;
  std::size_t instances = 0;
  std::size_t violations = 0;
  double worst = 0.0;  // largest error measure seen
  std::string note;

  explicit CheckResult(std::string n) : name(std::move(n)) {}
  bool pass() const noexcept { return instances > 0 && violations == 0; }
  Json to_json() const {
    return {{"name", name}, {"instances", instances}, {"violations", violations}, {"worst", worst}, {"note", note},
            {"pass", pass()}};
  }
};

/// Transition distributions sum to 1 and detailed balance holds through the
/// canonical edge, at `sites` random sites per preset.
inline CheckResult reversibility(std::size_t sites, std::uint64_t seed = 1) {
  CheckResult r{"reversibility"};
  for (std::size_t p = 0; p < preset_names().size(); ++p) {
    const auto spec = config_from_json({{"preset", preset_names()[p]}, {"seed", seed + p}}).spec;
    StreamRng rng(derive_seed(seed, 10, p));
    for (std::size_t i = 0; i < sites; ++i) {
      Site x(spec.dim());
      for (int k = 0; k < spec.dim(); ++k) x[k] = static_cast<std::int64_t>(rng.below(20001)) - 10000;
      ++r.instances;
      const auto px = transition_distribution(spec, x);
      const double sum_err = std::abs(px.sum() - 1.0);
      r.worst = std::max(r.worst, sum_err);
      bool ok = sum_err <= 1e-12;
      const auto wx = spec.local_weights(x);
      const double lx = spec.level(x);
      for (int dir = 0; dir < 2 * spec.dim(); ++dir) {
        const Site y = x.step(dir);
        // Both endpoints read the same stored conductance.
        ok = ok && spec.base_conductance(canonical_edge(x, y)) == spec.base_conductance(canonical_edge(y, x));
        // pi(x) P(x, y) = pi(y) P(y, x), compared on the scale of x.
        const auto wy = spec.local_weights(y);
        const int back = dir ^ 1;
        const double from_x = wx[dir];
        const double from_y = wy[back] * std::exp(2.0 * spec.lambda() * (spec.level(y) - lx));
        const double rel = std::abs(from_x - from_y) / from_x;
        r.worst = std::max(r.worst, rel);
        ok = ok && rel <= 1e-12;
      }
      r.violations += ok ? 0 : 1;
    }
  }
  return r;
}

/// Escape probability lower bound on random small graphs.
inline CheckResult exit_net_bound(std::size_t instances, std::uint64_t seed = 1) {
  CheckResult r{"exit_net_bound"};
  for (std::size_t i = 0; i < instances; ++i) {
    const auto inst = oracle::random_exit_net_instance(2, 12, 1.5, derive_seed(seed, 11, i));
    const double p = escape_probability(inst.net, inst.y, inst.x, inst.absorbing);
    const double dense = oracle::escape_probability(inst.net, inst.y, inst.x, inst.absorbing);
    ++r.instances;
    r.worst = std::max(r.worst, std::abs(p - dense));
    if (inst.g_size > 12 || !(p >= inst.bound()) || std::abs(p - dense) > 1e-10) ++r.violations;
  }
  return r;
}

/// Mean return time against the fundamental-matrix oracle on trap graphs of
/// up to 50 vertices, and against Monte Carlo on `mc_graphs` graphs.
inline std::vector<CheckResult> mean_return(std::size_t graphs, std::size_t mc_graphs, std::size_t mc_returns,
                                            std::uint64_t seed = 1) {
  CheckResult exact{"mean_return_exact"}, mc{"mean_return_monte_carlo"};
  for (std::size_t i = 0; i < graphs; ++i) {
    const auto g = oracle::random_trap_graph(2, 1 + i % 48, 1.5, i % 2 == 1, derive_seed(seed, 12, i));
    if (g.size() > 50) continue;
    const double a = mean_return_time(g, 0), b = oracle::mean_return_time(g, 0);
    const double rel = std::abs(a - b) / b;
    ++exact.instances;
    exact.worst = std::max(exact.worst, rel);
    if (rel > 1e-9) ++exact.violations;
  }
  for (std::size_t i = 0; i < mc_graphs; ++i) {
    const auto g = oracle::random_trap_graph(2, 2 + i % 10, 1.0, i % 2 == 0, derive_seed(seed, 13, i));
    StreamRng rng(derive_seed(seed, 14, i));
    std::vector<double> t(mc_returns);
    for (auto& v : t) v = static_cast<double>(oracle::sample_return_time(g, 0, rng));
    const double z = std::abs(stats::mean(t) - mean_return_time(g, 0)) / stats::standard_error(t);
    ++mc.instances;
    mc.worst = std::max(mc.worst, z);
    if (z > 3.0) ++mc.violations;
  }
  exact.note = "relative error";
  mc.note = "z-score";
  return {exact, mc};
}

/// Sealing on one-trap boxes (a planted high edge in an all-normal field) and
/// multi-trap boxes (heavy-tailed field). Boxes whose traps reach past the
/// exploration margin are replaced by fresh ones.
inline CheckResult sealing(std::size_t boxes, std::uint64_t seed = 1) {
  CheckResult r{"sealing"};
  std::size_t multi = 0, skipped = 0;
  double worst_sym = 0.0, worst_cons = 0.0, worst_eq = 0.0;
  for (std::uint64_t k = 0; r.instances < boxes && k < 20 * boxes; ++k) {
    const std::uint64_t s = derive_seed(seed, 15, k);
    StreamRng rng(s);
    EnvironmentSpec spec = EnvironmentSpec::axis_aligned(2, 1.0, ConductanceLaw::log_uniform(std::exp(3.0)), s);
    AnalysisParams params{100.0, 10};
    const bool one_trap = k % 2 == 0;
    if (one_trap) {
      const Site a{static_cast<std::int64_t>(rng.below(5)) - 2, static_cast<std::int64_t>(rng.below(5)) - 2};
      spec.plant(canonical_edge(a, a.step(static_cast<int>(rng.below(2)) * 2)), std::pow(10.0, 2.5 + 2.0 * rng.uniform()));
    } else {
      spec = EnvironmentSpec::axis_aligned(2, 0.5, ConductanceLaw::pareto(0.75), s);
      params = {50.0, 8};
    }
    EquivalenceReport eq;
    try {
      eq = induced_walk_equivalence_check(spec, params, LatticeBox::centered(Site{0, 0}, 4), 0);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kTruncatedTrap && e.kind() != ErrorKind::kDegenerate) throw;
      ++skipped;
      continue;
    }
    if (eq.seal.traps == 0) continue;
    ++r.instances;
    if (eq.seal.traps > 1) ++multi;
    worst_sym = std::max(worst_sym, eq.seal.max_asymmetry);
    worst_cons = std::max(worst_cons, eq.seal.max_conservation_error);
    worst_eq = std::max(worst_eq, eq.max_discrepancy);
    const bool ok = eq.seal.max_asymmetry <= 1e-9 && eq.seal.max_conservation_error <= 1e-9 &&
                    eq.seal.neighbour_inequality_holds && eq.max_discrepancy <= 1e-9;
    if (!ok) ++r.violations;
  }
  r.worst = std::max({worst_sym, worst_cons, worst_eq});
  r.note = "multi-trap boxes " + std::to_string(multi) + ", skipped " + std::to_string(skipped) + ", symmetry " +
           format_double(worst_sym) + ", conservation " + format_double(worst_cons) + ", exit discrepancy " +
           format_double(worst_eq);
  return r;
}

/// Inverse power iteration against a dense eigensolver on ball domains of at
/// most 200 vertices.
inline CheckResult dirichlet(std::size_t domains, std::uint64_t seed = 1) {
  CheckResult r{"dirichlet_eigenvalue"};
  for (std::size_t i = 0; i < domains; ++i) {
    const auto s = EnvironmentSpec::axis_aligned(2, 1.0, ConductanceLaw::log_uniform(std::exp(3.0)), derive_seed(seed, 16, i));
    const auto net = ball_network(s, Site{0, 0}, 2 + static_cast<int>(i % 9));
    std::vector<std::size_t> dom;
    for (std::size_t v = 0; v < net.size(); ++v)
      if (!net.is_boundary(v)) dom.push_back(v);
    if (dom.size() > 200) continue;
    const double a = dirichlet_eigenvalue(net, dom).value, b = oracle::dirichlet_eigenvalue(net, dom);
    ++r.instances;
    r.worst = std::max(r.worst, std::abs(a - b));
    if (std::abs(a - b) > 1e-7) ++r.violations;
  }
  return r;
}

/// Separation detector against the literal ladder replay on short
/// trajectories of the elliptic preset.
inline CheckResult detectors(std::size_t trajectories, std::size_t horizon, std::uint64_t seed = 1) {
  CheckResult r{"detector_cross_validation"};
  const auto cfg = config_from_json({{"preset", "elliptic"}, {"seed", seed}, {"horizon", horizon}});
  const std::size_t buffer = std::max<std::size_t>(1, horizon / 50);
  std::size_t replay = 0, extra = 0;
  for (std::size_t i = 0; i < trajectories; ++i) {
    const auto spec = cfg.replica_spec(i);
    const auto traj = run(spec, Site(spec.dim()), horizon, cfg.replica_walk_seed(i));
    const auto cv = cross_validate_detectors(traj, spec, cfg.params, buffer);
    ++r.instances;
    replay += cv.replay_records;
    extra += cv.detector_only;
    r.worst = std::max(r.worst, static_cast<double>(cv.replay_missing));
    if (!cv.agree() || cv.replay_records == 0) ++r.violations;
  }
  r.note = "replay records " + std::to_string(replay) + ", detector-only records " + std::to_string(extra);
  return r;
}

/// The whole suite; `small` shrinks every family for a quick run.
inline std::vector<CheckResult> run_all(bool small, std::uint64_t seed = 1) {
  std::vector<CheckResult> out;
  out.push_back(reversibility(small ? 500 : 10000, seed));
  out.push_back(exit_net_bound(small ? 20 : 100, seed));
  for (auto& c : mean_return(small ? 20 : 96, small ? 3 : 20, small ? 20000 : 100000, seed)) out.push_back(c);
  out.push_back(sealing(small ? 10 : 50, seed));
  out.push_back(dirichlet(small ? 10 : 40, seed));
  out.push_back(detectors(small ? 4 : 20, small ? 3000 : 10000, seed));
  return out;
}

}  // namespace condwalk::verify
