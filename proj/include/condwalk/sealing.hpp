#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "condwalk/environment.hpp"
#include "condwalk/error.hpp"
#include "condwalk/geometry.hpp"
#include "condwalk/network.hpp"
#include "condwalk/rng.hpp"
#include "condwalk/site.hpp"
#include "condwalk/walk.hpp"

namespace condwalk {

/// c(x,y) exp(-2 lambda shift) for lattice neighbours.
class ScaledConductance {
 public:
  ScaledConductance(const EnvironmentSpec& spec, double shift) : spec_(spec), shift_(shift) {}
  double operator()(const Site& x, const Site& y) const {
    const EdgeKey e = canonical_edge(x, y);
    return spec_.base_conductance(e) * std::exp(spec_.lambda() * ((x + y).dot(spec_.ell_hat()) - 2.0 * shift_));
  }
  /// pi(x) on Z^d, same normalisation.
  double pi(const Site& x) const {
    double s = 0.0;
    for (int dir = 0; dir < 2 * x.dim(); ++dir) s += (*this)(x, x.step(dir));
    return s;
  }
  double shift() const noexcept { return shift_; }

 private:
  const EnvironmentSpec& spec_;
  double shift_;
};

struct SealReport {
  std::size_t traps = 0;
  std::size_t trap_sites = 0;
  std::size_t sealed_edges = 0;
  std::size_t loops = 0;
  double max_asymmetry = 0.0;         // relative, between the two defining formulas
  double max_conservation_error = 0.0;  // relative, at interior vertices
  std::size_t neighbour_pairs_checked = 0;
  bool neighbour_inequality_holds = true;
};

/// The trap-sealed network on GOOD_K cut to a box.
///
/// Interior vertices are the good sites of `box`. Boundary vertices are the
/// good sites outside `box` that the induced walk can reach in one step:
/// good neighbours of interior sites and outer boundary sites of the sealed
/// clusters. Clusters are the BAD_K components touching an interior site.
struct SealedNetwork {
  FiniteNetwork net;
  std::vector<std::size_t> interior;
  std::vector<ClusterReport> clusters;
  SealReport report;
};

/// A finite set of sites: a bounding lattice box cut by an optional predicate.
struct Region {
  LatticeBox bbox;
  std::function<bool(const Site&)> pred;

  Region(const LatticeBox& b) : bbox(b) {}  // NOLINT(google-explicit-constructor)
  Region(const LatticeBox& b, std::function<bool(const Site&)> p) : bbox(b), pred(std::move(p)) {}

  bool contains(const Site& s) const { return bbox.contains(s) && (!pred || pred(s)); }
  template <class F>
  void for_each(F&& f) const {
    bbox.for_each([&](const Site& s) {
      if (!pred || pred(s)) f(s);
    });
  }
};

/// Lattice sites of the box B(L, L') of `box`.
inline Region region_of(const Box& box) {
  const int d = box.center().dim();
  const auto r = static_cast<std::int64_t>(std::ceil(std::max(box.L(), box.Lp()) * std::sqrt(static_cast<double>(d))));
  return Region(LatticeBox::centered(box.center(), r), [box](const Site& s) { return box.contains(s); });
}

namespace detail {

struct TrapLayout {
  std::vector<Site> interior;
  std::vector<Site> boundary;
  std::vector<ClusterReport> clusters;
  std::unordered_set<Site, SiteHash> dbad;  // union of cluster outer boundaries
  double shift = 0.0;
};

inline TrapLayout trap_layout(const EnvironmentSpec& spec, const AnalysisParams& params, const Region& box,
                              std::int64_t margin) {
  Classifier cls(spec, params);
  LatticeBox working = box.bbox;
  for (int i = 0; i < spec.dim(); ++i) {
    working.lo[i] -= margin;
    working.hi[i] += margin;
  }
  TrapLayout t;
  std::unordered_set<Site, SiteHash> in_cluster, interior_set, boundary_set;
  auto take_cluster = [&](const Site& z) {
    if (in_cluster.contains(z)) return;
    ClusterReport c = cls.bad_cluster(z, working);
    if (c.truncated) fail(ErrorKind::kTruncatedTrap, "bad cluster through " + z.str() + " leaves the working box");
    for (const auto& s : c.sites) in_cluster.insert(s);
    for (const auto& s : c.boundary) t.dbad.insert(s);
    t.clusters.push_back(std::move(c));
  };
  box.for_each([&](const Site& x) {
    if (cls.is_good(x)) {
      t.interior.push_back(x);
      interior_set.insert(x);
    }
  });
  for (const auto& x : t.interior) {
    for (int dir = 0; dir < 2 * spec.dim(); ++dir) {
      const Site y = x.step(dir);
      if (!cls.is_good(y)) {
        take_cluster(y);
      } else if (!box.contains(y) && boundary_set.insert(y).second) {
        t.boundary.push_back(y);
      }
    }
  }
  for (const auto& c : t.clusters)
    for (const auto& y : c.boundary)
      if (!interior_set.contains(y) && boundary_set.insert(y).second) t.boundary.push_back(y);
  std::sort(t.boundary.begin(), t.boundary.end());

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  auto span_level = [&](const Site& s) {
    lo = std::min(lo, spec.level(s));
    hi = std::max(hi, spec.level(s));
  };
  for (const auto& s : t.interior) span_level(s);
  for (const auto& s : t.boundary) span_level(s);
  for (const auto& c : t.clusters)
    for (const auto& s : c.sites) span_level(s);
  if (t.interior.empty()) fail(ErrorKind::kDegenerate, "box contains no good site");
  if (2.0 * spec.lambda() * (hi - lo + 2.0) > 700.0) fail(ErrorKind::kOverflow, "box level spread too large");
  t.shift = lo;
  return t;
}

// Harmonic measure of a cluster seen from its sites: H(z, y) for z in the
// cluster, y in its outer boundary. Sites are eliminated one at a time
// (star-mesh) and H is recovered by back substitution; no step subtracts, so
// small entries keep full relative accuracy even when conductances span many
// decades.
inline Eigen::MatrixXd cluster_harmonic_measure(const ClusterReport& c, const ScaledConductance& cond) {
  const auto m = static_cast<Eigen::Index>(c.sites.size());
  const auto b = static_cast<Eigen::Index>(c.boundary.size());
  std::unordered_map<Site, Eigen::Index, SiteHash> idx;
  for (Eigen::Index i = 0; i < m; ++i) idx.emplace(c.sites[static_cast<std::size_t>(i)], i);
  for (Eigen::Index j = 0; j < b; ++j) idx.emplace(c.boundary[static_cast<std::size_t>(j)], m + j);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, m + b);  // W(i, k): conductance from cluster site i to vertex k
  for (Eigen::Index i = 0; i < m; ++i) {
    const Site& x = c.sites[static_cast<std::size_t>(i)];
    for (int dir = 0; dir < 2 * x.dim(); ++dir) {
      const Site y = x.step(dir);
      if (auto it = idx.find(y); it != idx.end()) W(i, it->second) = cond(x, y);
    }
  }
  std::vector<double> total(static_cast<std::size_t>(m));
  for (Eigen::Index k = 0; k < m; ++k) {
    double tk = 0.0;
    for (Eigen::Index v = k + 1; v < m + b; ++v) tk += W(k, v);
    if (!(tk > 0.0)) fail(ErrorKind::kDisconnected, "trap cluster does not reach its boundary");
    total[static_cast<std::size_t>(k)] = tk;
    for (Eigen::Index i = k + 1; i < m; ++i) {
      const double wik = W(i, k);
      if (wik == 0.0) continue;
      for (Eigen::Index v = k + 1; v < m + b; ++v)
        if (v != i) W(i, v) += wik * W(k, v) / tk;
    }
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, b);
  for (Eigen::Index k = m - 1; k >= 0; --k) {
    for (Eigen::Index j = 0; j < b; ++j) {
      double h = W(k, m + j);
      for (Eigen::Index l = k + 1; l < m; ++l) h += W(k, l) * H(l, j);
      H(k, j) = h / total[static_cast<std::size_t>(k)];
    }
  }
  return H;
}

}  // namespace detail

/// Seals every trap touching `box`. Clusters are explored inside the box
/// enlarged by `margin`; TruncatedTrap is raised if one reaches further.
inline SealedNetwork seal_traps(const EnvironmentSpec& spec, const AnalysisParams& params, const Region& box,
                                std::int64_t margin = -1) {
  params.validate();
  if (margin < 0) margin = 2 * params.good_depth;
  detail::TrapLayout t = detail::trap_layout(spec, params, box, margin);
  const ScaledConductance cond(spec, t.shift);

  SealedNetwork out;
  FiniteNetwork& net = out.net;
  net.level_shift = t.shift;
  for (const auto& s : t.interior) out.interior.push_back(net.add_vertex(s));
  for (const auto& s : t.boundary) net.set_boundary(net.add_vertex(s));

  // Retained edges.
  for (std::size_t u = 0; u < net.size(); ++u) {
    const Site& x = net.site(u);
    for (int i = 0; i < spec.dim(); ++i) {
      const Site y = x.step(2 * i);
      const auto v = net.index_of(y);
      if (!v) continue;
      if (t.dbad.contains(x) && t.dbad.contains(y)) continue;
      net.add_edge(u, *v, cond(x, y));
    }
  }

  // Sealed edges: directed[(x, y)] is the value computed from x's side.
  std::map<std::pair<std::size_t, std::size_t>, double> directed;
  for (const Site& x : t.dbad) {
    const auto u = net.at(x);
    for (int dir = 0; dir < 2 * spec.dim(); ++dir) {
      const Site y = x.step(dir);
      if (t.dbad.contains(y)) directed[{u, net.at(y)}] += cond(x, y);
    }
  }
  for (const auto& c : t.clusters) {
    const Eigen::MatrixXd H = detail::cluster_harmonic_measure(c, cond);
    std::unordered_map<Site, std::size_t, SiteHash> row;
    for (std::size_t i = 0; i < c.sites.size(); ++i) row.emplace(c.sites[i], i);
    for (const auto& x : c.boundary) {
      const auto u = net.at(x);
      for (int dir = 0; dir < 2 * spec.dim(); ++dir) {
        const Site z = x.step(dir);
        const auto it = row.find(z);
        if (it == row.end()) continue;
        const double cxz = cond(x, z);
        for (std::size_t j = 0; j < c.boundary.size(); ++j) {
          const double h = H(static_cast<Eigen::Index>(it->second), static_cast<Eigen::Index>(j));
          if (h > 0.0) directed[{u, net.at(c.boundary[j])}] += cxz * h;
        }
      }
    }
    out.report.trap_sites += c.sites.size();
  }
  out.report.traps = t.clusters.size();

  for (const auto& [key, from_u] : directed) {
    const auto [u, v] = key;
    if (u > v) continue;
    double value = from_u;
    if (u != v) {
      const auto it = directed.find({v, u});
      const double from_v = it == directed.end() ? 0.0 : it->second;
      const double rel = std::abs(from_u - from_v) / std::max(from_u, from_v);
      out.report.max_asymmetry = std::max(out.report.max_asymmetry, rel);
      value = 0.5 * (from_u + from_v);
      if (adjacent(net.site(u), net.site(v))) {
        ++out.report.neighbour_pairs_checked;
        if (!(value >= cond(net.site(u), net.site(v)))) out.report.neighbour_inequality_holds = false;
      }
    } else {
      ++out.report.loops;
    }
    if (value > 0.0) {
      net.add_edge(u, v, value);
      ++out.report.sealed_edges;
    }
  }
  for (const auto& [key, from_u] : directed) {
    if (key.first > key.second && !directed.contains({key.second, key.first})) {
      out.report.max_asymmetry = 1.0;
    }
  }

  for (auto u : out.interior) {
    const double target = cond.pi(net.site(u));
    out.report.max_conservation_error =
        std::max(out.report.max_conservation_error, std::abs(net.pi(u) - target) / target);
  }
  out.clusters = std::move(t.clusters);
  return out;
}

struct EquivalenceReport {
  SealReport seal;
  std::size_t sources = 0;
  std::size_t targets = 0;
  double max_discrepancy = 0.0;  // exact induced walk vs sealed walk
  std::size_t mc_runs = 0;
  double mc_max_z = 0.0;         // max |freq - p| / SE over targets
  bool mc_within_3se = true;
  std::size_t mc_unfinished = 0;
};

/// Compares exit distributions onto the boundary shell of (a) the original
/// chain on good sites of the box plus the sealed clusters, absorbed at the
/// shell, and (b) the sealed network. With n_runs > 0 the original walk is
/// also simulated from the interior site closest to the box centre.
inline EquivalenceReport induced_walk_equivalence_check(const EnvironmentSpec& spec, const AnalysisParams& params,
                                                        const Region& box, std::size_t n_runs,
                                                        std::uint64_t seed = 1, std::int64_t margin = -1) {
  const SealedNetwork sealed = seal_traps(spec, params, box, margin);
  const FiniteNetwork& sn = sealed.net;
  const ScaledConductance cond(spec, sn.level_shift);

  FiniteNetwork orig;
  for (std::size_t v = 0; v < sn.size(); ++v) orig.add_vertex(sn.site(v));
  for (const auto& c : sealed.clusters)
    for (const auto& s : c.sites) orig.add_vertex(s);
  std::vector<char> absorbing(orig.size(), 0);
  for (std::size_t v = 0; v < sn.size(); ++v) absorbing[v] = sn.is_boundary(v) ? 1 : 0;
  for (std::size_t u = 0; u < orig.size(); ++u) {
    const Site& x = orig.site(u);
    for (int i = 0; i < spec.dim(); ++i) {
      const Site y = x.step(2 * i);
      if (auto v = orig.index_of(y)) orig.add_edge(u, *v, cond(x, y));
    }
  }

  const std::vector<std::size_t> targets = sn.boundary();
  std::vector<char> sealed_abs(sn.size(), 0);
  for (auto b : targets) sealed_abs[b] = 1;
  const Eigen::MatrixXd Ea = exit_distribution(orig, absorbing, sealed.interior, targets);
  const Eigen::MatrixXd Eb = exit_distribution(sn, sealed_abs, sealed.interior, targets);

  EquivalenceReport rep;
  rep.seal = sealed.report;
  rep.sources = sealed.interior.size();
  rep.targets = targets.size();
  rep.max_discrepancy = (Ea - Eb).cwiseAbs().maxCoeff();

  if (n_runs > 0) {
    const Site centre = [&] {
      Site c(spec.dim());
      for (int i = 0; i < spec.dim(); ++i) c[i] = (box.bbox.lo[i] + box.bbox.hi[i]) / 2;
      return c;
    }();
    std::size_t start_row = 0;
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (std::size_t r = 0; r < sealed.interior.size(); ++r) {
      const auto dist = (sn.site(sealed.interior[r]) - centre).l1_norm();
      if (dist < best) {
        best = dist;
        start_row = r;
      }
    }
    std::unordered_map<Site, std::size_t, SiteHash> target_col;
    for (std::size_t j = 0; j < targets.size(); ++j) target_col.emplace(sn.site(targets[j]), j);
    std::vector<double> counts(targets.size(), 0.0);
    const Site start = sn.site(sealed.interior[start_row]);
    for (std::size_t run = 0; run < n_runs; ++run) {
      bool done = false;
      walk(spec, start, 100000000, derive_seed(seed, 7, run), [&](std::size_t, const Site& x) {
        if (auto it = target_col.find(x); it != target_col.end()) {
          counts[it->second] += 1.0;
          done = true;
          return false;
        }
        return true;
      });
      if (!done) ++rep.mc_unfinished;
    }
    const double n = static_cast<double>(n_runs);
    for (std::size_t j = 0; j < targets.size(); ++j) {
      const double p = Ea(static_cast<Eigen::Index>(start_row), static_cast<Eigen::Index>(j));
      const double se = std::max(std::sqrt(p * (1.0 - p) / n), 1.0 / n);
      const double z = std::abs(counts[j] / n - p) / se;
      rep.mc_max_z = std::max(rep.mc_max_z, z);
    }
    rep.mc_runs = n_runs;
    rep.mc_within_3se = rep.mc_unfinished == 0 && rep.mc_max_z <= 3.0;
  }
  return rep;
}

}  // namespace condwalk
