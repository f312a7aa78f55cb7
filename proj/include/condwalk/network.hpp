#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "condwalk/environment.hpp"
#include "condwalk/error.hpp"
#include "condwalk/site.hpp"

namespace condwalk {

struct NetworkEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  double c = 0.0;
  bool loop() const noexcept { return u == v; }
};

/// Finite weighted graph with symmetric positive conductances, optional
/// self-loops and a designated boundary. A loop at x contributes its
/// conductance once to pi(x) and gives P(x,x) = c_loop / pi(x).
///
/// Conductances coming from the lattice are stored divided by
/// exp(2 lambda level_shift).
class FiniteNetwork {
 public:
  /// Adds a vertex. Sites with dim() == 0 are abstract (merged) vertices.
  std::size_t add_vertex(const Site& s = Site{}) {
    if (s.dim() > 0) {
      if (index_.contains(s)) fail(ErrorKind::kInvalidArgument, "duplicate vertex " + s.str());
      index_.emplace(s, sites_.size());
    }
    sites_.push_back(s);
    boundary_.push_back(false);
    adj_.emplace_back();
    return sites_.size() - 1;
  }

  void add_edge(std::size_t u, std::size_t v, double c) {
    if (u >= size() || v >= size()) fail(ErrorKind::kInvalidArgument, "edge endpoint out of range");
    if (!(c > 0.0) || !std::isfinite(c)) fail(ErrorKind::kInvalidArgument, "conductances must be positive and finite");
    const auto key = pair_key(u, v);
    if (!pairs_.insert(key).second) fail(ErrorKind::kInvalidArgument, "duplicate edge");
    edges_.push_back({u, v, c});
    adj_[u].push_back({v, c});
    if (u != v) adj_[v].push_back({u, c});
  }

  bool has_edge(std::size_t u, std::size_t v) const { return pairs_.contains(pair_key(u, v)); }

  void set_boundary(std::size_t v, bool on = true) { boundary_.at(v) = on; }
  bool is_boundary(std::size_t v) const { return boundary_.at(v); }
  std::vector<std::size_t> boundary() const {
    std::vector<std::size_t> b;
    for (std::size_t i = 0; i < size(); ++i)
      if (boundary_[i]) b.push_back(i);
    return b;
  }

  std::size_t size() const noexcept { return sites_.size(); }
  const std::vector<Site>& sites() const noexcept { return sites_; }
  const Site& site(std::size_t v) const { return sites_.at(v); }
  std::optional<std::size_t> index_of(const Site& s) const {
    if (auto it = index_.find(s); it != index_.end()) return it->second;
    return std::nullopt;
  }
  std::size_t at(const Site& s) const {
    auto i = index_of(s);
    if (!i) fail(ErrorKind::kInvalidArgument, "site " + s.str() + " is not a vertex");
    return *i;
  }

  const std::vector<NetworkEdge>& edges() const noexcept { return edges_; }
  const std::vector<std::pair<std::size_t, double>>& neighbors(std::size_t v) const { return adj_.at(v); }

  double pi(std::size_t v) const {
    double s = 0.0;
    for (const auto& [w, c] : adj_.at(v)) s += c;
    return s;
  }

  double conductance(std::size_t u, std::size_t v) const {
    for (const auto& [w, c] : adj_.at(u))
      if (w == v) return c;
    return 0.0;
  }

  double level_shift = 0.0;

  /// Copy with every conductance multiplied by `factor`.
  FiniteNetwork scaled(double factor) const {
    FiniteNetwork n = skeleton();
    for (const auto& e : edges_) n.add_edge(e.u, e.v, e.c * factor);
    return n;
  }

  /// Copy without edge number `which`.
  FiniteNetwork without_edge(std::size_t which) const {
    FiniteNetwork n = skeleton();
    for (std::size_t i = 0; i < edges_.size(); ++i)
      if (i != which) n.add_edge(edges_[i].u, edges_[i].v, edges_[i].c);
    return n;
  }

  /// Vertices reachable from `from` (any edges).
  std::vector<char> reachable(const std::vector<std::size_t>& from) const {
    std::vector<char> seen(size(), 0);
    std::deque<std::size_t> q;
    for (auto f : from) {
      if (!seen[f]) {
        seen[f] = 1;
        q.push_back(f);
      }
    }
    while (!q.empty()) {
      const auto v = q.front();
      q.pop_front();
      for (const auto& [w, c] : adj_[v]) {
        if (!seen[w]) {
          seen[w] = 1;
          q.push_back(w);
        }
      }
    }
    return seen;
  }

 private:
  static std::uint64_t pair_key(std::size_t u, std::size_t v) noexcept {
    const auto a = std::min(u, v), b = std::max(u, v);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
  }

  FiniteNetwork skeleton() const {
    FiniteNetwork n;
    n.sites_ = sites_;
    n.index_ = index_;
    n.boundary_ = boundary_;
    n.adj_.assign(sites_.size(), {});
    n.level_shift = level_shift;
    return n;
  }

  std::vector<Site> sites_;
  std::unordered_map<Site, std::size_t, SiteHash> index_;
  std::vector<bool> boundary_;
  std::vector<NetworkEdge> edges_;
  std::unordered_set<std::uint64_t> pairs_;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj_;
};

/// All Z^d edges inside `vertex_set`, conductances c(x,y) exp(-2 lambda shift)
/// with shift the lowest level in the set. Boundary left empty.
inline FiniteNetwork build_network(const EnvironmentSpec& spec, const std::vector<Site>& vertex_set) {
  if (vertex_set.empty()) fail(ErrorKind::kInvalidArgument, "vertex set is empty");
  FiniteNetwork net;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : vertex_set) {
    net.add_vertex(s);
    lo = std::min(lo, spec.level(s));
    hi = std::max(hi, spec.level(s));
  }
  if (2.0 * spec.lambda() * (hi - lo + 1.0) > 700.0)
    fail(ErrorKind::kOverflow, "level spread too large for a single network normalisation");
  net.level_shift = lo;
  const auto ell = spec.ell_hat();
  for (std::size_t u = 0; u < vertex_set.size(); ++u) {
    const Site& x = vertex_set[u];
    for (int i = 0; i < spec.dim(); ++i) {
      const Site y = x.step(2 * i);
      if (auto v = net.index_of(y)) {
        const double expo = spec.lambda() * ((x + y).dot(ell) - 2.0 * lo);
        net.add_edge(u, *v, spec.base_conductance(EdgeKey{x, i}) * std::exp(expo));
      }
    }
  }
  return net;
}

namespace detail {

inline constexpr std::size_t kDirectSolveLimit = 5000;

/// Rows of I - P restricted to free vertices; P row-normalised by pi.
struct FreeSystem {
  std::vector<std::size_t> free;
  std::vector<std::ptrdiff_t> row;  // vertex -> row, -1 when fixed
  Eigen::SparseMatrix<double> A;
};

inline FreeSystem make_free_system(const FiniteNetwork& net, const std::vector<char>& fixed) {
  FreeSystem fs;
  fs.row.assign(net.size(), -1);
  for (std::size_t v = 0; v < net.size(); ++v) {
    if (!fixed[v]) {
      fs.row[v] = static_cast<std::ptrdiff_t>(fs.free.size());
      fs.free.push_back(v);
    }
  }
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t r = 0; r < fs.free.size(); ++r) {
    const auto v = fs.free[r];
    const double p = net.pi(v);
    if (!(p > 0.0)) fail(ErrorKind::kDisconnected, "free vertex without edges");
    double diag = 1.0;
    for (const auto& [w, c] : net.neighbors(v)) {
      if (w == v) {
        diag -= c / p;
      } else if (fs.row[w] >= 0) {
        trip.emplace_back(static_cast<int>(r), static_cast<int>(fs.row[w]), -c / p);
      }
    }
    trip.emplace_back(static_cast<int>(r), static_cast<int>(r), diag);
  }
  const auto n = static_cast<Eigen::Index>(fs.free.size());
  fs.A.resize(n, n);
  fs.A.setFromTriplets(trip.begin(), trip.end());
  fs.A.makeCompressed();
  return fs;
}

inline void check_connected_to_fixed(const FiniteNetwork& net, const std::vector<char>& fixed) {
  std::vector<std::size_t> from;
  for (std::size_t v = 0; v < net.size(); ++v)
    if (fixed[v]) from.push_back(v);
  if (from.empty()) fail(ErrorKind::kInvalidArgument, "no fixed vertices");
  const auto seen = net.reachable(from);
  for (std::size_t v = 0; v < net.size(); ++v)
    if (!seen[v]) fail(ErrorKind::kDisconnected, "vertex " + std::to_string(v) + " has no path to a fixed vertex");
}

inline Eigen::MatrixXd solve(const Eigen::SparseMatrix<double>& A, const Eigen::MatrixXd& B) {
  if (A.rows() == 0) return Eigen::MatrixXd(0, B.cols());
  if (A.rows() > static_cast<Eigen::Index>(kDirectSolveLimit) && B.cols() == 1) {
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> it;
    it.setTolerance(1e-13);
    it.setMaxIterations(5000);
    it.compute(A);
    if (it.info() == Eigen::Success) {
      Eigen::MatrixXd X = it.solve(B);
      if (it.info() == Eigen::Success && (A * X - B).norm() <= 1e-10 * std::max(1.0, B.norm())) return X;
    }
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) fail(ErrorKind::kSingular, "sparse LU factorisation failed");
  Eigen::MatrixXd X = lu.solve(B);
  if (lu.info() != Eigen::Success) fail(ErrorKind::kSingular, "sparse LU solve failed");
  return X;
}

}  // namespace detail

/// Solves sum_y c(x,y) (u(x) - u(y)) = 0 at every free vertex with u given on
/// `fixed`. Residuals are measured on the pi-normalised rows.
inline std::vector<double> harmonic_voltage(const FiniteNetwork& net, const std::map<std::size_t, double>& fixed) {
  if (fixed.empty()) fail(ErrorKind::kInvalidArgument, "harmonic_voltage needs fixed vertices");
  std::vector<char> mask(net.size(), 0);
  for (const auto& [v, val] : fixed) mask.at(v) = 1;
  detail::check_connected_to_fixed(net, mask);
  const auto fs = detail::make_free_system(net, mask);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fs.free.size()), 1);
  for (std::size_t r = 0; r < fs.free.size(); ++r) {
    const auto v = fs.free[r];
    const double p = net.pi(v);
    for (const auto& [w, c] : net.neighbors(v))
      if (fs.row[w] < 0) b(static_cast<Eigen::Index>(r), 0) += c / p * fixed.at(w);
  }
  const Eigen::MatrixXd x = detail::solve(fs.A, b);
  std::vector<double> u(net.size(), 0.0);
  double scale = 0.0;
  for (const auto& [v, val] : fixed) {
    u[v] = val;
    scale = std::max(scale, std::abs(val));
  }
  for (std::size_t r = 0; r < fs.free.size(); ++r) {
    u[fs.free[r]] = x(static_cast<Eigen::Index>(r), 0);
    scale = std::max(scale, std::abs(u[fs.free[r]]));
  }
  for (const auto v : fs.free) {
    const double p = net.pi(v);
    double res = u[v];
    for (const auto& [w, c] : net.neighbors(v)) res -= c / p * u[w];
    if (std::abs(res) > 1e-10 * std::max(scale, 1e-300))
      fail(ErrorKind::kSingular, "harmonic solve residual too large");
  }
  return u;
}

/// P_y[T_x <= T_A]: the chain started at y hits x before `absorbing`.
inline double escape_probability(const FiniteNetwork& net, std::size_t y, std::size_t x,
                                 const std::vector<std::size_t>& absorbing) {
  std::map<std::size_t, double> fixed{{x, 1.0}};
  for (auto a : absorbing) {
    if (a == x) fail(ErrorKind::kInvalidArgument, "target lies in the absorbing set");
    fixed[a] = 0.0;
  }
  if (fixed.contains(y)) fail(ErrorKind::kInvalidArgument, "start vertex must be free");
  return std::clamp(harmonic_voltage(net, fixed)[y], 0.0, 1.0);
}

/// Effective resistance between `a` and the grounded set `sinks`.
inline double effective_resistance(const FiniteNetwork& net, std::size_t a, const std::vector<std::size_t>& sinks) {
  std::map<std::size_t, double> fixed{{a, 1.0}};
  for (auto s : sinks) {
    if (s == a) fail(ErrorKind::kInvalidArgument, "source lies in the sink set");
    fixed[s] = 0.0;
  }
  const auto u = harmonic_voltage(net, fixed);
  double current = 0.0;
  for (const auto& [w, c] : net.neighbors(a))
    if (w != a) current += c * (1.0 - u[w]);
  if (!(current > 0.0)) fail(ErrorKind::kDisconnected, "no current flows from the source");
  return 1.0 / current;
}

/// E_delta[T_delta^+] = sum_x pi(x) / pi(delta), i.e. 2 sum_e c(e) / pi(delta)
/// with each loop's conductance counted once in pi (half weight in the edge sum).
inline double mean_return_time(const FiniteNetwork& net, std::size_t delta) {
  const auto seen = net.reachable({delta});
  double total = 0.0;
  for (std::size_t v = 0; v < net.size(); ++v) {
    if (!seen[v]) fail(ErrorKind::kDisconnected, "mean return time needs a connected network");
    total += net.pi(v);
  }
  return total / net.pi(delta);
}

/// Hitting distributions: row i gives P_{sources[i]}[X_{T_A} = targets[j]]
/// where A is the set of vertices with `absorbing[v]` set.
inline Eigen::MatrixXd exit_distribution(const FiniteNetwork& net, const std::vector<char>& absorbing,
                                         const std::vector<std::size_t>& sources,
                                         const std::vector<std::size_t>& targets) {
  detail::check_connected_to_fixed(net, absorbing);
  const auto fs = detail::make_free_system(net, absorbing);
  std::unordered_map<std::size_t, Eigen::Index> col;
  for (std::size_t j = 0; j < targets.size(); ++j) col[targets[j]] = static_cast<Eigen::Index>(j);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fs.free.size()),
                                            static_cast<Eigen::Index>(targets.size()));
  for (std::size_t r = 0; r < fs.free.size(); ++r) {
    const auto v = fs.free[r];
    const double p = net.pi(v);
    for (const auto& [w, c] : net.neighbors(v)) {
      if (fs.row[w] >= 0) continue;
      if (auto it = col.find(w); it != col.end()) B(static_cast<Eigen::Index>(r), it->second) += c / p;
    }
  }
  const Eigen::MatrixXd X = detail::solve(fs.A, B);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(sources.size()), static_cast<Eigen::Index>(targets.size()));
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto s = sources[i];
    if (fs.row[s] >= 0) {
      out.row(static_cast<Eigen::Index>(i)) = X.row(fs.row[s]);
    } else {
      out.row(static_cast<Eigen::Index>(i)).setZero();
      if (auto it = col.find(s); it != col.end()) out(static_cast<Eigen::Index>(i), it->second) = 1.0;
    }
  }
  return out;
}

/// E_x[T_A] for every vertex x (zero on A).
inline std::vector<double> expected_hitting_time(const FiniteNetwork& net, const std::vector<char>& absorbing) {
  detail::check_connected_to_fixed(net, absorbing);
  const auto fs = detail::make_free_system(net, absorbing);
  Eigen::MatrixXd b = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(fs.free.size()), 1);
  const Eigen::MatrixXd x = detail::solve(fs.A, b);
  std::vector<double> h(net.size(), 0.0);
  for (std::size_t r = 0; r < fs.free.size(); ++r) h[fs.free[r]] = x(static_cast<Eigen::Index>(r), 0);
  return h;
}

/// Sites within graph distance `radius` of x; the sphere at distance exactly
/// `radius` is the boundary.
inline FiniteNetwork ball_network(const EnvironmentSpec& spec, const Site& x, int radius) {
  std::vector<Site> sites;
  LatticeBox::centered(x, radius).for_each([&](const Site& s) {
    if ((s - x).l1_norm() <= radius) sites.push_back(s);
  });
  FiniteNetwork net = build_network(spec, sites);
  for (std::size_t v = 0; v < net.size(); ++v)
    if ((net.site(v) - x).l1_norm() == radius) net.set_boundary(v);
  return net;
}

/// pi(x) / C(x <-> sphere of `radius`): the expected number of visits to x
/// (time 0 included) of the walk stopped on that sphere.
inline double expected_visits(const EnvironmentSpec& spec, const Site& x, int radius) {
  if (radius < 2) fail(ErrorKind::kInvalidArgument, "truncation radius must be at least 2");
  const FiniteNetwork net = ball_network(spec, x, radius);
  const auto ix = net.at(x);
  std::map<std::size_t, double> fixed{{ix, 0.0}};
  for (auto b : net.boundary()) fixed[b] = 1.0;
  const auto u = harmonic_voltage(net, fixed);
  const double p = net.pi(ix);
  double escape = 0.0;
  for (const auto& [w, c] : net.neighbors(ix)) escape += c / p * u[w];
  if (!(escape > 0.0)) fail(ErrorKind::kSingular, "zero escape probability");
  return 1.0 / escape;
}

struct ConvergedVisits {
  double value = 0.0;
  int radius = 0;
  double relative_change = 0.0;
};

/// expected_visits with the radius doubled until the relative change drops below `rel_tol`.
inline ConvergedVisits expected_visits_converged(const EnvironmentSpec& spec, const Site& x, int radius = 8,
                                                 double rel_tol = 0.01, int max_radius = 256) {
  double prev = expected_visits(spec, x, radius);
  for (int r = 2 * radius; r <= max_radius; r *= 2) {
    const double cur = expected_visits(spec, x, r);
    const double rel = std::abs(cur - prev) / cur;
    if (rel < rel_tol) return {cur, r, rel};
    prev = cur;
  }
  fail(ErrorKind::kConvergenceFailure, "expected visits did not stabilise");
}

struct EigenResult {
  double value = 0.0;
  int iterations = 0;
};

/// Principal Dirichlet eigenvalue of I - P on `domain` (f = 0 elsewhere), by
/// inverse power iteration on D^{1/2} (I - P) D^{-1/2}; pi includes every
/// incident edge, also those leaving the domain.
inline EigenResult dirichlet_eigenvalue(const FiniteNetwork& net, const std::vector<std::size_t>& domain,
                                        double rel_tol = 1e-8, int max_iter = 100000) {
  if (domain.empty()) fail(ErrorKind::kInvalidArgument, "domain is empty");
  std::vector<std::ptrdiff_t> pos(net.size(), -1);
  for (std::size_t i = 0; i < domain.size(); ++i) pos.at(domain[i]) = static_cast<std::ptrdiff_t>(i);
  const auto n = static_cast<Eigen::Index>(domain.size());
  std::vector<double> sq(domain.size());
  for (std::size_t i = 0; i < domain.size(); ++i) sq[i] = std::sqrt(net.pi(domain[i]));
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    double diag = 1.0;
    for (const auto& [w, c] : net.neighbors(domain[i])) {
      if (w == domain[i]) {
        diag -= c / (sq[i] * sq[i]);
      } else if (pos[w] >= 0) {
        trip.emplace_back(static_cast<int>(i), static_cast<int>(pos[w]), -c / (sq[i] * sq[pos[w]]));
      }
    }
    trip.emplace_back(static_cast<int>(i), static_cast<int>(i), diag);
  }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  if (ldlt.info() != Eigen::Success) fail(ErrorKind::kSingular, "Dirichlet operator factorisation failed");

  Eigen::VectorXd v = Eigen::VectorXd::Ones(n).normalized();
  double theta = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd w = ldlt.solve(v);
    w.normalize();
    const Eigen::VectorXd aw = A * w;
    theta = w.dot(aw);
    const double res = (aw - theta * w).norm();
    v = w;
    if (res <= rel_tol * theta) return {theta, it};
  }
  fail(ErrorKind::kConvergenceFailure, "inverse iteration hit the iteration cap");
}

/// Edge-list dump: a header mapping indices to sites, then "u v conductance" lines.
inline void write_edge_list(std::ostream& os, const FiniteNetwork& net) {
  os << "# vertices " << net.size() << " edges " << net.edges().size() << " level_shift " << net.level_shift << '\n';
  for (std::size_t v = 0; v < net.size(); ++v)
    os << "# " << v << ' ' << (net.site(v).dim() ? net.site(v).str() : std::string("merged"))
       << (net.is_boundary(v) ? " boundary" : "") << '\n';
  os << std::setprecision(17);
  for (const auto& e : net.edges()) os << e.u << ' ' << e.v << ' ' << e.c << '\n';
}

}  // namespace condwalk
