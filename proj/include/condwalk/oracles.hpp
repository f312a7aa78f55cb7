#pragma once

// Independent reference computations and instance generators shared by the
// test suite, the acceptance gate and `condwalk verify`. Nothing here calls
// the sparse solvers of network.hpp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "condwalk/environment.hpp"
#include "condwalk/error.hpp"
#include "condwalk/network.hpp"
#include "condwalk/rng.hpp"
#include "condwalk/site.hpp"

namespace condwalk::oracle {

/// Dense transition matrix with P(x,x) = c_loop / pi(x).
inline Eigen::MatrixXd transition_matrix(const FiniteNetwork& net) {
  const auto n = static_cast<Eigen::Index>(net.size());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : net.edges()) {
    P(static_cast<Eigen::Index>(e.u), static_cast<Eigen::Index>(e.v)) += e.c;
    if (!e.loop()) P(static_cast<Eigen::Index>(e.v), static_cast<Eigen::Index>(e.u)) += e.c;
  }
  for (Eigen::Index i = 0; i < n; ++i) P.row(i) /= P.row(i).sum();
  return P;
}

/// E_delta[T_delta^+] = 1 + sum_y P(delta, y) h(y), with h = (I - Q)^{-1} 1
/// the expected hitting times of delta (Q = P without delta's row/column).
inline double mean_return_time(const FiniteNetwork& net, std::size_t delta) {
  const Eigen::MatrixXd P = transition_matrix(net);
  const auto n = P.rows();
  const auto d = static_cast<Eigen::Index>(delta);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (i != d) keep.push_back(i);
  const auto m = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd IQ = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) IQ(a, b) -= P(keep[a], keep[b]);
  const Eigen::VectorXd h = IQ.fullPivLu().solve(Eigen::VectorXd::Ones(m));
  double e = 1.0;
  for (Eigen::Index a = 0; a < m; ++a) e += P(d, keep[a]) * h(a);
  return e;
}

/// Smallest eigenvalue of D^{1/2}(I - P)D^{-1/2} restricted to `domain`, from
/// a full dense symmetric eigendecomposition.
inline double dirichlet_eigenvalue(const FiniteNetwork& net, const std::vector<std::size_t>& domain) {
  const auto m = static_cast<Eigen::Index>(domain.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      const double c = net.conductance(domain[a], domain[b]);
      A(a, b) -= c / std::sqrt(net.pi(domain[a]) * net.pi(domain[b]));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// P_y[hit x before the absorbing set] by a dense solve.
inline double escape_probability(const FiniteNetwork& net, std::size_t y, std::size_t x,
                                 const std::vector<std::size_t>& absorbing) {
  const Eigen::MatrixXd P = transition_matrix(net);
  const auto n = P.rows();
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  fixed[x] = 1;
  for (auto a : absorbing) fixed[a] = 1;
  std::vector<Eigen::Index> freev;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!fixed[static_cast<std::size_t>(i)]) freev.push_back(i);
  const auto m = static_cast<Eigen::Index>(freev.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd b(m);
  Eigen::Index yrow = -1;
  for (Eigen::Index a = 0; a < m; ++a) {
    if (freev[a] == static_cast<Eigen::Index>(y)) yrow = a;
    for (Eigen::Index c = 0; c < m; ++c) A(a, c) -= P(freev[a], freev[c]);
    b(a) = P(freev[a], static_cast<Eigen::Index>(x));
  }
  if (yrow < 0) fail(ErrorKind::kInvalidArgument, "start vertex must be free");
  return A.fullPivLu().solve(b)(yrow);
}

/// Monte Carlo return time to delta.
inline std::uint64_t sample_return_time(const FiniteNetwork& net, std::size_t delta, StreamRng& rng) {
  std::size_t v = delta;
  std::uint64_t t = 0;
  do {
    const auto& nb = net.neighbors(v);
    double u = rng.uniform() * net.pi(v);
    std::size_t next = nb.back().first;
    for (const auto& [w, c] : nb) {
      u -= c;
      if (u < 0.0) {
        next = w;
        break;
      }
    }
    v = next;
    ++t;
  } while (v != delta);
  return t;
}

/// Random lattice animal of `size` sites grown from the origin.
inline std::vector<Site> random_animal(int d, std::size_t size, StreamRng& rng) {
  std::vector<Site> sites{Site(d)};
  std::unordered_set<Site, SiteHash> in{Site(d)};
  while (sites.size() < size) {
    const Site& from = sites[rng.below(sites.size())];
    const Site next = from.step(static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * d))));
    if (in.insert(next).second) sites.push_back(next);
  }
  std::sort(sites.begin(), sites.end());
  return sites;
}

/// Outer vertex boundary of a site set.
inline std::vector<Site> outer_boundary(const std::vector<Site>& g) {
  std::unordered_set<Site, SiteHash> in(g.begin(), g.end()), out;
  for (const auto& s : g)
    for (int dir = 0; dir < 2 * s.dim(); ++dir)
      if (!in.contains(s.step(dir))) out.insert(s.step(dir));
  std::vector<Site> b(out.begin(), out.end());
  std::sort(b.begin(), b.end());
  return b;
}

/// exp(U(-spread, spread)) per lattice edge, keyed by canonical edge.
class RandomEdgeField {
 public:
  RandomEdgeField(double spread, std::uint64_t seed) : spread_(spread), seed_(seed) {}
  double operator()(const Site& x, const Site& y) const {
    const EdgeKey e = canonical_edge(x, y);
    const double u = to_open_unit(hash_edge(seed_, e.base.coords(), e.axis));
    return std::exp(spread_ * (2.0 * u - 1.0));
  }

 private:
  double spread_;
  std::uint64_t seed_;
};

struct ExitNetInstance {
  FiniteNetwork net;           // G and its outer boundary
  std::size_t y = 0;           // start, in G
  std::size_t x = 0;           // target, in the boundary, adjacent to y
  std::vector<std::size_t> absorbing;  // boundary minus x
  std::size_t g_size = 0;
  int dim = 2;
  double c1 = 0.0;             // c([x,y]) / max over boundary edges
  double bound() const { return c1 / (4.0 * dim) / static_cast<double>(g_size); }
};

/// A connected G of 1..max_size sites with conductances exp(U(-spread, spread))
/// on every edge that touches G; x, y drawn uniformly among adjacent pairs.
inline ExitNetInstance random_exit_net_instance(int d, std::size_t max_size, double spread, std::uint64_t seed) {
  StreamRng rng(seed);
  ExitNetInstance inst;
  inst.dim = d;
  const auto g = random_animal(d, 1 + rng.below(max_size), rng);
  const auto b = outer_boundary(g);
  const RandomEdgeField field(spread, derive_seed(seed, 1, 0));
  inst.g_size = g.size();
  for (const auto& s : g) inst.net.add_vertex(s);
  for (const auto& s : b) inst.net.set_boundary(inst.net.add_vertex(s));
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double max_boundary = 0.0;
  for (std::size_t u = 0; u < g.size(); ++u) {
    for (int dir = 0; dir < 2 * d; ++dir) {
      const Site z = g[u].step(dir);
      const auto v = *inst.net.index_of(z);
      const double c = field(g[u], z);
      if (inst.net.is_boundary(v)) {
        pairs.emplace_back(u, v);
        max_boundary = std::max(max_boundary, c);
      }
      if (!inst.net.has_edge(u, v)) inst.net.add_edge(u, v, c);
    }
  }
  const auto [yy, xx] = pairs[rng.below(pairs.size())];
  inst.y = yy;
  inst.x = xx;
  inst.c1 = inst.net.conductance(yy, xx) / max_boundary;
  for (auto v : inst.net.boundary())
    if (v != xx) inst.absorbing.push_back(v);
  return inst;
}

/// A trap graph: a random lattice animal whose outer boundary is merged into
/// one vertex delta (index 0). Parallel edges into delta are summed; with
/// `loops` a random loop is attached to some sites.
inline FiniteNetwork random_trap_graph(int d, std::size_t trap_size, double spread, bool loops, std::uint64_t seed) {
  StreamRng rng(seed);
  const auto g = random_animal(d, trap_size, rng);
  const RandomEdgeField field(spread, derive_seed(seed, 1, 0));
  FiniteNetwork net;
  net.add_vertex();
  for (const auto& s : g) net.add_vertex(s);
  std::map<std::size_t, double> to_delta;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto u = i + 1;
    for (int dir = 0; dir < 2 * d; ++dir) {
      const Site z = g[i].step(dir);
      const double c = field(g[i], z);
      if (auto v = net.index_of(z)) {
        if (!net.has_edge(u, *v)) net.add_edge(u, *v, c);
      } else {
        to_delta[u] += c;
      }
    }
    if (loops && rng.uniform() < 0.3) net.add_edge(u, u, std::exp(spread * (2.0 * rng.uniform() - 1.0)));
  }
  for (const auto& [u, c] : to_delta) net.add_edge(0, u, c);
  return net;
}

namespace detail {

// Integral over [0, 1] on dyadic pieces around `scale`: halving towards 0
// and doubling towards 1, so each piece is smooth even when the integrand
// has a power singularity at 0. Pieces are also cut at `kinks`.
template <class F>
double integrate_towards_zero(F f, double scale, const std::vector<double>& kinks = {}) {
  using boost::math::quadrature::gauss_kronrod;
  auto piece = [&](double a, double b) {
    double total = 0.0;
    for (double k : kinks) {
      if (k > a && k < b) {
        total += gauss_kronrod<double, 61>::integrate(f, a, k, 3, 1e-13);
        a = k;
      }
    }
    return total + gauss_kronrod<double, 61>::integrate(f, a, b, 3, 1e-13);
  };
  const double s = std::min(1.0, scale);
  double total = 0.0, b = s;
  for (int k = 0; k < 200; ++k, b *= 0.5) total += piece(0.5 * b, b);
  for (double a = s; a < 1.0; a *= 2.0) total += piece(a, std::min(1.0, 2.0 * a));
  return total;
}

// Points where the law's CDF is not smooth, in increasing order.
inline std::vector<double> cdf_kinks(const ConductanceLaw& law) {
  const Json j = law.to_json();
  std::vector<double> k{1.0};
  if (j.contains("c")) k.push_back(j.at("c").get<double>());
  if (j.contains("K_law")) {
    k.push_back(j.at("K_law").get<double>());
    k.push_back(1.0 / j.at("K_law").get<double>());
  }
  std::sort(k.begin(), k.end());
  return k;
}

}  // namespace detail

/// P[X_1 > n] for X_1 = Geom(min(1/c, 1)) on {1, 2, ...}, from the law's CDF:
/// E[(1 - min(1/c,1))^n] = int_0^1 n (1-v)^(n-1) P[c > 1/v] dv.
inline double x1_survival(const ConductanceLaw& law, double n) {
  if (n <= 0.0) return 1.0;
  auto f = [&](double v) {
    if (v <= 0.0) return 0.0;
    return n * std::exp((n - 1.0) * std::log1p(-v)) * law.survival(1.0 / v);
  };
  std::vector<double> kinks;
  for (double t : detail::cdf_kinks(law)) kinks.push_back(1.0 / t);
  std::sort(kinks.begin(), kinks.end());
  return detail::integrate_towards_zero(f, 1.0 / (64.0 * n), kinks);
}

/// P[X_2 = 0] = E[1 - min(c', 1)] = int_0^1 F(t)^m dt, c' the max of
/// m = 4d - 2 copies.
inline double x2_zero_mass(const ConductanceLaw& law, int d) {
  const int m = 4 * d - 2;
  auto f = [&](double t) { return std::pow(law.cdf(t), m); };
  return detail::integrate_towards_zero(f, 1.0 / 1024.0, detail::cdf_kinks(law));
}

}  // namespace condwalk::oracle
