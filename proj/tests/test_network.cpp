#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "condwalk/network.hpp"
#include "condwalk/oracles.hpp"
#include "condwalk/stats.hpp"
#include "condwalk/walk.hpp"

using namespace condwalk;
using Catch::Approx;

namespace {

// Abstract path 0 - 1 - ... - (n-1) with the given conductances.
FiniteNetwork path(const std::vector<double>& c) {
  FiniteNetwork n;
  for (std::size_t i = 0; i <= c.size(); ++i) n.add_vertex();
  for (std::size_t i = 0; i < c.size(); ++i) n.add_edge(i, i + 1, c[i]);
  return n;
}

// Star: centre 0 with leaves 1..k, leaf conductances given.
FiniteNetwork star(const std::vector<double>& c) {
  FiniteNetwork n;
  n.add_vertex();
  for (std::size_t i = 0; i < c.size(); ++i) n.add_edge(0, n.add_vertex(), c[i]);
  return n;
}

EnvironmentSpec flat(double lambda = 1.0) {
  return EnvironmentSpec::axis_aligned(2, lambda, ConductanceLaw::constant(1.0), 1);
}

}  // namespace

TEST_CASE("network construction", "[network]") {
  FiniteNetwork n;
  const auto a = n.add_vertex(Site{0, 0});
  const auto b = n.add_vertex(Site{1, 0});
  CHECK_THROWS_AS(n.add_vertex(Site{0, 0}), Error);
  CHECK_THROWS_AS(n.add_edge(a, b, 0.0), Error);
  n.add_edge(a, b, 2.0);
  CHECK_THROWS_AS(n.add_edge(b, a, 1.0), Error);
  n.add_edge(a, a, 0.5);
  CHECK(n.pi(a) == 2.5);
  CHECK(n.pi(b) == 2.0);
  CHECK(n.conductance(b, a) == 2.0);

  const auto two = build_network(flat(), {Site{0, 0}, Site{1, 0}});
  REQUIRE(two.edges().size() == 1);
  CHECK(two.edges()[0].c == Approx(std::exp(1.0)).epsilon(1e-14));
  CHECK(build_network(flat(), {Site{3, 3}}).edges().empty());
  CHECK_THROWS_AS(build_network(flat(2.0), {Site{0, 0}, Site{200, 0}}), Error);

  std::ostringstream os;
  write_edge_list(os, two);
  CHECK(os.str().find("0 1 2.718281828459045") != std::string::npos);
}

TEST_CASE("harmonic voltages", "[network]") {
  const auto p = path({1.0, 1.0});
  CHECK(harmonic_voltage(p, {{0, 1.0}, {2, 0.0}})[1] == Approx(0.5).epsilon(1e-12));

  // Series resistors 1/2 and 1 between potentials 1 and 0.
  const auto s = path({2.0, 1.0});
  CHECK(harmonic_voltage(s, {{0, 1.0}, {2, 0.0}})[1] == Approx(2.0 / 3.0).epsilon(1e-12));

  auto iso = path({1.0});
  iso.add_vertex();
  try {
    harmonic_voltage(iso, {{0, 1.0}});
    FAIL("expected Disconnected");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDisconnected);
  }

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = oracle::random_exit_net_instance(2, 12, 2.0, seed);
    std::map<std::size_t, double> fixed;
    StreamRng rng(seed);
    for (auto b : inst.net.boundary()) fixed[b] = rng.uniform() * 4.0 - 2.0;
    double lo = 1e9, hi = -1e9;
    for (const auto& [v, x] : fixed) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    const auto u = harmonic_voltage(inst.net, fixed);
    for (double x : u) {
      CHECK(x >= lo - 1e-12);
      CHECK(x <= hi + 1e-12);
    }
    // Rescaling all conductances leaves voltages unchanged.
    const auto u2 = harmonic_voltage(inst.net.scaled(37.0), fixed);
    for (std::size_t v = 0; v < u.size(); ++v) CHECK(u2[v] == Approx(u[v]).margin(1e-10));
  }
}

TEST_CASE("escape probabilities", "[network]") {
  // G = {y}: the centre of a unit star in d = 2.
  const auto unit = star({1.0, 1.0, 1.0, 1.0});
  CHECK(escape_probability(unit, 0, 1, {2, 3, 4}) == Approx(0.25).epsilon(1e-12));
  const auto heavy = star({3.0, 1.0, 1.0, 1.0});
  CHECK(escape_probability(heavy, 0, 1, {2, 3, 4}) == Approx(0.5).epsilon(1e-12));

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = oracle::random_exit_net_instance(2, 12, 1.5, 1000 + seed);
    REQUIRE(inst.g_size <= 12);
    const double p = escape_probability(inst.net, inst.y, inst.x, inst.absorbing);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(p == Approx(oracle::escape_probability(inst.net, inst.y, inst.x, inst.absorbing)).margin(1e-10));
    CHECK(p >= inst.bound());
  }
}

TEST_CASE("effective resistance", "[network]") {
  CHECK(effective_resistance(path({1.0}), 0, {1}) == Approx(1.0).epsilon(1e-12));
  CHECK(effective_resistance(path({1.0, 1.0}), 0, {2}) == Approx(2.0).epsilon(1e-12));
  FiniteNetwork par;
  par.add_vertex();
  par.add_vertex();
  par.add_vertex();
  par.add_edge(0, 1, 1.0);
  par.add_edge(0, 2, 1.0);
  CHECK(effective_resistance(par, 0, {1, 2}) == Approx(0.5).epsilon(1e-12));

  std::size_t compared = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = oracle::random_exit_net_instance(2, 12, 1.5, 5000 + seed);
    const auto sinks = inst.net.boundary();
    const double r = effective_resistance(inst.net, inst.y, sinks);
    CHECK(effective_resistance(inst.net.scaled(4.0), inst.y, sinks) == Approx(r / 4.0).epsilon(1e-10));
    StreamRng rng(seed);
    const auto drop = rng.below(inst.net.edges().size());
    try {
      CHECK(effective_resistance(inst.net.without_edge(drop), inst.y, sinks) >= r * (1.0 - 1e-12));
      ++compared;
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDisconnected);
    }
  }
  CHECK(compared > 50);
}

TEST_CASE("mean return time", "[network]") {
  CHECK(mean_return_time(path({1.0}), 0) == Approx(2.0).epsilon(1e-12));
  FiniteNetwork tri;
  for (int i = 0; i < 3; ++i) tri.add_vertex();
  tri.add_edge(0, 1, 1.0);
  tri.add_edge(1, 2, 1.0);
  tri.add_edge(0, 2, 1.0);
  for (std::size_t d = 0; d < 3; ++d) CHECK(mean_return_time(tri, d) == Approx(3.0).epsilon(1e-12));
  CHECK(oracle::mean_return_time(tri, 0) == Approx(3.0).epsilon(1e-12));

  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const bool loops = seed % 2 == 1;
    const auto g = oracle::random_trap_graph(2, 1 + seed % 40, 1.5, loops, seed);
    REQUIRE(g.size() <= 50);
    CHECK(mean_return_time(g, 0) == Approx(oracle::mean_return_time(g, 0)).epsilon(1e-9));
    // Without loops the formula is 2 sum_e c(e) / pi(delta).
    if (!loops) {
      double total = 0.0;
      for (const auto& e : g.edges()) total += e.c;
      CHECK(mean_return_time(g, 0) == Approx(2.0 * total / g.pi(0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mean return time against simulation", "[network][slow]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = oracle::random_trap_graph(2, 8, 1.0, seed % 2 == 0, 300 + seed);
    StreamRng rng(seed);
    std::vector<double> t;
    for (int i = 0; i < 100000; ++i) t.push_back(static_cast<double>(oracle::sample_return_time(g, 0, rng)));
    CHECK(std::abs(stats::mean(t) - mean_return_time(g, 0)) < 3.0 * stats::standard_error(t));
  }
}

TEST_CASE("exit distributions and hitting times", "[network]") {
  const auto p = path({1.0, 1.0, 1.0});
  std::vector<char> abs(4, 0);
  abs[0] = abs[3] = 1;
  const auto h = exit_distribution(p, abs, {1, 2, 0}, {0, 3});
  CHECK(h(0, 0) == Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(h(0, 1) == Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(h(1, 0) == Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(h(2, 0) == 1.0);
  const auto t = expected_hitting_time(p, abs);
  CHECK(t[1] == Approx(2.0).epsilon(1e-12));
  CHECK(t[0] == 0.0);
}

TEST_CASE("solver outputs ignore a global level shift", "[network]") {
  const auto s = EnvironmentSpec::axis_aligned(2, 0.8, ConductanceLaw::log_uniform(5.0), 4);
  std::vector<Site> a, b;
  LatticeBox::centered(Site{0, 0}, 3).for_each([&](const Site& x) {
    a.push_back(x);
    b.push_back(x + Site{57, 0});
  });
  const auto na = build_network(s.with_seed(4), a);
  auto shifted = EnvironmentSpec::axis_aligned(2, 0.8, ConductanceLaw::log_uniform(5.0), 4);
  // Same base field on both: copy the conductances of `a` onto `b`.
  for (const auto& x : a)
    for (int dir = 0; dir < 4; dir += 2) shifted.plant(edge_at(x + Site{57, 0}, dir), s.base_conductance(edge_at(x, dir)));
  const auto nb = build_network(shifted, b);
  REQUIRE(na.edges().size() == nb.edges().size());
  for (std::size_t i = 0; i < na.edges().size(); ++i) CHECK(nb.edges()[i].c == Approx(na.edges()[i].c).epsilon(1e-12));
  const std::map<std::size_t, double> fixed{{0, 1.0}, {na.size() - 1, 0.0}};
  const auto ua = harmonic_voltage(na, fixed), ub = harmonic_voltage(nb, fixed);
  for (std::size_t v = 0; v < ua.size(); ++v) CHECK(ub[v] == Approx(ua[v]).margin(1e-12));
  CHECK(effective_resistance(nb, 3, {0}) == Approx(effective_resistance(na, 3, {0})).epsilon(1e-10));
}

TEST_CASE("expected visits", "[network]") {
  const auto s = flat();
  const double v10 = expected_visits(s, Site{0, 0}, 10);
  const double v20 = expected_visits(s, Site{0, 0}, 20);
  CHECK(v20 >= v10 * (1.0 - 1e-12));
  CHECK(v10 >= 1.0);
  const double v40 = expected_visits(s, Site{0, 0}, 40);
  const double v60 = expected_visits(s, Site{0, 0}, 60);
  CHECK(std::abs(v60 - v40) / v60 < 0.01);
  CHECK_THROWS_AS(expected_visits(s, Site{0, 0}, 1), Error);
  const auto conv = expected_visits_converged(s, Site{0, 0});
  CHECK(conv.relative_change < 0.01);
}

TEST_CASE("expected visits against simulation", "[network][slow]") {
  const auto s = EnvironmentSpec::axis_aligned(2, 1.0, ConductanceLaw::log_uniform(std::exp(3.0)), 31);
  const Site x{0, 0};
  const int radius = 40;
  const double exact = expected_visits(s, x, radius);
  std::vector<double> visits;
  for (std::uint64_t r = 0; r < 5000; ++r) {
    double n = 0.0;
    walk(s, x, 100000, derive_seed(3, 1, r), [&](std::size_t, const Site& y) {
      if (y == x) n += 1.0;
      return (y - x).l1_norm() < radius;
    });
    visits.push_back(n);
  }
  CHECK(std::abs(stats::mean(visits) - exact) < 3.0 * stats::standard_error(visits));
}

TEST_CASE("Dirichlet eigenvalue", "[network]") {
  // Single interior vertex with all neighbours Dirichlet.
  CHECK(dirichlet_eigenvalue(star({1.0, 2.0, 3.0, 4.0}), {0}).value == Approx(1.0).epsilon(1e-10));
  // Two interior vertices of a unit 4-path.
  const auto p = path({1.0, 1.0, 1.0});
  CHECK(dirichlet_eigenvalue(p, {1, 2}).value == Approx(1.0 - std::cos(std::numbers::pi / 3.0)).epsilon(1e-8));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = EnvironmentSpec::axis_aligned(2, 1.0, ConductanceLaw::log_uniform(std::exp(3.0)), seed);
    const auto net = ball_network(s, Site{0, 0}, 2 + static_cast<int>(seed % 9));
    std::vector<std::size_t> dom;
    for (std::size_t v = 0; v < net.size(); ++v)
      if (!net.is_boundary(v)) dom.push_back(v);
    REQUIRE(dom.size() <= 200);
    const double lam = dirichlet_eigenvalue(net, dom).value;
    CHECK(lam == Approx(oracle::dirichlet_eigenvalue(net, dom)).margin(1e-7));
    // Shrinking the domain cannot lower the eigenvalue.
    std::vector<std::size_t> sub(dom.begin(), dom.begin() + static_cast<std::ptrdiff_t>(dom.size() / 2 + 1));
    CHECK(dirichlet_eigenvalue(net, sub).value >= lam * (1.0 - 1e-8));
  }
  CHECK_THROWS_AS(dirichlet_eigenvalue(p, {}), Error);
}
