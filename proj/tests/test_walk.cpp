#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "condwalk/stats.hpp"
#include "condwalk/walk.hpp"

using namespace condwalk;
using Catch::Approx;

namespace {

const std::vector<double> kE1{1.0, 0.0};

Trajectory straight(int dir, std::size_t n) {
  std::vector<Site> s{Site{0, 0}};
  for (std::size_t i = 0; i < n; ++i) s.push_back(s.back().step(dir));
  return Trajectory::from_sites(s, kE1);
}

EnvironmentSpec elliptic(double lambda, std::uint64_t seed) {
  return EnvironmentSpec::axis_aligned(2, lambda, ConductanceLaw::log_uniform(std::exp(3.0)), seed);
}

}  // namespace

TEST_CASE("transition distribution", "[walk]") {
  const auto s = EnvironmentSpec::axis_aligned(2, std::log(2.0), ConductanceLaw::constant(1.0), 1);
  const auto p = transition_distribution(s, Site{0, 0});
  CHECK(p[0] == Approx(4.0 / 9.0).epsilon(1e-14));
  CHECK(p[1] == Approx(1.0 / 9.0).epsilon(1e-14));
  CHECK(p[2] == Approx(2.0 / 9.0).epsilon(1e-14));
  CHECK(p[3] == Approx(2.0 / 9.0).epsilon(1e-14));

  const auto u = EnvironmentSpec::axis_aligned(3, 0.0, ConductanceLaw::constant(3.0), 1, true);
  for (double v : transition_distribution(u, Site{1, 1, 1}).values()) CHECK(v == Approx(1.0 / 6.0));
}

TEST_CASE("transition distributions sum to one for every law", "[walk]") {
  const std::vector<ConductanceLaw> laws{ConductanceLaw::log_uniform(std::exp(3.0)), ConductanceLaw::log_uniform(2.0),
                                         ConductanceLaw::pareto(0.5), ConductanceLaw::pareto(0.75),
                                         ConductanceLaw::pareto(2.0)};
  StreamRng rng(1);
  for (const auto& law : laws) {
    const auto s = EnvironmentSpec::axis_aligned(2, 1.0, law, 5);
    for (int i = 0; i < 10000; ++i) {
      const Site x{static_cast<std::int64_t>(rng.below(100000)) - 50000, static_cast<std::int64_t>(rng.below(1000)) - 500};
      double total = 0.0;
      for (double v : transition_distribution(s, x).values()) {
        REQUIRE(v >= 0.0);
        total += v;
      }
      REQUIRE(total == Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("normalized conductance is shared by both endpoints", "[walk]") {
  const auto s = EnvironmentSpec::axis_aligned(2, 0.9, ConductanceLaw::pareto(0.75), 3);
  StreamRng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Site x{static_cast<std::int64_t>(rng.below(200)) - 100, static_cast<std::int64_t>(rng.below(200)) - 100};
    const int dir = static_cast<int>(rng.below(4));
    const Site y = x.step(dir);
    const double from_x = s.local_weights(x)[dir] * std::exp(2.0 * 0.9 * s.level(x));
    const double from_y = s.local_weights(y)[dir ^ 1] * std::exp(2.0 * 0.9 * s.level(y));
    CHECK(from_x == Approx(from_y).epsilon(1e-12));
    CHECK(from_x == Approx(s.full_conductance(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("run is deterministic and nearest-neighbour", "[walk]") {
  const auto s = elliptic(1.0, 9);
  const auto t0 = run(s, Site{0, 0}, 0, 1);
  REQUIRE(t0.size() == 1);
  CHECK(t0.site(0) == Site{0, 0});

  const auto a = run(s, Site{2, -1}, 5000, 77);
  const auto b = run(s, Site{2, -1}, 5000, 77);
  REQUIRE(a.size() == 5001);
  CHECK(a.site(0) == Site{2, -1});
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.site(i) == b.site(i));
  for (std::size_t i = 1; i < a.size(); ++i) REQUIRE(adjacent(a.site(i - 1), a.site(i)));
  const auto m = a.running_max_level();
  for (std::size_t i = 1; i < m.size(); ++i) REQUIRE(m[i] >= m[i - 1]);

  // The walk seed does not touch the field.
  const EdgeKey e{Site{3, 3}, 1};
  const double before = s.base_conductance(e);
  (void)run(s, Site{0, 0}, 100, 12345);
  CHECK(s.base_conductance(e) == before);
}

TEST_CASE("homogeneous drift matches the closed form", "[walk]") {
  const double lambda = 1.0;
  const double v = (std::exp(lambda) - std::exp(-lambda)) / (std::exp(lambda) + std::exp(-lambda) + 2.0);
  CHECK(v == Approx(0.46211715726000974).epsilon(1e-12));
  CHECK(v == Approx(std::tanh(lambda / 2.0)).epsilon(1e-12));

  const auto s = EnvironmentSpec::axis_aligned(2, lambda, ConductanceLaw::constant(1.0), 1);
  const std::size_t n = 10000;
  std::vector<double> speeds;
  for (std::uint64_t r = 0; r < 200; ++r) {
    const Site end = walk(s, Site{0, 0}, n, derive_seed(4, 1, r), [](std::size_t, const Site&) { return true; });
    speeds.push_back(static_cast<double>(end[0]) / static_cast<double>(n));
  }
  CHECK(std::abs(stats::mean(speeds) - v) < 3.0 * stats::standard_error(speeds));
}

TEST_CASE("thinned runs keep strides and ladder points", "[walk]") {
  const auto s = elliptic(1.0, 4);
  const auto full = run(s, Site{0, 0}, 20000, 3);
  const auto thin = run(s, Site{0, 0}, 20000, 3, {.stride = 100});
  REQUIRE(thin.thinned());
  CHECK(thin.final_time() == 20000);
  CHECK(thin.size() < full.size());
  for (std::size_t i = 0; i < thin.size(); ++i) REQUIRE(thin.site(i) == full.site(thin.time(i)));
  CHECK(thin.running_max_level().back() == full.running_max_level().back());
}

TEST_CASE("hitting times", "[walk]") {
  const auto path = straight(0, 20);
  CHECK(hitting_time(path, [](const Site&) { return true; }) == 0u);
  CHECK_FALSE(hitting_time(path, [](const Site& x) { return x[1] > 0; }).has_value());

  // Crossing H+(n) on a straight path along e1 with ell_hat tilted.
  const double a = 0.8;
  const std::vector<double> ell{a, 0.6};
  std::vector<Site> s{Site{0, 0}};
  for (int i = 0; i < 30; ++i) s.push_back(s.back().step(0));
  const auto tilted = Trajectory::from_sites(s, ell);
  for (double n : {1.0, 5.0, 7.3, 13.0}) {
    const auto t = hitting_time(tilted, [&](const Site& x) { return x.dot(ell) > n; });
    REQUIRE(t.has_value());
    CHECK(*t == static_cast<std::size_t>(std::ceil(n / a)));
  }
}

TEST_CASE("exit classification", "[walk]") {
  const auto s = EnvironmentSpec::axis_aligned(2, 1.0, ConductanceLaw::constant(1.0), 1);
  const Box box(s, Site{0, 0}, 5.0, 3.0);
  for (const auto& f : box.frame()) {
    double n = 0.0;
    for (double c : f) n += c * c;
    CHECK(n == Approx(1.0).margin(1e-10));
  }
  CHECK(exit_classification(straight(0, 10), box) == ExitSide::kThroughPositiveSide);
  CHECK(exit_classification(straight(1, 10), box) == ExitSide::kThroughOtherSide);
  CHECK(exit_classification(straight(2, 10), box) == ExitSide::kThroughOtherSide);
  CHECK(exit_classification(straight(0, 3), box) == ExitSide::kNotExited);
  CHECK(box.contains(Site{4, 2}));
  CHECK_FALSE(box.contains(Site{5, 0}));
  CHECK_FALSE(box.contains(Site{0, -3}));
}

TEST_CASE("min level", "[walk]") {
  CHECK(min_level(straight(0, 10)) == 0.0);
  const std::vector<Site> back{Site{0, 0}, Site{-1, 0}, Site{0, 0}};
  CHECK(min_level(Trajectory::from_sites(back, kE1)) == -1.0);
  CHECK_THROWS_AS(Trajectory::from_sites(std::vector<Site>{Site{0, 0}, Site{2, 0}}, kE1), Error);
}

TEST_CASE("backtracking probability decays in depth", "[walk][slow]") {
  std::vector<double> mins;
  for (std::uint64_t r = 0; r < 300; ++r) {
    const auto s = elliptic(1.0, derive_seed(8, 0, r));
    mins.push_back(min_level(run(s, Site{0, 0}, 100000, derive_seed(8, 1, r))));
  }
  std::vector<double> ks, lp;
  for (int k = 1; k <= 6; ++k) {
    double hits = 0.0;
    for (double m : mins) hits += m <= -k ? 1.0 : 0.0;
    if (hits == 0.0) break;
    ks.push_back(k);
    lp.push_back(std::log(hits / static_cast<double>(mins.size())));
  }
  REQUIRE(ks.size() >= 2);
  CHECK(stats::least_squares(ks, lp).slope < 0.0);
}

TEST_CASE("directional transience", "[walk][slow]") {
  std::size_t positive = 0;
  for (std::uint64_t r = 0; r < 100; ++r) {
    const auto s = elliptic(1.0, derive_seed(10, 0, r));
    const Site end = walk(s, Site{0, 0}, 1000000, derive_seed(10, 1, r), [](std::size_t, const Site&) { return true; });
    positive += s.level(end) > 0.0 ? 1 : 0;
  }
  CHECK(positive >= 99);
}

TEST_CASE("trajectory export", "[walk]") {
  std::ostringstream os;
  write_trajectory_jsonl(os, straight(1, 3));
  std::istringstream in(os.str());
  std::string line;
  std::vector<Json> rec;
  while (std::getline(in, line)) rec.push_back(Json::parse(line));
  REQUIRE(rec.size() == 5);
  CHECK(rec[0]["t"] == 0);
  CHECK(rec[3]["level"] == -3.0);
  CHECK(rec[4]["min_level"] == -3.0);
  CHECK(rec[4]["max_level"] == 0.0);
}
