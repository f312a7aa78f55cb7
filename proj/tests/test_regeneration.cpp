#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "condwalk/regeneration.hpp"

using namespace condwalk;
using Catch::Approx;

namespace {

const std::vector<double> kE1{1.0, 0.0};

EnvironmentSpec flat(std::uint64_t seed = 1) {
  return EnvironmentSpec::axis_aligned(2, 1.0, ConductanceLaw::constant(1.0), seed);
}

Trajectory path(const std::vector<int>& dirs) {
  std::vector<Site> s{Site{0, 0}};
  for (int d : dirs) s.push_back(s.back().step(d));
  return Trajectory::from_sites(s, kE1);
}

Trajectory straight(std::size_t n) { return path(std::vector<int>(n, 0)); }

RegenRecord record(std::size_t tau, std::size_t J, std::vector<std::int64_t> Z, bool censored = false) {
  RegenRecord r;
  r.tau = tau;
  r.J = J;
  r.Z_level = static_cast<double>(Z[0]);
  r.Z = std::move(Z);
  r.A = {1.0};
  r.censored = censored;
  return r;
}

}  // namespace

TEST_CASE("ladder times", "[regeneration]") {
  CHECK(ladder_times(straight(4)) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(ladder_times(path({2, 0})) == std::vector<std::size_t>{0, 2});
  CHECK(ladder_times(path({2, 3, 2, 3})) == std::vector<std::size_t>{0});
  CHECK(ladder_times(path({0, 1, 0, 0})) == std::vector<std::size_t>{0, 1, 4});
}

TEST_CASE("forward set and boundary conductances", "[regeneration]") {
  CHECK(forward_set(flat()).size() == 1);
  const EnvironmentSpec diag(2, 1.0, {std::sqrt(0.5), std::sqrt(0.5)}, ConductanceLaw::pareto(2.0), 4);
  CHECK(forward_set(diag).size() == 2);
  const auto a = boundary_conductances(diag, Site{3, 3});
  REQUIRE(a.size() == 2);
  for (double v : a) CHECK(v > 0.0);
}

TEST_CASE("open ladder index", "[regeneration]") {
  const auto s = flat();
  const AnalysisParams p{100.0, 20};
  CHECK(open_ladder_index(straight(6), s, p) == std::optional<std::size_t>{2});
  CHECK_FALSE(open_ladder_index(path({0, 2, 0, 2, 0, 2}), s, p).has_value());

  // The pattern must start from a strict new maximum.
  const auto t = path({0, 1, 0, 0, 0, 0});
  const auto i = open_ladder_index(t, s, p);
  REQUIRE(i.has_value());
  CHECK(*i == 6);
  CHECK(t.site(*i) - t.site(*i - 2) == Site{2, 0});

  // A closed site on the pattern blocks it.
  auto planted = flat();
  planted.plant(canonical_edge(Site{2, 0}, Site{2, 1}), 1e6);
  const auto j = open_ladder_index(straight(8), planted, p);
  REQUIRE(j.has_value());
  CHECK(*j == 3);
}

TEST_CASE("monotone path regenerates every step", "[regeneration]") {
  const auto recs = detect_regenerations(straight(50), flat(), {100.0, 20}, 0);
  REQUIRE(recs.size() == 49);
  for (std::size_t k = 0; k < recs.size(); ++k) {
    CHECK(recs[k].tau == k + 2);
    if (k + 1 < recs.size()) {
      CHECK_FALSE(recs[k].censored);
      CHECK(recs[k].J == 1);
      CHECK(recs[k].Z == std::vector<std::int64_t>{1, 0});
    }
  }
  CHECK(recs.back().censored);

  const auto buffered = detect_regenerations(straight(50), flat(), {100.0, 20}, 10);
  for (const auto& r : buffered) CHECK(r.censored == (r.tau + 1 > 40));
}

TEST_CASE("returning below the start leaves no records", "[regeneration]") {
  std::vector<int> dirs(10, 0);
  dirs.insert(dirs.end(), 11, 1);
  CHECK(detect_regenerations(path(dirs), flat(), {100.0, 20}, 0).empty());

  // Up to level 10, back to 7, up again: levels 7..10 of the first ascent
  // are revisited, and the second ascent needs a new maximum above 10.
  std::vector<int> back(10, 0);
  back.insert(back.end(), 3, 1);
  back.insert(back.end(), 10, 0);
  const auto t = path(back);
  const auto recs = detect_regenerations(t, flat(), {100.0, 20}, 0);
  REQUIRE_FALSE(recs.empty());
  for (const auto& r : recs) {
    if (r.tau <= 13) CHECK(t.level(r.tau) < 7.0);
    else CHECK(t.level(r.tau) >= 12.0);
  }
}

TEST_CASE("regeneration invariants on simulated walks", "[regeneration]") {
  const auto s = EnvironmentSpec::axis_aligned(2, 1.0, ConductanceLaw::log_uniform(std::exp(3.0)), 21);
  const AnalysisParams p{100.0, 30};
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto traj = run(s, Site{0, 0}, 20000, seed);
    Classifier cls(s, p);
    const auto recs = detect_regenerations(traj, cls, 500);
    REQUIRE(recs.size() > 50);
    CHECK(recs.size() <= ladder_times(traj).size());

    std::vector<double> suffix_min(traj.size(), INFINITY);
    for (std::size_t t = traj.size() - 1; t > 0; --t) suffix_min[t - 1] = std::min(suffix_min[t], traj.level(t));
    double prev = -INFINITY;
    for (const auto& r : recs) {
      CHECK(traj.level(r.tau) > prev);
      prev = traj.level(r.tau);
      CHECK(suffix_min[r.tau] > traj.level(r.tau));
      REQUIRE(r.A.size() == 1);
      CHECK(r.A[0] > 0.0);
      if (!r.censored) {
        CHECK(r.Z_level > 0.0);
        CHECK(r.J > 0);
      }
    }

    const auto again = detect_regenerations(traj, cls, 500);
    REQUIRE(again.size() == recs.size());
    for (std::size_t k = 0; k < recs.size(); ++k) {
      CHECK(again[k].tau == recs[k].tau);
      CHECK(again[k].J == recs[k].J);
      CHECK(again[k].A == recs[k].A);
    }
  }
}

TEST_CASE("detectors cross-validate", "[regeneration]") {
  const auto s = EnvironmentSpec::axis_aligned(2, 1.0, ConductanceLaw::log_uniform(std::exp(3.0)), 8);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto traj = run(s, Site{0, 0}, 5000, 100 + seed);
    const auto cv = cross_validate_detectors(traj, s, {100.0, 30}, 200);
    INFO("seed " << seed);
    CHECK(cv.replay_records > 0);
    CHECK(cv.agree());
    CHECK(cv.replay_records + cv.detector_only == cv.detector_records);
  }
  const auto cv = cross_validate_detectors(straight(30), flat(), {100.0, 20}, 0);
  CHECK(cv.agree());
  CHECK(cv.replay_records > 0);
}

TEST_CASE("thinned trajectories are rejected", "[regeneration]") {
  const auto traj = run(flat(), Site{0, 0}, 100, 1, {10});
  CHECK_THROWS_AS(detect_regenerations(traj, flat(), {100.0, 20}, 0), Error);
  CHECK_THROWS_AS(detect_regenerations(straight(5), flat(), {100.0, 20}, 6), Error);
}

TEST_CASE("chain statistics", "[regeneration]") {
  std::vector<RegenRecord> unit;
  for (std::size_t k = 0; k < 30; ++k) unit.push_back(record(k, 1, {1, 0}));
  const auto st = regen_chain_stats({unit}, 100.0);
  CHECK(st.used == 30);
  CHECK(st.mean_J == 1.0);
  CHECK(st.speed == std::vector<double>{1.0, 0.0});
  CHECK(st.speed_level == 1.0);
  CHECK_FALSE(st.acf_J.has_value());
  CHECK_FALSE(st.acf_Z_level.has_value());
  CHECK(st.A_normal_fraction == 1.0);

  // Speed is a ratio of means, not a mean of ratios.
  const auto mix = regen_chain_stats({{record(0, 1, {1, 0}), record(1, 3, {1, 2}), record(4, 4, {0, 0}, true)}}, 10.0);
  CHECK(mix.used == 2);
  CHECK(mix.records == 3);
  CHECK(mix.speed[0] == Approx(0.5));
  CHECK(mix.speed[1] == Approx(0.5));

  CHECK_THROWS_AS(regen_chain_stats({{record(0, 1, {1, 0})}}, 10.0), Error);

  // Alternating J is perfectly anti-correlated.
  std::vector<RegenRecord> alt;
  for (std::size_t k = 0; k < 40; ++k) alt.push_back(record(k, k % 2 ? 3 : 1, {1, 0}));
  const auto a = regen_chain_stats({alt}, 100.0);
  REQUIRE(a.acf_J.has_value());
  CHECK(*a.acf_J == Approx(-1.0));
}

TEST_CASE("records CSV", "[regeneration]") {
  std::ostringstream os;
  write_records_csv(os, {{record(2, 1, {1, 0})}, {record(5, 2, {1, 1}, true)}}, 2, 1);
  CHECK(os.str() == "replica,tau,J,Z_1,Z_2,Z_level,censored,A_1\n0,2,1,1,0,1,0,1\n1,5,2,1,1,1,1,1\n");
}
