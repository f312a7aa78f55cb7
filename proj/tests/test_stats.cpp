#include <catch_amalgamated.hpp>

#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <vector>

#include "condwalk/oracles.hpp"
#include "condwalk/rng.hpp"
#include "condwalk/stats.hpp"

using namespace condwalk;
using Catch::Approx;

namespace {

// Midpoint rule over the uniform variable behind a log-uniform law.
template <class F>
double over_log_uniform(double k, F f, int n = 1000000) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = (i + 0.5) / n;
    s += f(std::exp((2.0 * u - 1.0) * std::log(k)));
  }
  return s / n;
}

}  // namespace

TEST_CASE("basic moments", "[stats]") {
  const std::vector<double> x{1, 2, 3, 4};
  CHECK(stats::mean(x) == 2.5);
  CHECK(stats::variance(x) == Approx(5.0 / 3.0));
  CHECK(stats::standard_error(x) == Approx(std::sqrt(5.0 / 12.0)));
  CHECK(stats::median({3, 1, 2}) == 2.0);
  CHECK(stats::median({4, 1, 3, 2}) == 2.5);
  CHECK(stats::quantile({5, 1, 4, 2, 3}, 0.4) == 2.0);
  CHECK(stats::quantile({5, 1, 4, 2, 3}, 1.0) == 5.0);
  CHECK(stats::quantile({5, 1, 4, 2, 3}, 0.0) == 1.0);
  CHECK_THROWS_AS(stats::quantile({}, 0.5), Error);
}

TEST_CASE("batch means", "[stats]") {
  std::vector<double> x(100);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i % 10);
  const auto iv = stats::batch_means(x);
  CHECK(iv.batches == 10);
  CHECK(iv.estimate == 4.5);
  CHECK(iv.stderr_ == 0.0);
  CHECK(iv.lo == iv.hi);

  // 2.262 is the 97.5% Student-t quantile with 9 degrees of freedom.
  std::vector<double> y;
  for (int b = 0; b < 10; ++b)
    for (int i = 0; i < 5; ++i) y.push_back(b);
  const auto jv = stats::batch_means(y);
  CHECK(jv.estimate == 4.5);
  CHECK(jv.stderr_ == Approx(std::sqrt(55.0 / 6.0 / 10.0)));
  CHECK((jv.hi - jv.estimate) / jv.stderr_ == Approx(2.2622).epsilon(1e-4));

  CHECK_THROWS_AS(stats::batch_means(y, 9), Error);
  CHECK_THROWS_AS(stats::batch_means(std::vector<double>(5, 1.0)), Error);

  // Coverage for i.i.d. normals.
  StreamRng rng(3);
  int covered = 0;
  for (int r = 0; r < 400; ++r) {
    std::vector<double> z(200);
    for (auto& v : z) v = std::sqrt(-2.0 * std::log(to_open_unit(rng.bits()))) * std::cos(6.283185307179586 * rng.uniform());
    const auto kv = stats::batch_means(z);
    covered += (kv.lo < 0.0 && kv.hi > 0.0) ? 1 : 0;
  }
  CHECK(covered > 360);
  CHECK(covered < 395);
}

TEST_CASE("least squares", "[stats]") {
  const std::vector<double> x{0, 1, 2, 3};
  const std::vector<double> y{1, 3, 5, 7};
  const auto f = stats::least_squares(x, y);
  CHECK(f.slope == Approx(2.0));
  CHECK(f.intercept == Approx(1.0));
  CHECK(f.slope_stderr == Approx(0.0).margin(1e-12));

  const std::vector<double> noisy{0, 2, 1, 3};
  const auto g = stats::least_squares(x, noisy);
  CHECK(g.slope == Approx(0.8));
  CHECK(g.intercept == Approx(0.3));
  // rss = 1.8, sxx = 5.
  CHECK(g.slope_stderr == Approx(std::sqrt(1.8 / 2.0 / 5.0)));

  CHECK_THROWS_AS(stats::least_squares(std::vector<double>{1, 1}, std::vector<double>{0, 1}), Error);
  CHECK_THROWS_AS(stats::least_squares(std::vector<double>{1}, std::vector<double>{0}), Error);
}

TEST_CASE("survival slope of a pareto sample", "[stats]") {
  StreamRng rng(9);
  std::vector<double> x(200000);
  for (auto& v : x) v = std::pow(to_open_unit(rng.bits()), -1.0 / 0.7);
  const auto f = stats::survival_slope(x, 1.0, 1e3);
  REQUIRE(f.has_value());
  CHECK(f->slope == Approx(-0.7).margin(0.03));
  CHECK_FALSE(stats::survival_slope(x, 1e9, 1e10).has_value());
}

TEST_CASE("lag-1 autocorrelation", "[stats]") {
  CHECK_FALSE(stats::lag1_autocorrelation({{1, 1, 1, 1}}).has_value());
  CHECK_FALSE(stats::lag1_autocorrelation({{1}, {2}, {3}}).has_value());
  CHECK(*stats::lag1_autocorrelation({{0, 1, 0, 1, 0, 1}}) == Approx(-1.0));

  // A constant run in each segment correlates only within segments.
  CHECK(*stats::lag1_autocorrelation({{0, 0, 0}, {1, 1, 1}}) == Approx(1.0));
  CHECK(*stats::lag1_autocorrelation({{0, 0, 0, 1, 1, 1}}) == Approx(0.6));

  StreamRng rng(4);
  std::vector<double> iid(100000);
  for (auto& v : iid) v = rng.uniform();
  CHECK(std::abs(*stats::lag1_autocorrelation({iid})) < 3.0 / std::sqrt(100000.0));
}

TEST_CASE("idealized trap oracles", "[stats][oracle]") {
  // pareto(gamma): P[X_1 > n] = gamma B(gamma, n + 1).
  for (double g : {0.1, 0.3, 0.5, 0.75, 1.5}) {
    for (double n : {1.0, 10.0, 1e3, 1e6, 1e10}) {
      INFO("gamma " << g << " n " << n);
      CHECK(oracle::x1_survival(ConductanceLaw::pareto(g), n) == Approx(g * boost::math::beta(g, n + 1.0)).epsilon(1e-12));
    }
  }
  CHECK(oracle::x1_survival(ConductanceLaw::constant(1.0), 5.0) == Approx(0.0).margin(1e-12));
  CHECK(oracle::x1_survival(ConductanceLaw::pareto(0.5), 0.0) == 1.0);

  const double k = std::exp(3.0);
  for (double n : {1.0, 20.0, 400.0}) {
    const double direct = over_log_uniform(k, [&](double c) { return std::pow(1.0 - std::min(1.0 / c, 1.0), n); });
    CHECK(oracle::x1_survival(ConductanceLaw::log_uniform(k), n) == Approx(direct).epsilon(1e-6));
  }

  // inverse_pareto(beta): int_0^1 t^(beta m) dt with m = 4d - 2.
  for (int d : {2, 3})
    for (double b : {0.5, 1.5})
      CHECK(oracle::x2_zero_mass(ConductanceLaw::inverse_pareto(b), d) == Approx(1.0 / (b * (4 * d - 2) + 1.0)).epsilon(1e-9));
  CHECK(oracle::x2_zero_mass(ConductanceLaw::pareto(0.5), 2) == Approx(0.0).margin(1e-12));
  // d = 1: the max of two copies, as a double expectation.
  const double lu = over_log_uniform(
      k, [&](double c1) { return over_log_uniform(k, [&](double c2) { return 1.0 - std::min(std::max(c1, c2), 1.0); }, 2000); },
      2000);
  CHECK(oracle::x2_zero_mass(ConductanceLaw::log_uniform(k), 1) == Approx(lu).epsilon(1e-5));
}

TEST_CASE("KS statistic", "[stats]") {
  const auto uniform = [](double t) { return std::clamp(t, 0.0, 1.0); };
  CHECK(stats::ks_statistic({0.5}, uniform) == 0.5);
  CHECK(stats::ks_statistic({0.125, 0.375, 0.625, 0.875}, uniform) == Approx(0.125));
  CHECK(stats::ks_critical(100, 0.05) == Approx(0.1358).epsilon(1e-3));
}
