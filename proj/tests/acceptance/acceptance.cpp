// Acceptance gate: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; exit status is 0 iff every selected one passes.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "condwalk/cli.hpp"
#include "condwalk/experiments.hpp"
#include "condwalk/verify.hpp"

using namespace condwalk;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

unsigned workers() { return cli::resolve_workers(0); }

ExperimentConfig preset(const std::string& name, Json extra = Json::object()) {
  Json j{{"preset", name}, {"seed", 20240601}};
  j.update(extra);
  return config_from_json(j);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

Outcome from_check(const verify::CheckResult& r) {
  std::string d = std::to_string(r.instances) + " instances, " + std::to_string(r.violations) + " violations, worst " + fmt(r.worst);
  if (!r.note.empty()) d += " (" + r.note + ")";
  return {r.pass(), d};
}

Outcome reversibility() { return from_check(verify::reversibility(10000, 1)); }

Outcome exit_net() { return from_check(verify::exit_net_bound(100, 1)); }

Outcome mean_return() {
  const auto r = verify::mean_return(96, 20, 100000, 1);
  const auto a = from_check(r[0]), b = from_check(r[1]);
  return {a.pass && b.pass, "exact: " + a.detail + "; monte carlo: " + b.detail};
}

Outcome sealing() { return from_check(verify::sealing(50, 1)); }

Outcome dirichlet() {
  const auto dense = from_check(verify::dirichlet(40, 1));
  const auto cfg = preset("elliptic", {{"eigen_L", {8, 16, 32}}});
  const auto net = network_experiment(cfg, workers(), false);
  const bool decay_ok = net.decay && net.decay->slope >= -(2 + 1) - 0.5;
  std::string medians;
  for (const auto& row : net.rows) medians += " L=" + fmt(row.L) + ":" + fmt(row.median);
  return {dense.pass && decay_ok, dense.detail + "; decay slope " + (net.decay ? fmt(net.decay->slope) : "none") +
                                      " (>= -3.5), medians" + medians};
}

Outcome ballistic() {
  bool ok = true;
  std::string d;
  for (const char* p : {"loguniform2", "pareto2"}) {
    const auto cfg = preset(p, {{"horizon", 1000000}, {"replicas", 30}});
    const auto r = estimate_speed(cfg, workers());
    const auto& v = r.at(1000000).v_level;
    const double drift = r.relative_drift(100000, 1000000);
    const bool pass = v.estimate > 0.0 && v.lo > 0.0 && drift < 0.2;
    ok = ok && pass;
    d += std::string(d.empty() ? "" : "; ") + p + ": v=" + fmt(v.estimate) + " CI [" + fmt(v.lo) + ", " + fmt(v.hi) +
         "], drift " + fmt(drift);
  }
  return {ok, d};
}

Outcome zero_speed() {
  const auto cfg = preset("gamma05", {{"horizon", 1000000}, {"replicas", 30}});
  const auto r = estimate_speed(cfg, workers());
  const double v4 = r.at(10000).v_level.estimate, v6 = r.at(1000000).v_level.estimate;
  return {v6 < 0.5 * v4, "v(1e4)=" + fmt(v4) + ", v(1e6)=" + fmt(v6) + ", ratio " + fmt(v6 / v4)};
}

Outcome exponent() {
  bool ok = true;
  std::string d;
  for (const auto& [p, lo, hi] : {std::tuple{"gamma05", 0.35, 0.65}, std::tuple{"gamma075", 0.60, 0.90}}) {
    const auto cfg = preset(p, {{"horizon", 1000000}, {"replicas", 30}});
    const auto r = estimate_exponent(cfg, workers());
    const double m = r.terminal.slope;
    ok = ok && m >= lo && m <= hi;
    d += std::string(d.empty() ? "" : "; ") + p + ": median " + fmt(m) + " in [" + fmt(lo) + ", " + fmt(hi) + "]";
  }
  return {ok, d};
}

Outcome regeneration() {
  const auto heavy = regen_experiment(preset("gamma05", {{"horizon", 1000000}, {"replicas", 30}}), workers(), false);
  const auto ell = regen_experiment(preset("elliptic", {{"horizon", 1000000}, {"replicas", 30}}), workers(), false);
  const bool tail_ok = heavy.stats && heavy.stats->J_tail && heavy.stats->J_tail->slope >= -0.65 &&
                       heavy.stats->J_tail->slope <= -0.35;
  bool acf_ok = false;
  std::string acf = "none";
  if (ell.stats && ell.stats->acf_Z_level) {
    const double bound = 3.0 / std::sqrt(static_cast<double>(ell.stats->used));
    acf_ok = std::abs(*ell.stats->acf_Z_level) <= bound;
    acf = fmt(*ell.stats->acf_Z_level) + " (bound " + fmt(bound) + ", " + std::to_string(ell.stats->used) + " records)";
  }
  const std::string slope = heavy.stats && heavy.stats->J_tail ? fmt(heavy.stats->J_tail->slope) : "none";
  return {tail_ok && acf_ok, "pareto(0.5) J tail slope " + slope + "; elliptic lag-1 acf of Z " + acf};
}

Outcome exits() {
  const auto cfg = preset("elliptic", {{"lambda", 3.0}, {"exit_replicas", 10000}});
  const auto r = exit_probability_experiment(cfg, {4, 8, 12}, cfg.alpha_prime, workers());
  bool enough = true;
  std::string d;
  for (const auto& row : r.rows) {
    enough = enough && row.replicas >= 10000;
    d += "L=" + fmt(row.L) + ": " + std::to_string(row.wrong) + "/" + std::to_string(row.replicas) + "; ";
  }
  const bool slope_ok = r.fit && r.fit->slope < 0.0;
  d += "slope " + (r.fit ? fmt(r.fit->slope) : std::string("none"));
  return {enough && r.strictly_decreasing && slope_ok, d};
}

Outcome backtrack() {
  const auto cfg = preset("elliptic", {{"horizon", 2000}, {"replicas", 50000}});
  const auto r = backtrack_tail_experiment(cfg, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, workers(), 2, 10);
  std::string d;
  for (const auto& row : r.rows) d += std::to_string(row.k) + ":" + std::to_string(row.hits) + " ";
  d += "slope " + (r.fit ? fmt(r.fit->slope) + " over " + std::to_string(r.fit->n) + " k values" : std::string("none"));
  return {r.fit && r.fit->n >= 3 && r.fit->slope < 0.0 && r.nonincreasing, d};
}

Outcome idealized_traps() {
  bool ok = true;
  std::string d;
  for (double g : {0.5, 0.75}) {
    const auto law = ConductanceLaw::pareto(g);
    const auto t = idealized_trap_sampler(law, TrapVariant::kX1, 2, 1000000, derive_seed(20240601, 4, 0));
    const auto oracle = t.tail ? x1_oracle_slope(law, t.tail_lo, t.tail_hi) : std::nullopt;
    const bool pass = t.tail && oracle && std::abs(t.tail->slope + g) <= 0.1 && std::abs(oracle->slope + g) <= 0.1;
    ok = ok && pass;
    d += std::string(d.empty() ? "" : "; ") + "gamma " + fmt(g) + ": empirical " + (t.tail ? fmt(t.tail->slope) : "none") +
         ", oracle " + (oracle ? fmt(oracle->slope) : "none");
  }
  return {ok, d};
}

Outcome detectors() { return from_check(verify::detectors(20, 10000, 1)); }

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "exact reversibility", 60, reversibility},
      {2, "exit-net escape bound", 60, exit_net},
      {3, "mean return time", 600, mean_return},
      {4, "sealing", 600, sealing},
      {5, "Dirichlet eigenvalue", 900, dirichlet},
      {6, "ballistic regime", 1800, ballistic},
      {7, "zero-speed regime", 1800, zero_speed},
      {8, "sub-ballistic exponent", 3600, exponent},
      {9, "regeneration tail", 1800, regeneration},
      {10, "exit probabilities", 1200, exits},
      {11, "backtrack tail", 600, backtrack},
      {12, "idealized traps", 300, idealized_traps},
      {13, "detector cross-validation", 300, detectors},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs < c.budget_s;
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " [" << fmt(secs)
              << " s, budget " << c.budget_s << " s]" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
