#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "condwalk/experiments.hpp"
#include "condwalk/verify.hpp"

namespace condwalk::cli {

namespace fs = std::filesystem;

/// Exit codes of run_cli.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;
inline constexpr int kConfigError = 3;

struct Options {
  std::string command;
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;  // 0: CONDWALK_WORKERS, else 1
  bool overwrite = false;
  bool small = false;
  bool weak = false;
  bool skip_occupation = false;
  std::size_t trajectories = 0;
};

inline unsigned resolve_workers(unsigned flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("CONDWALK_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::kInvalidArgument, "cannot write " + p.string());
  os << text;
}

inline void write_outputs(const fs::path& dir, const ExperimentConfig& cfg, const std::string& csv, const Json& summary) {
  write_file(dir / "config.json", cfg.to_json().dump(2) + "\n");
  write_file(dir / "results.csv", csv);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
}

inline ExperimentConfig load_config(const Options& o) {
  std::vector<std::string> overrides = o.overrides;
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  return validate_config(o.config, overrides);
}

inline int run_verify(const Options& o, std::ostream& out) {
  const std::uint64_t seed = o.seed.value_or(1);
  const auto results = verify::run_all(o.small, seed);
  Json all = Json::array();
  bool ok = true;
  for (const auto& r : results) {
    out << (r.pass() ? "ok   " : "FAIL ") << r.name << ": " << r.instances << " instances, " << r.violations
        << " violations, worst " << format_double(r.worst);
    if (!r.note.empty()) out << " (" << r.note << ")";
    out << "\n";
    all.push_back(r.to_json());
    ok = ok && r.pass();
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "config.json", Json{{"small", o.small}, {"seed", seed}}.dump(2) + "\n");
    write_file(fs::path(o.out) / "summary.json", Json{{"checks", all}, {"pass", ok}}.dump(2) + "\n");
  }
  return ok ? kOk : kFailure;
}

inline int run_experiment(const Options& o, const ExperimentConfig& cfg, std::ostream& out) {
  const unsigned workers = resolve_workers(o.workers);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  const std::string& c = o.command;
  if (c == "speed") {
    const auto r = estimate_speed(cfg, workers);
    write_outputs(dir, cfg, speed_csv(r, cfg.spec), speed_summary(r));
  } else if (c == "exponent") {
    const auto r = estimate_exponent(cfg, workers);
    write_outputs(dir, cfg, exponent_csv(r), exponent_summary(r));
  } else if (c == "exit-prob") {
    const auto r = exit_probability_experiment(cfg, cfg.L_list, cfg.alpha_prime, workers);
    write_outputs(dir, cfg, exit_csv(r), exit_summary(r));
  } else if (c == "simulate") {
    const auto r = backtrack_tail_experiment(cfg, cfg.k_list, workers);
    write_outputs(dir, cfg, backtrack_csv(r), backtrack_summary(r));
    if (o.trajectories > 0) {
      std::ofstream os(dir / "trajectories.jsonl", std::ios::binary | std::ios::trunc);
      for (std::size_t i = 0; i < std::min(o.trajectories, cfg.replicas); ++i) {
        const auto spec = cfg.replica_spec(i);
        write_trajectory_jsonl(os, run(spec, Site(spec.dim()), cfg.horizon, cfg.replica_walk_seed(i), {cfg.stride}));
      }
    }
  } else if (c == "regen") {
    const auto r = regen_experiment(cfg, workers);
    write_outputs(dir, cfg, regen_csv(r, cfg.spec.dim()), regen_summary(r));
  } else if (c == "clusters") {
    const auto r = cluster_experiment(cfg, o.weak);
    write_outputs(dir, cfg, cluster_csv(r), cluster_summary(r));
  } else if (c == "networks") {
    const auto r = network_experiment(cfg, workers);
    write_outputs(dir, cfg, network_csv(r), network_summary(r));
  } else if (c == "trap-model") {
    const TrapVariant v = cfg.variant == "X2" ? TrapVariant::kX2 : TrapVariant::kX1;
    const auto law = cfg.spec.law();
    const auto t = idealized_trap_sampler(law, v, cfg.spec.dim(), cfg.samples, derive_seed(cfg.seed, 4, 0));
    Json summary{{"idealized", trap_samples_summary(t, law, v, cfg.spec.dim())}};
    if (!o.skip_occupation) {
      const auto occ = trap_occupation_experiment(cfg, workers);
      summary["occupation"] = trap_summary(occ);
      write_file(dir / "occupation.csv", trap_csv(occ));
    }
    write_outputs(dir, cfg, trap_samples_csv(t, law, v), summary);
  }
  out << "wrote " << dir.string() << "\n";
  return kOk;
}

/// Parses argv and runs one subcommand. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Biased random walk among random conductances: simulation and exact checks", "condwalk"};
  app.require_subcommand(1, 1);
  Options o;
  std::uint64_t seed = 0;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "walk replicas; backtrack table and optional trajectory dump"},
      {"exponent", "sub-ballistic exponent from level growth"},
      {"speed", "velocity estimates per checkpoint"},
      {"exit-prob", "wrong-side exit probabilities of boxes"},
      {"clusters", "survey of bad clusters around the origin"},
      {"networks", "Dirichlet eigenvalues of elongated boxes"},
      {"regen", "regeneration records and chain statistics"},
      {"trap-model", "idealized trap times and trap occupation"},
      {"verify", "exact-oracle checks"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--out", o.out, "output directory");
    if (name == "verify") {
      sub->add_flag("--small", o.small, "reduced instance counts");
      continue;
    }
    sub->add_option("--config", o.config, "JSON config file")->required();
    sub->add_option("--workers", o.workers, "replica threads (default: CONDWALK_WORKERS or 1)");
    sub->add_option("--set", o.overrides, "key=value override, repeatable");
    sub->add_flag("--overwrite", o.overwrite, "allow writing into an existing output directory");
    if (name == "clusters") sub->add_flag("--weak", o.weak, "use weakly bad vertices");
    if (name == "trap-model") sub->add_flag("--skip-occupation", o.skip_occupation, "idealized sampler only");
    if (name == "simulate") sub->add_option("--trajectories", o.trajectories, "dump the first N trajectories as JSON lines");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  o.command = app.get_subcommands().front()->get_name();
  if (app.get_subcommands().front()->count("--seed") > 0) o.seed = seed;

  try {
    if (o.command == "verify") return run_verify(o, out);
    if (o.out.empty()) o.out = "results/" + o.command;
    const auto cfg = load_config(o);
    if (fs::exists(o.out) && !o.overwrite) {
      err << "error: output directory " << o.out << " exists; pass --overwrite to reuse it\n";
      return kUsage;
    }
    return run_experiment(o, cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kConfig ? kConfigError : kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace condwalk::cli
