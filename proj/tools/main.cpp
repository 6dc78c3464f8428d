#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include "cvpm/simulation.hpp"
#include "cvpm/svg.hpp"

namespace fs = std::filesystem;
using namespace cvpm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSchema = 2;
constexpr int kExitBootstrap = 3;
constexpr int kExitUsage = 64;

struct RunSpec {
  std::vector<std::string> scenarios;
  std::string scheme = "smpc_cvpm";
  uint64_t seed = 1;
  int repeat = 1;
  std::string out = "out";
  std::string parallel = "lazy";
  int jobs = 1;
};

SchemeId parse_scheme(const std::string& s) {
  return s == "smpc_ftp" ? SchemeId::smpc_ftp : SchemeId::smpc_cvpm;
}

BranchMode parse_mode(const std::string& s) {
  return s == "eager" ? BranchMode::eager : BranchMode::lazy;
}

struct RepeatStats {
  SimulationTrace first;  // artifacts come from the first run
  TimingStats mean{};
  TimingStats stddev{};
};

RepeatStats run_repeated(const Scenario& sc, SchemeId scheme, const RunSpec& spec) {
  RepeatStats stats;
  std::vector<TimingStats> timings;
  for (int r = 0; r < spec.repeat; ++r) {
    SimulationTrace tr = run_closed_loop(sc, scheme, spec.seed, parse_mode(spec.parallel));
    if (!tr.supported) {
      stats.first = std::move(tr);
      return stats;
    }
    timings.push_back(tr.timing);
    if (r == 0) stats.first = std::move(tr);
  }
  auto accumulate = [&](auto member) {
    double m = 0.0;
    for (const auto& t : timings) m += t.*member;
    m /= timings.size();
    double v = 0.0;
    for (const auto& t : timings) v += (t.*member - m) * (t.*member - m);
    return std::pair<double, double>(m, timings.size() > 1 ? std::sqrt(v / (timings.size() - 1))
                                                           : 0.0);
  };
  std::tie(stats.mean.smpc_mean_ms, stats.stddev.smpc_mean_ms) =
      accumulate(&TimingStats::smpc_mean_ms);
  std::tie(stats.mean.safety_check_mean_ms, stats.stddev.safety_check_mean_ms) =
      accumulate(&TimingStats::safety_check_mean_ms);
  std::tie(stats.mean.cvpm_mean_ms, stats.stddev.cvpm_mean_ms) =
      accumulate(&TimingStats::cvpm_mean_ms);
  std::tie(stats.mean.ftp_mean_ms, stats.stddev.ftp_mean_ms) =
      accumulate(&TimingStats::ftp_mean_ms);
  return stats;
}

json timing_json(const TimingStats& mean, const TimingStats& stddev, int repeat) {
  json t = {{"smpc_mean_ms", mean.smpc_mean_ms},
            {"safety_check_mean_ms", mean.safety_check_mean_ms},
            {"cvpm_mean_ms", mean.cvpm_mean_ms},
            {"ftp_mean_ms", mean.ftp_mean_ms}};
  if (repeat > 1) {
    t["repeat"] = repeat;
    t["smpc_std_ms"] = stddev.smpc_mean_ms;
    t["safety_check_std_ms"] = stddev.safety_check_mean_ms;
    t["cvpm_std_ms"] = stddev.cvpm_mean_ms;
    t["ftp_std_ms"] = stddev.ftp_mean_ms;
  }
  return t;
}

int run_one(const std::string& path, SchemeId scheme, const RunSpec& spec, bool quiet = false) {
  Scenario sc;
  try {
    sc = load_scenario(path);
  } catch (const ScenarioError& e) {
    std::cerr << path << ": " << e.what() << "\n";
    return kExitSchema;
  }
  RepeatStats stats = run_repeated(sc, scheme, spec);
  if (!stats.first.supported) {
    std::cerr << path << ": baseline bootstrap failed (no initial robust solution)\n";
    return kExitBootstrap;
  }
  const fs::path dir = fs::path(spec.out) / (sc.id + "_" + scheme_name(scheme));
  save_trace(stats.first, dir);
  {
    // Replace the summary with the repeat-aggregated timing block.
    json j = summary_json(stats.first);
    j["timing"] = timing_json(stats.mean, stats.stddev, spec.repeat);
    std::ofstream out(dir / "summary.json", std::ios::trunc);
    out << j.dump(2) << "\n";
  }
  save_trajectory_svg(stats.first, sc, dir / "trajectory.svg");
  if (!quiet) {
    std::printf("%s [%s]: J_sim=%.6g collisions=%d steps=%zu -> %s\n", sc.id.c_str(),
                scheme_name(scheme), stats.first.J_sim, stats.first.collisions,
                stats.first.steps.size(), dir.string().c_str());
  }
  return kExitOk;
}

int cmd_run(const RunSpec& spec) {
  const SchemeId scheme = parse_scheme(spec.scheme);
  if (spec.jobs <= 1 || spec.scenarios.size() <= 1) {
    for (const auto& path : spec.scenarios) {
      const int rc = run_one(path, scheme, spec);
      if (rc != kExitOk) return rc;
    }
    return kExitOk;
  }
  // Bounded fan-out over independent scenarios.
  int rc = kExitOk;
  size_t next = 0;
  while (next < spec.scenarios.size() && rc == kExitOk) {
    std::vector<std::future<int>> batch;
    for (int j = 0; j < spec.jobs && next < spec.scenarios.size(); ++j, ++next) {
      batch.push_back(std::async(std::launch::async, run_one, spec.scenarios[next], scheme,
                                 std::cref(spec), false));
    }
    for (auto& f : batch) rc = std::max(rc, f.get());
  }
  return rc;
}

int cmd_compare(const RunSpec& spec) {
  if (spec.scenarios.size() != 1) {
    std::cerr << "compare expects exactly one --scenario\n";
    return kExitUsage;
  }
  Scenario sc;
  try {
    sc = load_scenario(spec.scenarios[0]);
  } catch (const ScenarioError& e) {
    std::cerr << spec.scenarios[0] << ": " << e.what() << "\n";
    return kExitSchema;
  }
  RepeatStats cvpm = run_repeated(sc, SchemeId::smpc_cvpm, spec);
  RepeatStats ftp = run_repeated(sc, SchemeId::smpc_ftp, spec);
  if (!ftp.first.supported) {
    std::cerr << sc.id << ": baseline bootstrap failed (no initial robust solution)\n";
    return kExitBootstrap;
  }

  const double t_cvpm = cvpm.mean.smpc_mean_ms + cvpm.mean.safety_check_mean_ms;
  const double t_ftp = ftp.mean.smpc_mean_ms + ftp.mean.ftp_mean_ms;
  const double reduction = t_ftp > 0.0 ? 100.0 * (1.0 - t_cvpm / t_ftp) : 0.0;

  std::vector<int> divergence;
  for (size_t t = 0; t < cvpm.first.steps.size() && t < ftp.first.steps.size(); ++t) {
    if (cvpm.first.steps[t].trace.branch != ftp.first.steps[t].trace.branch) {
      divergence.push_back(static_cast<int>(t));
    }
  }

  std::printf("scenario: %s  seed: %llu  repeat: %d\n", sc.id.c_str(),
              static_cast<unsigned long long>(spec.seed), spec.repeat);
  std::printf("%-28s %14s %14s\n", "metric", "smpc_cvpm", "smpc_ftp");
  std::printf("%-28s %14.6g %14.6g\n", "J_sim", cvpm.first.J_sim, ftp.first.J_sim);
  std::printf("%-28s %14d %14d\n", "collisions", cvpm.first.collisions, ftp.first.collisions);
  for (const char* b : {"smpc_safe", "cvpm_robust", "cvpm_prob", "ftp_backup"}) {
    std::printf("branch %-21s %14d %14d\n", b, cvpm.first.branch_counts[b],
                ftp.first.branch_counts[b]);
  }
  std::printf("%-28s %14.4f %14.4f\n", "smpc branch time [ms]", t_cvpm, t_ftp);
  std::printf("timing reduction: %.1f%%\n", reduction);
  if (!divergence.empty()) {
    std::printf("branch divergence at steps:");
    for (size_t i = 0; i < divergence.size() && i < 12; ++i) std::printf(" %d", divergence[i]);
    if (divergence.size() > 12) std::printf(" ... (%zu total)", divergence.size());
    std::printf("\n");
  }

  json j;
  j["scenario"] = sc.id;
  j["seed"] = spec.seed;
  j["repeat"] = spec.repeat;
  j["smpc_cvpm"] = summary_json(cvpm.first);
  j["smpc_cvpm"]["timing"] = timing_json(cvpm.mean, cvpm.stddev, spec.repeat);
  j["smpc_ftp"] = summary_json(ftp.first);
  j["smpc_ftp"]["timing"] = timing_json(ftp.mean, ftp.stddev, spec.repeat);
  j["timing_reduction_pct"] = reduction;
  j["divergence_steps"] = divergence;
  const fs::path dir = fs::path(spec.out) / (sc.id + "_compare");
  fs::create_directories(dir);
  std::ofstream out(dir / "compare.json", std::ios::trunc);
  out << j.dump(2) << "\n";
  save_trajectory_svg(cvpm.first, sc, dir / "trajectory_smpc_cvpm.svg");
  save_trajectory_svg(ftp.first, sc, dir / "trajectory_smpc_ftp.svg");
  return kExitOk;
}

int cmd_check(const std::string& path) {
  try {
    const Scenario sc = load_scenario(path);
    std::printf("%s: valid (id=%s, N_sim=%d, obstacles=%zu)\n", path.c_str(), sc.id.c_str(),
                sc.N_sim, sc.obstacles.size());
    return kExitOk;
  } catch (const ScenarioError& e) {
    std::cerr << path << ": " << e.what() << "\n";
    return kExitSchema;
  }
}

int cmd_bench(const RunSpec& spec) {
  if (spec.scenarios.size() != 1) {
    std::cerr << "bench expects exactly one --scenario\n";
    return kExitUsage;
  }
  Scenario sc;
  try {
    sc = load_scenario(spec.scenarios[0]);
  } catch (const ScenarioError& e) {
    std::cerr << spec.scenarios[0] << ": " << e.what() << "\n";
    return kExitSchema;
  }
  const SchemeId scheme = parse_scheme(spec.scheme);
  RepeatStats stats = run_repeated(sc, scheme, spec);
  if (!stats.first.supported) {
    std::cerr << sc.id << ": baseline bootstrap failed (no initial robust solution)\n";
    return kExitBootstrap;
  }
  std::printf("scenario: %s  scheme: %s  repeats: %d  steps/run: %zu\n", sc.id.c_str(),
              scheme_name(scheme), spec.repeat, stats.first.steps.size());
  std::printf("%-24s %12s %12s\n", "stage", "mean [ms]", "std [ms]");
  std::printf("%-24s %12.4f %12.4f\n", "smpc_solve", stats.mean.smpc_mean_ms,
              stats.stddev.smpc_mean_ms);
  std::printf("%-24s %12.4f %12.4f\n", "safety_check", stats.mean.safety_check_mean_ms,
              stats.stddev.safety_check_mean_ms);
  std::printf("%-24s %12.4f %12.4f\n", "cvpm_branch", stats.mean.cvpm_mean_ms,
              stats.stddev.cvpm_mean_ms);
  std::printf("%-24s %12.4f %12.4f\n", "ftp_solve", stats.mean.ftp_mean_ms,
              stats.stddev.ftp_mean_ms);
  if (!spec.out.empty()) {
    json j;
    j["scenario"] = sc.id;
    j["scheme"] = scheme_name(scheme);
    j["timing"] = timing_json(stats.mean, stats.stddev, spec.repeat);
    const fs::path dir = fs::path(spec.out) / (sc.id + "_bench");
    fs::create_directories(dir);
    std::ofstream out(dir / "bench.json", std::ios::trunc);
    out << j.dump(2) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory planning with certified stochastic MPC and a "
               "collision-probability-minimizing fallback"};
  app.require_subcommand(1);

  RunSpec spec;
  std::string check_path;

  auto add_common = [&](CLI::App* cmd, bool scheme_flag) {
    cmd->add_option("--scenario", spec.scenarios, "Scenario JSON file(s)")->required();
    if (scheme_flag) {
      cmd->add_option("--scheme", spec.scheme, "Control scheme")
          ->check(CLI::IsMember({"smpc_cvpm", "smpc_ftp"}));
    }
    cmd->add_option("--seed", spec.seed, "Simulation seed");
    cmd->add_option("--repeat", spec.repeat, "Repeat count for timing statistics")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", spec.out, "Output directory");
    cmd->add_option("--parallel", spec.parallel, "Fallback-branch execution mode")
        ->check(CLI::IsMember({"eager", "lazy"}));
  };

  CLI::App* run = app.add_subcommand("run", "Run one or more scenarios");
  add_common(run, true);
  run->add_option("--jobs", spec.jobs, "Worker pool size for batch runs")
      ->check(CLI::PositiveNumber);

  CLI::App* compare = app.add_subcommand("compare", "Run both schemes and compare");
  add_common(compare, false);

  CLI::App* check = app.add_subcommand("check", "Validate a scenario file");
  check->add_option("--scenario", check_path, "Scenario JSON file")->required();

  CLI::App* bench = app.add_subcommand("bench", "Timing benchmark");
  add_common(bench, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(spec);
    if (compare->parsed()) return cmd_compare(spec);
    if (check->parsed()) return cmd_check(check_path);
    if (bench->parsed()) return cmd_bench(spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
