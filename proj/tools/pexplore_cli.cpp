#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "pexplore/pexplore.hpp"

namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_run(const std::string& config_path, const std::string& arms, const std::string& seeds,
            const std::string& out, unsigned jobs) {
  pexplore::ExperimentConfig cfg = pexplore::parse_config_file(config_path);
  if (const char* env_out = std::getenv("PEXPLORE_OUT"); env_out && *env_out) cfg.out = env_out;
  if (!out.empty()) cfg.out = out;
  if (!arms.empty()) {
    std::vector<pexplore::Arm> keep;
    for (const auto& name : split(arms)) {
      auto it = std::find_if(cfg.arms.begin(), cfg.arms.end(), [&](const auto& a) { return a.name == name; });
      if (it == cfg.arms.end()) throw pexplore::ConfigError("--arms: no arm named '" + name + "'");
      keep.push_back(*it);
    }
    cfg.arms = keep;
  }
  if (!seeds.empty()) {
    cfg.seeds.clear();
    for (const auto& s : split(seeds)) cfg.seeds.push_back(std::stoull(s));
  }

  const auto plan = pexplore::plan_runs(cfg);
  std::cerr << "running " << plan.size() << " runs into " << cfg.out << " with " << jobs << " job(s)\n";
  const auto results = pexplore::run_experiment(cfg, jobs);
  int failed = 0;
  for (const auto& r : results) {
    if (r.ok) {
      const auto& last = r.metrics.back();
      std::cout << r.run_dir << ": steps=" << last.total_steps << " success=" << last.success_rate
                << " entropy=" << last.entropy << " goals=" << last.n_goals_known << '\n';
    } else {
      ++failed;
      std::cout << r.run_dir << ": FAILED: " << r.error << '\n';
    }
  }
  if (failed < static_cast<int>(results.size())) {
    pexplore::aggregate_directory(cfg.out);
    std::cout << "summary: " << cfg.out << "/summary.csv\n";
  }
  if (failed) std::cerr << failed << " run(s) failed; results are partial\n";
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goal exploration experiments with switchable post-exploration"};
  app.require_subcommand(1);

  std::string config_path;
  std::string arms;
  std::string seeds;
  std::string out;
  unsigned jobs = 1;
  auto* run = app.add_subcommand("run", "Run every (arm, seed) of an experiment config");
  run->add_option("config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("--arms", arms, "Comma-separated arm names to run");
  run->add_option("--seeds", seeds, "Comma-separated seeds overriding the config");
  run->add_option("--out", out, "Output root (overrides PEXPLORE_OUT and the config)");
  run->add_option("--jobs", jobs, "Runs executed concurrently")->check(CLI::PositiveNumber);

  std::string agg_dir;
  auto* agg = app.add_subcommand("aggregate", "Write summary.csv for an output directory");
  agg->add_option("dir", agg_dir, "Experiment output directory")->required()->check(CLI::ExistingDirectory);

  std::string run_dir;
  auto* heat = app.add_subcommand("heatmap", "Re-render coverage.pgm for one run directory");
  heat->add_option("run-dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, arms, seeds, out, jobs);
    if (*agg) {
      const auto rows = pexplore::aggregate_directory(agg_dir);
      std::cout << "wrote " << rows.size() << " rows to " << agg_dir << "/summary.csv\n";
      return 0;
    }
    if (*heat) {
      std::cout << pexplore::render_run_heatmap(run_dir) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
