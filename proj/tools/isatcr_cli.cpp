// Command-line front end: train policies, run single experiments, sweep an
// axis across policies, and turn outputs into plot-ready data files.
#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "isatcr/experiment.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::string out;
  std::string policy;
  std::string checkpoint;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

isatcr::ExperimentConfig load_with_overrides(const Overrides& ov) {
  isatcr::ExperimentConfig cfg = isatcr::load_experiment_config(ov.config_path);
  if (ov.seed_set) cfg.seed = ov.seed;
  if (!ov.out.empty()) cfg.output_dir = ov.out;
  if (!ov.policy.empty()) cfg.policy.kind = ov.policy;
  if (!ov.checkpoint.empty()) cfg.policy.checkpoint = ov.checkpoint;
  return cfg;
}

void add_common(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--seed", ov.seed, "master seed override")->each([&ov](const std::string&) {
    ov.seed_set = true;
  });
  cmd->add_option("--out", ov.out, "output directory override");
  cmd->add_option("--policy", ov.policy, "policy kind override");
  cmd->add_option("--checkpoint", ov.checkpoint, "checkpoint path override");
}

std::vector<std::string> split_values(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic LEO constellation simulator with joint onboard computing and routing"};
  app.require_subcommand(1);

  Overrides train_ov, run_ov, sweep_ov;
  std::string sweep_axis, sweep_values, report_in, report_out = "report";

  CLI::App* train = app.add_subcommand("train", "train a DRL policy, writing checkpoint and reward curve");
  add_common(train, train_ov);
  CLI::App* run = app.add_subcommand("run", "run one experiment, writing summary.json / tasks.csv / cdf.csv");
  add_common(run, run_ov);
  CLI::App* sweep = app.add_subcommand("sweep", "run one experiment per axis value per policy");
  add_common(sweep, sweep_ov);
  sweep->add_option("--axis", sweep_axis, "sweep axis: load | failure_rate | constellation");
  sweep->add_option("--values", sweep_values, "comma-separated axis values");
  CLI::App* report = app.add_subcommand("report", "emit plot-ready data files from run/sweep/train outputs");
  report->add_option("--in", report_in, "directory holding combined.csv / cdf.csv / curve.csv")->required();
  report->add_option("--out", report_out, "report output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const auto cfg = load_with_overrides(train_ov);
      const auto path = isatcr::train_experiment(cfg);
      std::cout << "checkpoint written to " << path.string() << "\n";
      return 0;
    }
    if (run->parsed()) {
      const auto cfg = load_with_overrides(run_ov);
      const auto result = isatcr::run_experiment(cfg);
      std::cout << result.summary_json;
      return 0;
    }
    if (sweep->parsed()) {
      const auto cfg = load_with_overrides(sweep_ov);
      const std::string axis = sweep_axis.empty() ? cfg.sweep_axis : sweep_axis;
      std::vector<std::string> values =
          sweep_values.empty() ? cfg.sweep_values : split_values(sweep_values);
      if (axis.empty() || values.empty()) {
        std::cerr << "sweep needs --axis and --values (or a sweep block in the config)\n";
        return 1;
      }
      const auto points = isatcr::sweep_experiment(cfg, axis, values);
      bool all_ok = true;
      for (const auto& pt : points) {
        std::cout << axis << "=" << pt.axis_value << " policy=" << pt.policy << " -> "
                  << (pt.ok ? "ok" : ("FAILED: " + pt.error)) << "\n";
        all_ok &= pt.ok;
      }
      std::cout << "combined table: " << cfg.output_dir << "/combined.csv\n";
      return all_ok ? 0 : 1;
    }
    if (report->parsed()) {
      isatcr::report_experiment(report_in, report_out);
      std::cout << "report written to " << report_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
