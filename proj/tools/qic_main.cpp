#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "qic/harness.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<long> shots;
  std::optional<std::string> out;
  std::optional<int> threads;
};

void add_overrides(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "Override master_seed");
  cmd->add_option("--trials", ov.trials, "Override trial count");
  cmd->add_option("--shots", ov.shots, "Override shots per trial");
  cmd->add_option("--out", ov.out, "Override output directory");
  cmd->add_option("--threads", ov.threads, "Override worker thread count");
}

qic::ExperimentConfig load_with_overrides(const std::string& path, const Overrides& ov) {
  qic::ExperimentConfig config = qic::load_config(path);
  if (ov.seed) config.master_seed = *ov.seed;
  if (ov.trials) config.trials = *ov.trials;
  if (ov.shots) config.n_shots = *ov.shots;
  if (ov.out) config.output_dir = *ov.out;
  if (ov.threads) config.threads = *ov.threads;
  config.validate();
  return config;
}

void print_summary(const qic::ExperimentSummary& summary) {
  std::cout << "trials: " << summary.trials << " (failed: " << summary.failed << ")\n";
  for (const auto& [kind, by_model] : summary.counts) {
    std::cout << "  " << qic::criterion_name(kind) << ":";
    for (const auto& [model, count] : by_model) std::cout << " " << model << "=" << count;
    const auto first_it = summary.counts_first.find(kind);
    if (first_it != summary.counts_first.end()) {
      std::cout << "  (first term:";
      for (const auto& [model, count] : first_it->second) {
        std::cout << " " << model << "=" << count;
      }
      std::cout << ")";
    }
    std::cout << "\n";
  }
  std::cout << "runtime: " << summary.runtime_seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum-state model selection laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;

  auto* experiment = app.add_subcommand("experiment", "Run the full selection experiment");
  experiment->add_option("config", config_path, "JSON config file")->required();
  add_overrides(experiment, ov);

  int trial_index = 0;
  auto* trial = app.add_subcommand("trial", "Run a single trial and persist its artifacts");
  trial->add_option("config", config_path, "JSON config file")->required();
  trial->add_option("--index", trial_index, "Trial index")->required();
  add_overrides(trial, ov);

  auto* vbias = app.add_subcommand("validate-bias", "Monte-Carlo check of the bias formula");
  vbias->add_option("config", config_path, "JSON config file")->required();
  add_overrides(vbias, ov);

  auto* vnorm = app.add_subcommand("validate-normality",
                                   "Monte-Carlo check of estimator asymptotic normality");
  vnorm->add_option("config", config_path, "JSON config file")->required();
  add_overrides(vnorm, ov);

  std::string fits_path;
  std::string outcomes_path;
  std::string criteria_out;
  auto* crit = app.add_subcommand("criteria", "Recompute criteria from persisted fits");
  crit->add_option("--config", config_path, "JSON config file")->required();
  crit->add_option("--fits", fits_path, "fits JSON written by `trial`")->required();
  crit->add_option("--outcomes", outcomes_path, "outcomes CSV written by `trial`")->required();
  crit->add_option("--out", criteria_out, "Output CSV path (default: stdout)");

  auto* self = app.add_subcommand("selfcheck", "Run the invariant suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (experiment->parsed()) {
      const qic::ExperimentConfig config = load_with_overrides(config_path, ov);
      const qic::ExperimentSummary summary = qic::run_experiment(config);
      print_summary(summary);
      std::cout << "outputs in " << config.output_dir << "\n";
      return summary.failed == config.trials ? 1 : 0;
    }

    if (trial->parsed()) {
      const qic::ExperimentConfig config = load_with_overrides(config_path, ov);
      if (trial_index < 0 || trial_index >= config.trials) {
        std::cerr << "error: trial index " << trial_index << " outside [0, " << config.trials
                  << ")\n";
        return 1;
      }
      const qic::TrialRecord rec = qic::run_trial(config, trial_index);
      std::filesystem::create_directories(config.output_dir);
      const std::string stem =
          config.output_dir + "/trial_" + std::to_string(trial_index);
      const auto outcomes = qic::sample_outcomes(
          qic::true_state(config), config.n_shots, qic::Rng::derive(rec.seed, 1));
      qic::write_outcomes_csv(stem + "_outcomes.csv", trial_index, outcomes);
      std::ofstream fits(stem + "_fits.json");
      fits << qic::trial_fits_to_json(rec) << "\n";
      qic::write_trials_csv(stem + "_criteria.csv", {&rec, 1});
      if (rec.failed) {
        std::cerr << "trial failed: " << rec.failure << "\n";
        return 1;
      }
      for (const auto& [kind, model] : rec.selected) {
        std::cout << qic::criterion_name(kind) << " selects " << model << "\n";
      }
      std::cout << "artifacts: " << stem << "_{outcomes.csv,fits.json,criteria.csv}\n";
      return 0;
    }

    if (vbias->parsed()) {
      const qic::ExperimentConfig config = load_with_overrides(config_path, ov);
      const qic::BiasValidationReport report = qic::validate_bias(config);
      const std::string text = qic::bias_report_to_json(config, report);
      std::filesystem::create_directories(config.output_dir);
      std::ofstream out(config.output_dir + "/bias_validation.json");
      out << text << "\n";
      std::cout << text << "\n";
      const qic::BiasSweepPoint& main = report.main_point();
      const double dev = std::abs(main.mc_bias - report.formula);
      std::cout << "|mc - formula| = " << dev << " (" << dev / main.mc_se
                << " standard errors)\n";
      return 0;
    }

    if (vnorm->parsed()) {
      const qic::ExperimentConfig config = load_with_overrides(config_path, ov);
      const qic::NormalityReport report = qic::validate_normality(config);
      const std::string text = qic::normality_report_to_json(config, report);
      std::filesystem::create_directories(config.output_dir);
      std::ofstream out(config.output_dir + "/normality_validation.json");
      out << text << "\n";
      std::cout << text << "\n";
      return 0;
    }

    if (crit->parsed()) {
      const qic::ExperimentConfig config = qic::load_config(config_path);
      const auto fits = qic::read_fits_json(fits_path);
      const auto outcomes = qic::read_outcomes_csv(outcomes_path);
      const auto reports = qic::recompute_criteria(config, fits, outcomes);
      qic::TrialRecord rec;
      rec.reports = reports;
      if (!criteria_out.empty()) {
        qic::write_trials_csv(criteria_out, {&rec, 1});
        std::cout << "wrote " << criteria_out << "\n";
      } else {
        for (const auto& r : reports) {
          std::cout << qic::criterion_name(r.kind) << "," << r.model_name << ","
                    << qic::format_double(r.value) << "\n";
        }
      }
      return 0;
    }

    if (self->parsed()) {
      const int failures = qic::selfcheck(std::cout);
      if (failures > 0) {
        std::cerr << failures << " selfcheck failures\n";
        return 1;
      }
      std::cout << "selfcheck passed\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
