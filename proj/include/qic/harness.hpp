#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qic/criteria.hpp"

namespace qic {

// Candidate model: a built-in name ("M1", "M2") or an inline definition.
struct ModelConfig {
  std::string name;
  std::optional<QhbmModel> custom;

  QhbmModel build() const;
};

struct TrueModelConfig {
  ModelConfig model;
  std::optional<RVector> params;            // explicit parameter vector
  std::optional<std::uint64_t> random_seed; // else derived from master_seed
  double random_range = 1.0;
};

// Settings for the validate-bias / validate-normality subcommands; the
// restricted model frees the listed coordinates of the true model.
struct ValidationConfig {
  std::vector<int> free_params = {0};
  int replications = 500;
  long n_shots = 10000;
  std::vector<long> n_sweep = {1000, 10000};
};

struct ExperimentConfig {
  int qubits = 3;
  TrueModelConfig true_model;
  std::vector<ModelConfig> candidate_models;
  long n_shots = 1000;
  int trials = 50;
  int restarts = 5;
  std::vector<CriterionKind> criteria;  // empty = all seven
  std::uint64_t master_seed = 1;
  double rcond = kDefaultRcond;
  std::string output_dir = "out";
  int threads = 1;
  int max_iterations = 500;
  double grad_tol = 1e-8;
  ValidationConfig validation;

  std::vector<CriterionKind> requested_criteria() const;
  void validate() const;
};

// JSON config loading; unknown fields are rejected with the offending name.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);
std::string config_to_json(const ExperimentConfig& config);

// Seed layout. Every stream is derived from (master_seed, purpose) with
// Rng::derive, so trials are independent and reproducible in any order.
std::uint64_t trial_seed(std::uint64_t master_seed, int trial_index);
std::uint64_t truth_seed(std::uint64_t master_seed);

RVector true_theta(const ExperimentConfig& config);
DensityMatrix true_state(const ExperimentConfig& config);

std::string outcomes_digest(std::span<const MeasurementOutcome> outcomes);

struct FitRow {
  std::string model;
  std::string estimator;  // "shadow" or "LL"
  FitResult fit;
};

struct TrialRecord {
  int trial_index = 0;
  std::uint64_t seed = 0;
  std::string digest;
  std::vector<FitRow> fits;
  std::vector<CriterionReport> reports;
  std::vector<std::pair<CriterionKind, std::string>> selected;
  std::vector<std::pair<CriterionKind, std::string>> selected_first;
  bool failed = false;
  std::string failure;
};

// One full pipeline pass: sample, fit every candidate on the same record,
// compute the requested criteria, select per criterion. Deterministic in
// (master_seed, trial_index).
TrialRecord run_trial(const ExperimentConfig& config, int trial_index);

struct ExperimentSummary {
  RVector theta_true;
  int trials = 0;
  int failed = 0;
  std::map<CriterionKind, std::map<std::string, int>> counts;
  std::map<CriterionKind, std::map<std::string, int>> counts_first;
  double runtime_seconds = 0.0;
};

// Runs all trials (optionally in parallel; aggregation is in trial order)
// and writes trials.csv, fits.csv, histogram.csv and summary.json into
// config.output_dir.
ExperimentSummary run_experiment(const ExperimentConfig& config);

struct BiasSweepPoint {
  long n = 0;
  double mc_bias = 0.0;      // control-variate Monte-Carlo estimate
  double mc_se = 0.0;
  double mc_bias_raw = 0.0;  // direct estimate
  double mc_se_raw = 0.0;
};

struct BiasValidationReport {
  std::string family_name;
  int free_params = 0;
  double formula = 0.0;  // tr(I_Q J_Q^-1) at theta0
  long main_n = 0;       // the configured replication sample size
  std::vector<BiasSweepPoint> sweep;

  const BiasSweepPoint& main_point() const;
};

// Monte-Carlo check of the shadow-estimator bias against tr(I_Q J_Q^-1) on
// the restricted realizable model.
BiasValidationReport validate_bias(const ExperimentConfig& config);

struct NormalitySide {
  std::string estimator;
  RMatrix empirical_cov;   // of sqrt(n) (theta_hat - theta0)
  RMatrix formula_cov;     // J^-1 I J^-1 at theta0
  RMatrix ratio;           // entrywise empirical / formula
  RVector mean_deviation;  // mean of theta_hat - theta0
  RVector mean_se;         // standard error of that mean
};

struct NormalityReport {
  std::string family_name;
  long n = 0;
  int replications = 0;
  NormalitySide shadow;
  NormalitySide classical;
};

NormalityReport validate_normality(const ExperimentConfig& config);

// Quick invariant sweep; prints one line per check, returns failure count.
int selfcheck(std::ostream& out);

// --- persistence ---

std::string format_double(double v);  // "%.17g", reproducible bytes

void write_outcomes_csv(const std::string& path, int trial,
                        std::span<const MeasurementOutcome> outcomes);
std::vector<MeasurementOutcome> read_outcomes_csv(const std::string& path);

void write_trials_csv(const std::string& path, std::span<const TrialRecord> records);
void write_fits_csv(const std::string& path, std::span<const TrialRecord> records);
void write_histogram_csv(const std::string& path, std::span<const TrialRecord> records);

std::string trial_fits_to_json(const TrialRecord& record);
std::vector<FitRow> read_fits_json(const std::string& path);

std::string summary_to_json(const ExperimentConfig& config, const ExperimentSummary& summary);
std::string bias_report_to_json(const ExperimentConfig& config, const BiasValidationReport& r);
std::string normality_report_to_json(const ExperimentConfig& config, const NormalityReport& r);

// Recompute criteria from persisted fits and outcomes (CLI `criteria`).
std::vector<CriterionReport> recompute_criteria(const ExperimentConfig& config,
                                                std::span<const FitRow> fits,
                                                std::span<const MeasurementOutcome> outcomes);

}  // namespace qic
