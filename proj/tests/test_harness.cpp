#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qic/harness.hpp"

using namespace qic;

namespace {

std::string small_config_json(const std::string& out_dir) {
  return R"({
    "qubits": 3,
    "true_model": {"model": "M1"},
    "candidate_models": ["M1", "M2"],
    "n_shots": 200,
    "trials": 4,
    "restarts": 2,
    "criteria": ["QCE_TRUE", "QTIC_SHADOW", "AIC", "CE_TRUE"],
    "master_seed": 424242,
    "output_dir": ")" +
         out_dir + R"(",
    "threads": 2
  })";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("config parsing, defaults and round trip") {
  const ExperimentConfig c = parse_config(small_config_json("/tmp/qic_cfg"));
  CHECK(c.qubits == 3);
  CHECK(c.n_shots == 200);
  CHECK(c.trials == 4);
  CHECK(c.candidate_models.size() == 2);
  CHECK(c.criteria.size() == 4);
  CHECK(c.rcond == kDefaultRcond);

  const ExperimentConfig echo = parse_config(config_to_json(c));
  CHECK(echo.master_seed == c.master_seed);
  CHECK(echo.n_shots == c.n_shots);
  CHECK(echo.criteria == c.criteria);
}

TEST_CASE("unknown config fields are rejected by name") {
  try {
    parse_config(R"({"qubitz": 3})");
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("qubitz") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(R"({"trials": 0})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"criteria": ["BIC"]})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({not json)"), std::invalid_argument);
}

TEST_CASE("structured candidate models parse and build") {
  const std::string text = R"({
    "qubits": 2,
    "true_model": {"model": {"name": "tiny", "nodes": 2,
      "gates": [{"gate": "ry", "qubit": 0, "param": 0},
                {"gate": "cnot", "control": 0, "target": 1}]},
      "params": [0.1, 0.2, 0.3, 0.4]},
    "candidate_models": [{"name": "tiny", "nodes": 2,
      "gates": [{"gate": "ry", "qubit": 0, "param": 0},
                {"gate": "cnot", "control": 0, "target": 1}]}],
    "n_shots": 50, "trials": 1, "master_seed": 5
  })";
  const ExperimentConfig c = parse_config(text);
  const QhbmModel m = c.candidate_models[0].build();
  CHECK(m.param_count() == 4);  // 3 EBM + 1 circuit
  CHECK(m.qubits() == 2);
  CHECK(true_theta(c).size() == 4);
}

TEST_CASE("true theta sources") {
  ExperimentConfig c = parse_config(small_config_json("/tmp/qic_t"));
  const RVector derived = true_theta(c);
  CHECK(derived.size() == 9);
  for (int i = 0; i < 9; ++i) {
    CHECK(derived[i] >= -1.0);
    CHECK(derived[i] <= 1.0);
  }
  // explicit params win
  c.true_model.params = RVector::Ones(9);
  CHECK((true_theta(c) - RVector::Ones(9)).norm() == 0.0);
}

TEST_CASE("seed derivation is deterministic and spread out") {
  CHECK(trial_seed(1, 0) == trial_seed(1, 0));
  CHECK(trial_seed(1, 0) != trial_seed(1, 1));
  CHECK(trial_seed(1, 0) != trial_seed(2, 0));
  CHECK(truth_seed(1) != trial_seed(1, 0));
}

TEST_CASE("run_trial is deterministic and complete") {
  const ExperimentConfig c = parse_config(small_config_json("/tmp/qic_trial"));
  const TrialRecord a = run_trial(c, 1);
  const TrialRecord b = run_trial(c, 1);
  REQUIRE_FALSE(a.failed);
  CHECK(trial_fits_to_json(a) == trial_fits_to_json(b));
  CHECK(a.digest == b.digest);

  // 2 models x (shadow + LL) fits; 4 criteria x 2 models reports
  CHECK(a.fits.size() == 4);
  CHECK(a.reports.size() == 8);
  CHECK(a.selected.size() == 4);
  CHECK(a.selected_first.size() == 4);

  const TrialRecord other = run_trial(c, 2);
  CHECK(other.digest != a.digest);
}

TEST_CASE("experiment outputs, tally conservation and determinism") {
  TempDir dir_a("qic_exp_a");
  TempDir dir_b("qic_exp_b");
  ExperimentConfig c = parse_config(small_config_json(dir_a.path.string()));

  const ExperimentSummary summary = run_experiment(c);
  CHECK(summary.trials == 4);
  for (const auto& [kind, by_model] : summary.counts) {
    int total = summary.failed;
    for (const auto& [model, count] : by_model) total += count;
    CHECK(total == summary.trials);
  }

  for (const char* name : {"trials.csv", "fits.csv", "histogram.csv", "summary.json"}) {
    CHECK(std::filesystem::exists(dir_a.path / name));
  }

  c.output_dir = dir_b.path.string();
  run_experiment(c);
  CHECK(read_file((dir_a.path / "trials.csv").string()) ==
        read_file((dir_b.path / "trials.csv").string()));
  CHECK(read_file((dir_a.path / "fits.csv").string()) ==
        read_file((dir_b.path / "fits.csv").string()));

  // histogram rows are finite and nonnegative
  std::istringstream hist(read_file((dir_a.path / "histogram.csv").string()));
  std::string line;
  std::getline(hist, line);
  int rows = 0;
  while (std::getline(hist, line)) {
    if (line.empty()) continue;
    ++rows;
    const auto last_comma = line.rfind(',');
    const double first_err = std::stod(line.substr(last_comma + 1));
    CHECK(std::isfinite(first_err));
    CHECK(first_err >= 0.0);
  }
  CHECK(rows == 8);  // 4 trials x 2 models
}

TEST_CASE("outcomes csv round trip") {
  TempDir dir("qic_outcomes");
  Rng rng(3);
  const DensityMatrix rho = random_density_matrix(3, rng);
  const auto outcomes = sample_outcomes(rho, 100, 7);
  const std::string path = (dir.path / "outcomes.csv").string();
  write_outcomes_csv(path, 0, outcomes);
  const auto back = read_outcomes_csv(path);
  REQUIRE(back.size() == outcomes.size());
  CHECK(outcomes_digest(back) == outcomes_digest(outcomes));
}

TEST_CASE("fits json round trip and criteria recomputation") {
  TempDir dir("qic_fits");
  const ExperimentConfig c = parse_config(small_config_json(dir.path.string()));
  const TrialRecord rec = run_trial(c, 0);
  REQUIRE_FALSE(rec.failed);

  const std::string fits_path = (dir.path / "fits.json").string();
  {
    std::ofstream out(fits_path);
    out << trial_fits_to_json(rec);
  }
  const auto rows = read_fits_json(fits_path);
  REQUIRE(rows.size() == rec.fits.size());
  CHECK(rows[0].model == rec.fits[0].model);
  CHECK((rows[0].fit.theta_hat - rec.fits[0].fit.theta_hat).norm() == 0.0);

  const auto outcomes =
      sample_outcomes(true_state(c), c.n_shots, Rng::derive(rec.seed, 1));
  const auto reports = recompute_criteria(c, rows, outcomes);
  REQUIRE(reports.size() == rec.reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    bool matched = false;
    for (const CriterionReport& orig : rec.reports) {
      if (orig.kind == reports[i].kind && orig.model_name == reports[i].model_name) {
        CHECK(reports[i].value == doctest::Approx(orig.value).epsilon(1e-12));
        matched = true;
      }
    }
    CHECK(matched);
  }
}

TEST_CASE("selfcheck passes") {
  std::ostringstream sink;
  CHECK(selfcheck(sink) == 0);
}

TEST_CASE("format_double is stable") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
}
