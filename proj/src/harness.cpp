#include "qic/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace qic {

namespace {

using nlohmann::json;

constexpr std::uint64_t kTruthTag = 0x54525554480ULL;
constexpr std::uint64_t kTrialBase = 0x10000ULL;
constexpr std::uint64_t kBiasTag = 0xB1A5ULL;
constexpr std::uint64_t kNormalityTag = 0x401AULL;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::invalid_argument("config: unknown field \"" + item.key() + "\" in " +
                                  context);
    }
  }
}

QhbmModel parse_custom_model(const json& j) {
  check_keys(j, {"name", "nodes", "gates"}, "candidate model");
  QhbmModel m;
  m.name = j.at("name").get<std::string>();
  m.ebm.nodes = j.at("nodes").get<int>();
  m.circuit.qubits = m.ebm.nodes;
  int max_param = -1;
  for (const json& gj : j.at("gates")) {
    check_keys(gj, {"gate", "qubit", "param", "control", "target"}, "gate");
    const std::string kind = gj.at("gate").get<std::string>();
    if (kind == "ry") {
      const int param = gj.at("param").get<int>();
      m.circuit.gates.push_back(Gate::ry(gj.at("qubit").get<int>(), param));
      max_param = std::max(max_param, param);
    } else if (kind == "cnot") {
      m.circuit.gates.push_back(
          Gate::cnot(gj.at("control").get<int>(), gj.at("target").get<int>()));
    } else {
      throw std::invalid_argument("config: unknown gate kind \"" + kind + "\"");
    }
  }
  m.circuit.param_count = max_param + 1;
  m.validate();
  return m;
}

ModelConfig parse_model_config(const json& j) {
  ModelConfig mc;
  if (j.is_string()) {
    mc.name = j.get<std::string>();
  } else {
    mc.custom = parse_custom_model(j);
    mc.name = mc.custom->name;
  }
  return mc;
}

json model_config_to_json(const ModelConfig& mc) {
  if (!mc.custom) return json(mc.name);
  json gates = json::array();
  for (const Gate& g : mc.custom->circuit.gates) {
    if (g.kind == Gate::Kind::Ry) {
      gates.push_back({{"gate", "ry"}, {"qubit", g.qubit}, {"param", g.param}});
    } else {
      gates.push_back({{"gate", "cnot"}, {"control", g.control}, {"target", g.target}});
    }
  }
  return json{{"name", mc.name}, {"nodes", mc.custom->ebm.nodes}, {"gates", gates}};
}

bool structurally_equal(const QhbmModel& a, const QhbmModel& b) {
  if (a.ebm.nodes != b.ebm.nodes || a.circuit.param_count != b.circuit.param_count ||
      a.circuit.gates.size() != b.circuit.gates.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.circuit.gates.size(); ++i) {
    const Gate& ga = a.circuit.gates[i];
    const Gate& gb = b.circuit.gates[i];
    if (ga.kind != gb.kind || ga.qubit != gb.qubit || ga.param != gb.param ||
        ga.control != gb.control || ga.target != gb.target) {
      return false;
    }
  }
  return true;
}

bool is_builtin_m1(const QhbmModel& m) { return structurally_equal(m, QhbmModel::m1()); }
bool is_builtin_m2(const QhbmModel& m) { return structurally_equal(m, QhbmModel::m2()); }

std::vector<CriterionKind> all_criteria() {
  return {CriterionKind::AIC,         CriterionKind::TIC,
          CriterionKind::QAIC_LL,     CriterionKind::QTIC_SHADOW,
          CriterionKind::QAIC_SHADOW, CriterionKind::QCE_TRUE,
          CriterionKind::CE_TRUE};
}

RVector gather(const RVector& full, const std::vector<int>& idx) {
  RVector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = full[idx[i]];
  return out;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  const double n = static_cast<double>(xs.size());
  for (const double x : xs) out.mean += x;
  out.mean /= n;
  double var = 0.0;
  for (const double x : xs) var += (x - out.mean) * (x - out.mean);
  var /= (n - 1.0);
  out.se = std::sqrt(var / n);
  return out;
}

}  // namespace

QhbmModel ModelConfig::build() const {
  if (custom) return *custom;
  if (name == "M1") return QhbmModel::m1();
  if (name == "M2") return QhbmModel::m2();
  throw std::invalid_argument("config: unknown model name \"" + name + "\"");
}

std::vector<CriterionKind> ExperimentConfig::requested_criteria() const {
  if (criteria.empty()) return all_criteria();
  return criteria;
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw std::invalid_argument("config: trials must be >= 1");
  if (n_shots < 1) throw std::invalid_argument("config: n_shots must be >= 1");
  if (candidate_models.empty()) {
    throw std::invalid_argument("config: candidate_models must be non-empty");
  }
  if (restarts < 0) throw std::invalid_argument("config: restarts must be >= 0");
  const QhbmModel tm = true_model.model.build();
  if (tm.qubits() != qubits) {
    throw std::invalid_argument("config: true model qubit count differs from qubits");
  }
  for (const ModelConfig& mc : candidate_models) {
    if (mc.build().qubits() != qubits) {
      throw std::invalid_argument("config: candidate model \"" + mc.name +
                                  "\" qubit count differs from qubits");
    }
  }
  if (true_model.params && true_model.params->size() != tm.param_count()) {
    throw std::invalid_argument("config: true_model params length mismatch");
  }
  for (const int idx : validation.free_params) {
    if (idx < 0 || idx >= tm.param_count()) {
      throw std::invalid_argument("config: validation free_params index out of range");
    }
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
  }
  check_keys(j,
             {"qubits", "true_model", "candidate_models", "n_shots", "trials", "restarts",
              "criteria", "master_seed", "rcond", "output_dir", "threads",
              "max_iterations", "grad_tol", "validation"},
             "top level");
  ExperimentConfig c;
  if (j.contains("qubits")) c.qubits = j["qubits"].get<int>();
  if (j.contains("n_shots")) c.n_shots = j["n_shots"].get<long>();
  if (j.contains("trials")) c.trials = j["trials"].get<int>();
  if (j.contains("restarts")) c.restarts = j["restarts"].get<int>();
  if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<std::uint64_t>();
  if (j.contains("rcond")) c.rcond = j["rcond"].get<double>();
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("threads")) c.threads = j["threads"].get<int>();
  if (j.contains("max_iterations")) c.max_iterations = j["max_iterations"].get<int>();
  if (j.contains("grad_tol")) c.grad_tol = j["grad_tol"].get<double>();

  if (j.contains("true_model")) {
    const json& tm = j["true_model"];
    check_keys(tm, {"model", "params", "random"}, "true_model");
    c.true_model.model = parse_model_config(tm.at("model"));
    if (tm.contains("params")) {
      const auto vals = tm["params"].get<std::vector<double>>();
      c.true_model.params = Eigen::Map<const RVector>(vals.data(), vals.size());
    }
    if (tm.contains("random")) {
      const json& r = tm["random"];
      check_keys(r, {"seed", "range"}, "true_model.random");
      if (r.contains("seed")) c.true_model.random_seed = r["seed"].get<std::uint64_t>();
      if (r.contains("range")) c.true_model.random_range = r["range"].get<double>();
    }
  } else {
    c.true_model.model.name = "M1";
  }

  if (j.contains("candidate_models")) {
    for (const json& mj : j["candidate_models"]) {
      c.candidate_models.push_back(parse_model_config(mj));
    }
  } else {
    c.candidate_models = {ModelConfig{"M1", std::nullopt}, ModelConfig{"M2", std::nullopt}};
  }

  if (j.contains("criteria")) {
    for (const json& kj : j["criteria"]) {
      const std::string name = kj.get<std::string>();
      const auto kind = criterion_from_name(name);
      if (!kind) throw std::invalid_argument("config: unknown criterion \"" + name + "\"");
      c.criteria.push_back(*kind);
    }
  }

  if (j.contains("validation")) {
    const json& v = j["validation"];
    check_keys(v, {"free_params", "replications", "n_shots", "n_sweep"}, "validation");
    if (v.contains("free_params")) {
      c.validation.free_params = v["free_params"].get<std::vector<int>>();
    }
    if (v.contains("replications")) c.validation.replications = v["replications"].get<int>();
    if (v.contains("n_shots")) c.validation.n_shots = v["n_shots"].get<long>();
    if (v.contains("n_sweep")) c.validation.n_sweep = v["n_sweep"].get<std::vector<long>>();
  }

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open \"" + path + "\"");
  std::ostringstream oss;
  oss << in.rdbuf();
  return parse_config(oss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json tm;
  tm["model"] = model_config_to_json(c.true_model.model);
  if (c.true_model.params) {
    tm["params"] = std::vector<double>(c.true_model.params->data(),
                                       c.true_model.params->data() + c.true_model.params->size());
  }
  if (c.true_model.random_seed || c.true_model.random_range != 1.0) {
    json r;
    if (c.true_model.random_seed) r["seed"] = *c.true_model.random_seed;
    r["range"] = c.true_model.random_range;
    tm["random"] = r;
  }
  json models = json::array();
  for (const ModelConfig& mc : c.candidate_models) models.push_back(model_config_to_json(mc));
  json kinds = json::array();
  for (const CriterionKind k : c.requested_criteria()) kinds.push_back(criterion_name(k));
  json v{{"free_params", c.validation.free_params},
         {"replications", c.validation.replications},
         {"n_shots", c.validation.n_shots},
         {"n_sweep", c.validation.n_sweep}};
  json out{{"qubits", c.qubits},
           {"true_model", tm},
           {"candidate_models", models},
           {"n_shots", c.n_shots},
           {"trials", c.trials},
           {"restarts", c.restarts},
           {"criteria", kinds},
           {"master_seed", c.master_seed},
           {"rcond", c.rcond},
           {"output_dir", c.output_dir},
           {"threads", c.threads},
           {"max_iterations", c.max_iterations},
           {"grad_tol", c.grad_tol},
           {"validation", v}};
  return out.dump(2);
}

std::uint64_t trial_seed(std::uint64_t master_seed, int trial_index) {
  return Rng::derive(master_seed, kTrialBase + static_cast<std::uint64_t>(trial_index));
}

std::uint64_t truth_seed(std::uint64_t master_seed) {
  return Rng::derive(master_seed, kTruthTag);
}

RVector true_theta(const ExperimentConfig& config) {
  const QhbmModel tm = config.true_model.model.build();
  if (config.true_model.params) return *config.true_model.params;
  const std::uint64_t seed = config.true_model.random_seed
                                 ? *config.true_model.random_seed
                                 : truth_seed(config.master_seed);
  Rng rng(seed);
  RVector theta(tm.param_count());
  const double range = config.true_model.random_range;
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = rng.uniform(-range, range);
  return theta;
}

DensityMatrix true_state(const ExperimentConfig& config) {
  return model_state(config.true_model.model.build(), true_theta(config));
}

std::string outcomes_digest(std::span<const MeasurementOutcome> outcomes) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto feed = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const MeasurementOutcome& x : outcomes) {
    for (int j = 0; j < x.qubits(); ++j) {
      feed(static_cast<unsigned char>(basis_char(x.bases[j])));
      feed(static_cast<unsigned char>('0' + x.bits[j]));
    }
    feed('\n');
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

namespace {

bool kind_requested(const std::vector<CriterionKind>& kinds, CriterionKind k) {
  return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
}

}  // namespace

TrialRecord run_trial(const ExperimentConfig& config, int trial_index) {
  TrialRecord rec;
  rec.trial_index = trial_index;
  rec.seed = trial_seed(config.master_seed, trial_index);
  try {
    const DensityMatrix rho = true_state(config);
    const std::vector<MeasurementOutcome> outcomes =
        sample_outcomes(rho, config.n_shots, Rng::derive(rec.seed, 1));
    rec.digest = outcomes_digest(outcomes);
    const WeightedOutcomes agg = aggregate_outcomes(outcomes);
    const std::vector<Snapshot> snaps = make_snapshots(outcomes);
    const HermMatrix rho_bar = mean_snapshot(snaps);

    const std::vector<CriterionKind> kinds = config.requested_criteria();
    const bool need_shadow = kind_requested(kinds, CriterionKind::QTIC_SHADOW) ||
                             kind_requested(kinds, CriterionKind::QAIC_SHADOW) ||
                             kind_requested(kinds, CriterionKind::QCE_TRUE);
    const bool need_ll = kind_requested(kinds, CriterionKind::AIC) ||
                         kind_requested(kinds, CriterionKind::TIC) ||
                         kind_requested(kinds, CriterionKind::QAIC_LL) ||
                         kind_requested(kinds, CriterionKind::CE_TRUE);

    std::vector<QhbmFamily> families;
    families.reserve(config.candidate_models.size());
    for (const ModelConfig& mc : config.candidate_models) families.emplace_back(mc.build());
    const int n_models = static_cast<int>(families.size());

    OptimizeOptions base_opts;
    base_opts.restarts = config.restarts;
    base_opts.max_iterations = config.max_iterations;
    base_opts.grad_tol = config.grad_tol;

    auto fit_one = [&](const QhbmFamily& fam, bool shadow, std::uint64_t seed) {
      OptimizeOptions opts = base_opts;
      opts.seed = seed;
      const ObjectiveFn obj =
          shadow ? make_shadow_objective(fam, rho_bar) : make_ll_objective(fam, agg);
      return optimize(obj, opts);
    };

    std::vector<FitResult> shadow_fits(n_models);
    std::vector<FitResult> ll_fits(n_models);
    for (int mi = 0; mi < n_models; ++mi) {
      if (need_shadow) {
        shadow_fits[mi] = fit_one(families[mi], true, Rng::derive(rec.seed, 100 + mi));
      }
      if (need_ll) {
        ll_fits[mi] = fit_one(families[mi], false, Rng::derive(rec.seed, 200 + mi));
      }
    }

    // Nested models: the smaller model's optimum embeds into the larger one,
    // so refine the larger fit from that warm start and keep the better of
    // the two. This enforces the monotonicity min loss(M2) <= min loss(M1).
    for (int a = 0; a < n_models; ++a) {
      if (!is_builtin_m1(families[a].model())) continue;
      for (int b = 0; b < n_models; ++b) {
        if (a == b || !is_builtin_m2(families[b].model())) continue;
        auto refine = [&](std::vector<FitResult>& fits, bool shadow) {
          if (!fits[a].ok() || !fits[b].ok()) return;
          OptimizeOptions opts = base_opts;
          opts.restarts = 0;
          opts.extra_starts = {embed_m1_params_in_m2(fits[a].theta_hat)};
          const ObjectiveFn obj = shadow ? make_shadow_objective(families[b], rho_bar)
                                         : make_ll_objective(families[b], agg);
          FitResult warm = optimize(obj, opts);
          const int used = fits[b].restarts_used + warm.restarts_used;
          if (warm.ok() && warm.loss < fits[b].loss) fits[b] = std::move(warm);
          fits[b].restarts_used = used;
        };
        if (need_shadow) refine(shadow_fits, true);
        if (need_ll) refine(ll_fits, false);
      }
    }

    for (int mi = 0; mi < n_models; ++mi) {
      if (need_shadow) {
        if (!shadow_fits[mi].ok()) {
          throw std::runtime_error("shadow fit failed for " + families[mi].name() + ": " +
                                   shadow_fits[mi].error);
        }
        rec.fits.push_back(FitRow{families[mi].name(), "shadow", shadow_fits[mi]});
      }
      if (need_ll) {
        if (!ll_fits[mi].ok()) {
          throw std::runtime_error("LL fit failed for " + families[mi].name() + ": " +
                                   ll_fits[mi].error);
        }
        rec.fits.push_back(FitRow{families[mi].name(), "LL", ll_fits[mi]});
      }
    }

    for (const CriterionKind kind : kinds) {
      std::vector<CriterionReport> kind_reports;
      kind_reports.reserve(n_models);
      for (int mi = 0; mi < n_models; ++mi) {
        const QhbmFamily& fam = families[mi];
        CriterionReport rep;
        switch (kind) {
          case CriterionKind::AIC: {
            const double ll = -loss_ll(fam, ll_fits[mi].theta_hat, agg, nullptr) * agg.total;
            rep = aic(ll, fam.param_count(), config.n_shots, fam.name());
            break;
          }
          case CriterionKind::TIC: {
            const double ll = -loss_ll(fam, ll_fits[mi].theta_hat, agg, nullptr) * agg.total;
            const InfoMatrix info_i = classical_I_emp(fam, ll_fits[mi].theta_hat, agg);
            const InfoMatrix info_j = classical_J_emp(fam, ll_fits[mi].theta_hat, agg);
            rep = tic(ll, info_i, info_j, config.rcond, config.n_shots, fam.name(),
                      fam.param_count());
            break;
          }
          case CriterionKind::QAIC_LL:
            rep = qaic_ll(fam, ll_fits[mi].theta_hat, agg, config.rcond);
            break;
          case CriterionKind::QTIC_SHADOW:
            rep = qtic_shadow(fam, shadow_fits[mi].theta_hat, snaps, config.rcond);
            break;
          case CriterionKind::QAIC_SHADOW:
            rep = qaic_shadow(fam, shadow_fits[mi].theta_hat, snaps, config.rcond);
            break;
          case CriterionKind::QCE_TRUE:
            rep = qce_true(rho, fam, shadow_fits[mi].theta_hat, config.n_shots);
            break;
          case CriterionKind::CE_TRUE:
            rep = ce_true(rho, fam, ll_fits[mi].theta_hat, config.n_shots);
            break;
        }
        kind_reports.push_back(std::move(rep));
      }
      for (const CriterionReport& r : kind_reports) rec.reports.push_back(r);
      if (n_models >= 2) {
        rec.selected.emplace_back(kind, select_model(kind_reports));
        rec.selected_first.emplace_back(kind, select_model_by_first_term(kind_reports));
      }
    }
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.failure = e.what();
    rec.fits.clear();
    rec.reports.clear();
    rec.selected.clear();
    rec.selected_first.clear();
  }
  return rec;
}

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  std::vector<TrialRecord> records(config.trials);
  const int threads = std::max(1, config.threads);
  if (threads == 1 || config.trials == 1) {
    for (int t = 0; t < config.trials; ++t) records[t] = run_trial(config, t);
  } else {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (;;) {
        const int t = next.fetch_add(1);
        if (t >= config.trials) break;
        records[t] = run_trial(config, t);
      }
    };
    std::vector<std::thread> pool;
    const int extra = std::min(threads, config.trials) - 1;
    pool.reserve(extra);
    for (int i = 0; i < extra; ++i) pool.emplace_back(worker);
    worker();
    for (std::thread& th : pool) th.join();
  }

  ExperimentSummary summary;
  summary.theta_true = true_theta(config);
  summary.trials = config.trials;
  for (const TrialRecord& rec : records) {
    if (rec.failed) {
      ++summary.failed;
      continue;
    }
    for (const auto& [kind, name] : rec.selected) ++summary.counts[kind][name];
    for (const auto& [kind, name] : rec.selected_first) ++summary.counts_first[kind][name];
  }
  summary.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::filesystem::create_directories(config.output_dir);
  const std::string dir = config.output_dir;
  write_trials_csv(dir + "/trials.csv", records);
  write_fits_csv(dir + "/fits.csv", records);
  write_histogram_csv(dir + "/histogram.csv", records);
  std::ofstream out(dir + "/summary.json");
  out << summary_to_json(config, summary) << "\n";
  return summary;
}

const BiasSweepPoint& BiasValidationReport::main_point() const {
  for (const BiasSweepPoint& p : sweep) {
    if (p.n == main_n) return p;
  }
  return sweep.back();
}

BiasValidationReport validate_bias(const ExperimentConfig& config) {
  const QhbmModel true_model = config.true_model.model.build();
  const QhbmFamily base(true_model);
  const RVector theta0 = true_theta(config);
  const ValidationConfig& vc = config.validation;
  const FrozenFamily frozen(base, theta0, vc.free_params, base.name() + "-restricted");
  const RVector theta0_free = gather(theta0, vc.free_params);
  const DensityMatrix rho = base.state(theta0);  // realizable by construction

  const InfoMatrix i_q = shadow_I_model(frozen, theta0_free);
  const InfoMatrix j_q = bkm_J(frozen, theta0_free, rho.herm());

  BiasValidationReport report;
  report.family_name = frozen.name();
  report.free_params = frozen.param_count();
  report.formula = (i_q.m * pinv(j_q.m, config.rcond).inverse).trace();
  report.main_n = vc.n_shots;

  std::vector<long> ns = vc.n_sweep;
  if (std::find(ns.begin(), ns.end(), vc.n_shots) == ns.end()) ns.push_back(vc.n_shots);
  std::sort(ns.begin(), ns.end());

  const HermMatrix log_sigma0 = frozen.log_state(theta0_free);
  const double eta0 = real_trace_product(rho.mat(), log_sigma0.mat());

  OptimizeOptions opts;
  opts.restarts = 0;
  opts.max_iterations = config.max_iterations;
  opts.grad_tol = config.grad_tol;
  opts.extra_starts = {theta0_free};

  for (std::size_t si = 0; si < ns.size(); ++si) {
    const long n = ns[si];
    const double dn = static_cast<double>(n);
    std::vector<double> raw;
    std::vector<double> cv;
    raw.reserve(vc.replications);
    cv.reserve(vc.replications);
    for (int rep = 0; rep < vc.replications; ++rep) {
      const std::uint64_t seed =
          Rng::derive(Rng::derive(config.master_seed, kBiasTag + si), rep);
      const std::vector<MeasurementOutcome> outcomes = sample_outcomes(rho, n, seed);
      const std::vector<Snapshot> snaps = make_snapshots(outcomes);
      const HermMatrix rho_bar = mean_snapshot(snaps);

      const FitResult fit = optimize(make_shadow_objective(frozen, rho_bar), opts);
      if (!fit.ok()) throw std::runtime_error("validate_bias: fit diverged");

      const double l_hat = -dn * loss_shadow(frozen, fit.theta_hat, rho_bar, nullptr);
      const double eta_hat =
          real_trace_product(rho.mat(), frozen.log_state(fit.theta_hat).mat());
      const double raw_rep = l_hat - dn * eta_hat;
      // l_shadow(theta0) - n eta(theta0) has exact mean zero (snapshots are
      // unbiased), so subtracting it removes the dominant noise term.
      const double l_0 = dn * real_trace_product(rho_bar.mat(), log_sigma0.mat());
      const double cv_rep = raw_rep - (l_0 - dn * eta0);
      raw.push_back(raw_rep);
      cv.push_back(cv_rep);
    }
    const MeanSe m_raw = mean_se(raw);
    const MeanSe m_cv = mean_se(cv);
    BiasSweepPoint point;
    point.n = n;
    point.mc_bias = m_cv.mean;
    point.mc_se = m_cv.se;
    point.mc_bias_raw = m_raw.mean;
    point.mc_se_raw = m_raw.se;
    report.sweep.push_back(point);
  }
  return report;
}

NormalityReport validate_normality(const ExperimentConfig& config) {
  const QhbmModel true_model = config.true_model.model.build();
  const QhbmFamily base(true_model);
  const RVector theta0 = true_theta(config);
  const ValidationConfig& vc = config.validation;
  const FrozenFamily frozen(base, theta0, vc.free_params, base.name() + "-restricted");
  const RVector theta0_free = gather(theta0, vc.free_params);
  const DensityMatrix rho = base.state(theta0);
  const int p = frozen.param_count();
  const long n = vc.n_shots;
  const double dn = static_cast<double>(n);

  NormalityReport report;
  report.family_name = frozen.name();
  report.n = n;
  report.replications = vc.replications;
  report.shadow.estimator = "shadow";
  report.classical.estimator = "LL";

  {
    const RMatrix i_q = shadow_I_model(frozen, theta0_free).m;
    const RMatrix j_q = bkm_J(frozen, theta0_free, rho.herm()).m;
    const RMatrix j_inv = j_q.inverse();
    report.shadow.formula_cov = j_inv * i_q * j_inv.transpose();
  }
  {
    // realizable case: J_C(theta0) = I_C(theta0)
    const RMatrix i_c = classical_I_model(frozen, theta0_free).m;
    report.classical.formula_cov = i_c.inverse();
  }

  OptimizeOptions opts;
  opts.restarts = 0;
  opts.max_iterations = config.max_iterations;
  opts.grad_tol = config.grad_tol;
  opts.extra_starts = {theta0_free};

  RMatrix devs_q(vc.replications, p);
  RMatrix devs_c(vc.replications, p);
  for (int rep = 0; rep < vc.replications; ++rep) {
    const std::uint64_t seed =
        Rng::derive(Rng::derive(config.master_seed, kNormalityTag), rep);
    const std::vector<MeasurementOutcome> outcomes = sample_outcomes(rho, n, seed);
    const std::vector<Snapshot> snaps = make_snapshots(outcomes);
    const HermMatrix rho_bar = mean_snapshot(snaps);
    const WeightedOutcomes agg = aggregate_outcomes(outcomes);

    const FitResult fq = optimize(make_shadow_objective(frozen, rho_bar), opts);
    const FitResult fc = optimize(make_ll_objective(frozen, agg), opts);
    if (!fq.ok() || !fc.ok()) throw std::runtime_error("validate_normality: fit diverged");
    devs_q.row(rep) = (fq.theta_hat - theta0_free).transpose();
    devs_c.row(rep) = (fc.theta_hat - theta0_free).transpose();
  }

  auto fill_side = [&](NormalitySide& side, const RMatrix& devs) {
    const RVector mean = devs.colwise().mean();
    RMatrix centered = devs.rowwise() - mean.transpose();
    side.empirical_cov =
        dn * (centered.transpose() * centered) / static_cast<double>(vc.replications - 1);
    side.ratio = side.empirical_cov.cwiseQuotient(side.formula_cov);
    side.mean_deviation = mean;
    side.mean_se = (centered.cwiseProduct(centered).colwise().sum() /
                    static_cast<double>(vc.replications - 1) /
                    static_cast<double>(vc.replications))
                       .cwiseSqrt();
  };
  fill_side(report.shadow, devs_q);
  fill_side(report.classical, devs_c);
  return report;
}

// --- persistence ---

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

void write_outcomes_csv(const std::string& path, int trial,
                        std::span<const MeasurementOutcome> outcomes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "trial,shot,bases,bits\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    out << trial << ',' << i << ',' << outcomes[i].bases_string() << ','
        << outcomes[i].bits_string() << '\n';
  }
}

std::vector<MeasurementOutcome> read_outcomes_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<MeasurementOutcome> outcomes;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');  // trial
    std::getline(ss, field, ',');  // shot
    std::string bases;
    std::getline(ss, bases, ',');
    std::string bits;
    std::getline(ss, bits, ',');
    if (bases.size() != bits.size() || bases.empty()) {
      throw std::runtime_error("outcomes csv: malformed row \"" + line + "\"");
    }
    MeasurementOutcome x;
    for (std::size_t j = 0; j < bases.size(); ++j) {
      x.bases.push_back(basis_from_char(bases[j]));
      if (bits[j] != '0' && bits[j] != '1') {
        throw std::runtime_error("outcomes csv: bad bit in row \"" + line + "\"");
      }
      x.bits.push_back(bits[j] == '1' ? 1 : 0);
    }
    outcomes.push_back(std::move(x));
  }
  return outcomes;
}

void write_trials_csv(const std::string& path, std::span<const TrialRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "trial,model,kind,value,first_term,penalty_term,normalized_value,pinv_rank\n";
  for (const TrialRecord& rec : records) {
    for (const CriterionReport& r : rec.reports) {
      out << rec.trial_index << ',' << r.model_name << ',' << criterion_name(r.kind) << ','
          << format_double(r.value) << ',' << format_double(r.first_term) << ','
          << format_double(r.penalty_term) << ',' << format_double(r.normalized_value)
          << ',';
      if (r.pinv_rank) out << *r.pinv_rank;
      out << '\n';
    }
  }
}

void write_fits_csv(const std::string& path, std::span<const TrialRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "trial,model,estimator_kind,theta_hat,loss,grad_norm,iterations,restarts_used,"
         "converged\n";
  for (const TrialRecord& rec : records) {
    for (const FitRow& row : rec.fits) {
      out << rec.trial_index << ',' << row.model << ',' << row.estimator << ',';
      for (Eigen::Index i = 0; i < row.fit.theta_hat.size(); ++i) {
        if (i > 0) out << ';';
        out << format_double(row.fit.theta_hat[i]);
      }
      out << ',' << format_double(row.fit.loss) << ',' << format_double(row.fit.grad_norm)
          << ',' << row.fit.iterations << ',' << row.fit.restarts_used << ','
          << (row.fit.converged ? 1 : 0) << '\n';
    }
  }
}

void write_histogram_csv(const std::string& path, std::span<const TrialRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "trial,model,qtic_err,first_term_err\n";
  for (const TrialRecord& rec : records) {
    if (rec.failed) continue;
    for (const CriterionReport& qtic : rec.reports) {
      if (qtic.kind != CriterionKind::QTIC_SHADOW) continue;
      for (const CriterionReport& qce : rec.reports) {
        if (qce.kind != CriterionKind::QCE_TRUE || qce.model_name != qtic.model_name) {
          continue;
        }
        const double n2 = 2.0 * static_cast<double>(qtic.n);
        out << rec.trial_index << ',' << qtic.model_name << ','
            << format_double(std::abs(qtic.normalized_value - qce.value)) << ','
            << format_double(std::abs(qtic.first_term / n2 - qce.value)) << '\n';
      }
    }
  }
}

namespace {

json fit_row_to_json(const FitRow& row) {
  return json{{"model", row.model},
              {"estimator", row.estimator},
              {"theta_hat", std::vector<double>(row.fit.theta_hat.data(),
                                                row.fit.theta_hat.data() +
                                                    row.fit.theta_hat.size())},
              {"loss", row.fit.loss},
              {"grad_norm", row.fit.grad_norm},
              {"iterations", row.fit.iterations},
              {"restarts_used", row.fit.restarts_used},
              {"converged", row.fit.converged}};
}

json counts_to_json(const std::map<CriterionKind, std::map<std::string, int>>& counts) {
  json out = json::object();
  for (const auto& [kind, by_model] : counts) {
    json entry = json::object();
    for (const auto& [model, count] : by_model) entry[model] = count;
    out[std::string(criterion_name(kind))] = entry;
  }
  return out;
}

}  // namespace

std::string trial_fits_to_json(const TrialRecord& record) {
  json fits = json::array();
  for (const FitRow& row : record.fits) fits.push_back(fit_row_to_json(row));
  json out{{"trial", record.trial_index},
           {"seed", record.seed},
           {"outcomes_digest", record.digest},
           {"failed", record.failed},
           {"fits", fits}};
  if (record.failed) out["failure"] = record.failure;
  return out.dump(2);
}

std::vector<FitRow> read_fits_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j = json::parse(in);
  std::vector<FitRow> rows;
  for (const json& fj : j.at("fits")) {
    FitRow row;
    row.model = fj.at("model").get<std::string>();
    row.estimator = fj.at("estimator").get<std::string>();
    const auto theta = fj.at("theta_hat").get<std::vector<double>>();
    row.fit.theta_hat = Eigen::Map<const RVector>(theta.data(), theta.size());
    row.fit.loss = fj.at("loss").get<double>();
    row.fit.grad_norm = fj.at("grad_norm").get<double>();
    row.fit.iterations = fj.at("iterations").get<int>();
    row.fit.restarts_used = fj.at("restarts_used").get<int>();
    row.fit.converged = fj.at("converged").get<bool>();
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string summary_to_json(const ExperimentConfig& config, const ExperimentSummary& summary) {
  json out;
  out["config"] = json::parse(config_to_json(config));
  out["theta_true"] = std::vector<double>(summary.theta_true.data(),
                                          summary.theta_true.data() + summary.theta_true.size());
  out["trials"] = summary.trials;
  out["failed_trials"] = summary.failed;
  out["selection_counts"] = counts_to_json(summary.counts);
  out["first_term_selection_counts"] = counts_to_json(summary.counts_first);
  out["runtime_seconds"] = summary.runtime_seconds;
  out["rng_algorithm"] = std::string(Rng::kAlgorithm);
  out["seed_scheme"] =
      "trial_seed = derive(master_seed, 0x10000 + trial); outcome stream = "
      "derive(trial_seed, 1); fit streams = derive(trial_seed, 100/200 + model_index)";
  return out.dump(2);
}

std::string bias_report_to_json(const ExperimentConfig& config,
                                const BiasValidationReport& r) {
  json sweep = json::array();
  for (const BiasSweepPoint& p : r.sweep) {
    sweep.push_back({{"n", p.n},
                     {"mc_bias", p.mc_bias},
                     {"mc_se", p.mc_se},
                     {"mc_bias_raw", p.mc_bias_raw},
                     {"mc_se_raw", p.mc_se_raw}});
  }
  json out{{"family", r.family_name},
           {"free_params", r.free_params},
           {"formula_trace", r.formula},
           {"main_n", r.main_n},
           {"replications", config.validation.replications},
           {"sweep", sweep}};
  return out.dump(2);
}

namespace {

json side_to_json(const NormalitySide& s) {
  auto mat = [](const RMatrix& m) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      rows.emplace_back(m.row(i).data(), m.row(i).data() + m.cols());
    }
    return rows;
  };
  return json{{"estimator", s.estimator},
              {"empirical_cov", mat(s.empirical_cov)},
              {"formula_cov", mat(s.formula_cov)},
              {"ratio", mat(s.ratio)},
              {"mean_deviation",
               std::vector<double>(s.mean_deviation.data(),
                                   s.mean_deviation.data() + s.mean_deviation.size())},
              {"mean_se", std::vector<double>(s.mean_se.data(),
                                              s.mean_se.data() + s.mean_se.size())}};
}

}  // namespace

std::string normality_report_to_json(const ExperimentConfig& config,
                                     const NormalityReport& r) {
  json out{{"family", r.family_name},
           {"n", r.n},
           {"replications", r.replications},
           {"shadow", side_to_json(r.shadow)},
           {"classical", side_to_json(r.classical)}};
  (void)config;
  return out.dump(2);
}

int selfcheck(std::ostream& out) {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    out << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
    if (!ok) ++failures;
  };

  Rng rng(20240817);

  {
    const DensityMatrix rho = random_density_matrix(3, rng);
    const HermEig eig = herm_eig(rho.herm());
    const CMatrix rebuilt =
        eig.vectors * eig.values.cast<Complex>().asDiagonal() * eig.vectors.adjoint();
    check("herm_eig reconstruction", (rebuilt - rho.mat()).norm() < 1e-10);
    check("herm_eig unitarity",
          (eig.vectors.adjoint() * eig.vectors - CMatrix::Identity(8, 8)).norm() < 1e-10);
  }

  for (int q = 1; q <= 3; ++q) {
    CMatrix sum = CMatrix::Zero(1 << q, 1 << q);
    for (std::size_t idx = 0; idx < outcome_count(q); ++idx) {
      sum += povm_element(outcome_from_index(idx, q)).mat();
    }
    std::string name = "POVM completeness q=" + std::to_string(q);
    check(name.c_str(), (sum - CMatrix::Identity(1 << q, 1 << q)).cwiseAbs().maxCoeff() < 1e-12);
  }

  {
    bool spectra_ok = true;
    for (int b = 0; b < 3; ++b) {
      for (int bit = 0; bit < 2; ++bit) {
        const Eigen::Matrix2cd f = snapshot_factor(static_cast<PauliBasis>(b), bit);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(f);
        spectra_ok = spectra_ok && std::abs(es.eigenvalues()[0] + 1.0) < 1e-12 &&
                     std::abs(es.eigenvalues()[1] - 2.0) < 1e-12;
      }
    }
    check("snapshot factor spectrum {2,-1}", spectra_ok);
  }

  {
    const DensityMatrix rho = random_density_matrix(2, rng);
    const auto outcomes = sample_outcomes(rho, 20000, 11);
    const auto snaps = make_snapshots(outcomes);
    const HermMatrix mean = mean_snapshot(snaps);
    check("snapshot unbiasedness (n=2e4, q=2)", (mean.mat() - rho.mat()).norm() < 0.06);
    const auto outcomes2 = sample_outcomes(rho, 100, 42);
    const auto outcomes3 = sample_outcomes(rho, 100, 42);
    bool same = true;
    for (std::size_t i = 0; i < outcomes2.size(); ++i) {
      same = same && outcome_index(outcomes2[i]) == outcome_index(outcomes3[i]);
    }
    check("sampling seed determinism", same);
  }

  {
    const QhbmFamily fam(QhbmModel::m1());
    RVector theta(9);
    for (int i = 0; i < 9; ++i) theta[i] = rng.uniform(-1.0, 1.0);
    const DensityMatrix sigma = fam.state(theta);
    check("model state trace", std::abs(sigma.mat().trace().real() - 1.0) < 1e-10);
    const auto dlog = fam.grad_log_state(theta);
    double max_score = 0.0;
    for (const HermMatrix& g : dlog) {
      max_score = std::max(max_score, std::abs(real_trace_product(sigma.mat(), g.mat())));
    }
    check("score identity tr(sigma dlog sigma) = 0", max_score < 1e-9);

    const HermMatrix direct = herm_log(sigma.herm());
    check("analytic log vs eigen log", (direct.mat() - fam.log_state(theta).mat()).norm() < 1e-9);

    const InfoMatrix j_bkm = bkm_J(fam, theta, sigma.herm());
    const InfoMatrix j_int = bkm_integral_oracle(fam, theta);
    check("BKM hessian vs integral form", (j_bkm.m - j_int.m).cwiseAbs().maxCoeff() < 1e-7);

    const InfoMatrix i_c = classical_I_model(fam, theta);
    Eigen::SelfAdjointEigenSolver<RMatrix> gap(j_bkm.m - i_c.m);
    check("quantum >= classical Fisher", gap.eigenvalues().minCoeff() > -1e-8);
  }

  {
    RMatrix m = RMatrix::Random(5, 5);
    m = (m * m.transpose()).eval();
    const PinvResult pi = pinv(m, 1e-10);
    check("pinv Moore-Penrose", (m * pi.inverse * m - m).norm() < 1e-8);
    InfoMatrix identity{InfoKind::I_C_emp, RMatrix::Identity(4, 4)};
    const CriterionReport t = tic(-10.0, identity, identity, 1e-10, 100, "m", 4);
    const CriterionReport a = aic(-10.0, 4, 100, "m");
    check("TIC collapses to AIC at I=J", std::abs(t.value - a.value) < 1e-9);
  }

  return failures;
}

std::vector<CriterionReport> recompute_criteria(const ExperimentConfig& config,
                                                std::span<const FitRow> fits,
                                                std::span<const MeasurementOutcome> outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("recompute_criteria: no outcomes");
  const WeightedOutcomes agg = aggregate_outcomes(outcomes);
  const std::vector<Snapshot> snaps = make_snapshots(outcomes);
  const long n = static_cast<long>(outcomes.size());
  const DensityMatrix rho = true_state(config);

  std::vector<CriterionReport> reports;
  for (const ModelConfig& mc : config.candidate_models) {
    const QhbmFamily fam(mc.build());
    const FitRow* shadow_row = nullptr;
    const FitRow* ll_row = nullptr;
    for (const FitRow& row : fits) {
      if (row.model != fam.name()) continue;
      if (row.estimator == "shadow") shadow_row = &row;
      if (row.estimator == "LL") ll_row = &row;
    }
    for (const CriterionKind kind : config.requested_criteria()) {
      const bool wants_shadow = kind == CriterionKind::QTIC_SHADOW ||
                                kind == CriterionKind::QAIC_SHADOW ||
                                kind == CriterionKind::QCE_TRUE;
      if (wants_shadow && shadow_row == nullptr) continue;
      if (!wants_shadow && ll_row == nullptr) continue;
      switch (kind) {
        case CriterionKind::AIC: {
          const double ll = -loss_ll(fam, ll_row->fit.theta_hat, agg, nullptr) * agg.total;
          reports.push_back(aic(ll, fam.param_count(), n, fam.name()));
          break;
        }
        case CriterionKind::TIC: {
          const double ll = -loss_ll(fam, ll_row->fit.theta_hat, agg, nullptr) * agg.total;
          reports.push_back(tic(ll, classical_I_emp(fam, ll_row->fit.theta_hat, agg),
                                classical_J_emp(fam, ll_row->fit.theta_hat, agg),
                                config.rcond, n, fam.name(), fam.param_count()));
          break;
        }
        case CriterionKind::QAIC_LL:
          reports.push_back(qaic_ll(fam, ll_row->fit.theta_hat, agg, config.rcond));
          break;
        case CriterionKind::QTIC_SHADOW:
          reports.push_back(qtic_shadow(fam, shadow_row->fit.theta_hat, snaps, config.rcond));
          break;
        case CriterionKind::QAIC_SHADOW:
          reports.push_back(qaic_shadow(fam, shadow_row->fit.theta_hat, snaps, config.rcond));
          break;
        case CriterionKind::QCE_TRUE:
          reports.push_back(qce_true(rho, fam, shadow_row->fit.theta_hat, n));
          break;
        case CriterionKind::CE_TRUE:
          reports.push_back(ce_true(rho, fam, ll_row->fit.theta_hat, n));
          break;
      }
    }
  }
  if (reports.empty()) {
    throw std::invalid_argument("recompute_criteria: no matching fits for requested criteria");
  }
  return reports;
}

}  // namespace qic
