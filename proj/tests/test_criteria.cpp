#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "qic/criteria.hpp"
#include "test_util.hpp"

using namespace qic;

namespace {

const QhbmFamily& m1_family() {
  static const QhbmFamily fam(QhbmModel::m1());
  return fam;
}

struct FittedInstance {
  RVector theta_q;
  RVector theta_c;
  std::vector<Snapshot> snaps;
  WeightedOutcomes agg;
  DensityMatrix rho;
};

FittedInstance fitted_m1_instance(std::uint64_t seed, long n) {
  Rng rng(seed);
  FittedInstance inst;
  const RVector theta_star = test::random_theta(9, rng);
  inst.rho = m1_family().state(theta_star);
  const auto outcomes = sample_outcomes(inst.rho, n, Rng::derive(seed, 1));
  inst.snaps = make_snapshots(outcomes);
  inst.agg = aggregate_outcomes(outcomes);

  OptimizeOptions opts;
  opts.restarts = 3;
  opts.seed = Rng::derive(seed, 2);
  const HermMatrix rho_bar = mean_snapshot(inst.snaps);
  const FitResult fq = optimize(make_shadow_objective(m1_family(), rho_bar), opts);
  const FitResult fc = optimize(make_ll_objective(m1_family(), inst.agg), opts);
  REQUIRE(fq.ok());
  REQUIRE(fc.ok());
  inst.theta_q = fq.theta_hat;
  inst.theta_c = fc.theta_hat;
  return inst;
}

}  // namespace

TEST_CASE("pinv basics and Moore-Penrose property") {
  const PinvResult id = pinv(RMatrix::Identity(4, 4), 1e-10);
  CHECK(id.rank == 4);
  CHECK((id.inverse - RMatrix::Identity(4, 4)).norm() < 1e-12);

  RMatrix d = RMatrix::Zero(2, 2);
  d(0, 0) = 1.0;
  const PinvResult pd = pinv(d, 1e-10);
  CHECK(pd.rank == 1);
  CHECK((pd.inverse - d).norm() < 1e-12);

  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    RMatrix g(6, 6);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) g(i, j) = rng.normal();
    }
    const RMatrix m = g * g.transpose();
    const PinvResult pm = pinv(m, 1e-10);
    CHECK((m * pm.inverse * m - m).norm() < 1e-8);
  }
}

TEST_CASE("aic arithmetic") {
  CHECK(aic(0.0, 0, 1, "m").value == doctest::Approx(0.0));
  CHECK(aic(-500.0, 9, 1000, "m").value == doctest::Approx(1018.0));
  CHECK(aic(-500.0, 15, 1000, "m").value == doctest::Approx(1030.0));
  const CriterionReport r = aic(-500.0, 9, 1000, "m");
  CHECK(r.value == doctest::Approx(r.first_term + r.penalty_term));
  CHECK(r.normalized_value * 2.0 * 1000.0 == doctest::Approx(r.value));
}

TEST_CASE("tic identity and scaling cases") {
  const InfoMatrix eye{InfoKind::I_C_emp, RMatrix::Identity(5, 5)};
  const CriterionReport t = tic(-100.0, eye, eye, 1e-10, 50, "m", 5);
  CHECK(t.penalty_term == doctest::Approx(10.0));
  CHECK(t.value == doctest::Approx(aic(-100.0, 5, 50, "m").value));

  const InfoMatrix twice{InfoKind::I_C_emp, 2.0 * RMatrix::Identity(5, 5)};
  const CriterionReport t2 = tic(-100.0, twice, eye, 1e-10, 50, "m", 5);
  CHECK(t2.penalty_term == doctest::Approx(20.0));
}

TEST_CASE("tic trace against a solver oracle") {
  Rng rng(5);
  RMatrix gi(6, 6), gj(6, 6);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      gi(i, j) = rng.normal();
      gj(i, j) = rng.normal();
    }
  }
  const RMatrix mi = gi * gi.transpose();
  const RMatrix mj = gj * gj.transpose() + RMatrix::Identity(6, 6);
  const CriterionReport t = tic(0.0, InfoMatrix{InfoKind::I_C_emp, mi},
                                InfoMatrix{InfoKind::J_C_emp, mj}, 1e-12, 10, "m", 6);
  const double solve_trace = mj.ldlt().solve(mi).trace();
  CHECK(t.penalty_term == doctest::Approx(2.0 * solve_trace).epsilon(1e-9));
}

TEST_CASE("qaic_ll penalty equals 2p when J equals I") {
  Rng rng(7);
  RMatrix g(9, 9);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) g(i, j) = rng.normal();
  }
  const RMatrix m = g * g.transpose() + RMatrix::Identity(9, 9);
  const CriterionReport r =
      qaic_ll_from_parts(-50.0, InfoMatrix{InfoKind::J_Q_bkm, m},
                         InfoMatrix{InfoKind::I_C_model, m}, 1e-10, 100, "m", 9);
  CHECK(r.penalty_term == doctest::Approx(18.0).epsilon(1e-9));
  CHECK(r.constant_omitted);
}

TEST_CASE("qaic_ll penalty is bounded below by 2p on fitted instances") {
  const FittedInstance inst = fitted_m1_instance(101, 400);
  const CriterionReport r = qaic_ll(m1_family(), inst.theta_c, inst.agg);
  REQUIRE(r.pinv_rank.has_value());
  if (*r.pinv_rank == 9) {
    CHECK(r.penalty_term >= 2.0 * 9 - 1e-6);
  }
  CHECK(r.value == doctest::Approx(r.first_term + r.penalty_term));
}

TEST_CASE("qtic_shadow handles the n = 1 degenerate case") {
  Rng rng(11);
  const RVector theta = test::random_theta(9, rng);
  std::vector<Snapshot> one = {Snapshot(outcome_from_index(55, 3))};
  const CriterionReport r = qtic_shadow(m1_family(), theta, one);
  CHECK(std::isfinite(r.value));
  REQUIRE(r.pinv_rank.has_value());
  CHECK(r.n == 1);
}

TEST_CASE("qaic_shadow penalty differs from 2p in general") {
  const FittedInstance inst = fitted_m1_instance(103, 400);
  const CriterionReport r = qaic_shadow(m1_family(), inst.theta_q, inst.snaps);
  CHECK(std::isfinite(r.value));
  MESSAGE("qaic_shadow penalty - 2p = ", r.penalty_term - 18.0);
  CHECK(std::abs(r.penalty_term - 18.0) > 1e-9);
}

TEST_CASE("qce_true basics") {
  Rng rng(13);
  const DensityMatrix rho = random_density_matrix(3, rng);
  const CriterionReport flat = qce_true(rho, m1_family(), RVector::Zero(9), 100);
  CHECK(flat.value == doctest::Approx(3.0 * std::log(2.0)));

  // rho equal to the model state: QCE_true reduces to the von Neumann entropy
  const RVector theta = test::random_theta(9, rng);
  const DensityMatrix sigma = m1_family().state(theta);
  const CriterionReport self = qce_true(sigma, m1_family(), theta, 100);
  CHECK(self.value == doctest::Approx(vn_entropy(sigma)).epsilon(1e-9));

  // Klein inequality
  const CriterionReport cross = qce_true(rho, m1_family(), theta, 100);
  CHECK(cross.value >= vn_entropy(rho) - 1e-9);
}

TEST_CASE("ce_true matches a direct enumeration") {
  Rng rng(17);
  const DensityMatrix rho = random_density_matrix(3, rng);
  const RVector theta = test::random_theta(9, rng);
  const CriterionReport r = ce_true(rho, m1_family(), theta, 100);

  const OutcomePmf g = enumerate_pmf(rho);
  const OutcomePmf h = enumerate_pmf(m1_family().state(theta));
  double expected = 0.0;
  for (std::size_t i = 0; i < g.probs.size(); ++i) {
    if (g.probs[i] > 0.0) expected -= g.probs[i] * std::log(h.probs[i]);
  }
  CHECK(r.value == doctest::Approx(expected));
  // cross entropy dominates the self entropy of the true distribution
  double self_entropy = 0.0;
  for (const double p : g.probs) {
    if (p > 0.0) self_entropy -= p * std::log(p);
  }
  CHECK(r.value >= self_entropy - 1e-9);
}

TEST_CASE("select_model picks the smaller value with tie rules") {
  CriterionReport a;
  a.kind = CriterionKind::AIC;
  a.model_name = "A";
  a.model_params = 9;
  a.n = 10;
  a.value = 10.0;
  CriterionReport b = a;
  b.model_name = "B";
  b.model_params = 15;
  b.value = 12.0;
  std::vector<CriterionReport> reports = {a, b};
  CHECK(select_model(reports) == "A");

  b.value = 10.0;  // exact tie: fewer parameters wins
  reports = {b, a};
  CHECK(select_model(reports) == "A");

  b.model_params = 9;  // full tie: name order
  reports = {b, a};
  CHECK(select_model(reports) == "A");

  CriterionReport c = a;
  c.kind = CriterionKind::TIC;
  std::vector<CriterionReport> mixed = {a, c};
  CHECK_THROWS_AS(select_model(mixed), std::invalid_argument);

  std::vector<CriterionReport> single = {a};
  CHECK_THROWS_AS(select_model(single), std::invalid_argument);
}

TEST_CASE("selection is invariant under value vs normalized value") {
  const FittedInstance inst = fitted_m1_instance(107, 300);
  const CriterionReport r = qtic_shadow(m1_family(), inst.theta_q, inst.snaps);
  CHECK(r.normalized_value * 2.0 * static_cast<double>(r.n) ==
        doctest::Approx(r.value).epsilon(1e-12));
}

TEST_CASE("decomposition invariant holds for computed reports") {
  const FittedInstance inst = fitted_m1_instance(109, 300);
  const double ll = -loss_ll(m1_family(), inst.theta_c, inst.agg, nullptr) * inst.agg.total;
  const std::vector<CriterionReport> reports = {
      aic(ll, 9, 300, "M1"),
      qaic_ll(m1_family(), inst.theta_c, inst.agg),
      qtic_shadow(m1_family(), inst.theta_q, inst.snaps),
      qaic_shadow(m1_family(), inst.theta_q, inst.snaps),
  };
  for (const CriterionReport& r : reports) {
    CHECK(r.value == doctest::Approx(r.first_term + r.penalty_term).epsilon(1e-10));
  }
}

TEST_CASE("criterion names round trip") {
  for (const CriterionKind kind :
       {CriterionKind::AIC, CriterionKind::TIC, CriterionKind::QAIC_LL,
        CriterionKind::QTIC_SHADOW, CriterionKind::QAIC_SHADOW, CriterionKind::QCE_TRUE,
        CriterionKind::CE_TRUE}) {
    CHECK(criterion_from_name(criterion_name(kind)) == kind);
  }
  CHECK_FALSE(criterion_from_name("BIC").has_value());
}
