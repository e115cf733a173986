#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "qic/shadow.hpp"
#include "test_util.hpp"

using namespace qic;

TEST_CASE("single-qubit snapshots match the inversion formula") {
  const Snapshot z0(MeasurementOutcome{{PauliBasis::Z}, {0}});
  const CMatrix mz = z0.materialized().mat();
  CHECK(mz(0, 0).real() == doctest::Approx(2.0));
  CHECK(mz(1, 1).real() == doctest::Approx(-1.0));
  CHECK(std::abs(mz(0, 1)) < 1e-15);

  const Snapshot x0(MeasurementOutcome{{PauliBasis::X}, {0}});
  const CMatrix mx = x0.materialized().mat();
  CHECK(mx(0, 0).real() == doctest::Approx(0.5));
  CHECK(mx(0, 1).real() == doctest::Approx(1.5));
  CHECK(mx(1, 0).real() == doctest::Approx(1.5));
  CHECK(mx(1, 1).real() == doctest::Approx(0.5));
}

TEST_CASE("per-qubit factor spectrum is {2, -1} and trace 1") {
  for (int b = 0; b < 3; ++b) {
    for (int bit = 0; bit < 2; ++bit) {
      const Eigen::Matrix2cd f = snapshot_factor(static_cast<PauliBasis>(b), bit);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(f);
      CHECK(es.eigenvalues()[0] == doctest::Approx(-1.0));
      CHECK(es.eigenvalues()[1] == doctest::Approx(2.0));
      CHECK(f.trace().real() == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("materialized snapshots have unit trace for every qubit count") {
  Rng rng(3);
  for (int q = 1; q <= 3; ++q) {
    for (int rep = 0; rep < 10; ++rep) {
      const std::size_t idx =
          static_cast<std::size_t>(rng.uniform_int(static_cast<int>(outcome_count(q))));
      const Snapshot s(outcome_from_index(idx, q));
      CHECK(s.materialized().trace_real() == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("mean_snapshot edge cases") {
  const Snapshot s(MeasurementOutcome{{PauliBasis::Y, PauliBasis::Z}, {1, 0}});
  std::vector<Snapshot> one = {s};
  CHECK(test::max_abs(mean_snapshot(one).mat() - s.materialized().mat()) < 1e-14);

  std::vector<Snapshot> two = {s, s};
  CHECK(test::max_abs(mean_snapshot(two).mat() - s.materialized().mat()) < 1e-14);

  std::vector<Snapshot> empty;
  CHECK_THROWS_AS(mean_snapshot(empty), std::invalid_argument);
}

TEST_CASE("mean snapshot converges to the state (unbiasedness)") {
  Rng rng(5);
  const DensityMatrix rho = random_density_matrix(2, rng);
  const auto outcomes = sample_outcomes(rho, 100000, 606);
  const auto snaps = make_snapshots(outcomes);
  const HermMatrix mean = mean_snapshot(snaps);
  CHECK((mean.mat() - rho.mat()).norm() < 0.02);
  CHECK(mean.trace_real() == doctest::Approx(1.0));
}

TEST_CASE("snapshot_trace_with examples") {
  const Snapshot z0(MeasurementOutcome{{PauliBasis::Z}, {0}});
  CMatrix z(2, 2);
  z << 1.0, 0.0, 0.0, -1.0;
  CHECK(snapshot_trace_with(z0, HermMatrix(z)) == doctest::Approx(3.0));
  CHECK(snapshot_trace_with(z0, HermMatrix::identity(2)) == doctest::Approx(1.0));

  CHECK_THROWS_AS(snapshot_trace_with(z0, HermMatrix::identity(4)), std::invalid_argument);
}

TEST_CASE("snapshot traces are unbiased for observables") {
  Rng rng(7);
  const DensityMatrix rho = random_density_matrix(2, rng);
  const HermMatrix obs = test::random_hermitian(4, rng);
  const double truth = real_trace_product(rho.mat(), obs.mat());

  const long n = 100000;
  const auto snaps = make_snapshots(sample_outcomes(rho, n, 99));
  double mean = 0.0;
  double sq = 0.0;
  for (const Snapshot& s : snaps) {
    const double t = snapshot_trace_with(s, obs);
    mean += t;
    sq += t * t;
  }
  mean /= static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  const double se = std::sqrt(var / static_cast<double>(n));
  CHECK(std::abs(mean - truth) < 3.0 * se);
}

TEST_CASE("snapshot probability equals the POVM probability") {
  Rng rng(11);
  const DensityMatrix rho = random_density_matrix(2, rng);
  const OutcomePmf pmf = enumerate_pmf(rho);
  // P(bases, bits) = 3^-q <s|rho|s> must equal tr(Pi_x rho) entry by entry,
  // and the snapshot average weighted by it must reproduce rho.
  CMatrix recon = CMatrix::Zero(4, 4);
  for (std::size_t idx = 0; idx < pmf.probs.size(); ++idx) {
    const MeasurementOutcome x = outcome_from_index(idx, 2);
    const double povm_prob = real_trace_product(povm_element(x).mat(), rho.mat());
    CHECK(povm_prob == doctest::Approx(pmf.probs[idx]).epsilon(1e-10));
    recon += pmf.probs[idx] * Snapshot(x).materialized().mat();
  }
  CHECK(test::max_abs(recon - rho.mat()) < 1e-12);
}

TEST_CASE("unbiasedness improves with n for q in {1,2,3}") {
  Rng rng(13);
  for (int q = 1; q <= 3; ++q) {
    const DensityMatrix rho = random_density_matrix(q, rng);
    double prev = 1e9;
    const long n_final = 100000;
    for (const long n : {1000L, n_final}) {
      const auto snaps = make_snapshots(sample_outcomes(rho, n, 17 + q));
      const double err = (mean_snapshot(snaps).mat() - rho.mat()).norm();
      CHECK(err < prev);
      prev = err;
    }
    // noise floor: E err^2 = (5^q - tr rho^2)/n, allow 50% headroom
    const double floor = std::sqrt(std::pow(5.0, q) / static_cast<double>(n_final));
    CHECK(prev < 1.5 * floor);
  }
}
