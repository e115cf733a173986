#pragma once

#include <optional>
#include <span>
#include <string>

#include "qic/fisher.hpp"

namespace qic {

enum class CriterionKind { AIC, TIC, QAIC_LL, QTIC_SHADOW, QAIC_SHADOW, QCE_TRUE, CE_TRUE };

std::string_view criterion_name(CriterionKind kind);
std::optional<CriterionKind> criterion_from_name(std::string_view name);

inline constexpr double kDefaultRcond = 1e-10;

struct CriterionReport {
  CriterionKind kind = CriterionKind::AIC;
  std::string model_name;
  int model_params = 0;
  long n = 0;
  double value = 0.0;
  double first_term = 0.0;
  double penalty_term = 0.0;
  // value/(2n) for the sample-scaled criteria; the *_TRUE references are
  // already per-sample quantities and report themselves here.
  double normalized_value = 0.0;
  std::optional<int> pinv_rank;
  std::optional<double> pinv_rcond;
  // QAIC_LL omits a model-independent constant; flagged, never computed.
  bool constant_omitted = false;
};

struct PinvResult {
  RMatrix inverse;
  int rank = 0;
  double rcond = 0.0;
};

// SVD-based pseudo-inverse; singular values below rcond * s_max are zeroed.
PinvResult pinv(const RMatrix& m, double rcond = kDefaultRcond);

// AIC = -2 ll + 2p.
CriterionReport aic(double ll, int p, long n, std::string model_name);

// TIC = -2 ll + 2 tr(I J^+).
CriterionReport tic(double ll, const InfoMatrix& info_i, const InfoMatrix& info_j,
                    double rcond, long n, std::string model_name, int model_params);

// QAIC_LL = -2 l_LL + p + tr(J_Q(sigma(theta_C)) I_C(theta_C)^+).
CriterionReport qaic_ll(const StateFamily& family, const RVector& theta_c,
                        const WeightedOutcomes& data, double rcond = kDefaultRcond);
// Penalty assembly shared with the test oracles.
CriterionReport qaic_ll_from_parts(double ll, const InfoMatrix& j_q, const InfoMatrix& i_c,
                                   double rcond, long n, std::string model_name,
                                   int model_params);

// QTIC_shadow = -2 l_shadow + 2 tr(I_Q^emp (J_Q^emp)^+).
CriterionReport qtic_shadow(const StateFamily& family, const RVector& theta_q,
                            std::span<const Snapshot> snapshots,
                            double rcond = kDefaultRcond);

// QAIC_shadow = -2 l_shadow + 2 tr(I_Q (J_Q)^+), model-expectation matrices.
CriterionReport qaic_shadow(const StateFamily& family, const RVector& theta_q,
                            std::span<const Snapshot> snapshots,
                            double rcond = kDefaultRcond);

// -tr(rho log sigma(theta)); simulation-only reference.
CriterionReport qce_true(const DensityMatrix& rho, const StateFamily& family,
                         const RVector& theta, long n);

// -sum_x g(x) log h(x) over the Pauli-6 enumeration. Throws when the model
// assigns zero probability to an outcome the true state can produce.
CriterionReport ce_true(const DensityMatrix& rho, const StateFamily& family,
                        const RVector& theta, long n);

// Argmin by value over reports of one kind; ties within 1e-12 go to fewer
// parameters, then to the lexicographically smaller name.
std::string select_model(std::span<const CriterionReport> reports);
std::string select_model_by_first_term(std::span<const CriterionReport> reports);

}  // namespace qic
