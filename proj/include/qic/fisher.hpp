#pragma once

#include <span>

#include "qic/fit.hpp"
#include "qic/qhbm.hpp"
#include "qic/shadow.hpp"

namespace qic {

enum class InfoKind { I_C_emp, J_C_emp, I_C_model, J_Q_bkm, I_Q_emp, J_Q_emp, I_Q_model };

std::string_view info_kind_name(InfoKind kind);

// Real symmetric p x p information matrix. The I_* kinds are Gram matrices
// and PSD up to roundoff; J_Q_emp can be indefinite because the mean
// snapshot it contracts against is not PSD at finite n.
struct InfoMatrix {
  InfoKind kind = InfoKind::I_C_emp;
  RMatrix m;

  double min_eigenvalue() const;
  double condition_number() const;
};

// Empirical score outer products / negative likelihood Hessians for the
// classical model f(x|theta) = tr(Pi_x sigma(theta)).
InfoMatrix classical_I_emp(const StateFamily& family, const RVector& theta,
                           const WeightedOutcomes& data);
InfoMatrix classical_J_emp(const StateFamily& family, const RVector& theta,
                           const WeightedOutcomes& data);

// Exact expectation of the score outer product under h(x) = tr(Pi_x sigma).
InfoMatrix classical_I_model(const StateFamily& family, const RVector& theta);

// Entries -tr(state d^2 log sigma / dtheta_i dtheta_j). With state =
// sigma(theta) this is the Bogoliubov-Kubo-Mori metric.
InfoMatrix bkm_J(const StateFamily& family, const RVector& theta, const HermMatrix& state,
                 InfoKind kind = InfoKind::J_Q_bkm);

// Closed form of the metric integral int_0^1 tr(sigma^t L_i sigma^{1-t} L_j) dt
// in the eigenbasis of sigma: weight (lam_k - lam_l)/(log lam_k - log lam_l),
// diagonal weight lam_k.
InfoMatrix bkm_integral_oracle(const StateFamily& family, const RVector& theta);

// Midpoint-rule evaluation of the same integral (test oracle).
InfoMatrix bkm_integral_quadrature(const StateFamily& family, const RVector& theta,
                                   int nodes);

// Shadow-side estimators: per-snapshot trace products, and the Hessian
// contraction against the mean snapshot.
InfoMatrix shadow_I_emp(const StateFamily& family, const RVector& theta,
                        std::span<const Snapshot> snapshots);
InfoMatrix shadow_J_emp(const StateFamily& family, const RVector& theta,
                        std::span<const Snapshot> snapshots);

// Exact expectation of snapshot trace products over all 6^q outcomes,
// weighted by tr(Pi_x sigma(theta)).
InfoMatrix shadow_I_model(const StateFamily& family, const RVector& theta);

}  // namespace qic
