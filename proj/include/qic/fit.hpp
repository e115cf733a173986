#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qic/povm.hpp"
#include "qic/qhbm.hpp"

namespace qic {

// Distinct outcomes with multiplicities. Weights may be counts (empirical
// data) or probabilities (exact-pmf fits); `total` is their sum.
struct WeightedOutcomes {
  std::vector<MeasurementOutcome> outcomes;
  std::vector<double> weights;
  double total = 0.0;

  std::size_t size() const { return outcomes.size(); }
};

WeightedOutcomes aggregate_outcomes(std::span<const MeasurementOutcome> outcomes);
WeightedOutcomes pmf_as_outcomes(const OutcomePmf& pmf);

// -l_LL(theta)/n = -(1/n) sum_x w_x log tr(Pi_x sigma(theta)). Throws when a
// weighted outcome has model probability below 1e-300 (support violation).
double loss_ll(const StateFamily& family, const RVector& theta,
               const WeightedOutcomes& data, RVector* grad);

// -l_shadow(theta)/n = -tr(rho_bar log sigma(theta)) for the mean snapshot.
double loss_shadow(const StateFamily& family, const RVector& theta,
                   const HermMatrix& rho_bar, RVector* grad);

struct ObjectiveFn {
  int dim = 0;
  std::function<double(const RVector&, RVector*)> eval;
};

ObjectiveFn make_ll_objective(const StateFamily& family, const WeightedOutcomes& data);
ObjectiveFn make_shadow_objective(const StateFamily& family, const HermMatrix& rho_bar);

struct OptimizeOptions {
  int restarts = 5;
  int max_iterations = 500;
  double grad_tol = 1e-8;  // infinity norm
  double init_low = -1.0;
  double init_high = 1.0;
  std::uint64_t seed = 0;
  // Evaluated before the random restarts (warm starts); counted in
  // restarts_used.
  std::vector<RVector> extra_starts;
};

struct FitResult {
  RVector theta_hat;
  double loss = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int restarts_used = 0;
  bool converged = false;
  std::string error;  // non-empty when every start diverged

  bool ok() const { return error.empty(); }
};

// BFGS (inverse-Hessian update) with backtracking Armijo line search.
// Restarts run sequentially and the winner is deterministic for a fixed
// seed: converged runs (gradient tolerance met) outrank non-converged ones,
// then lower loss wins, then restart order.
FitResult optimize(const ObjectiveFn& objective, const OptimizeOptions& options);

}  // namespace qic
