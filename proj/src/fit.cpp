#include "qic/fit.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace qic {

WeightedOutcomes aggregate_outcomes(std::span<const MeasurementOutcome> outcomes) {
  if (outcomes.empty()) {
    throw std::invalid_argument("aggregate_outcomes: empty outcome list");
  }
  const int q = outcomes.front().qubits();
  std::map<std::size_t, double> counts;
  for (const MeasurementOutcome& x : outcomes) {
    if (x.qubits() != q) throw std::invalid_argument("aggregate_outcomes: mixed qubit counts");
    counts[outcome_index(x)] += 1.0;
  }
  WeightedOutcomes out;
  out.outcomes.reserve(counts.size());
  out.weights.reserve(counts.size());
  for (const auto& [idx, count] : counts) {
    out.outcomes.push_back(outcome_from_index(idx, q));
    out.weights.push_back(count);
    out.total += count;
  }
  return out;
}

WeightedOutcomes pmf_as_outcomes(const OutcomePmf& pmf) {
  WeightedOutcomes out;
  for (std::size_t idx = 0; idx < pmf.probs.size(); ++idx) {
    if (pmf.probs[idx] <= 0.0) continue;
    out.outcomes.push_back(outcome_from_index(idx, pmf.qubits));
    out.weights.push_back(pmf.probs[idx]);
    out.total += pmf.probs[idx];
  }
  return out;
}

namespace {

std::vector<CVector> projector_vectors(const WeightedOutcomes& data) {
  std::vector<CVector> vecs;
  vecs.reserve(data.size());
  for (const MeasurementOutcome& x : data.outcomes) {
    vecs.push_back(outcome_projector_vector(x));
  }
  return vecs;
}

double quad_form(const CVector& s, const CMatrix& a) {
  return (s.adjoint() * a * s).value().real();
}

}  // namespace

double loss_ll(const StateFamily& family, const RVector& theta,
               const WeightedOutcomes& data, RVector* grad) {
  if (data.size() == 0) throw std::invalid_argument("loss_ll: no outcomes");
  const std::vector<CVector> vecs = projector_vectors(data);
  const double log_scale = family.qubits() * std::log(3.0);  // tr Pi = 3^-q per element

  const CMatrix sigma = family.state(theta).mat();
  std::vector<HermMatrix> dsigma;
  if (grad != nullptr) {
    dsigma = family.grad_state(theta);
    grad->setZero(family.param_count());
  }

  double value = 0.0;
  for (std::size_t a = 0; a < data.size(); ++a) {
    const double form = quad_form(vecs[a], sigma);
    const double f = form * std::exp(-log_scale);
    if (!(f > 1e-300)) {
      throw std::domain_error("loss_ll: observed outcome has vanishing model probability");
    }
    value -= data.weights[a] * (std::log(form) - log_scale);
    if (grad != nullptr) {
      for (int i = 0; i < family.param_count(); ++i) {
        (*grad)[i] -= data.weights[a] * quad_form(vecs[a], dsigma[i].mat()) / form;
      }
    }
  }
  value /= data.total;
  if (grad != nullptr) *grad /= data.total;
  return value;
}

double loss_shadow(const StateFamily& family, const RVector& theta,
                   const HermMatrix& rho_bar, RVector* grad) {
  const HermMatrix log_sigma = family.log_state(theta);
  if (log_sigma.dim() != rho_bar.dim()) {
    throw std::invalid_argument("loss_shadow: dimension mismatch");
  }
  const double value = -real_trace_product(rho_bar.mat(), log_sigma.mat());
  if (grad != nullptr) {
    const std::vector<HermMatrix> dlog = family.grad_log_state(theta);
    grad->resize(family.param_count());
    for (int i = 0; i < family.param_count(); ++i) {
      (*grad)[i] = -real_trace_product(rho_bar.mat(), dlog[i].mat());
    }
  }
  return value;
}

ObjectiveFn make_ll_objective(const StateFamily& family, const WeightedOutcomes& data) {
  return ObjectiveFn{family.param_count(),
                     [&family, data](const RVector& theta, RVector* grad) {
                       return loss_ll(family, theta, data, grad);
                     }};
}

ObjectiveFn make_shadow_objective(const StateFamily& family, const HermMatrix& rho_bar) {
  // The finite-n mean snapshot is generally not PSD, which makes the shadow
  // loss unbounded below along directions that drive sigma singular. The
  // objective therefore rejects iterates outside the region where sigma is
  // numerically invertible; the loss itself stays exact.
  constexpr double kLogStateBound = 200.0;
  return ObjectiveFn{
      family.param_count(), [&family, rho_bar](const RVector& theta, RVector* grad) {
        const HermMatrix log_sigma = family.log_state(theta);
        if (log_sigma.mat().cwiseAbs().maxCoeff() > kLogStateBound) {
          if (grad != nullptr) grad->setZero(family.param_count());
          return std::numeric_limits<double>::infinity();
        }
        const double value = -real_trace_product(rho_bar.mat(), log_sigma.mat());
        if (grad != nullptr) {
          const std::vector<HermMatrix> dlog = family.grad_log_state(theta);
          grad->resize(family.param_count());
          for (int i = 0; i < family.param_count(); ++i) {
            (*grad)[i] = -real_trace_product(rho_bar.mat(), dlog[i].mat());
          }
        }
        return value;
      }};
}

namespace {

struct RunResult {
  RVector theta;
  double loss = std::numeric_limits<double>::infinity();
  double grad_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool finite = false;
};

RunResult bfgs_run(const ObjectiveFn& objective, RVector x, const OptimizeOptions& opt) {
  const int n = objective.dim;
  constexpr double kArmijoC1 = 1e-4;
  constexpr int kMaxHalvings = 60;

  RunResult res;
  RVector g = RVector::Zero(n);
  double fx = objective.eval(x, &g);
  if (!std::isfinite(fx) || !g.allFinite()) return res;

  RMatrix h_inv = RMatrix::Identity(n, n);
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (g.cwiseAbs().maxCoeff() < opt.grad_tol) {
      res.converged = true;
      break;
    }

    RVector d = -(h_inv * g);
    double gd = g.dot(d);
    if (gd >= -1e-16) {
      h_inv.setIdentity();
      d = -g;
      gd = g.dot(d);
      if (gd >= 0.0) break;  // zero gradient direction, nothing to do
    }

    double alpha = 1.0;
    double f_new = fx;
    RVector x_new;
    RVector g_new(n);
    bool accepted = false;
    for (int ls = 0; ls < kMaxHalvings; ++ls) {
      x_new = x + alpha * d;
      f_new = objective.eval(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= fx + kArmijoC1 * alpha * gd) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;

    f_new = objective.eval(x_new, &g_new);
    if (!std::isfinite(f_new) || !g_new.allFinite()) break;

    const RVector s = x_new - x;
    const RVector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const RVector hy = h_inv * y;
      // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      h_inv -= rho * (s * hy.transpose() + hy * s.transpose());
      h_inv += rho * rho * (y.dot(hy)) * (s * s.transpose());
      h_inv += rho * (s * s.transpose());
    } else {
      h_inv.setIdentity();
    }

    x = std::move(x_new);
    fx = f_new;
    g = std::move(g_new);
  }

  res.theta = std::move(x);
  res.loss = fx;
  res.grad_norm = g.cwiseAbs().maxCoeff();
  res.iterations = it;
  res.finite = std::isfinite(fx);
  return res;
}

}  // namespace

FitResult optimize(const ObjectiveFn& objective, const OptimizeOptions& options) {
  if (objective.dim < 1) throw std::invalid_argument("optimize: dim must be >= 1");

  std::vector<RVector> starts = options.extra_starts;
  Rng rng(options.seed);
  for (int r = 0; r < options.restarts; ++r) {
    RVector x(objective.dim);
    for (int i = 0; i < objective.dim; ++i) {
      x[i] = rng.uniform(options.init_low, options.init_high);
    }
    starts.push_back(std::move(x));
  }
  if (starts.empty()) throw std::invalid_argument("optimize: no starting points");

  // A run that met the gradient tolerance is a genuine stationary point; a
  // run that burned the iteration budget without one is usually riding an
  // unbounded descent direction of the finite-sample loss. Stationary points
  // therefore outrank non-stationary runs regardless of raw loss.
  FitResult best;
  best.loss = std::numeric_limits<double>::infinity();
  bool any_finite = false;
  auto better = [](const RunResult& run, const FitResult& cur, bool cur_valid) {
    if (!cur_valid) return true;
    if (run.converged != cur.converged) return run.converged;
    return run.loss < cur.loss;
  };
  for (const RVector& start : starts) {
    if (start.size() != objective.dim) {
      throw std::invalid_argument("optimize: start vector has wrong length");
    }
    const RunResult run = bfgs_run(objective, start, options);
    ++best.restarts_used;
    if (!run.finite) continue;
    if (better(run, best, any_finite)) {
      best.theta_hat = run.theta;
      best.loss = run.loss;
      best.grad_norm = run.grad_norm;
      best.iterations = run.iterations;
      best.converged = run.converged;
    }
    any_finite = true;
  }
  if (!any_finite) {
    best.error = "all starts diverged to non-finite loss";
  }
  return best;
}

}  // namespace qic
