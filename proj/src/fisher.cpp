#include "qic/fisher.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace qic {

namespace {

RMatrix symmetrized(RMatrix m) { return 0.5 * (m + m.transpose().eval()); }

double quad_form(const CVector& s, const CMatrix& a) {
  return (s.adjoint() * a * s).value().real();
}

// Scores v_i(x) = tr(Pi_x dsigma_i)/tr(Pi_x sigma) for one outcome vector.
RVector outcome_score(const CVector& s, const CMatrix& sigma,
                      const std::vector<HermMatrix>& dsigma) {
  const double f = quad_form(s, sigma);
  if (!(f > 1e-300)) {
    throw std::domain_error("fisher: outcome has vanishing model probability");
  }
  RVector v(static_cast<Eigen::Index>(dsigma.size()));
  for (std::size_t i = 0; i < dsigma.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = quad_form(s, dsigma[i].mat()) / f;
  }
  return v;
}

}  // namespace

std::string_view info_kind_name(InfoKind kind) {
  switch (kind) {
    case InfoKind::I_C_emp: return "I_C_emp";
    case InfoKind::J_C_emp: return "J_C_emp";
    case InfoKind::I_C_model: return "I_C_model";
    case InfoKind::J_Q_bkm: return "J_Q_bkm";
    case InfoKind::I_Q_emp: return "I_Q_emp";
    case InfoKind::J_Q_emp: return "J_Q_emp";
    case InfoKind::I_Q_model: return "I_Q_model";
  }
  return "unknown";
}

double InfoMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(m);
  return solver.eigenvalues().minCoeff();
}

double InfoMatrix::condition_number() const {
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(m);
  const RVector abs_ev = solver.eigenvalues().cwiseAbs();
  const double min_ev = abs_ev.minCoeff();
  return min_ev > 0.0 ? abs_ev.maxCoeff() / min_ev
                      : std::numeric_limits<double>::infinity();
}

InfoMatrix classical_I_emp(const StateFamily& family, const RVector& theta,
                           const WeightedOutcomes& data) {
  if (data.size() == 0) throw std::invalid_argument("classical_I_emp: no outcomes");
  const CMatrix sigma = family.state(theta).mat();
  const std::vector<HermMatrix> dsigma = family.grad_state(theta);
  const int p = family.param_count();
  RMatrix acc = RMatrix::Zero(p, p);
  for (std::size_t a = 0; a < data.size(); ++a) {
    const CVector s = outcome_projector_vector(data.outcomes[a]);
    const RVector v = outcome_score(s, sigma, dsigma);
    acc += data.weights[a] * (v * v.transpose());
  }
  return InfoMatrix{InfoKind::I_C_emp, symmetrized(acc / data.total)};
}

InfoMatrix classical_J_emp(const StateFamily& family, const RVector& theta,
                           const WeightedOutcomes& data) {
  if (data.size() == 0) throw std::invalid_argument("classical_J_emp: no outcomes");
  const CMatrix sigma = family.state(theta).mat();
  const std::vector<HermMatrix> dsigma = family.grad_state(theta);
  const HermGrid ddsigma = family.hess_state(theta);
  const int p = family.param_count();
  RMatrix acc = RMatrix::Zero(p, p);
  for (std::size_t a = 0; a < data.size(); ++a) {
    const CVector s = outcome_projector_vector(data.outcomes[a]);
    const double f = quad_form(s, sigma);
    if (!(f > 1e-300)) {
      throw std::domain_error("classical_J_emp: outcome has vanishing model probability");
    }
    const RVector v = outcome_score(s, sigma, dsigma);
    // -d^2 log f = v v^T - (d^2 f)/f
    RMatrix term = v * v.transpose();
    for (int i = 0; i < p; ++i) {
      for (int j = i; j < p; ++j) {
        const double dd = quad_form(s, ddsigma.at(i, j).mat()) / f;
        term(i, j) -= dd;
        if (j != i) term(j, i) -= dd;
      }
    }
    acc += data.weights[a] * term;
  }
  return InfoMatrix{InfoKind::J_C_emp, symmetrized(acc / data.total)};
}

InfoMatrix classical_I_model(const StateFamily& family, const RVector& theta) {
  const int q = family.qubits();
  if (q > kEnumerationMaxQubits) {
    throw std::invalid_argument("classical_I_model: qubit count above enumeration cap");
  }
  const CMatrix sigma = family.state(theta).mat();
  const std::vector<HermMatrix> dsigma = family.grad_state(theta);
  const int p = family.param_count();
  const double scale = std::pow(3.0, -q);
  RMatrix acc = RMatrix::Zero(p, p);
  const std::size_t total = outcome_count(q);
  for (std::size_t idx = 0; idx < total; ++idx) {
    const CVector s = outcome_projector_vector(outcome_from_index(idx, q));
    const double f = quad_form(s, sigma);
    if (f <= 0.0) continue;  // zero-probability outcome contributes nothing
    const RVector v = outcome_score(s, sigma, dsigma);
    acc += (scale * f) * (v * v.transpose());
  }
  return InfoMatrix{InfoKind::I_C_model, symmetrized(acc)};
}

InfoMatrix bkm_J(const StateFamily& family, const RVector& theta, const HermMatrix& state,
                 InfoKind kind) {
  if (std::abs(state.trace_real() - 1.0) > 1e-8) {
    throw std::invalid_argument("bkm_J: state must have unit trace");
  }
  const HermGrid hess = family.hess_log_state(theta);
  const int p = family.param_count();
  RMatrix out(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) {
      const double value = -real_trace_product(state.mat(), hess.at(i, j).mat());
      out(i, j) = value;
      out(j, i) = value;
    }
  }
  return InfoMatrix{kind, std::move(out)};
}

namespace {

// Entries sum_{kl} c(lam_k, lam_l) A_i[k,l] A_j[l,k] with A = V^dag L V.
InfoMatrix bkm_integral_weighted(const StateFamily& family, const RVector& theta,
                                 const std::function<double(double, double)>& weight) {
  const DensityMatrix sigma = family.state(theta);
  const HermEig eig = herm_eig(sigma.herm());
  if (eig.values.minCoeff() < 1e-14) {
    throw std::domain_error("bkm_integral_oracle: sigma is numerically rank deficient");
  }
  const std::vector<HermMatrix> dlog = family.grad_log_state(theta);
  const int p = family.param_count();
  const int dim = sigma.dim();

  std::vector<CMatrix> a(p);
  for (int i = 0; i < p; ++i) {
    a[i] = eig.vectors.adjoint() * dlog[i].mat() * eig.vectors;
  }
  RMatrix out(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) {
      Complex acc = 0.0;
      for (int k = 0; k < dim; ++k) {
        for (int l = 0; l < dim; ++l) {
          acc += weight(eig.values[k], eig.values[l]) * a[i](k, l) * a[j](l, k);
        }
      }
      out(i, j) = acc.real();
      out(j, i) = acc.real();
    }
  }
  return InfoMatrix{InfoKind::J_Q_bkm, std::move(out)};
}

}  // namespace

InfoMatrix bkm_integral_oracle(const StateFamily& family, const RVector& theta) {
  return bkm_integral_weighted(family, theta, [](double lam, double mu) {
    const double d = std::log(lam) - std::log(mu);
    if (std::abs(d) < 1e-12) return 0.5 * (lam + mu);
    return (lam - mu) / d;
  });
}

InfoMatrix bkm_integral_quadrature(const StateFamily& family, const RVector& theta,
                                   int nodes) {
  if (nodes < 1) throw std::invalid_argument("bkm_integral_quadrature: nodes must be >= 1");
  return bkm_integral_weighted(family, theta, [nodes](double lam, double mu) {
    double acc = 0.0;
    for (int m = 0; m < nodes; ++m) {
      const double t = (m + 0.5) / nodes;
      acc += std::pow(lam, t) * std::pow(mu, 1.0 - t);
    }
    return acc / nodes;
  });
}

namespace {

// Per-snapshot trace vectors t_i = tr(rho_hat dlog_i), deduplicated by
// canonical outcome index.
RMatrix snapshot_gram(const StateFamily& family, const RVector& theta,
                      std::span<const Snapshot> snapshots) {
  const std::vector<HermMatrix> dlog = family.grad_log_state(theta);
  const int p = family.param_count();
  RMatrix acc = RMatrix::Zero(p, p);

  std::unordered_map<std::size_t, long> counts;
  for (const Snapshot& s : snapshots) ++counts[outcome_index(s.outcome())];
  const int q = family.qubits();
  for (const auto& [idx, count] : counts) {
    const Snapshot rep(outcome_from_index(idx, q));
    RVector t(p);
    for (int i = 0; i < p; ++i) t[i] = snapshot_trace_with(rep, dlog[i]);
    acc += static_cast<double>(count) * (t * t.transpose());
  }
  return acc / static_cast<double>(snapshots.size());
}

}  // namespace

InfoMatrix shadow_I_emp(const StateFamily& family, const RVector& theta,
                        std::span<const Snapshot> snapshots) {
  if (snapshots.empty()) throw std::invalid_argument("shadow_I_emp: no snapshots");
  return InfoMatrix{InfoKind::I_Q_emp, symmetrized(snapshot_gram(family, theta, snapshots))};
}

InfoMatrix shadow_J_emp(const StateFamily& family, const RVector& theta,
                        std::span<const Snapshot> snapshots) {
  if (snapshots.empty()) throw std::invalid_argument("shadow_J_emp: no snapshots");
  const HermMatrix rho_bar = mean_snapshot(snapshots);
  return bkm_J(family, theta, rho_bar, InfoKind::J_Q_emp);
}

InfoMatrix shadow_I_model(const StateFamily& family, const RVector& theta) {
  const int q = family.qubits();
  if (q > kEnumerationMaxQubits) {
    throw std::invalid_argument("shadow_I_model: qubit count above enumeration cap");
  }
  const CMatrix sigma = family.state(theta).mat();
  const std::vector<HermMatrix> dlog = family.grad_log_state(theta);
  const int p = family.param_count();
  const double scale = std::pow(3.0, -q);
  RMatrix acc = RMatrix::Zero(p, p);
  const std::size_t total = outcome_count(q);
  for (std::size_t idx = 0; idx < total; ++idx) {
    const MeasurementOutcome x = outcome_from_index(idx, q);
    const CVector s = outcome_projector_vector(x);
    const double h = scale * quad_form(s, sigma);
    if (h <= 0.0) continue;
    const Snapshot snap(x);
    RVector t(p);
    for (int i = 0; i < p; ++i) t[i] = snapshot_trace_with(snap, dlog[i]);
    acc += h * (t * t.transpose());
  }
  return InfoMatrix{InfoKind::I_Q_model, symmetrized(acc)};
}

}  // namespace qic
