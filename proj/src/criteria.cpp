#include "qic/criteria.hpp"

#include <cmath>
#include <stdexcept>

namespace qic {

namespace {

double trace_product(const RMatrix& a, const RMatrix& b) {
  return a.cwiseProduct(b.transpose()).sum();
}

double normalized(double value, long n) { return value / (2.0 * static_cast<double>(n)); }

std::string select_impl(std::span<const CriterionReport> reports, bool by_first_term) {
  if (reports.size() < 2) {
    throw std::invalid_argument("select_model: need at least two reports");
  }
  const CriterionKind kind = reports.front().kind;
  const long n = reports.front().n;
  for (const CriterionReport& r : reports) {
    if (r.kind != kind) throw std::invalid_argument("select_model: mixed criterion kinds");
    if (r.n != n) throw std::invalid_argument("select_model: mixed sample sizes");
  }
  const CriterionReport* best = &reports.front();
  for (const CriterionReport& r : reports.subspan(1)) {
    const double rv = by_first_term ? r.first_term : r.value;
    const double bv = by_first_term ? best->first_term : best->value;
    if (rv < bv - 1e-12) {
      best = &r;
    } else if (std::abs(rv - bv) <= 1e-12) {
      if (r.model_params < best->model_params ||
          (r.model_params == best->model_params && r.model_name < best->model_name)) {
        best = &r;
      }
    }
  }
  return best->model_name;
}

}  // namespace

std::string_view criterion_name(CriterionKind kind) {
  switch (kind) {
    case CriterionKind::AIC: return "AIC";
    case CriterionKind::TIC: return "TIC";
    case CriterionKind::QAIC_LL: return "QAIC_LL";
    case CriterionKind::QTIC_SHADOW: return "QTIC_SHADOW";
    case CriterionKind::QAIC_SHADOW: return "QAIC_SHADOW";
    case CriterionKind::QCE_TRUE: return "QCE_TRUE";
    case CriterionKind::CE_TRUE: return "CE_TRUE";
  }
  return "unknown";
}

std::optional<CriterionKind> criterion_from_name(std::string_view name) {
  if (name == "AIC") return CriterionKind::AIC;
  if (name == "TIC") return CriterionKind::TIC;
  if (name == "QAIC_LL") return CriterionKind::QAIC_LL;
  if (name == "QTIC_SHADOW") return CriterionKind::QTIC_SHADOW;
  if (name == "QAIC_SHADOW") return CriterionKind::QAIC_SHADOW;
  if (name == "QCE_TRUE") return CriterionKind::QCE_TRUE;
  if (name == "CE_TRUE") return CriterionKind::CE_TRUE;
  return std::nullopt;
}

PinvResult pinv(const RMatrix& m, double rcond) {
  if (m.rows() != m.cols()) throw std::invalid_argument("pinv: matrix must be square");
  Eigen::JacobiSVD<RMatrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const RVector& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rcond * sv.maxCoeff() : 0.0;
  RVector inv_sv = RVector::Zero(sv.size());
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff && sv[i] > 0.0) {
      inv_sv[i] = 1.0 / sv[i];
      ++rank;
    }
  }
  PinvResult out;
  out.inverse = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
  out.rank = rank;
  out.rcond = rcond;
  return out;
}

CriterionReport aic(double ll, int p, long n, std::string model_name) {
  CriterionReport r;
  r.kind = CriterionKind::AIC;
  r.model_name = std::move(model_name);
  r.model_params = p;
  r.n = n;
  r.first_term = -2.0 * ll;
  r.penalty_term = 2.0 * p;
  r.value = r.first_term + r.penalty_term;
  r.normalized_value = normalized(r.value, n);
  return r;
}

CriterionReport tic(double ll, const InfoMatrix& info_i, const InfoMatrix& info_j,
                    double rcond, long n, std::string model_name, int model_params) {
  if (info_i.m.rows() != info_j.m.rows()) {
    throw std::invalid_argument("tic: I and J have different sizes");
  }
  const PinvResult pj = pinv(info_j.m, rcond);
  CriterionReport r;
  r.kind = CriterionKind::TIC;
  r.model_name = std::move(model_name);
  r.model_params = model_params;
  r.n = n;
  r.first_term = -2.0 * ll;
  r.penalty_term = 2.0 * trace_product(info_i.m, pj.inverse);
  r.value = r.first_term + r.penalty_term;
  r.normalized_value = normalized(r.value, n);
  r.pinv_rank = pj.rank;
  r.pinv_rcond = rcond;
  return r;
}

CriterionReport qaic_ll_from_parts(double ll, const InfoMatrix& j_q, const InfoMatrix& i_c,
                                   double rcond, long n, std::string model_name,
                                   int model_params) {
  const PinvResult pi = pinv(i_c.m, rcond);
  CriterionReport r;
  r.kind = CriterionKind::QAIC_LL;
  r.model_name = std::move(model_name);
  r.model_params = model_params;
  r.n = n;
  r.first_term = -2.0 * ll;
  r.penalty_term = model_params + trace_product(j_q.m, pi.inverse);
  r.value = r.first_term + r.penalty_term;
  r.normalized_value = normalized(r.value, n);
  r.pinv_rank = pi.rank;
  r.pinv_rcond = rcond;
  r.constant_omitted = true;
  return r;
}

CriterionReport qaic_ll(const StateFamily& family, const RVector& theta_c,
                        const WeightedOutcomes& data, double rcond) {
  const double per_sample = loss_ll(family, theta_c, data, nullptr);
  const double ll = -per_sample * data.total;
  const InfoMatrix j_q = bkm_J(family, theta_c, family.state(theta_c).herm());
  const InfoMatrix i_c = classical_I_model(family, theta_c);
  return qaic_ll_from_parts(ll, j_q, i_c, rcond, static_cast<long>(data.total),
                            family.name(), family.param_count());
}

CriterionReport qtic_shadow(const StateFamily& family, const RVector& theta_q,
                            std::span<const Snapshot> snapshots, double rcond) {
  if (snapshots.empty()) throw std::invalid_argument("qtic_shadow: no snapshots");
  const long n = static_cast<long>(snapshots.size());
  const HermMatrix rho_bar = mean_snapshot(snapshots);
  const double per_sample = loss_shadow(family, theta_q, rho_bar, nullptr);
  const InfoMatrix i_emp = shadow_I_emp(family, theta_q, snapshots);
  const InfoMatrix j_emp = shadow_J_emp(family, theta_q, snapshots);
  const PinvResult pj = pinv(j_emp.m, rcond);

  CriterionReport r;
  r.kind = CriterionKind::QTIC_SHADOW;
  r.model_name = family.name();
  r.model_params = family.param_count();
  r.n = n;
  r.first_term = 2.0 * static_cast<double>(n) * per_sample;  // = -2 l_shadow
  r.penalty_term = 2.0 * trace_product(i_emp.m, pj.inverse);
  r.value = r.first_term + r.penalty_term;
  r.normalized_value = normalized(r.value, n);
  r.pinv_rank = pj.rank;
  r.pinv_rcond = rcond;
  return r;
}

CriterionReport qaic_shadow(const StateFamily& family, const RVector& theta_q,
                            std::span<const Snapshot> snapshots, double rcond) {
  if (snapshots.empty()) throw std::invalid_argument("qaic_shadow: no snapshots");
  const long n = static_cast<long>(snapshots.size());
  const HermMatrix rho_bar = mean_snapshot(snapshots);
  const double per_sample = loss_shadow(family, theta_q, rho_bar, nullptr);
  const InfoMatrix i_model = shadow_I_model(family, theta_q);
  const InfoMatrix j_bkm = bkm_J(family, theta_q, family.state(theta_q).herm());
  const PinvResult pj = pinv(j_bkm.m, rcond);

  CriterionReport r;
  r.kind = CriterionKind::QAIC_SHADOW;
  r.model_name = family.name();
  r.model_params = family.param_count();
  r.n = n;
  r.first_term = 2.0 * static_cast<double>(n) * per_sample;
  r.penalty_term = 2.0 * trace_product(i_model.m, pj.inverse);
  r.value = r.first_term + r.penalty_term;
  r.normalized_value = normalized(r.value, n);
  r.pinv_rank = pj.rank;
  r.pinv_rcond = rcond;
  return r;
}

CriterionReport qce_true(const DensityMatrix& rho, const StateFamily& family,
                         const RVector& theta, long n) {
  const HermMatrix log_sigma = family.log_state(theta);
  CriterionReport r;
  r.kind = CriterionKind::QCE_TRUE;
  r.model_name = family.name();
  r.model_params = family.param_count();
  r.n = n;
  r.value = -real_trace_product(rho.mat(), log_sigma.mat());
  r.first_term = r.value;
  r.penalty_term = 0.0;
  r.normalized_value = r.value;
  return r;
}

CriterionReport ce_true(const DensityMatrix& rho, const StateFamily& family,
                        const RVector& theta, long n) {
  const OutcomePmf g = enumerate_pmf(rho);
  const OutcomePmf h = enumerate_pmf(family.state(theta));
  double value = 0.0;
  for (std::size_t idx = 0; idx < g.probs.size(); ++idx) {
    if (g.probs[idx] <= 0.0) continue;
    if (h.probs[idx] < 1e-300) {
      throw std::domain_error("ce_true: model assigns zero probability to a supported outcome");
    }
    value -= g.probs[idx] * std::log(h.probs[idx]);
  }
  CriterionReport r;
  r.kind = CriterionKind::CE_TRUE;
  r.model_name = family.name();
  r.model_params = family.param_count();
  r.n = n;
  r.value = value;
  r.first_term = value;
  r.penalty_term = 0.0;
  r.normalized_value = value;
  return r;
}

std::string select_model(std::span<const CriterionReport> reports) {
  return select_impl(reports, false);
}

std::string select_model_by_first_term(std::span<const CriterionReport> reports) {
  return select_impl(reports, true);
}

}  // namespace qic
