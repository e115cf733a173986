#include "qic/qhbm.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qic {

namespace {

constexpr Complex kI{0.0, 1.0};

Eigen::Matrix2cd ry_matrix(double t) {
  Eigen::Matrix2cd m;
  m << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  return m;
}

// -i sigma_y, the generator insertion for d/dt R_y(t).
Eigen::Matrix2cd ry_generator() {
  Eigen::Matrix2cd m;
  m << 0.0, -1.0, 1.0, 0.0;
  return m;
}

CMatrix embed_single(const Eigen::Matrix2cd& g, int qubit, int qubits) {
  std::vector<Eigen::Matrix2cd> factors(qubits, Eigen::Matrix2cd::Identity());
  factors[qubit] = g;
  return kron_factors(factors);
}

CMatrix cnot_matrix(int control, int target, int qubits) {
  const int dim = 1 << qubits;
  CMatrix m = CMatrix::Zero(dim, dim);
  for (int in = 0; in < dim; ++in) {
    int out = in;
    if ((in >> control) & 1) out ^= 1 << target;
    m(out, in) = 1.0;
  }
  return m;
}

void check_theta_length(int expected, const RVector& theta, const char* where) {
  if (theta.size() != expected) {
    std::ostringstream oss;
    oss << where << ": parameter vector length " << theta.size() << ", expected "
        << expected;
    throw std::invalid_argument(oss.str());
  }
}

// Boltzmann data shared by the model operations.
struct EbmEval {
  RVector energies;   // 2^n
  RVector probs;      // e^{-E}/Z
  double log_z = 0.0;
  RMatrix features;   // 2^n x m
  RVector mean_feat;  // m, expectation of each feature under probs
};

EbmEval ebm_eval(const EbmSpec& ebm, const RVector& theta_e) {
  EbmEval ev;
  ev.energies = ebm_energies(ebm, theta_e);
  const double shift = -ev.energies.minCoeff();
  const RVector w = (-ev.energies.array() - shift).exp();
  const double total = w.sum();
  ev.log_z = shift + std::log(total);
  ev.probs = w / total;
  ev.features = ebm_features(ebm);
  ev.mean_feat = ev.features.transpose() * ev.probs;
  return ev;
}

// Gate matrices plus prefix/suffix products; derivative of the unitary with
// respect to any circuit parameter is a sandwich of these.
class CircuitEval {
 public:
  CircuitEval(const CircuitSpec& c, const RVector& theta_c) : spec_(&c) {
    c.validate();
    check_theta_length(c.param_count, theta_c, "circuit_unitary");
    const int dim = 1 << c.qubits;
    const int n_gates = static_cast<int>(c.gates.size());
    gates_.reserve(n_gates);
    param_gate_.assign(c.param_count, -1);
    for (int g = 0; g < n_gates; ++g) {
      const Gate& gate = c.gates[g];
      if (gate.kind == Gate::Kind::Ry) {
        gates_.push_back(embed_single(ry_matrix(theta_c[gate.param]), gate.qubit, c.qubits));
        param_gate_[gate.param] = g;
        generators_.push_back(embed_single(ry_generator(), gate.qubit, c.qubits));
      } else {
        gates_.push_back(cnot_matrix(gate.control, gate.target, c.qubits));
        generators_.emplace_back();
      }
    }
    prefix_.resize(n_gates + 1);
    prefix_[0] = CMatrix::Identity(dim, dim);
    for (int g = 0; g < n_gates; ++g) prefix_[g + 1] = gates_[g] * prefix_[g];
    suffix_.resize(n_gates + 1);
    suffix_[n_gates] = CMatrix::Identity(dim, dim);
    for (int g = n_gates - 1; g >= 0; --g) suffix_[g] = suffix_[g + 1] * gates_[g];
  }

  const CMatrix& unitary() const { return prefix_.back(); }

  CMatrix deriv(int j) const {
    const int g = param_gate_.at(j);
    return suffix_[g + 1] * generators_[g] * gates_[g] * prefix_[g];
  }

  CMatrix deriv2(int j, int k) const {
    if (j == k) return -unitary();
    int a = param_gate_.at(j);
    int b = param_gate_.at(k);
    if (a > b) std::swap(a, b);
    // middle block G_{b-1}...G_{a+1} = prefix[b] prefix[a+1]^dag (unitary).
    const CMatrix middle = prefix_[b] * prefix_[a + 1].adjoint();
    return suffix_[b + 1] * generators_[b] * gates_[b] * middle * generators_[a] *
           gates_[a] * prefix_[a];
  }

 private:
  const CircuitSpec* spec_;
  std::vector<CMatrix> gates_;
  std::vector<CMatrix> generators_;  // only filled for Ry gates
  std::vector<int> param_gate_;
  std::vector<CMatrix> prefix_;  // prefix[g] = G_g ... G_1
  std::vector<CMatrix> suffix_;  // suffix[g] = G_L ... G_{g+1}
};

struct ThetaSplit {
  RVector ebm;
  RVector circuit;
};

ThetaSplit split_theta(const QhbmModel& m, const RVector& theta) {
  check_theta_length(m.param_count(), theta, "QhbmModel");
  return ThetaSplit{theta.head(m.ebm.param_count()), theta.tail(m.circuit.param_count)};
}

}  // namespace

std::vector<std::pair<int, int>> EbmSpec::pairs() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(nodes * (nodes - 1) / 2);
  for (int i = 0; i < nodes; ++i) {
    for (int j = i + 1; j < nodes; ++j) out.emplace_back(i, j);
  }
  return out;
}

void CircuitSpec::validate() const {
  if (qubits < 1) throw std::invalid_argument("CircuitSpec: qubits must be >= 1");
  std::vector<int> used(param_count, 0);
  for (const Gate& g : gates) {
    if (g.kind == Gate::Kind::Ry) {
      if (g.qubit < 0 || g.qubit >= qubits) {
        throw std::invalid_argument("CircuitSpec: Ry qubit out of range");
      }
      if (g.param < 0 || g.param >= param_count) {
        throw std::invalid_argument("CircuitSpec: Ry parameter index out of range");
      }
      ++used[g.param];
    } else {
      if (g.control < 0 || g.control >= qubits || g.target < 0 || g.target >= qubits ||
          g.control == g.target) {
        throw std::invalid_argument("CircuitSpec: bad CNOT qubits");
      }
    }
  }
  for (int k = 0; k < param_count; ++k) {
    if (used[k] != 1) {
      std::ostringstream oss;
      oss << "CircuitSpec: parameter " << k << " used " << used[k] << " times, expected 1";
      throw std::invalid_argument(oss.str());
    }
  }
}

void QhbmModel::validate() const {
  if (ebm.nodes != circuit.qubits) {
    throw std::invalid_argument("QhbmModel: EBM nodes and circuit qubits differ");
  }
  circuit.validate();
}

QhbmModel QhbmModel::m1() {
  QhbmModel m;
  m.name = "M1";
  m.ebm.nodes = 3;
  m.circuit.qubits = 3;
  m.circuit.param_count = 3;
  m.circuit.gates = {Gate::ry(0, 0), Gate::ry(1, 1), Gate::ry(2, 2)};
  return m;
}

QhbmModel QhbmModel::m2() {
  QhbmModel m;
  m.name = "M2";
  m.ebm.nodes = 3;
  m.circuit.qubits = 3;
  m.circuit.param_count = 9;
  m.circuit.gates = {Gate::ry(0, 0), Gate::ry(1, 1), Gate::ry(2, 2),
                     Gate::cnot(0, 1),
                     Gate::ry(0, 3), Gate::ry(1, 4), Gate::ry(2, 5),
                     Gate::cnot(0, 1),
                     Gate::cnot(1, 2),
                     Gate::ry(0, 6), Gate::ry(1, 7), Gate::ry(2, 8),
                     Gate::cnot(1, 2)};
  return m;
}

double ebm_energy(const EbmSpec& ebm, const RVector& theta_e, std::uint32_t x) {
  check_theta_length(ebm.param_count(), theta_e, "ebm_energy");
  double e = 0.0;
  for (int i = 0; i < ebm.nodes; ++i) {
    const double s_i = ((x >> i) & 1) ? -1.0 : 1.0;
    e -= theta_e[i] * s_i;
  }
  int k = ebm.nodes;
  for (int i = 0; i < ebm.nodes; ++i) {
    const double s_i = ((x >> i) & 1) ? -1.0 : 1.0;
    for (int j = i + 1; j < ebm.nodes; ++j, ++k) {
      const double s_j = ((x >> j) & 1) ? -1.0 : 1.0;
      e -= theta_e[k] * s_i * s_j;
    }
  }
  return e;
}

RVector ebm_energies(const EbmSpec& ebm, const RVector& theta_e) {
  check_theta_length(ebm.param_count(), theta_e, "ebm_energies");
  return -(ebm_features(ebm) * theta_e);
}

RMatrix ebm_features(const EbmSpec& ebm) {
  const int dim = 1 << ebm.nodes;
  RMatrix phi(dim, ebm.param_count());
  for (int x = 0; x < dim; ++x) {
    for (int i = 0; i < ebm.nodes; ++i) {
      phi(x, i) = ((x >> i) & 1) ? -1.0 : 1.0;
    }
    int k = ebm.nodes;
    for (int i = 0; i < ebm.nodes; ++i) {
      for (int j = i + 1; j < ebm.nodes; ++j, ++k) {
        phi(x, k) = phi(x, i) * phi(x, j);
      }
    }
  }
  return phi;
}

HermMatrix latent_hamiltonian(const EbmSpec& ebm, const RVector& theta_e) {
  return HermMatrix::diagonal(ebm_energies(ebm, theta_e));
}

double log_partition(const EbmSpec& ebm, const RVector& theta_e) {
  const RVector e = ebm_energies(ebm, theta_e);
  const double shift = -e.minCoeff();
  return shift + std::log(((-e.array() - shift).exp()).sum());
}

CMatrix circuit_unitary(const CircuitSpec& c, const RVector& theta_c) {
  return CircuitEval(c, theta_c).unitary();
}

CMatrix circuit_unitary_deriv(const CircuitSpec& c, const RVector& theta_c, int j) {
  return CircuitEval(c, theta_c).deriv(j);
}

CMatrix circuit_unitary_deriv2(const CircuitSpec& c, const RVector& theta_c, int j, int k) {
  return CircuitEval(c, theta_c).deriv2(j, k);
}

DensityMatrix model_state(const QhbmModel& m, const RVector& theta) {
  const ThetaSplit t = split_theta(m, theta);
  const EbmEval ebm = ebm_eval(m.ebm, t.ebm);
  const CMatrix u = circuit_unitary(m.circuit, t.circuit);
  CMatrix sigma = u * ebm.probs.cast<Complex>().asDiagonal() * u.adjoint();
  return DensityMatrix::from_model(HermMatrix(std::move(sigma)));
}

HermMatrix log_model(const QhbmModel& m, const RVector& theta) {
  const ThetaSplit t = split_theta(m, theta);
  const EbmEval ebm = ebm_eval(m.ebm, t.ebm);
  const CMatrix u = circuit_unitary(m.circuit, t.circuit);
  const int dim = 1 << m.qubits();
  CMatrix out = -(u * ebm.energies.cast<Complex>().asDiagonal() * u.adjoint()) -
                ebm.log_z * CMatrix::Identity(dim, dim);
  return HermMatrix(std::move(out));
}

std::vector<HermMatrix> grad_log_model(const QhbmModel& m, const RVector& theta) {
  const ThetaSplit t = split_theta(m, theta);
  const EbmEval ebm = ebm_eval(m.ebm, t.ebm);
  const CircuitEval circ(m.circuit, t.circuit);
  const CMatrix& u = circ.unitary();
  const int dim = 1 << m.qubits();
  const int pe = m.ebm.param_count();
  const int pc = m.circuit.param_count;

  std::vector<HermMatrix> grad;
  grad.reserve(pe + pc);
  // theta' block: U diag(phi_k) U^dag - <phi_k> I.
  for (int k = 0; k < pe; ++k) {
    const RVector phi_k = ebm.features.col(k);
    CMatrix g = u * phi_k.cast<Complex>().asDiagonal() * u.adjoint() -
                ebm.mean_feat[k] * CMatrix::Identity(dim, dim);
    grad.emplace_back(std::move(g));
  }
  // theta'' block: -(dU) K U^dag - U K (dU)^dag.
  const CMatrix ku = ebm.energies.cast<Complex>().asDiagonal() * u.adjoint();
  for (int j = 0; j < pc; ++j) {
    const CMatrix du = circ.deriv(j);
    CMatrix g = -(du * ku) - (du * ku).adjoint();
    grad.emplace_back(std::move(g));
  }
  return grad;
}

HermGrid hess_log_model(const QhbmModel& m, const RVector& theta) {
  const ThetaSplit t = split_theta(m, theta);
  const EbmEval ebm = ebm_eval(m.ebm, t.ebm);
  const CircuitEval circ(m.circuit, t.circuit);
  const CMatrix& u = circ.unitary();
  const int dim = 1 << m.qubits();
  const int pe = m.ebm.param_count();
  const int pc = m.circuit.param_count;
  const int p = pe + pc;

  HermGrid hess(p, dim);
  const CMatrix identity = CMatrix::Identity(dim, dim);

  // theta' x theta': -Cov(phi_k, phi_l) I.
  for (int k = 0; k < pe; ++k) {
    for (int l = k; l < pe; ++l) {
      const double cov =
          (ebm.probs.array() * ebm.features.col(k).array() * ebm.features.col(l).array())
              .sum() -
          ebm.mean_feat[k] * ebm.mean_feat[l];
      HermMatrix h(-cov * identity);
      hess.at(k, l) = h;
      hess.at(l, k) = std::move(h);
    }
  }

  // theta' x theta'': (dU) diag(phi_k) U^dag + U diag(phi_k) (dU)^dag.
  std::vector<CMatrix> du(pc);
  for (int j = 0; j < pc; ++j) du[j] = circ.deriv(j);
  for (int k = 0; k < pe; ++k) {
    const CMatrix phi_u = ebm.features.col(k).cast<Complex>().asDiagonal() * u.adjoint();
    for (int j = 0; j < pc; ++j) {
      const CMatrix block = du[j] * phi_u;
      HermMatrix h(block + block.adjoint());
      hess.at(k, pe + j) = h;
      hess.at(pe + j, k) = std::move(h);
    }
  }

  // theta'' x theta''.
  const CMatrix ku = ebm.energies.cast<Complex>().asDiagonal() * u.adjoint();
  for (int j = 0; j < pc; ++j) {
    for (int k = j; k < pc; ++k) {
      const CMatrix ddu = circ.deriv2(j, k);
      const CMatrix kduk = ebm.energies.cast<Complex>().asDiagonal() * du[k].adjoint();
      const CMatrix a = ddu * ku;
      const CMatrix b = du[j] * kduk;
      HermMatrix h(-a - a.adjoint() - b - b.adjoint());
      hess.at(pe + j, pe + k) = h;
      hess.at(pe + k, pe + j) = std::move(h);
    }
  }
  return hess;
}

std::vector<HermMatrix> grad_model_state(const QhbmModel& m, const RVector& theta) {
  const ThetaSplit t = split_theta(m, theta);
  const EbmEval ebm = ebm_eval(m.ebm, t.ebm);
  const CircuitEval circ(m.circuit, t.circuit);
  const CMatrix& u = circ.unitary();
  const int pe = m.ebm.param_count();
  const int pc = m.circuit.param_count;

  std::vector<HermMatrix> grad;
  grad.reserve(pe + pc);
  for (int k = 0; k < pe; ++k) {
    // dD = diag(p(x) (phi_k(x) - <phi_k>))
    const RVector dd =
        ebm.probs.array() * (ebm.features.col(k).array() - ebm.mean_feat[k]);
    grad.emplace_back(u * dd.cast<Complex>().asDiagonal() * u.adjoint());
  }
  const CMatrix pu = ebm.probs.cast<Complex>().asDiagonal() * u.adjoint();
  for (int j = 0; j < pc; ++j) {
    const CMatrix block = circ.deriv(j) * pu;
    grad.emplace_back(block + block.adjoint());
  }
  return grad;
}

HermGrid hess_model_state(const QhbmModel& m, const RVector& theta) {
  const ThetaSplit t = split_theta(m, theta);
  const EbmEval ebm = ebm_eval(m.ebm, t.ebm);
  const CircuitEval circ(m.circuit, t.circuit);
  const CMatrix& u = circ.unitary();
  const int dim = 1 << m.qubits();
  const int pe = m.ebm.param_count();
  const int pc = m.circuit.param_count;
  const int p = pe + pc;

  HermGrid hess(p, dim);

  RMatrix centered = ebm.features;
  for (int k = 0; k < pe; ++k) centered.col(k).array() -= ebm.mean_feat[k];

  // theta' x theta'
  for (int k = 0; k < pe; ++k) {
    for (int l = k; l < pe; ++l) {
      const double cov = (ebm.probs.array() * ebm.features.col(k).array() *
                          ebm.features.col(l).array())
                             .sum() -
                         ebm.mean_feat[k] * ebm.mean_feat[l];
      const RVector dd = ebm.probs.array() *
                         (centered.col(k).array() * centered.col(l).array() - cov);
      HermMatrix h(u * dd.cast<Complex>().asDiagonal() * u.adjoint());
      hess.at(k, l) = h;
      hess.at(l, k) = std::move(h);
    }
  }

  std::vector<CMatrix> du(pc);
  for (int j = 0; j < pc; ++j) du[j] = circ.deriv(j);

  // theta' x theta''
  for (int k = 0; k < pe; ++k) {
    const RVector dd = ebm.probs.array() * centered.col(k).array();
    const CMatrix ddu_dag = dd.cast<Complex>().asDiagonal() * u.adjoint();
    for (int j = 0; j < pc; ++j) {
      const CMatrix block = du[j] * ddu_dag;
      HermMatrix h(block + block.adjoint());
      hess.at(k, pe + j) = h;
      hess.at(pe + j, k) = std::move(h);
    }
  }

  // theta'' x theta''
  const CMatrix pu = ebm.probs.cast<Complex>().asDiagonal() * u.adjoint();
  for (int j = 0; j < pc; ++j) {
    for (int k = j; k < pc; ++k) {
      const CMatrix ddu = circ.deriv2(j, k);
      const CMatrix pduk = ebm.probs.cast<Complex>().asDiagonal() * du[k].adjoint();
      const CMatrix a = ddu * pu;
      const CMatrix b = du[j] * pduk;
      HermMatrix h(a + a.adjoint() + b + b.adjoint());
      hess.at(pe + j, pe + k) = h;
      hess.at(pe + k, pe + j) = std::move(h);
    }
  }
  return hess;
}

RVector embed_m1_params_in_m2(const RVector& theta_m1) {
  check_theta_length(9, theta_m1, "embed_m1_params_in_m2");
  RVector out = RVector::Zero(15);
  out.head(6) = theta_m1.head(6);
  out.segment(6, 3) = theta_m1.tail(3);
  return out;
}

QhbmFamily::QhbmFamily(QhbmModel model) : model_(std::move(model)) { model_.validate(); }

DensityMatrix QhbmFamily::state(const RVector& theta) const {
  return model_state(model_, theta);
}
HermMatrix QhbmFamily::log_state(const RVector& theta) const {
  return log_model(model_, theta);
}
std::vector<HermMatrix> QhbmFamily::grad_log_state(const RVector& theta) const {
  return grad_log_model(model_, theta);
}
HermGrid QhbmFamily::hess_log_state(const RVector& theta) const {
  return hess_log_model(model_, theta);
}
std::vector<HermMatrix> QhbmFamily::grad_state(const RVector& theta) const {
  return grad_model_state(model_, theta);
}
HermGrid QhbmFamily::hess_state(const RVector& theta) const {
  return hess_model_state(model_, theta);
}

FrozenFamily::FrozenFamily(const StateFamily& base, RVector theta_base,
                           std::vector<int> free_indices, std::string name)
    : base_(&base),
      theta_base_(std::move(theta_base)),
      free_(std::move(free_indices)),
      name_(std::move(name)) {
  if (theta_base_.size() != base.param_count()) {
    throw std::invalid_argument("FrozenFamily: base point length mismatch");
  }
  for (const int idx : free_) {
    if (idx < 0 || idx >= base.param_count()) {
      throw std::invalid_argument("FrozenFamily: free index out of range");
    }
  }
}

RVector FrozenFamily::expand(const RVector& theta_free) const {
  if (theta_free.size() != static_cast<Eigen::Index>(free_.size())) {
    throw std::invalid_argument("FrozenFamily: free parameter length mismatch");
  }
  RVector full = theta_base_;
  for (std::size_t k = 0; k < free_.size(); ++k) full[free_[k]] = theta_free[k];
  return full;
}

DensityMatrix FrozenFamily::state(const RVector& theta) const {
  return base_->state(expand(theta));
}
HermMatrix FrozenFamily::log_state(const RVector& theta) const {
  return base_->log_state(expand(theta));
}
std::vector<HermMatrix> FrozenFamily::grad_log_state(const RVector& theta) const {
  const std::vector<HermMatrix> full = base_->grad_log_state(expand(theta));
  std::vector<HermMatrix> out;
  out.reserve(free_.size());
  for (const int idx : free_) out.push_back(full[idx]);
  return out;
}
HermGrid FrozenFamily::hess_log_state(const RVector& theta) const {
  const HermGrid full = base_->hess_log_state(expand(theta));
  HermGrid out(param_count(), 1 << qubits());
  for (int i = 0; i < param_count(); ++i) {
    for (int j = 0; j < param_count(); ++j) out.at(i, j) = full.at(free_[i], free_[j]);
  }
  return out;
}
std::vector<HermMatrix> FrozenFamily::grad_state(const RVector& theta) const {
  const std::vector<HermMatrix> full = base_->grad_state(expand(theta));
  std::vector<HermMatrix> out;
  out.reserve(free_.size());
  for (const int idx : free_) out.push_back(full[idx]);
  return out;
}
HermGrid FrozenFamily::hess_state(const RVector& theta) const {
  const HermGrid full = base_->hess_state(expand(theta));
  HermGrid out(param_count(), 1 << qubits());
  for (int i = 0; i < param_count(); ++i) {
    for (int j = 0; j < param_count(); ++j) out.at(i, j) = full.at(free_[i], free_[j]);
  }
  return out;
}

}  // namespace qic
