#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qic/qcore.hpp"

namespace qic {

// Fully-connected visible Boltzmann machine over `nodes` spins. Parameter
// block theta': biases a_i first, then pair weights w_ij in lexicographic
// (i<j) order. Spins s_i = 1 - 2 x_i (bit 0 -> +1), and
//   E(x) = -(sum_i a_i s_i + sum_{i<j} w_ij s_i s_j).
struct EbmSpec {
  int nodes = 0;

  int param_count() const { return nodes + nodes * (nodes - 1) / 2; }
  std::vector<std::pair<int, int>> pairs() const;
};

struct Gate {
  enum class Kind { Ry, Cnot };
  Kind kind = Kind::Ry;
  int qubit = -1;    // Ry target
  int param = -1;    // Ry parameter index
  int control = -1;  // Cnot
  int target = -1;   // Cnot

  static Gate ry(int qubit, int param) {
    Gate g;
    g.kind = Kind::Ry;
    g.qubit = qubit;
    g.param = param;
    return g;
  }
  static Gate cnot(int control, int target) {
    Gate g;
    g.kind = Kind::Cnot;
    g.control = control;
    g.target = target;
    return g;
  }
};

// Gate list applied left to right; R_y(t) = exp(-i t sigma_y), no half-angle.
struct CircuitSpec {
  int qubits = 0;
  int param_count = 0;
  std::vector<Gate> gates;

  void validate() const;
};

// sigma(theta) = U(theta'') exp(-K_{theta'}) U(theta'')^dag / Z_{theta'}.
// Parameter layout: theta' block (EBM) first, theta'' block (circuit) second.
struct QhbmModel {
  std::string name;
  EbmSpec ebm;
  CircuitSpec circuit;

  int qubits() const { return ebm.nodes; }
  int param_count() const { return ebm.param_count() + circuit.param_count; }
  void validate() const;

  static QhbmModel m1();
  static QhbmModel m2();
};

// p x p grid of Hermitian matrices (second derivatives of log sigma etc.).
class HermGrid {
 public:
  HermGrid() = default;
  HermGrid(int p, int dim)
      : p_(p), data_(static_cast<std::size_t>(p) * p, HermMatrix::zero(dim)) {}

  int size() const { return p_; }
  HermMatrix& at(int i, int j) { return data_[static_cast<std::size_t>(i) * p_ + j]; }
  const HermMatrix& at(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * p_ + j];
  }

 private:
  int p_ = 0;
  std::vector<HermMatrix> data_;
};

// --- EBM operations ---

double ebm_energy(const EbmSpec& ebm, const RVector& theta_e, std::uint32_t x);
RVector ebm_energies(const EbmSpec& ebm, const RVector& theta_e);
HermMatrix latent_hamiltonian(const EbmSpec& ebm, const RVector& theta_e);
// log sum_x exp(-E(x)), evaluated with max-subtraction.
double log_partition(const EbmSpec& ebm, const RVector& theta_e);

// Feature matrix Phi: row x, columns follow the theta' layout, so that
// E(x) = -Phi(x,:) . theta'.
RMatrix ebm_features(const EbmSpec& ebm);

// --- circuit operations ---

CMatrix circuit_unitary(const CircuitSpec& c, const RVector& theta_c);
CMatrix circuit_unitary_deriv(const CircuitSpec& c, const RVector& theta_c, int j);
CMatrix circuit_unitary_deriv2(const CircuitSpec& c, const RVector& theta_c, int j, int k);

// --- model operations ---

DensityMatrix model_state(const QhbmModel& m, const RVector& theta);
// -U K U^dag - log Z, analytic (no matrix logarithm).
HermMatrix log_model(const QhbmModel& m, const RVector& theta);
std::vector<HermMatrix> grad_log_model(const QhbmModel& m, const RVector& theta);
HermGrid hess_log_model(const QhbmModel& m, const RVector& theta);
// First and second derivatives of sigma itself (used by the classical
// likelihood pipeline).
std::vector<HermMatrix> grad_model_state(const QhbmModel& m, const RVector& theta);
HermGrid hess_model_state(const QhbmModel& m, const RVector& theta);

// M1 parameters reproduce the same state inside M2 with the extra circuit
// parameters set to zero.
RVector embed_m1_params_in_m2(const RVector& theta_m1);

// --- parametric-family interface ---
// Everything downstream (losses, Fisher matrices, criteria) works against
// this surface, so restricted variants plug into the same pipelines.
class StateFamily {
 public:
  virtual ~StateFamily() = default;

  virtual const std::string& name() const = 0;
  virtual int qubits() const = 0;
  virtual int param_count() const = 0;

  virtual DensityMatrix state(const RVector& theta) const = 0;
  virtual HermMatrix log_state(const RVector& theta) const = 0;
  virtual std::vector<HermMatrix> grad_log_state(const RVector& theta) const = 0;
  virtual HermGrid hess_log_state(const RVector& theta) const = 0;
  virtual std::vector<HermMatrix> grad_state(const RVector& theta) const = 0;
  virtual HermGrid hess_state(const RVector& theta) const = 0;
};

class QhbmFamily final : public StateFamily {
 public:
  explicit QhbmFamily(QhbmModel model);

  const QhbmModel& model() const { return model_; }

  const std::string& name() const override { return model_.name; }
  int qubits() const override { return model_.qubits(); }
  int param_count() const override { return model_.param_count(); }

  DensityMatrix state(const RVector& theta) const override;
  HermMatrix log_state(const RVector& theta) const override;
  std::vector<HermMatrix> grad_log_state(const RVector& theta) const override;
  HermGrid hess_log_state(const RVector& theta) const override;
  std::vector<HermMatrix> grad_state(const RVector& theta) const override;
  HermGrid hess_state(const RVector& theta) const override;

 private:
  QhbmModel model_;
};

// Restriction of a family to a subset of coordinates, the remaining ones
// pinned at a base point. Derivatives are the corresponding sub-blocks.
class FrozenFamily final : public StateFamily {
 public:
  FrozenFamily(const StateFamily& base, RVector theta_base, std::vector<int> free_indices,
               std::string name);

  RVector expand(const RVector& theta_free) const;

  const std::string& name() const override { return name_; }
  int qubits() const override { return base_->qubits(); }
  int param_count() const override { return static_cast<int>(free_.size()); }

  DensityMatrix state(const RVector& theta) const override;
  HermMatrix log_state(const RVector& theta) const override;
  std::vector<HermMatrix> grad_log_state(const RVector& theta) const override;
  HermGrid hess_log_state(const RVector& theta) const override;
  std::vector<HermMatrix> grad_state(const RVector& theta) const override;
  HermGrid hess_state(const RVector& theta) const override;

 private:
  const StateFamily* base_;
  RVector theta_base_;
  std::vector<int> free_;
  std::string name_;
};

}  // namespace qic
