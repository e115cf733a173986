#include "qic/shadow.hpp"

#include <stdexcept>
#include <unordered_map>

namespace qic {

Snapshot::Snapshot(MeasurementOutcome outcome) : outcome_(std::move(outcome)) {
  outcome_.validate();
}

Eigen::Matrix2cd snapshot_factor(PauliBasis basis, int bit) {
  const Eigen::Vector2cd s = pauli_eigenstate(basis, bit);
  return 3.0 * (s * s.adjoint()) - Eigen::Matrix2cd::Identity();
}

const HermMatrix& Snapshot::materialized() const {
  if (!cache_) {
    std::vector<Eigen::Matrix2cd> factors(outcome_.qubits());
    for (int j = 0; j < outcome_.qubits(); ++j) {
      factors[j] = snapshot_factor(outcome_.bases[j], outcome_.bits[j]);
    }
    cache_ = std::make_shared<const HermMatrix>(kron_factors(factors));
  }
  return *cache_;
}

HermMatrix snapshot_materialize(const Snapshot& s) { return s.materialized(); }

HermMatrix mean_snapshot(std::span<const Snapshot> snapshots) {
  if (snapshots.empty()) {
    throw std::invalid_argument("mean_snapshot: empty snapshot list");
  }
  const int q = snapshots.front().outcome().qubits();
  const int dim = 1 << q;
  for (const Snapshot& s : snapshots) {
    if (s.outcome().qubits() != q) {
      throw std::invalid_argument("mean_snapshot: mixed qubit counts");
    }
  }

  CMatrix acc = CMatrix::Zero(dim, dim);
  if (q <= kEnumerationMaxQubits) {
    std::unordered_map<std::size_t, long> counts;
    for (const Snapshot& s : snapshots) ++counts[outcome_index(s.outcome())];
    for (const auto& [idx, count] : counts) {
      const Snapshot rep(outcome_from_index(idx, q));
      acc += static_cast<double>(count) * rep.materialized().mat();
    }
  } else {
    for (const Snapshot& s : snapshots) acc += s.materialized().mat();
  }
  acc /= static_cast<double>(snapshots.size());
  return HermMatrix(std::move(acc));
}

double snapshot_trace_with(const Snapshot& s, const HermMatrix& a) {
  const HermMatrix& rho_hat = s.materialized();
  if (rho_hat.dim() != a.dim()) {
    throw std::invalid_argument("snapshot_trace_with: dimension mismatch");
  }
  return real_trace_product(rho_hat.mat(), a.mat());
}

std::vector<Snapshot> make_snapshots(std::span<const MeasurementOutcome> outcomes) {
  std::vector<Snapshot> out;
  out.reserve(outcomes.size());
  for (const MeasurementOutcome& x : outcomes) out.emplace_back(x);
  return out;
}

}  // namespace qic
