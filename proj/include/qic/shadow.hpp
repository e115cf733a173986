#pragma once

#include <memory>
#include <span>
#include <vector>

#include "qic/povm.hpp"
#include "qic/qcore.hpp"

namespace qic {

// A classical-shadow record: the raw outcome plus a lazily materialized
// tensor product of per-qubit factors 3 U^dag|b><b|U - I. Each factor has
// spectrum {2, -1} and trace 1; the product is Hermitian and unit-trace but
// in general not PSD. The cache is written once on first materialization
// and safe for concurrent reads afterwards.
class Snapshot {
 public:
  explicit Snapshot(MeasurementOutcome outcome);

  const MeasurementOutcome& outcome() const { return outcome_; }
  const HermMatrix& materialized() const;

 private:
  MeasurementOutcome outcome_;
  mutable std::shared_ptr<const HermMatrix> cache_;
};

// 3|s><s| - I for the +-1 eigenstate s of (basis, bit).
Eigen::Matrix2cd snapshot_factor(PauliBasis basis, int bit);

HermMatrix snapshot_materialize(const Snapshot& s);

// Arithmetic mean of the materialized snapshots; unit trace. Snapshots are
// deduplicated through the canonical outcome index when the qubit count is
// within the enumeration cap.
HermMatrix mean_snapshot(std::span<const Snapshot> snapshots);

// tr(rho_hat * a); the imaginary residue stays below 1e-10 for Hermitian a.
double snapshot_trace_with(const Snapshot& s, const HermMatrix& a);

std::vector<Snapshot> make_snapshots(std::span<const MeasurementOutcome> outcomes);

}  // namespace qic
