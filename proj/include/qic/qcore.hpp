#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qic/rng.hpp"

namespace qic {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

// Dense eigendecomposition stays cheap up to this system size.
inline constexpr int kMaxQubits = 10;
inline constexpr double kHermTol = 1e-10;

// Hermitian matrix on 2^q dimensions. Construction rejects inputs whose
// anti-Hermitian part exceeds kHermTol and stores (A + A^dag)/2, so the
// stored entries satisfy m(i,j) == conj(m(j,i)) exactly.
class HermMatrix {
 public:
  HermMatrix() = default;
  explicit HermMatrix(CMatrix m);

  static HermMatrix zero(int dim);
  static HermMatrix identity(int dim);
  static HermMatrix diagonal(const RVector& d);

  const CMatrix& mat() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }
  int qubits() const;
  double trace_real() const { return m_.trace().real(); }

 private:
  CMatrix m_;
};

// Unit-trace positive semidefinite HermMatrix. `checked` verifies trace and
// the spectrum; `from_model` skips the eigensolve for states that are PSD by
// construction (thermal/conjugated forms) and validates the trace only.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  static DensityMatrix checked(HermMatrix h);
  static DensityMatrix from_model(HermMatrix h);

  const HermMatrix& herm() const { return h_; }
  const CMatrix& mat() const { return h_.mat(); }
  int dim() const { return h_.dim(); }
  int qubits() const { return h_.qubits(); }

 private:
  explicit DensityMatrix(HermMatrix h) : h_(std::move(h)) {}
  HermMatrix h_;
};

struct HermEig {
  RVector values;   // ascending
  CMatrix vectors;  // columns are eigenvectors
};

HermEig herm_eig(const HermMatrix& h);

// V diag(exp(lambda)) V^dag. Rejects spectra above ~700 (exp overflow).
HermMatrix herm_exp(const HermMatrix& h);

// V diag(log(max(lambda, floor))) V^dag for PSD input. Eigenvalues below
// -1e-8 are rejected; clamping below `floor` logs a warning to stderr since
// it only fires on numerically degenerate states.
HermMatrix herm_log(const HermMatrix& rho, double floor = 1e-12);

// Kronecker product; index convention is little-endian in the qubit label,
// i.e. factors[j] acts on bit j of the basis index.
CMatrix kron(const CMatrix& a, const CMatrix& b);
CMatrix kron_factors(std::span<const Eigen::Matrix2cd> factors);

// Re tr(a b) for Hermitian a, b (the product trace is real up to roundoff).
double real_trace_product(const CMatrix& a, const CMatrix& b);

double vn_entropy(const DensityMatrix& rho);

// Tr[rho (log rho - log sigma)], eigen-based, for test oracles and reports.
double relative_entropy(const DensityMatrix& rho, const DensityMatrix& sigma);

// Hilbert-Schmidt random full-rank state: G G^dag / tr with Gaussian G.
DensityMatrix random_density_matrix(int qubits, Rng& rng);

}  // namespace qic
