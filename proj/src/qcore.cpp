#include "qic/qcore.hpp"

#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace qic {

namespace {

bool is_power_of_two(int n) { return n >= 2 && (n & (n - 1)) == 0; }

int log2_exact(int n) {
  int q = 0;
  while ((1 << q) < n) ++q;
  return q;
}

}  // namespace

HermMatrix::HermMatrix(CMatrix m) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument("HermMatrix: matrix must be square");
  }
  const int dim = static_cast<int>(m.rows());
  if (!is_power_of_two(dim) || log2_exact(dim) > kMaxQubits) {
    std::ostringstream oss;
    oss << "HermMatrix: dim " << dim << " is not 2^q with 1 <= q <= " << kMaxQubits;
    throw std::invalid_argument(oss.str());
  }
  const double asym = (m - m.adjoint()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (asym > kHermTol * scale) {
    std::ostringstream oss;
    oss << "HermMatrix: non-Hermitian input, max |A - A^dag| = " << asym;
    throw std::invalid_argument(oss.str());
  }
  m_ = 0.5 * (m + m.adjoint().eval());
}

HermMatrix HermMatrix::zero(int dim) { return HermMatrix(CMatrix::Zero(dim, dim)); }

HermMatrix HermMatrix::identity(int dim) { return HermMatrix(CMatrix::Identity(dim, dim)); }

HermMatrix HermMatrix::diagonal(const RVector& d) {
  return HermMatrix(d.cast<Complex>().asDiagonal().toDenseMatrix());
}

int HermMatrix::qubits() const { return log2_exact(dim()); }

DensityMatrix DensityMatrix::checked(HermMatrix h) {
  const double tr = h.trace_real();
  if (std::abs(tr - 1.0) > 1e-10) {
    std::ostringstream oss;
    oss << "DensityMatrix: trace " << tr << " differs from 1 beyond 1e-10";
    throw std::invalid_argument(oss.str());
  }
  const HermEig eig = herm_eig(h);
  if (eig.values.minCoeff() < -1e-10) {
    std::ostringstream oss;
    oss << "DensityMatrix: negative eigenvalue " << eig.values.minCoeff();
    throw std::invalid_argument(oss.str());
  }
  return DensityMatrix(std::move(h));
}

DensityMatrix DensityMatrix::from_model(HermMatrix h) {
  const double tr = h.trace_real();
  if (std::abs(tr - 1.0) > 1e-10) {
    throw std::invalid_argument("DensityMatrix::from_model: trace differs from 1");
  }
  return DensityMatrix(std::move(h));
}

HermEig herm_eig(const HermMatrix& h) {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(h.mat());
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("herm_eig: eigensolver failed to converge");
  }
  return HermEig{solver.eigenvalues(), solver.eigenvectors()};
}

HermMatrix herm_exp(const HermMatrix& h) {
  const HermEig eig = herm_eig(h);
  if (eig.values.maxCoeff() > 700.0) {
    std::ostringstream oss;
    oss << "herm_exp: eigenvalue " << eig.values.maxCoeff() << " would overflow exp";
    throw std::domain_error(oss.str());
  }
  const RVector ex = eig.values.array().exp();
  CMatrix out = eig.vectors * ex.cast<Complex>().asDiagonal() * eig.vectors.adjoint();
  return HermMatrix(std::move(out));
}

HermMatrix herm_log(const HermMatrix& rho, double floor) {
  if (floor <= 0.0) throw std::invalid_argument("herm_log: floor must be positive");
  const HermEig eig = herm_eig(rho);
  if (eig.values.minCoeff() < -1e-8) {
    std::ostringstream oss;
    oss << "herm_log: input not PSD, eigenvalue " << eig.values.minCoeff();
    throw std::domain_error(oss.str());
  }
  RVector lg(eig.values.size());
  bool clamped = false;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    double v = eig.values[i];
    if (v < floor) {
      v = floor;
      clamped = true;
    }
    lg[i] = std::log(v);
  }
  if (clamped) {
    std::cerr << "[qic] warning: herm_log clamped eigenvalues below " << floor << "\n";
  }
  CMatrix out = eig.vectors * lg.cast<Complex>().asDiagonal() * eig.vectors.adjoint();
  return HermMatrix(std::move(out));
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

CMatrix kron_factors(std::span<const Eigen::Matrix2cd> factors) {
  if (factors.empty()) throw std::invalid_argument("kron_factors: empty factor list");
  // Little-endian: qubit 0 is the least significant bit, so it is the
  // rightmost Kronecker factor.
  CMatrix out = factors[0];
  for (std::size_t j = 1; j < factors.size(); ++j) {
    out = kron(CMatrix(factors[j]), out);
  }
  return out;
}

double real_trace_product(const CMatrix& a, const CMatrix& b) {
  return a.cwiseProduct(b.transpose()).sum().real();
}

double vn_entropy(const DensityMatrix& rho) {
  const HermEig eig = herm_eig(rho.herm());
  double s = 0.0;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    const double v = eig.values[i];
    if (v > 1e-300) s -= v * std::log(v);
  }
  return s;
}

double relative_entropy(const DensityMatrix& rho, const DensityMatrix& sigma) {
  const HermMatrix log_sigma = herm_log(sigma.herm());
  return -vn_entropy(rho) - real_trace_product(rho.mat(), log_sigma.mat());
}

DensityMatrix random_density_matrix(int qubits, Rng& rng) {
  const int dim = 1 << qubits;
  CMatrix g(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      g(i, j) = Complex(rng.normal(), rng.normal());
    }
  }
  CMatrix w = g * g.adjoint();
  w /= w.trace().real();
  return DensityMatrix::checked(HermMatrix(std::move(w)));
}

}  // namespace qic
