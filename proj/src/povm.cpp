#include "qic/povm.hpp"

#include <cmath>
#include <stdexcept>

namespace qic {

namespace {

constexpr Complex kI{0.0, 1.0};

// Basis rotation U_b with U_b P_b U_b^dag = Z: U_Z = I, U_X = H, U_Y = H S^dag.
Eigen::Matrix2cd basis_rotation(PauliBasis b) {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  Eigen::Matrix2cd h;
  h << inv_sqrt2, inv_sqrt2, inv_sqrt2, -inv_sqrt2;
  switch (b) {
    case PauliBasis::X:
      return h;
    case PauliBasis::Y: {
      Eigen::Matrix2cd s_dag;
      s_dag << 1.0, 0.0, 0.0, -kI;
      return h * s_dag;
    }
    case PauliBasis::Z:
      return Eigen::Matrix2cd::Identity();
  }
  throw std::logic_error("basis_rotation: bad basis");
}

}  // namespace

char basis_char(PauliBasis b) {
  switch (b) {
    case PauliBasis::X: return 'X';
    case PauliBasis::Y: return 'Y';
    case PauliBasis::Z: return 'Z';
  }
  throw std::logic_error("basis_char: bad basis");
}

PauliBasis basis_from_char(char c) {
  switch (c) {
    case 'X': return PauliBasis::X;
    case 'Y': return PauliBasis::Y;
    case 'Z': return PauliBasis::Z;
    default: throw std::invalid_argument("basis_from_char: expected X, Y or Z");
  }
}

void MeasurementOutcome::validate() const {
  if (bases.empty() || bases.size() != bits.size()) {
    throw std::invalid_argument("MeasurementOutcome: bases/bits length mismatch");
  }
  for (const auto bit : bits) {
    if (bit > 1) throw std::invalid_argument("MeasurementOutcome: bit not in {0,1}");
  }
}

std::string MeasurementOutcome::bases_string() const {
  std::string s;
  s.reserve(bases.size());
  for (const auto b : bases) s.push_back(basis_char(b));
  return s;
}

std::string MeasurementOutcome::bits_string() const {
  std::string s;
  s.reserve(bits.size());
  for (const auto bit : bits) s.push_back(bit ? '1' : '0');
  return s;
}

std::size_t outcome_count(int qubits) {
  std::size_t n = 1;
  for (int j = 0; j < qubits; ++j) n *= 6;
  return n;
}

std::size_t outcome_index(const MeasurementOutcome& x) {
  std::size_t idx = 0;
  std::size_t stride = 1;
  for (int j = 0; j < x.qubits(); ++j) {
    idx += stride * (2 * static_cast<std::size_t>(x.bases[j]) + x.bits[j]);
    stride *= 6;
  }
  return idx;
}

MeasurementOutcome outcome_from_index(std::size_t index, int qubits) {
  MeasurementOutcome x;
  x.bases.resize(qubits);
  x.bits.resize(qubits);
  for (int j = 0; j < qubits; ++j) {
    const std::size_t code = index % 6;
    index /= 6;
    x.bases[j] = static_cast<PauliBasis>(code / 2);
    x.bits[j] = static_cast<std::uint8_t>(code % 2);
  }
  return x;
}

Eigen::Vector2cd pauli_eigenstate(PauliBasis basis, int bit) {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  Eigen::Vector2cd v;
  const double sign = bit == 0 ? 1.0 : -1.0;
  switch (basis) {
    case PauliBasis::X:
      v << inv_sqrt2, sign * inv_sqrt2;
      return v;
    case PauliBasis::Y:
      v << inv_sqrt2, sign * kI * inv_sqrt2;
      return v;
    case PauliBasis::Z:
      if (bit == 0) {
        v << 1.0, 0.0;
      } else {
        v << 0.0, 1.0;
      }
      return v;
  }
  throw std::logic_error("pauli_eigenstate: bad basis");
}

CVector outcome_projector_vector(const MeasurementOutcome& x) {
  x.validate();
  CVector v = pauli_eigenstate(x.bases[0], x.bits[0]);
  for (int j = 1; j < x.qubits(); ++j) {
    const Eigen::Vector2cd f = pauli_eigenstate(x.bases[j], x.bits[j]);
    CVector next(v.size() * 2);
    next.head(v.size()) = f[0] * v;
    next.tail(v.size()) = f[1] * v;
    v = std::move(next);
  }
  return v;
}

HermMatrix povm_element(const MeasurementOutcome& x) {
  const CVector s = outcome_projector_vector(x);
  const double scale = std::pow(3.0, -x.qubits());
  return HermMatrix(scale * (s * s.adjoint()));
}

OutcomePmf enumerate_pmf(const DensityMatrix& sigma) {
  const int q = sigma.qubits();
  if (q > kEnumerationMaxQubits) {
    throw std::invalid_argument("enumerate_pmf: qubit count above enumeration cap");
  }
  const std::size_t total = outcome_count(q);
  const double scale = std::pow(3.0, -q);
  OutcomePmf pmf;
  pmf.qubits = q;
  pmf.probs.resize(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    const MeasurementOutcome x = outcome_from_index(idx, q);
    const CVector s = outcome_projector_vector(x);
    pmf.probs[idx] = scale * (s.adjoint() * sigma.mat() * s).value().real();
  }
  return pmf;
}

namespace {

// Conditional bit-string distributions, one row of length 2^q per basis
// combination (base-3 digit j = basis of qubit j).
std::vector<std::vector<double>> conditional_table(const DensityMatrix& rho) {
  const int q = rho.qubits();
  const int dim = rho.dim();
  std::size_t combos = 1;
  for (int j = 0; j < q; ++j) combos *= 3;
  std::vector<std::vector<double>> table(combos);
  std::vector<Eigen::Matrix2cd> factors(q);
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t rem = c;
    for (int j = 0; j < q; ++j) {
      factors[j] = basis_rotation(static_cast<PauliBasis>(rem % 3));
      rem /= 3;
    }
    const CMatrix u = kron_factors(factors);
    const CMatrix urho = u * rho.mat();
    std::vector<double> cond(dim);
    for (int b = 0; b < dim; ++b) {
      // diag(U rho U^dag)_b without the second full product
      cond[b] = (urho.row(b) * u.row(b).adjoint()).value().real();
    }
    table[c] = std::move(cond);
  }
  return table;
}

}  // namespace

std::vector<MeasurementOutcome> sample_outcomes(const DensityMatrix& rho, long n,
                                                std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_outcomes: n must be >= 1");
  const int q = rho.qubits();
  const int dim = rho.dim();
  Rng rng(seed);

  const bool use_table = q <= kEnumerationMaxQubits;
  std::vector<std::vector<double>> table;
  if (use_table) table = conditional_table(rho);

  std::vector<MeasurementOutcome> out;
  out.reserve(static_cast<std::size_t>(n));
  std::vector<Eigen::Matrix2cd> factors(q);
  for (long shot = 0; shot < n; ++shot) {
    MeasurementOutcome x;
    x.bases.resize(q);
    x.bits.resize(q);
    std::size_t combo = 0;
    std::size_t stride = 1;
    for (int j = 0; j < q; ++j) {
      const int b = rng.uniform_int(3);
      x.bases[j] = static_cast<PauliBasis>(b);
      combo += stride * static_cast<std::size_t>(b);
      stride *= 3;
    }

    const double u = rng.uniform();
    double cum = 0.0;
    int picked = dim - 1;
    if (use_table) {
      const std::vector<double>& cond = table[combo];
      for (int b = 0; b < dim; ++b) {
        cum += cond[b];
        if (u < cum) {
          picked = b;
          break;
        }
      }
    } else {
      for (int j = 0; j < q; ++j) factors[j] = basis_rotation(x.bases[j]);
      const CMatrix rot = kron_factors(factors);
      const CMatrix rotated = rot * rho.mat() * rot.adjoint();
      for (int b = 0; b < dim; ++b) {
        cum += rotated(b, b).real();
        if (u < cum) {
          picked = b;
          break;
        }
      }
    }
    for (int j = 0; j < q; ++j) {
      x.bits[j] = static_cast<std::uint8_t>((picked >> j) & 1);
    }
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace qic
