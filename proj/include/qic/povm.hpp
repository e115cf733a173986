#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qic/qcore.hpp"

namespace qic {

enum class PauliBasis : std::uint8_t { X = 0, Y = 1, Z = 2 };

char basis_char(PauliBasis b);
PauliBasis basis_from_char(char c);

// One shot of a random-Pauli measurement: a basis choice and a measured bit
// per qubit. Bit 0 is the +1 eigenvalue outcome (|+>, |+i>, |0>), bit 1 the
// -1 eigenvalue outcome.
struct MeasurementOutcome {
  std::vector<PauliBasis> bases;
  std::vector<std::uint8_t> bits;

  int qubits() const { return static_cast<int>(bases.size()); }
  void validate() const;

  std::string bases_string() const;  // e.g. "XYZ", position j = qubit j
  std::string bits_string() const;   // e.g. "010", position j = qubit j
};

// Probabilities over all 6^q outcomes in canonical order: per qubit the
// outcome code is 2*basis + bit, and qubit 0 is the least significant
// base-6 digit of the index.
struct OutcomePmf {
  int qubits = 0;
  std::vector<double> probs;
};

inline constexpr int kEnumerationMaxQubits = 6;  // 6^6 = 46656 outcomes

std::size_t outcome_index(const MeasurementOutcome& x);
MeasurementOutcome outcome_from_index(std::size_t index, int qubits);
std::size_t outcome_count(int qubits);  // 6^q

// +1/-1 eigenstate of the given Pauli axis.
Eigen::Vector2cd pauli_eigenstate(PauliBasis basis, int bit);

// Product state |s_x> with <s_x| A |s_x> = 3^q tr(Pi_x A).
CVector outcome_projector_vector(const MeasurementOutcome& x);

// Pi_x = tensor_j (1/3)|s_j><s_j|; trace (1/3)^q.
HermMatrix povm_element(const MeasurementOutcome& x);

// Entry x = tr(Pi_x sigma). Capped at kEnumerationMaxQubits.
OutcomePmf enumerate_pmf(const DensityMatrix& sigma);

// n i.i.d. shots: per shot the q bases are drawn uniformly (qubit 0 first),
// then the bit string from the conditional distribution <b|U rho U^dag|b>
// with one uniform draw and a cumulative search. Deterministic given seed.
std::vector<MeasurementOutcome> sample_outcomes(const DensityMatrix& rho, long n,
                                                std::uint64_t seed);

}  // namespace qic
