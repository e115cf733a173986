#pragma once

#include <functional>
#include <vector>

#include "qic/qcore.hpp"
#include "qic/qhbm.hpp"

namespace qic::test {

inline RVector random_theta(int p, Rng& rng, double range = 1.0) {
  RVector theta(p);
  for (int i = 0; i < p; ++i) theta[i] = rng.uniform(-range, range);
  return theta;
}

inline HermMatrix random_hermitian(int dim, Rng& rng, double scale = 1.0) {
  CMatrix g(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) g(i, j) = Complex(rng.normal(), rng.normal());
  }
  return HermMatrix(scale * 0.5 * (g + g.adjoint().eval()));
}

// Central difference of a matrix-valued function of theta.
inline CMatrix central_diff(const std::function<CMatrix(const RVector&)>& f,
                            const RVector& theta, int i, double eps = 1e-4) {
  RVector tp = theta;
  RVector tm = theta;
  tp[i] += eps;
  tm[i] -= eps;
  return (f(tp) - f(tm)) / (2.0 * eps);
}

// Second-order central difference: mixed for i != j, three-point on the
// diagonal.
inline CMatrix central_diff2(const std::function<CMatrix(const RVector&)>& f,
                             const RVector& theta, int i, int j, double eps = 1e-4) {
  if (i == j) {
    RVector tp = theta;
    RVector tm = theta;
    tp[i] += eps;
    tm[i] -= eps;
    return (f(tp) - 2.0 * f(theta) + f(tm)) / (eps * eps);
  }
  RVector tpp = theta, tpm = theta, tmp = theta, tmm = theta;
  tpp[i] += eps;
  tpp[j] += eps;
  tpm[i] += eps;
  tpm[j] -= eps;
  tmp[i] -= eps;
  tmp[j] += eps;
  tmm[i] -= eps;
  tmm[j] -= eps;
  return (f(tpp) - f(tpm) - f(tmp) + f(tmm)) / (4.0 * eps * eps);
}

inline double max_abs(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace qic::test
