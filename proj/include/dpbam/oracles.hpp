#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dpbam/errors.hpp"
#include "dpbam/functions.hpp"
#include "dpbam/param.hpp"

namespace dpbam {

// Brute-force verification oracles. Deliberately independent of the tape:
// they only ever call f through value() / grad() and pay O(d) or O(d^2)
// evaluations, so they are capped to small dimensions.

inline constexpr std::size_t kOracleDimCap = 2000;
inline constexpr double kDefaultFdStep = 1e-5;  // on unit-scaled parameters

inline void check_oracle_cap(std::size_t d, const char* what) {
  if (d > kOracleDimCap)
    throw ContractError(std::string(what) + ": refusing d=" + std::to_string(d) +
                        " (cap " + std::to_string(kOracleDimCap) + ")");
}

// Central-difference gradient, (f(theta + h e_j) - f(theta - h e_j)) / 2h.
inline ParamVector fd_grad(const ScalarFunction& f, const ParamVector& theta,
                           double h = kDefaultFdStep) {
  check_oracle_cap(theta.dim(), "fd_grad");
  ParamVector g = ParamVector::zeros(theta.layout());
  ParamVector probe = theta;
  for (std::size_t j = 0; j < theta.dim(); ++j) {
    double orig = probe[j];
    probe[j] = orig + h;
    double fp = f.value(probe);
    probe[j] = orig - h;
    double fm = f.value(probe);
    probe[j] = orig;
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Explicit Hessian assembled column-by-column from central differences of
// the reverse-mode gradient, symmetrized, then applied to v.
inline ParamVector dense_hessian_hvp(const ScalarFunction& f, const ParamVector& theta,
                                     const ParamVector& v, double h = kDefaultFdStep) {
  std::size_t d = theta.dim();
  check_oracle_cap(d, "dense_hessian_hvp");
  if (v.dim() != d) throw ContractError("dense_hessian_hvp: direction dimension mismatch");
  std::vector<double> hess(d * d);
  ParamVector probe = theta;
  for (std::size_t j = 0; j < d; ++j) {
    double orig = probe[j];
    probe[j] = orig + h;
    ParamVector gp = grad(f, probe);
    probe[j] = orig - h;
    ParamVector gm = grad(f, probe);
    probe[j] = orig;
    for (std::size_t i = 0; i < d; ++i) hess[i * d + j] = (gp[i] - gm[i]) / (2.0 * h);
  }
  // Symmetrize: fd noise is the only source of asymmetry here.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      double s = 0.5 * (hess[i * d + j] + hess[j * d + i]);
      hess[i * d + j] = s;
      hess[j * d + i] = s;
    }
  ParamVector out = ParamVector::zeros(theta.layout());
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += hess[i * d + j] * v[j];
    out[i] = acc;
  }
  return out;
}

}  // namespace dpbam
