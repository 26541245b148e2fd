#pragma once

// Slow reference path for the subsampled-Gaussian RDP bound, evaluated by
// direct summation in 512-bit MPFR arithmetic with exact GMP binomial
// coefficients -- no log-space tricks, so it is an independent check on the
// production path in accountant.hpp. Link against mpfr and gmp.

#include <gmp.h>
#include <mpfr.h>

#include <limits>
#include <span>
#include <vector>

#include "dpbam/errors.hpp"

namespace dpbam::reference {

inline double subsampled_gauss_rdp(double q, double sigma, long alpha) {
  if (alpha < 2) throw ContractError("reference rdp: orders must be > 1");
  if (q == 0.0) return 0.0;
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();

  constexpr mpfr_prec_t kPrec = 512;
  mpfr_t acc, term, base_q, base_1mq, expo;
  mpfr_inits2(kPrec, acc, term, base_q, base_1mq, expo, static_cast<mpfr_ptr>(nullptr));
  mpfr_set_zero(acc, 1);
  mpfr_set_d(base_q, q, MPFR_RNDN);
  mpfr_set_d(base_1mq, 1.0, MPFR_RNDN);
  mpfr_sub_d(base_1mq, base_1mq, q, MPFR_RNDN);

  mpz_t binom;
  mpz_init(binom);
  for (long k = 0; k <= alpha; ++k) {
    mpz_bin_uiui(binom, static_cast<unsigned long>(alpha), static_cast<unsigned long>(k));
    mpfr_set_z(term, binom, MPFR_RNDN);
    // (1-q)^(alpha-k) * q^k
    mpfr_pow_si(expo, base_1mq, alpha - k, MPFR_RNDN);
    mpfr_mul(term, term, expo, MPFR_RNDN);
    mpfr_pow_si(expo, base_q, k, MPFR_RNDN);
    mpfr_mul(term, term, expo, MPFR_RNDN);
    // e^{k(k-1) / (2 sigma^2)}
    mpfr_set_d(expo, static_cast<double>(k) * static_cast<double>(k - 1), MPFR_RNDN);
    mpfr_div_d(expo, expo, 2.0 * sigma * sigma, MPFR_RNDN);
    mpfr_exp(expo, expo, MPFR_RNDN);
    mpfr_mul(term, term, expo, MPFR_RNDN);
    mpfr_add(acc, acc, term, MPFR_RNDN);
  }
  mpfr_log(acc, acc, MPFR_RNDN);
  mpfr_div_d(acc, acc, static_cast<double>(alpha - 1), MPFR_RNDN);
  double out = mpfr_get_d(acc, MPFR_RNDN);
  mpz_clear(binom);
  mpfr_clears(acc, term, base_q, base_1mq, expo, static_cast<mpfr_ptr>(nullptr));
  return out;
}

inline std::vector<double> rdp_step(double q, double sigma, std::span<const double> orders) {
  std::vector<double> incr;
  incr.reserve(orders.size());
  for (double order : orders)
    incr.push_back(subsampled_gauss_rdp(q, sigma, static_cast<long>(order)));
  return incr;
}

}  // namespace dpbam::reference
