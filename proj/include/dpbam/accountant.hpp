#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dpbam/errors.hpp"

namespace dpbam {

// Renyi-DP accounting for the subsampled Gaussian mechanism at integer
// orders, with the classic conversion to (epsilon, delta).

// Integer orders 2..64 plus 128 and 256.
inline std::vector<double> default_rdp_orders() {
  std::vector<double> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(static_cast<double>(a));
  orders.push_back(128.0);
  orders.push_back(256.0);
  return orders;
}

namespace detail {

inline double log_binomial(long n, long k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// One step of the subsampled Gaussian mechanism at integer order alpha:
//   A_alpha = sum_{k=0..alpha} C(alpha,k) (1-q)^(alpha-k) q^k e^{k(k-1)/(2 sigma^2)}
//   rdp     = log(A_alpha) / (alpha - 1)
// evaluated in log space with a running log-sum-exp.
inline double subsampled_gauss_rdp(double q, double sigma, long alpha) {
  if (alpha < 2) throw ContractError("rdp: orders must be > 1");
  if (q == 0.0) return 0.0;
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  double a = static_cast<double>(alpha);
  if (q == 1.0) return a / (2.0 * sigma * sigma);
  double log_q = std::log(q);
  double log_1mq = std::log1p(-q);
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(static_cast<std::size_t>(alpha) + 1);
  for (long k = 0; k <= alpha; ++k) {
    double t = log_binomial(alpha, k) + static_cast<double>(alpha - k) * log_1mq +
               static_cast<double>(k) * log_q +
               static_cast<double>(k) * static_cast<double>(k - 1) / (2.0 * sigma * sigma);
    terms[static_cast<std::size_t>(k)] = t;
    max_term = std::max(max_term, t);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  double log_a = max_term + std::log(acc);
  // A_alpha >= 1 exactly (binomial theorem with nonnegative exponents), so
  // any negative log_a is rounding noise.
  return std::max(0.0, log_a) / (a - 1.0);
}

}  // namespace detail

// Per-order RDP cost of a single oracle query. sigma = 0 with q > 0 yields
// the infinite-epsilon sentinel in every order.
inline std::vector<double> rdp_step(double q, double sigma, std::span<const double> orders) {
  if (q < 0.0 || q > 1.0) throw ContractError("rdp_step: q must lie in [0,1]");
  if (sigma < 0.0) throw ContractError("rdp_step: sigma must be >= 0");
  std::vector<double> incr;
  incr.reserve(orders.size());
  for (double order : orders) {
    long alpha = std::lround(order);
    if (static_cast<double>(alpha) != order)
      throw ContractError("rdp_step: order grid must be integer-valued");
    incr.push_back(detail::subsampled_gauss_rdp(q, sigma, alpha));
  }
  return incr;
}

// Accumulated budget over a run. Totals are stored as (per-step increment,
// step count) so the T-step ledger is exactly T times one step.
struct AccountantLedger {
  std::vector<double> orders;
  std::vector<double> step_rdp;  // single-step increment per order
  long steps = 0;
  double q = 0.0;
  double sigma = 0.0;
  double delta = 1e-5;

  static AccountantLedger create(double q, double sigma, double delta,
                                 std::vector<double> orders = default_rdp_orders()) {
    AccountantLedger lg;
    lg.orders = std::move(orders);
    lg.q = q;
    lg.sigma = sigma;
    lg.delta = delta;
    lg.step_rdp = rdp_step(q, sigma, lg.orders);
    return lg;
  }

  void advance(long k = 1) { steps += k; }

  std::vector<double> total_rdp() const {
    std::vector<double> total(step_rdp.size());
    for (std::size_t i = 0; i < step_rdp.size(); ++i)
      total[i] = step_rdp[i] * static_cast<double>(steps);
    return total;
  }
};

struct EpsilonReport {
  double epsilon = std::numeric_limits<double>::infinity();
  double order = 0.0;  // minimizing Renyi order
};

// Classic RDP -> (epsilon, delta) conversion:
//   epsilon = min_alpha rdp(alpha) + log(1/delta) / (alpha - 1).
inline EpsilonReport rdp_to_eps(std::span<const double> orders, std::span<const double> total_rdp,
                                double delta) {
  if (delta <= 0.0 || delta >= 1.0) throw ContractError("rdp_to_eps: delta must lie in (0,1)");
  if (orders.empty() || orders.size() != total_rdp.size())
    throw ContractError("rdp_to_eps: empty or inconsistent ledger");
  EpsilonReport best;
  for (std::size_t i = 0; i < orders.size(); ++i) {
    double eps = total_rdp[i] + std::log(1.0 / delta) / (orders[i] - 1.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.order = orders[i];
    }
  }
  return best;
}

inline EpsilonReport rdp_to_eps(const AccountantLedger& ledger, double delta) {
  auto total = ledger.total_rdp();
  return rdp_to_eps(ledger.orders, total, delta);
}

// Smallest-noise calibration: bisect sigma until accounting T steps lands in
// [0.999 * target, target]. Monotone because epsilon is strictly decreasing
// in sigma.
inline double calibrate_sigma(double target_eps, double delta, double q, long steps,
                              const std::vector<double>& orders = default_rdp_orders()) {
  if (target_eps <= 0.0) throw ContractError("calibrate_sigma: target epsilon must be > 0");
  if (steps <= 0) throw ContractError("calibrate_sigma: steps must be > 0");
  auto eps_at = [&](double sigma) {
    std::vector<double> incr = rdp_step(q, sigma, orders);
    for (double& r : incr) r *= static_cast<double>(steps);
    return rdp_to_eps(orders, incr, delta).epsilon;
  };
  // epsilon cannot drop below the conversion floor at infinite sigma.
  double floor_eps = rdp_to_eps(orders, std::vector<double>(orders.size(), 0.0), delta).epsilon;
  if (target_eps <= floor_eps)
    throw CalibrationError("target epsilon " + std::to_string(target_eps) +
                           " is below the conversion floor " + std::to_string(floor_eps) +
                           " of the order grid");
  double lo = 1e-2;
  while (eps_at(lo) <= target_eps && lo > 1e-10) lo *= 0.5;
  double hi = std::max(2.0 * lo, 1e-2);
  int grow = 0;
  while (eps_at(hi) > target_eps) {
    hi *= 2.0;
    if (++grow > 200)
      throw CalibrationError("calibrate_sigma: no upper bracket below sigma=" +
                             std::to_string(hi));
  }
  for (int it = 0; it < 400; ++it) {
    double eps_hi = eps_at(hi);
    if (eps_hi <= target_eps && eps_hi >= 0.999 * target_eps) return hi;
    double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;  // bracket exhausted at double precision
    if (eps_at(mid) <= target_eps)
      hi = mid;
    else
      lo = mid;
  }
  throw CalibrationError("calibrate_sigma: did not converge; bracket [" + std::to_string(lo) +
                         ", " + std::to_string(hi) + "], target " + std::to_string(target_eps));
}

}  // namespace dpbam
