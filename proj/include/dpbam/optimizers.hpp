#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpbam/accountant.hpp"
#include "dpbam/dp.hpp"
#include "dpbam/errors.hpp"
#include "dpbam/functions.hpp"
#include "dpbam/param.hpp"
#include "dpbam/rng.hpp"
#include "dpbam/tensor.hpp"

namespace dpbam {

enum class Method { dp_sgd, bam_sam, bam_exact, dp_sat };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::dp_sgd: return "dp_sgd";
    case Method::bam_sam: return "bam_sam";
    case Method::bam_exact: return "bam_exact";
    case Method::dp_sat: return "dp_sat";
  }
  return "unknown";
}

inline Method method_from_name(const std::string& s) {
  if (s == "dp_sgd") return Method::dp_sgd;
  if (s == "bam_sam") return Method::bam_sam;
  if (s == "bam_exact") return Method::bam_exact;
  if (s == "dp_sat") return Method::dp_sat;
  throw ContractError("unknown method '" + s + "'");
}

struct OptimizerConfig {
  Method method = Method::dp_sgd;
  double learning_rate = 0.5;  // gamma
  double lambda = 0.0;         // ascent radius / penalty strength
  // Linear decay horizons; 0 keeps the value constant. With a horizon T the
  // per-step value is base * max(0, 1 - t/T).
  long lambda_decay_steps = 0;
  long lr_decay_steps = 0;
  double ascent_norm_guard = 1e-12;  // skip normalized ascent below this norm
  double momentum = 0.0;             // classical momentum on g_priv, off by default

  void validate() const {
    if (learning_rate <= 0.0) throw ContractError("OptimizerConfig: learning_rate must be > 0");
    if (lambda < 0.0) throw ContractError("OptimizerConfig: lambda must be >= 0");
    if (ascent_norm_guard <= 0.0)
      throw ContractError("OptimizerConfig: ascent_norm_guard must be > 0");
  }

  double lambda_at(long t) const {
    if (lambda_decay_steps <= 0) return lambda;
    double f = 1.0 - static_cast<double>(t) / static_cast<double>(lambda_decay_steps);
    return lambda * std::max(0.0, f);
  }
  double lr_at(long t) const {
    if (lr_decay_steps <= 0) return learning_rate;
    double f = 1.0 - static_cast<double>(t) / static_cast<double>(lr_decay_steps);
    return learning_rate * std::max(0.0, f);
  }
};

// Mutable state threaded through a training run.
struct TrainState {
  ParamVector theta;
  long step = 0;
  std::optional<ParamVector> prev_gpriv;  // empty iff step == 0
  AccountantLedger ledger;
  std::uint64_t rng_seed = 0;
  std::optional<ParamVector> momentum_buf;
};

// --- Objective evaluators -------------------------------------------------

// Batch loss plus lambda times the mean per-sample gradient norm. Uses exact
// per-sample gradients; the per-sample view of the same objective adds
// lambda * ||g_i|| to each sample's loss.
inline double bao_loss(const SampleLossFunction& loss, const ParamVector& theta, const Tensor& X,
                       const Tensor& Y, double lambda) {
  if (lambda < 0.0) throw ContractError("bao_loss: lambda must be >= 0");
  if (X.dim(0) == 0) throw ContractError("bao_loss: empty batch");
  PerSampleGradients psg = per_sample_grads(loss, theta, X, Y);
  double mean_loss = 0.0, mean_norm = 0.0;
  for (std::size_t i = 0; i < psg.batch_size; ++i) {
    mean_loss += psg.losses[i];
    mean_norm += psg.norms[i];
  }
  mean_loss /= static_cast<double>(psg.batch_size);
  mean_norm /= static_cast<double>(psg.batch_size);
  return mean_loss + lambda * mean_norm;
}

// Batch loss plus lambda times the norm of the mean gradient (the flatness
// penalty bao_loss upper-bounds).
inline double z_loss(const SampleLossFunction& loss, const ParamVector& theta, const Tensor& X,
                     const Tensor& Y, double lambda) {
  if (lambda < 0.0) throw ContractError("z_loss: lambda must be >= 0");
  if (X.dim(0) == 0) throw ContractError("z_loss: empty batch");
  PerSampleGradients psg = per_sample_grads(loss, theta, X, Y);
  double mean_loss = 0.0;
  for (std::size_t i = 0; i < psg.batch_size; ++i) mean_loss += psg.losses[i];
  mean_loss /= static_cast<double>(psg.batch_size);
  return mean_loss + lambda * psg.row_mean().l2_norm();
}

// --- Per-sample gradient rules ---------------------------------------------

struct SampleGrad {
  ParamVector grad;
  double loss = 0.0;
  bool ascent_skipped = false;  // gradient norm at/below the guard
};

// Exact gradient of the per-sample norm-penalized objective:
//   grad L + lambda * H * (grad L / ||grad L||),
// with the Hessian-vector product taken forward-over-reverse. Below the norm
// guard the normalized direction is undefined; the plain gradient is
// returned and the sample flagged.
inline SampleGrad bam_grad_exact(const SampleLossFunction& loss, const ParamVector& theta,
                                 const Tensor& x, const Tensor& y, double lambda,
                                 double norm_guard = 1e-12) {
  ScalarFunction f = loss.bind(x, y);
  ValueGrad vg = value_and_grad(f, theta);
  double n = vg.grad.l2_norm();
  if (lambda == 0.0) return {std::move(vg.grad), vg.value, false};
  if (n <= norm_guard) return {std::move(vg.grad), vg.value, true};
  ParamVector dir = (1.0 / n) * vg.grad;
  ParamVector hv = hvp(f, theta, dir);
  vg.grad.axpy(lambda, hv);
  return {std::move(vg.grad), vg.value, false};
}

// SAM-style approximation: the plain gradient re-evaluated after a local
// ascent step of radius lambda along the normalized per-sample gradient.
inline SampleGrad bam_grad_sam(const SampleLossFunction& loss, const ParamVector& theta,
                               const Tensor& x, const Tensor& y, double lambda,
                               double norm_guard = 1e-12) {
  ScalarFunction f = loss.bind(x, y);
  ValueGrad vg = value_and_grad(f, theta);
  if (lambda == 0.0) return {std::move(vg.grad), vg.value, false};
  double n = vg.grad.l2_norm();
  if (n <= norm_guard) return {std::move(vg.grad), vg.value, true};
  ParamVector ascended = theta;
  ascended.axpy(lambda / n, vg.grad);
  ParamVector g2 = grad(f, ascended);
  return {std::move(g2), vg.value, false};
}

// --- Training step ----------------------------------------------------------

struct StepResult {
  GradientEstimates estimates;
  PerSampleGradients psg;  // the rows the oracle clipped (method's own gradients)
  double batch_mean_loss = 0.0;
  std::size_t ascent_skips = 0;
  bool empty_batch = false;
  bool dp_sat_cold_start = false;
};

namespace detail {

// Per-sample gradients under the method's rule. For dp_sat the whole batch
// shares one ascent point built from the previous privatized gradient, so
// only already-privatized state enters the shift.
inline PerSampleGradients method_gradients(const SampleLossFunction& loss, TrainState& state,
                                           const Tensor& X, const Tensor& Y,
                                           const OptimizerConfig& cfg, StepResult& out) {
  double lam = cfg.lambda_at(state.step);
  switch (cfg.method) {
    case Method::dp_sgd:
      return per_sample_grads(loss, state.theta, X, Y);
    case Method::dp_sat: {
      if (lam == 0.0 || !state.prev_gpriv.has_value()) {
        out.dp_sat_cold_start = !state.prev_gpriv.has_value();
        return per_sample_grads(loss, state.theta, X, Y);
      }
      double n = state.prev_gpriv->l2_norm();
      if (n <= cfg.ascent_norm_guard) {
        ++out.ascent_skips;
        return per_sample_grads(loss, state.theta, X, Y);
      }
      ParamVector ascended = state.theta;
      ascended.axpy(lam / n, *state.prev_gpriv);
      return per_sample_grads(loss, ascended, X, Y);
    }
    case Method::bam_sam:
    case Method::bam_exact: {
      if (lam == 0.0) return per_sample_grads(loss, state.theta, X, Y);
      std::size_t l = X.dim(0);
      std::size_t d = state.theta.dim();
      PerSampleGradients psg;
      psg.grads = Tensor({l, d});
      psg.norms.resize(l);
      psg.losses.resize(l);
      psg.batch_size = l;
      psg.layout = state.theta.layout();
      for (std::size_t i = 0; i < l; ++i) {
        Tensor xi = tensor_row(X, i);
        Tensor yi = tensor_row(Y, i);
        SampleGrad sg = (cfg.method == Method::bam_sam)
                            ? bam_grad_sam(loss, state.theta, xi, yi, lam, cfg.ascent_norm_guard)
                            : bam_grad_exact(loss, state.theta, xi, yi, lam,
                                             cfg.ascent_norm_guard);
        if (sg.ascent_skipped) ++out.ascent_skips;
        psg.losses[i] = sg.loss;
        double* row = psg.grads.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) row[j] = sg.grad[j];
        psg.norms[i] = l2_norm(psg.row(i));
      }
      return psg;
    }
  }
  throw ContractError("method_gradients: unreachable");
}

}  // namespace detail

// One optimization step on an already-sampled batch: per-sample gradients by
// the method's rule, clip + perturb through the private oracle, plain
// gradient descent on the privatized estimate, ledger advanced exactly once.
inline StepResult step(TrainState& state, const SampleLossFunction& loss, const Tensor& X,
                       const Tensor& Y, const OptimizerConfig& ocfg, const PrivacyConfig& pcfg) {
  ocfg.validate();
  pcfg.validate();
  if (X.rank() != 2) throw ContractError("step: X must have shape (l, input_dim)");
  StepResult out;
  out.empty_batch = (X.dim(0) == 0);
  out.psg = detail::method_gradients(loss, state, X, Y, ocfg, out);

  RngStream noise_rng(state.rng_seed, static_cast<std::uint64_t>(state.step),
                      RngPurpose::gauss_noise);
  out.estimates = private_oracle(out.psg, pcfg, noise_rng);

  if (out.psg.batch_size > 0) {
    double acc = 0.0;
    for (double v : out.psg.losses) acc += v;
    out.batch_mean_loss = acc / static_cast<double>(out.psg.batch_size);
  }

  const ParamVector& direction = out.estimates.g_priv;
  double lr = ocfg.lr_at(state.step);
  if (ocfg.momentum > 0.0) {
    if (!state.momentum_buf) state.momentum_buf = ParamVector::zeros(state.theta.layout());
    *state.momentum_buf *= ocfg.momentum;
    *state.momentum_buf += direction;
    state.theta.axpy(-lr, *state.momentum_buf);
  } else {
    state.theta.axpy(-lr, direction);
  }

  state.ledger.advance(1);
  state.prev_gpriv = out.estimates.g_priv;
  state.step += 1;
  return out;
}

}  // namespace dpbam
