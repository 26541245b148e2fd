#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dpbam/dp.hpp"
#include "dpbam/errors.hpp"
#include "dpbam/functions.hpp"
#include "dpbam/param.hpp"
#include "dpbam/tensor.hpp"

namespace dpbam {

// Bias of the private estimate for a fixed observed batch. Gaussian noise is
// zero-mean and independent, so the bias reduces to the clipping term
// g_clip - g_hat; everything here is deterministic and noise-free. The
// observed batch size divides both means so the zero-clipping identity holds
// exactly.
struct BiasReport {
  std::vector<double> bias;  // g_clip - g_hat
  double bias_norm = 0.0;
  double fraction_clipped = 0.0;
  double norm_min = 0.0, norm_mean = 0.0, norm_max = 0.0;
};

inline BiasReport bias_vector(const PerSampleGradients& psg, double clip_bound) {
  if (psg.batch_size == 0) throw ContractError("bias_vector: empty batch");
  if (clip_bound <= 0.0) throw ContractError("bias_vector: clip_bound must be > 0");
  std::size_t l = psg.batch_size;
  std::size_t d = psg.dim();
  BiasReport report;
  report.bias.assign(d, 0.0);
  std::size_t clipped = 0;
  report.norm_min = psg.norms[0];
  for (std::size_t i = 0; i < l; ++i) {
    double denom = std::max(1.0, psg.norms[i] / clip_bound);
    if (denom > 1.0) ++clipped;
    std::span<const double> row = psg.row(i);
    for (std::size_t j = 0; j < d; ++j) report.bias[j] += row[j] / denom - row[j];
    report.norm_min = std::min(report.norm_min, psg.norms[i]);
    report.norm_max = std::max(report.norm_max, psg.norms[i]);
    report.norm_mean += psg.norms[i];
  }
  for (double& v : report.bias) v /= static_cast<double>(l);
  report.norm_mean /= static_cast<double>(l);
  report.bias_norm = l2_norm(report.bias);
  report.fraction_clipped = static_cast<double>(clipped) / static_cast<double>(l);
  return report;
}

// Orthogonal decomposition of the privatized estimate against the raw batch
// mean: g_priv = a * g_hat + c, where a collects the projected, clip-scaled
// coefficients (magnitude error) and c the clip-scaled residuals plus noise
// (directional error).
struct BiasDecomposition {
  std::vector<double> eta;  // <g_i, g_hat> / ||g_hat||^2
  std::vector<double> M;    // max(1, ||g_i|| / C)
  Tensor tau;               // (l, d) residuals, each orthogonal to g_hat
  double a = 0.0;
  std::vector<double> c;
  std::vector<double> noise_mean;  // noise contribution to c (total / l)
  bool degenerate = false;         // ||g_hat|| at or below the guard
};

inline BiasDecomposition decompose(const PerSampleGradients& psg, double clip_bound,
                                   std::span<const double> noise_total,
                                   std::span<const double> g_hat, double norm_guard = 1e-12) {
  if (psg.batch_size == 0) throw ContractError("decompose: empty batch");
  if (clip_bound <= 0.0) throw ContractError("decompose: clip_bound must be > 0");
  std::size_t l = psg.batch_size;
  std::size_t d = psg.dim();
  if (g_hat.size() != d) throw ContractError("decompose: g_hat dimension mismatch");
  if (!noise_total.empty() && noise_total.size() != d)
    throw ContractError("decompose: noise dimension mismatch");

  BiasDecomposition dec;
  double ghat_norm2 = dot(g_hat, g_hat);
  if (std::sqrt(ghat_norm2) <= norm_guard) {
    dec.degenerate = true;
    return dec;
  }
  dec.eta.resize(l);
  dec.M.resize(l);
  dec.tau = Tensor({l, d});
  dec.c.assign(d, 0.0);
  dec.noise_mean.assign(d, 0.0);
  double a_acc = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    std::span<const double> gi = psg.row(i);
    double eta = dot(gi, g_hat) / ghat_norm2;
    double m = std::max(1.0, psg.norms[i] / clip_bound);
    dec.eta[i] = eta;
    dec.M[i] = m;
    a_acc += eta / m;
    double* tau = dec.tau.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      tau[j] = gi[j] - eta * g_hat[j];
      dec.c[j] += tau[j] / m;
    }
  }
  dec.a = a_acc / static_cast<double>(l);
  for (std::size_t j = 0; j < d; ++j) {
    dec.c[j] /= static_cast<double>(l);
    if (!noise_total.empty()) {
      dec.noise_mean[j] = noise_total[j] / static_cast<double>(l);
      dec.c[j] += dec.noise_mean[j];
    }
  }
  return dec;
}

// The diagnostics behind the ascent-effectiveness and batch-size plots:
// cosine of the previous privatized gradient against the current batch mean,
// the mean per-sample cosine against the batch mean, and the clipped-vs-raw
// mean cosine. Zero vectors yield a sentinel 0 with the degenerate flag set.
struct CosineMetrics {
  double prev_priv_vs_batch = 0.0;  // cos(g_priv^(t-1), g_hat^(t))
  double mean_per_sample = 0.0;     // (1/l) sum_i cos(g_i, g_hat)
  double clip_vs_raw = 0.0;         // cos(g_clip, g_hat)
  bool degenerate = false;
};

inline CosineMetrics cosine_metrics(const PerSampleGradients& psg, double clip_bound,
                                    std::span<const double> g_hat,
                                    const ParamVector* prev_gpriv) {
  if (psg.batch_size == 0) throw ContractError("cosine_metrics: empty batch");
  CosineMetrics cm;
  double ghat_norm = l2_norm(g_hat);
  if (ghat_norm == 0.0) {
    cm.degenerate = true;
    return cm;
  }
  if (prev_gpriv) {
    if (prev_gpriv->l2_norm() == 0.0)
      cm.degenerate = true;
    else
      cm.prev_priv_vs_batch = cosine_similarity(prev_gpriv->values(), g_hat);
  }
  std::size_t l = psg.batch_size;
  std::size_t d = psg.dim();
  std::vector<double> clip_sum(d, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    std::span<const double> gi = psg.row(i);
    if (psg.norms[i] == 0.0)
      cm.degenerate = true;
    else
      cm.mean_per_sample += cosine_similarity(gi, g_hat);
    double denom = std::max(1.0, psg.norms[i] / clip_bound);
    for (std::size_t j = 0; j < d; ++j) clip_sum[j] += gi[j] / denom;
  }
  cm.mean_per_sample /= static_cast<double>(l);
  for (double& v : clip_sum) v /= static_cast<double>(l);
  cm.clip_vs_raw = cosine_similarity(clip_sum, g_hat);
  if (l2_norm(clip_sum) == 0.0) cm.degenerate = true;
  return cm;
}

}  // namespace dpbam
