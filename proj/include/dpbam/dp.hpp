#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dpbam/errors.hpp"
#include "dpbam/functions.hpp"
#include "dpbam/param.hpp"
#include "dpbam/rng.hpp"
#include "dpbam/tensor.hpp"

namespace dpbam {

// Parameters of the private gradient oracle. Sensitivity of the clipped
// per-sample sum is the clip bound C (pre-averaging convention); the noise
// standard deviation on the sum is sigma * C per coordinate.
struct PrivacyConfig {
  double clip_bound = 1.0;        // C
  double noise_multiplier = 0.0;  // sigma
  double sampling_rate = 0.0;     // q
  std::size_t expected_batch_size = 0;  // l = round(q * n)
  double delta = 1e-5;
  // Variant that draws fresh noise per sample inside the sum instead of one
  // draw after it. Off by default; equivalent in expectation but inflates
  // variance by the batch size.
  bool noise_inside_sum = false;

  double sensitivity() const { return clip_bound; }

  void validate() const {
    if (clip_bound <= 0.0) throw ContractError("PrivacyConfig: clip_bound must be > 0");
    if (noise_multiplier < 0.0) throw ContractError("PrivacyConfig: noise_multiplier must be >= 0");
    if (sampling_rate < 0.0 || sampling_rate > 1.0)
      throw ContractError("PrivacyConfig: sampling_rate must lie in [0,1]");
    if (delta <= 0.0 || delta >= 1.0) throw ContractError("PrivacyConfig: delta must lie in (0,1)");
  }
};

// Project g onto the L2 ball of radius C: g / max(1, ||g||/C). The zero
// vector maps to itself.
inline std::vector<double> clip(std::span<const double> g, double clip_bound) {
  if (clip_bound <= 0.0) throw ContractError("clip: clip_bound must be > 0");
  double denom = std::max(1.0, l2_norm(g) / clip_bound);
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] / denom;
  return out;
}

inline ParamVector clip(const ParamVector& g, double clip_bound) {
  return ParamVector(g.layout(), clip(g.values(), clip_bound));
}

// Each index enters the batch independently with probability q. An empty
// result is a valid outcome.
inline std::vector<std::size_t> poisson_sample(std::size_t dataset_size, double q,
                                               RngStream& rng) {
  if (q < 0.0 || q > 1.0) throw ContractError("poisson_sample: q must lie in [0,1]");
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < dataset_size; ++i)
    if (rng.next_uniform() < q) picked.push_back(i);
  return picked;
}

// All three gradient estimates of one oracle query, plus the raw noise that
// went into the sum so a run can be replayed or decomposed exactly.
struct GradientEstimates {
  ParamVector g_hat;          // unclipped mean over the observed rows
  ParamVector g_clip;         // clipped mean, expected-batch-size denominator
  ParamVector g_clip_actual;  // clipped mean, observed-batch-size denominator
  ParamVector g_priv;         // g_clip + noise / expected_batch_size
  std::vector<double> noise_total;  // raw draw added to the clipped sum (std sigma*C)
  std::size_t actual_batch_size = 0;
  std::size_t expected_batch_size = 0;
  std::size_t clipped_count = 0;  // rows with ||g_i|| > C
};

// The private gradient oracle: clip each row to C, average, perturb with a
// single d-dimensional Gaussian draw of scale sigma*C on the sum. The
// expected batch size divides the privatized estimate; the observed-batch
// average is recorded alongside for bias instrumentation, which views the
// batch as fixed.
inline GradientEstimates private_oracle(const PerSampleGradients& psg, const PrivacyConfig& cfg,
                                        RngStream& rng) {
  cfg.validate();
  std::size_t l_act = psg.batch_size;
  std::size_t l_exp = cfg.expected_batch_size;
  if (l_exp == 0 && l_act > 0)
    throw ContractError("private_oracle: expected_batch_size is 0 with a nonempty batch");
  std::size_t d = psg.dim();
  GradientEstimates est;
  est.actual_batch_size = l_act;
  est.expected_batch_size = l_exp;

  std::vector<double> raw_sum(d, 0.0);
  std::vector<double> clip_sum(d, 0.0);
  for (std::size_t i = 0; i < l_act; ++i) {
    std::span<const double> row = psg.row(i);
    double denom = std::max(1.0, psg.norms[i] / cfg.clip_bound);
    if (denom > 1.0) ++est.clipped_count;
    for (std::size_t j = 0; j < d; ++j) {
      raw_sum[j] += row[j];
      clip_sum[j] += row[j] / denom;
    }
  }

  auto averaged = [&](const std::vector<double>& sum, std::size_t l) {
    std::vector<double> v(d, 0.0);
    if (l > 0)
      for (std::size_t j = 0; j < d; ++j) v[j] = sum[j] / static_cast<double>(l);
    return ParamVector(psg.layout, std::move(v));
  };
  est.g_hat = averaged(raw_sum, l_act);
  est.g_clip = averaged(clip_sum, l_exp);
  est.g_clip_actual = averaged(clip_sum, l_act);

  est.noise_total.assign(d, 0.0);
  if (cfg.noise_multiplier > 0.0 && l_exp > 0) {
    double stddev = cfg.noise_multiplier * cfg.clip_bound;
    if (cfg.noise_inside_sum) {
      std::vector<double> draw(d);
      for (std::size_t i = 0; i < l_act; ++i) {
        rng.fill_gauss(draw, stddev);
        for (std::size_t j = 0; j < d; ++j) est.noise_total[j] += draw[j];
      }
    } else {
      rng.fill_gauss(est.noise_total, stddev);
    }
    std::vector<double> priv(d);
    for (std::size_t j = 0; j < d; ++j)
      priv[j] = est.g_clip[j] + est.noise_total[j] / static_cast<double>(l_exp);
    est.g_priv = ParamVector(psg.layout, std::move(priv));
  } else {
    est.g_priv = est.g_clip;  // bit-exact when sigma = 0
  }
  return est;
}

}  // namespace dpbam
