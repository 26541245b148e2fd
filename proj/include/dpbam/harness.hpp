#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpbam/accountant.hpp"
#include "dpbam/bias.hpp"
#include "dpbam/config.hpp"
#include "dpbam/datasets.hpp"
#include "dpbam/dp.hpp"
#include "dpbam/errors.hpp"
#include "dpbam/metrics.hpp"
#include "dpbam/models.hpp"
#include "dpbam/optimizers.hpp"

namespace dpbam {

namespace presets {
// Regularisation strengths swept when tuning BAM on the bundled tasks, and
// the tuned per-task defaults shipped for the reference benchmarks.
inline std::vector<double> bam_lambda_grid() { return {0.005, 0.01, 0.02, 0.1, 0.5}; }
inline std::vector<double> bam_lambda_defaults() { return {0.02, 0.01, 0.005}; }
inline double dp_sat_lambda_default() { return 0.086; }
inline std::vector<std::size_t> sweep_batch_sizes() { return {32, 128, 512}; }
}  // namespace presets

struct TrainOutcome {
  std::vector<MetricRecord> records;
  nlohmann::json summary;
  double sigma_used = 0.0;
  long total_steps = 0;
  double final_train_accuracy = 0.0;
  double final_eval_accuracy = 0.0;
  double epsilon_spent = 0.0;
  double mean_bias_norm = 0.0;     // over instrumented non-empty steps
  double mean_cos_clip_raw = 0.0;  // over instrumented non-empty steps
  std::vector<double> epoch_mean_bias;
};

namespace detail {

inline Dataset load_for(const RunConfig& cfg) {
  Dataset ds;
  if (cfg.dataset == "blobs")
    ds = make_blobs(cfg.n, cfg.input_dim, cfg.classes, cfg.separation, *cfg.seed);
  else if (cfg.dataset == "spirals")
    ds = make_spirals(cfg.n, cfg.classes, cfg.spiral_noise, *cfg.seed);
  else if (cfg.dataset == "csv")
    ds = load_csv(cfg.data_path);
  else if (cfg.dataset == "idx")
    ds = load_idx(cfg.data_path, cfg.labels_path, cfg.subset);
  else
    throw ContractError("unknown dataset kind '" + cfg.dataset + "'");
  standardize(ds);
  return ds;
}

inline Tensor gather_rows(const Tensor& X, const std::vector<std::size_t>& idx) {
  std::size_t cols = X.rank() == 2 ? X.dim(1) : 1;
  Tensor out = X.rank() == 2 ? Tensor({idx.size(), cols}) : Tensor({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = X[idx[i] * cols + j];
  return out;
}

}  // namespace detail

// One full training run: deterministic per seed, metrics appended as
// line-delimited records to cfg.out_path plus a closing summary record.
inline TrainOutcome run_train(const RunConfig& cfg) {
  cfg.validate();
  Dataset full = detail::load_for(cfg);
  Split split = train_eval_split(full, cfg.eval_fraction, *cfg.seed);
  Dataset& train = split.train;
  if (train.n == 0) throw ContractError("run_train: empty training split");

  ModelSpec spec;
  spec.input_dim = train.input_dim;
  spec.hidden = cfg.hidden;
  spec.classes = train.classes;
  spec.activation = cfg.activation == "relu" ? Activation::relu : Activation::tanh;
  spec.init_seed = *cfg.seed;
  LossKind loss_kind =
      cfg.loss == "mse" ? LossKind::mse : LossKind::cross_entropy_softmax;

  std::size_t l_exp = static_cast<std::size_t>(std::llround(cfg.q * static_cast<double>(train.n)));
  if (l_exp == 0) l_exp = 1;
  long steps_per_epoch =
      std::max<long>(1, std::llround(static_cast<double>(train.n) / static_cast<double>(l_exp)));
  long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;
  if (cfg.max_steps > 0) total_steps = std::min(total_steps, static_cast<long>(cfg.max_steps));

  double sigma = cfg.sigma ? *cfg.sigma
                           : calibrate_sigma(*cfg.target_epsilon, cfg.delta, cfg.q, total_steps);

  PrivacyConfig pcfg;
  pcfg.clip_bound = cfg.clip;
  pcfg.noise_multiplier = sigma;
  pcfg.sampling_rate = cfg.q;
  pcfg.expected_batch_size = l_exp;
  pcfg.delta = cfg.delta;
  pcfg.noise_inside_sum = cfg.noise_inside_sum;

  OptimizerConfig ocfg;
  ocfg.method = method_from_name(cfg.method);
  ocfg.learning_rate = cfg.learning_rate;
  ocfg.lambda = cfg.lambda;
  if (cfg.lambda_decay) ocfg.lambda_decay_steps = total_steps;
  ocfg.momentum = cfg.momentum;
  ocfg.ascent_norm_guard = cfg.ascent_norm_guard;

  TrainState state;
  state.theta = init_model(spec);
  state.ledger = AccountantLedger::create(cfg.q, sigma, cfg.delta);
  state.rng_seed = *cfg.seed;

  SampleLossFunction loss = make_sample_loss(spec, loss_kind);
  std::string hash = config_hash(cfg);
  MetricsWriter writer(cfg.out_path);

  TrainOutcome outcome;
  outcome.sigma_used = sigma;
  outcome.total_steps = total_steps;
  std::vector<double> epoch_bias_acc(cfg.epochs, 0.0);
  std::vector<long> epoch_bias_count(cfg.epochs, 0);
  double bias_acc = 0.0, cos_acc = 0.0;
  long instrumented = 0;

  for (long t = 0; t < total_steps; ++t) {
    RngStream sample_rng(*cfg.seed, static_cast<std::uint64_t>(t), RngPurpose::poisson);
    std::vector<std::size_t> batch_idx = poisson_sample(train.n, cfg.q, sample_rng);
    Tensor Xb = detail::gather_rows(train.X, batch_idx);
    Tensor Yb = detail::gather_rows(train.Y, batch_idx);

    bool instrument = (t % static_cast<long>(cfg.instrument_every) == 0);
    std::optional<ParamVector> prev = state.prev_gpriv;  // pre-step snapshot
    std::optional<ParamVector> theta_at_t;
    if (instrument && ocfg.method != Method::dp_sgd) theta_at_t = state.theta;

    auto t0 = std::chrono::steady_clock::now();
    StepResult res = step(state, loss, Xb, Yb, ocfg, pcfg);
    auto t1 = std::chrono::steady_clock::now();

    if (!instrument) continue;

    MetricRecord rec;
    rec.step = t;
    rec.epoch = static_cast<double>(t) / static_cast<double>(steps_per_epoch);
    rec.seed = *cfg.seed;
    rec.config_hash = hash;
    rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    rec.empty_batch = res.empty_batch;
    rec.train_loss = res.batch_mean_loss;
    rec.eval_accuracy =
        split.eval.n > 0 ? accuracy(spec, state.theta, split.eval.X, split.eval.Y) : 0.0;
    rec.epsilon_spent = rdp_to_eps(state.ledger, cfg.delta).epsilon;
    if (!res.empty_batch) {
      // Bias diagnostics target the true mini-batch gradient: the plain-loss
      // per-sample gradients at theta^(t). For dp_sgd those are exactly the
      // rows the oracle clipped; the ascent methods get a fresh plain pass,
      // so the measured bias is a property of where training went rather
      // than of the ascent perturbation itself.
      PerSampleGradients plain;
      const PerSampleGradients& view =
          theta_at_t ? (plain = per_sample_grads(loss, *theta_at_t, Xb, Yb)) : res.psg;
      ParamVector g_true = view.row_mean();
      BiasReport bias = bias_vector(view, pcfg.clip_bound);
      rec.bias_norm = bias.bias_norm;
      rec.fraction_clipped = bias.fraction_clipped;
      BiasDecomposition dec =
          decompose(view, pcfg.clip_bound, res.estimates.noise_total, g_true.values());
      rec.degenerate_decomposition = dec.degenerate;
      if (!dec.degenerate) {
        rec.a = dec.a;
        rec.c_norm = l2_norm(dec.c);
      }
      CosineMetrics cm =
          cosine_metrics(view, pcfg.clip_bound, g_true.values(), prev ? &*prev : nullptr);
      rec.degenerate_cosine = cm.degenerate;
      rec.cos_prev_priv = cm.prev_priv_vs_batch;
      rec.cos_per_sample = cm.mean_per_sample;
      rec.cos_clip_raw = cm.clip_vs_raw;

      bias_acc += rec.bias_norm;
      cos_acc += rec.cos_clip_raw;
      ++instrumented;
      std::size_t epoch_idx = std::min<std::size_t>(cfg.epochs - 1,
                                                    static_cast<std::size_t>(t / steps_per_epoch));
      epoch_bias_acc[epoch_idx] += rec.bias_norm;
      epoch_bias_count[epoch_idx] += 1;
    }
    writer.append(rec, cfg.emit_timings);
    outcome.records.push_back(rec);
  }

  outcome.final_train_accuracy = accuracy(spec, state.theta, train.X, train.Y);
  outcome.final_eval_accuracy =
      split.eval.n > 0 ? accuracy(spec, state.theta, split.eval.X, split.eval.Y) : 0.0;
  outcome.epsilon_spent = rdp_to_eps(state.ledger, cfg.delta).epsilon;
  if (instrumented > 0) {
    outcome.mean_bias_norm = bias_acc / static_cast<double>(instrumented);
    outcome.mean_cos_clip_raw = cos_acc / static_cast<double>(instrumented);
  }
  for (std::size_t e = 0; e < cfg.epochs; ++e)
    outcome.epoch_mean_bias.push_back(
        epoch_bias_count[e] > 0 ? epoch_bias_acc[e] / static_cast<double>(epoch_bias_count[e])
                                : 0.0);

  nlohmann::json summary;
  summary["steps"] = outcome.total_steps;
  summary["sigma"] = outcome.sigma_used;
  summary["epsilon_spent"] = outcome.epsilon_spent;
  summary["delta"] = cfg.delta;
  summary["train_accuracy"] = outcome.final_train_accuracy;
  summary["eval_accuracy"] = outcome.final_eval_accuracy;
  summary["mean_bias_norm"] = outcome.mean_bias_norm;
  summary["mean_cos_clip_raw"] = outcome.mean_cos_clip_raw;
  summary["epoch_mean_bias"] = outcome.epoch_mean_bias;
  summary["seed"] = *cfg.seed;
  summary["config_hash"] = hash;
  outcome.summary = summary;
  writer.append_summary(summary);
  writer.flush();
  if (!cfg.csv_path.empty()) export_metrics_csv(outcome.records, cfg.csv_path, cfg.emit_timings);
  return outcome;
}

// --- Wall-time benchmark -----------------------------------------------------

struct BenchmarkRow {
  std::size_t depth = 0;
  std::string method;
  double mean_ms = 0.0;
  double sd_ms = 0.0;
};

struct BenchmarkConfig {
  std::size_t width = 32;
  std::size_t input_dim = 16;
  std::size_t classes = 4;
  std::size_t batch = 32;
  std::size_t trials = 10;
  std::size_t reps = 5;
  double lambda = 0.05;
  double sigma = 1.0;
  double clip = 1.0;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
};

// Per-step wall time, mean and SD over trials x reps timed steps after one
// discarded warm-up step per (depth, method) cell.
inline std::vector<BenchmarkRow> run_benchmark(const std::vector<std::size_t>& depths,
                                               const std::vector<Method>& methods,
                                               const BenchmarkConfig& bcfg = {}) {
  std::vector<BenchmarkRow> rows;
  for (std::size_t depth : depths) {
    if (depth < 1) throw ContractError("run_benchmark: depth must be >= 1");
    Dataset data = make_blobs(bcfg.batch * 4, bcfg.input_dim, bcfg.classes, 3.0, bcfg.seed);
    standardize(data);
    ModelSpec spec;
    spec.input_dim = bcfg.input_dim;
    spec.hidden.assign(depth, bcfg.width);
    spec.classes = bcfg.classes;
    spec.activation = Activation::tanh;
    spec.init_seed = bcfg.seed;
    SampleLossFunction loss = make_sample_loss(spec, LossKind::cross_entropy_softmax);

    std::vector<std::size_t> idx(bcfg.batch);
    for (std::size_t i = 0; i < bcfg.batch; ++i) idx[i] = i;
    Tensor Xb = detail::gather_rows(data.X, idx);
    Tensor Yb = detail::gather_rows(data.Y, idx);

    PrivacyConfig pcfg;
    pcfg.clip_bound = bcfg.clip;
    pcfg.noise_multiplier = bcfg.sigma;
    pcfg.sampling_rate = 0.5;
    pcfg.expected_batch_size = bcfg.batch;

    // One state per method; measurements are interleaved round-robin so
    // ambient drift (frequency ramp, cache warmth) is shared evenly instead
    // of being charged to whichever method runs first.
    std::vector<OptimizerConfig> ocfgs;
    std::vector<TrainState> states;
    std::vector<std::vector<double>> times(methods.size());
    for (Method m : methods) {
      OptimizerConfig ocfg;
      ocfg.method = m;
      ocfg.learning_rate = bcfg.learning_rate;
      ocfg.lambda = bcfg.lambda;
      ocfgs.push_back(ocfg);
      TrainState state;
      state.theta = init_model(spec);
      state.ledger = AccountantLedger::create(0.5, bcfg.sigma, 1e-5);
      state.rng_seed = bcfg.seed;
      states.push_back(std::move(state));
    }
    for (std::size_t m = 0; m < methods.size(); ++m)
      step(states[m], loss, Xb, Yb, ocfgs[m], pcfg);  // warm-up, discarded
    for (std::size_t trial = 0; trial < bcfg.trials; ++trial) {
      for (std::size_t rep = 0; rep < bcfg.reps; ++rep) {
        // Rotate the starting method so no method always inherits the same
        // predecessor's cache footprint.
        std::size_t offset = (trial * bcfg.reps + rep) % methods.size();
        for (std::size_t k = 0; k < methods.size(); ++k) {
          std::size_t m = (offset + k) % methods.size();
          auto t0 = std::chrono::steady_clock::now();
          step(states[m], loss, Xb, Yb, ocfgs[m], pcfg);
          auto t1 = std::chrono::steady_clock::now();
          times[m].push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
      }
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
      double mean = 0.0;
      for (double v : times[m]) mean += v;
      mean /= static_cast<double>(times[m].size());
      double var = 0.0;
      for (double v : times[m]) var += (v - mean) * (v - mean);
      var /= static_cast<double>(times[m].size());
      rows.push_back({depth, method_name(methods[m]), mean, std::sqrt(var)});
    }
  }
  return rows;
}

// --- Batch-size bias sweep ----------------------------------------------------

struct BiasSweepRow {
  std::size_t batch_size = 0;
  double mean_bias_norm = 0.0;
  double mean_cos_clip_raw = 0.0;
};

// Trains one run per (batch size, seed) at the batch-size-matched sampling
// rate and averages the run-mean bias magnitude and clipped-vs-raw cosine
// across seeds.
inline std::vector<BiasSweepRow> run_bias_sweep(const RunConfig& base,
                                                const std::vector<std::size_t>& batch_sizes,
                                                std::size_t n_seeds) {
  base.validate();
  std::vector<BiasSweepRow> rows;
  std::size_t n_train =
      static_cast<std::size_t>(std::llround((1.0 - base.eval_fraction) * base.n));
  for (std::size_t B : batch_sizes) {
    if (B == 0 || B > n_train)
      throw ContractError("run_bias_sweep: batch size " + std::to_string(B) +
                          " not achievable with n_train=" + std::to_string(n_train));
    BiasSweepRow row;
    row.batch_size = B;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      RunConfig cfg = base;
      cfg.q = static_cast<double>(B) / static_cast<double>(n_train);
      cfg.seed = *base.seed + s;
      cfg.out_path = base.out_path + ".b" + std::to_string(B) + ".s" + std::to_string(s);
      TrainOutcome out = run_train(cfg);
      row.mean_bias_norm += out.mean_bias_norm;
      row.mean_cos_clip_raw += out.mean_cos_clip_raw;
    }
    row.mean_bias_norm /= static_cast<double>(n_seeds);
    row.mean_cos_clip_raw /= static_cast<double>(n_seeds);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace dpbam
