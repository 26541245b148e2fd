// Command-line front end: train / benchmark / bias-sweep / calibrate / verify.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpbam/accountant_reference.hpp"
#include "dpbam/dpbam.hpp"
#include "dpbam/oracles.hpp"

namespace {

using namespace dpbam;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string method;
  std::optional<double> epsilon, delta, sigma, lambda, clip, q, lr;
  std::optional<std::size_t> epochs, instrument_every, max_steps;
  bool lambda_decay = false;
  std::string dataset;
  bool timings = false;
  std::string csv;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value config file");
  cmd->add_option("--seed", f.seed, "run seed (mandatory unless set in the config)");
  cmd->add_option("--out", f.out, "metrics output path (JSONL)");
  cmd->add_option("--method", f.method, "dp_sgd | dp_sat | bam_sam | bam_exact");
  auto* eps = cmd->add_option("--epsilon", f.epsilon, "target epsilon (calibrates sigma)");
  auto* del = cmd->add_option("--delta", f.delta, "delta for the (epsilon, delta) target");
  auto* sig = cmd->add_option("--sigma", f.sigma, "noise multiplier (skips calibration)");
  sig->excludes(eps);
  sig->excludes(del);
  cmd->add_option("--lambda", f.lambda, "regularisation strength");
  cmd->add_flag("--lambda-decay", f.lambda_decay, "decay lambda linearly to 0 across the run");
  cmd->add_option("--max-steps", f.max_steps, "cap on total optimization steps");
  cmd->add_option("--clip", f.clip, "clipping bound C");
  cmd->add_option("--q", f.q, "Poisson sampling rate");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--instrument-every", f.instrument_every, "bias instrumentation period");
  cmd->add_option("--dataset", f.dataset, "blobs | spirals | csv | idx");
  cmd->add_flag("--timings", f.timings, "emit per-step wall time into metrics");
  cmd->add_option("--csv", f.csv, "also export metrics as CSV to this path");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = parse_config_file(f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_path = f.out;
  if (!f.method.empty()) cfg.method = f.method;
  if (f.epsilon) {
    cfg.target_epsilon = *f.epsilon;
    cfg.sigma.reset();
  }
  if (f.delta) cfg.delta = *f.delta;
  if (f.sigma) {
    cfg.sigma = *f.sigma;
    cfg.target_epsilon.reset();
  }
  if (f.lambda) cfg.lambda = *f.lambda;
  if (f.lambda_decay) cfg.lambda_decay = true;
  if (f.max_steps) cfg.max_steps = *f.max_steps;
  if (f.clip) cfg.clip = *f.clip;
  if (f.q) cfg.q = *f.q;
  if (f.lr) cfg.learning_rate = *f.lr;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.instrument_every) cfg.instrument_every = *f.instrument_every;
  if (!f.dataset.empty()) cfg.dataset = f.dataset;
  if (f.timings) cfg.emit_timings = true;
  if (!f.csv.empty()) cfg.csv_path = f.csv;
  return cfg;
}

int cmd_train(const CommonFlags& flags) {
  RunConfig cfg = resolve_config(flags);
  TrainOutcome out = run_train(cfg);
  std::cout << "steps: " << out.total_steps << "\n"
            << "sigma: " << out.sigma_used << "\n"
            << "epsilon spent: " << out.epsilon_spent << " (delta " << cfg.delta << ")\n"
            << "train accuracy: " << out.final_train_accuracy << "\n"
            << "eval accuracy: " << out.final_eval_accuracy << "\n"
            << "mean bias norm: " << out.mean_bias_norm << "\n"
            << "metrics: " << cfg.out_path << "\n";
  return 0;
}

int cmd_benchmark(const CommonFlags& flags, const std::vector<std::size_t>& depths,
                  std::size_t trials, std::size_t reps) {
  BenchmarkConfig bcfg;
  if (flags.seed) bcfg.seed = *flags.seed;
  if (flags.lambda) bcfg.lambda = *flags.lambda;
  if (flags.sigma) bcfg.sigma = *flags.sigma;
  bcfg.trials = trials;
  bcfg.reps = reps;
  std::vector<Method> methods = {Method::dp_sgd, Method::dp_sat, Method::bam_sam,
                                 Method::bam_exact};
  auto rows = run_benchmark(depths, methods, bcfg);
  std::printf("%8s  %-10s  %12s  %10s\n", "depth", "method", "mean_ms", "sd_ms");
  for (const auto& r : rows)
    std::printf("%8zu  %-10s  %12.4f  %10.4f\n", r.depth, r.method.c_str(), r.mean_ms, r.sd_ms);
  if (!flags.out.empty()) {
    std::ofstream jout(flags.out);
    for (const auto& r : rows) {
      nlohmann::json j{{"depth", r.depth}, {"method", r.method}, {"mean_ms", r.mean_ms},
                       {"sd_ms", r.sd_ms}};
      jout << j.dump() << "\n";
    }
    std::cout << "wrote " << flags.out << "\n";
  }
  return 0;
}

int cmd_bias_sweep(const CommonFlags& flags, const std::vector<std::size_t>& batch_sizes,
                   std::size_t seeds) {
  RunConfig cfg = resolve_config(flags);
  if (!cfg.sigma && !cfg.target_epsilon) cfg.sigma = 1.0;
  if (cfg.out_path.empty()) cfg.out_path = "bias_sweep.jsonl";
  auto rows = run_bias_sweep(cfg, batch_sizes, seeds);
  std::printf("%12s  %16s  %16s\n", "batch_size", "mean_bias_norm", "mean_cos_clip");
  for (const auto& r : rows)
    std::printf("%12zu  %16.6f  %16.6f\n", r.batch_size, r.mean_bias_norm, r.mean_cos_clip_raw);
  return 0;
}

int cmd_calibrate(double epsilon, double delta, double q, long steps) {
  double sigma = calibrate_sigma(epsilon, delta, q, steps);
  AccountantLedger ledger = AccountantLedger::create(q, sigma, delta);
  ledger.advance(steps);
  EpsilonReport rep = rdp_to_eps(ledger, delta);
  std::cout << "sigma: " << sigma << "\n"
            << "achieved epsilon: " << rep.epsilon << " at order " << rep.order << "\n";
  return 0;
}

// Compact oracle self-checks; exits nonzero on the first failure.
int cmd_verify() {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", name);
    if (!ok) ++failures;
  };

  {
    ModelSpec spec;
    spec.input_dim = 6;
    spec.hidden = {16, 12};
    spec.classes = 3;
    spec.activation = Activation::tanh;
    spec.init_seed = 12467;
    ParamVector theta = init_model(spec);
    RngStream rng(9, 0, RngPurpose::probe);
    Tensor x({6});
    for (std::size_t i = 0; i < 6; ++i) x[i] = rng.next_gauss();
    ScalarFunction f = make_loss(spec, LossKind::cross_entropy_softmax, x, Tensor::scalar(1.0));
    ParamVector g = grad(f, theta);
    ParamVector g_fd = fd_grad(f, theta);
    check("grad matches central finite differences (rel 1e-6)",
          (g - g_fd).l2_norm() <= 1e-6 * g_fd.l2_norm());

    ParamVector v(theta.layout(), std::vector<double>(theta.dim(), 0.1));
    ParamVector hv = hvp(f, theta, v);
    ParamVector hv_dense = dense_hessian_hvp(f, theta, v);
    check("hvp matches dense-Hessian oracle (rel 1e-8)",
          (hv - hv_dense).l2_norm() <= 1e-8 * hv_dense.l2_norm());

    JvpResult jr = jvp(f, theta, v);
    check("jvp agrees with <grad, v> (rel 1e-12)",
          std::abs(jr.directional - dot(g, v)) <= 1e-12 * std::abs(dot(g, v)));
  }
  {
    std::vector<double> g = {3.0, 4.0};
    std::vector<double> c = clip(g, 1.0);
    check("clip projects to the L2 ball", std::abs(l2_norm(c) - 1.0) < 1e-12 &&
                                              std::abs(c[0] - 0.6) < 1e-12 &&
                                              std::abs(c[1] - 0.8) < 1e-12);
  }
  {
    auto orders = default_rdp_orders();
    auto prod = rdp_step(0.01, 1.0, orders);
    auto ref = reference::rdp_step(0.01, 1.0, orders);
    bool ok = true;
    for (std::size_t i = 0; i < orders.size(); ++i)
      if (std::abs(prod[i] - ref[i]) > 1e-6 * std::max(1e-300, ref[i])) ok = false;
    check("production RDP matches high-precision reference (rel 1e-6)", ok);

    double sigma = calibrate_sigma(1.0, 1e-5, 0.05, 2000);
    AccountantLedger lg = AccountantLedger::create(0.05, sigma, 1e-5);
    lg.advance(2000);
    double eps = rdp_to_eps(lg, 1e-5).epsilon;
    check("calibrate -> account round trip within [0.999, 1] x target",
          eps <= 1.0 && eps >= 0.999);
  }
  {
    RngStream rng(4, 0, RngPurpose::probe);
    std::size_t l = 32, d = 10;
    PerSampleGradients psg;
    psg.grads = Tensor({l, d});
    psg.norms.resize(l);
    psg.batch_size = l;
    psg.layout = ParamLayout::flat(d);
    for (std::size_t i = 0; i < l; ++i) {
      for (std::size_t j = 0; j < d; ++j) psg.grads(i, j) = rng.next_gauss();
      psg.norms[i] = l2_norm(psg.row(i));
    }
    std::vector<double> noise(d);
    for (double& v : noise) v = rng.next_gauss();
    ParamVector ghat = psg.row_mean();
    BiasDecomposition dec = decompose(psg, 1.0, noise, ghat.values());
    std::vector<double> recon(d);
    double err = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double gclip = 0.0;
      for (std::size_t i = 0; i < l; ++i)
        gclip += psg.grads(i, j) / std::max(1.0, psg.norms[i] / 1.0);
      gclip /= static_cast<double>(l);
      double gpriv = gclip + noise[j] / static_cast<double>(l);
      recon[j] = dec.a * ghat[j] + dec.c[j];
      err += (recon[j] - gpriv) * (recon[j] - gpriv);
      norm += gpriv * gpriv;
    }
    check("decomposition reconstructs the privatized estimate (rel 1e-10)",
          std::sqrt(err) <= 1e-10 * std::sqrt(norm));
  }
  std::printf("%s\n", failures == 0 ? "verify: all checks passed" : "verify: FAILURES");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private training with bias-aware minimisation"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "run one training job");
  add_common_flags(train, train_flags);

  CommonFlags bench_flags;
  std::vector<std::size_t> depths = {4, 16, 64};
  std::size_t trials = 10, reps = 5;
  auto* bench = app.add_subcommand("benchmark", "per-step wall-time comparison");
  add_common_flags(bench, bench_flags);
  bench->add_option("--depths", depths, "hidden-layer counts to benchmark");
  bench->add_option("--trials", trials, "timing trials per cell");
  bench->add_option("--reps", reps, "repetitions per trial");

  CommonFlags sweep_flags;
  std::vector<std::size_t> batch_sizes = presets::sweep_batch_sizes();
  std::size_t sweep_seeds = 3;
  auto* sweep = app.add_subcommand("bias-sweep", "bias magnitude across batch sizes");
  add_common_flags(sweep, sweep_flags);
  sweep->add_option("--batch-sizes", batch_sizes, "expected batch sizes to sweep");
  sweep->add_option("--seeds", sweep_seeds, "number of seeds to average");

  double cal_eps = 1.0, cal_delta = 1e-5, cal_q = 0.01;
  long cal_steps = 1000;
  auto* cal = app.add_subcommand("calibrate", "noise multiplier for an (epsilon, delta) target");
  cal->add_option("--epsilon", cal_eps, "target epsilon")->required();
  cal->add_option("--delta", cal_delta, "delta")->required();
  cal->add_option("--q", cal_q, "Poisson sampling rate")->required();
  cal->add_option("--steps", cal_steps, "number of oracle queries")->required();

  auto* verify = app.add_subcommand("verify", "run the oracle self-checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_flags);
    if (bench->parsed()) return cmd_benchmark(bench_flags, depths, trials, reps);
    if (sweep->parsed()) return cmd_bias_sweep(sweep_flags, batch_sizes, sweep_seeds);
    if (cal->parsed()) return cmd_calibrate(cal_eps, cal_delta, cal_q, cal_steps);
    if (verify->parsed()) return cmd_verify();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
