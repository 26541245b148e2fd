#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "dpbam/dp.hpp"
#include "dpbam/rng.hpp"

using namespace dpbam;

namespace {

PerSampleGradients psg_from_rows(const std::vector<std::vector<double>>& rows) {
  std::size_t l = rows.size();
  std::size_t d = l ? rows[0].size() : 0;
  PerSampleGradients psg;
  psg.grads = Tensor({l, d});
  psg.norms.resize(l);
  psg.losses.assign(l, 0.0);
  psg.batch_size = l;
  psg.layout = ParamLayout::flat(d ? d : 1);
  if (d == 0) psg.grads = Tensor({l, 1});
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < d; ++j) psg.grads(i, j) = rows[i][j];
    psg.norms[i] = l2_norm(psg.row(i));
  }
  return psg;
}

PerSampleGradients random_psg(std::size_t l, std::size_t d, std::uint64_t seed, double scale) {
  RngStream rng(seed, 0, RngPurpose::probe);
  std::vector<std::vector<double>> rows(l, std::vector<double>(d));
  for (auto& r : rows)
    for (double& v : r) v = scale * rng.next_gauss();
  return psg_from_rows(rows);
}

}  // namespace

TEST(Clip, DefaultBoundIsOne) { EXPECT_DOUBLE_EQ(PrivacyConfig{}.clip_bound, 1.0); }

TEST(Clip, SmallVectorsPassThroughUnchanged) {
  std::vector<double> g = {0.3, -0.4};  // norm 0.5
  std::vector<double> c = clip(g, 1.0);
  EXPECT_EQ(c[0], g[0]);  // division by exactly 1.0
  EXPECT_EQ(c[1], g[1]);
}

TEST(Clip, ProjectsLargeVectorsToTheBall) {
  std::vector<double> c = clip(std::vector<double>{3.0, 4.0}, 1.0);  // norm 5
  EXPECT_NEAR(c[0], 0.6, 1e-15);
  EXPECT_NEAR(c[1], 0.8, 1e-15);
}

TEST(Clip, ZeroVectorMapsToItself) {
  std::vector<double> c = clip(std::vector<double>{0.0, 0.0, 0.0}, 2.0);
  for (double v : c) EXPECT_EQ(v, 0.0);
}

TEST(Clip, ResultStaysParallelAndBounded) {
  RngStream rng(3, 0, RngPurpose::probe);
  for (int t = 0; t < 200; ++t) {
    std::size_t d = 1 + rng.next_u64() % 8;
    std::vector<double> g(d);
    for (double& v : g) v = 4.0 * rng.next_gauss();
    double C = 0.25 + 2.0 * rng.next_uniform();
    std::vector<double> c = clip(g, C);
    EXPECT_LE(l2_norm(c), C + 1e-12);
    // parallel: c = s*g elementwise for one scalar s
    double s = l2_norm(c) / std::max(1e-300, l2_norm(g));
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(c[j], s * g[j], 1e-9 * std::abs(g[j]) + 1e-12);
  }
}

TEST(Clip, RejectsNonPositiveBound) {
  EXPECT_THROW(clip(std::vector<double>{1.0}, 0.0), ContractError);
  EXPECT_THROW(clip(std::vector<double>{1.0}, -1.0), ContractError);
}

TEST(PoissonSample, FullAndZeroRates) {
  RngStream rng1(1, 0, RngPurpose::poisson);
  EXPECT_EQ(poisson_sample(100, 1.0, rng1).size(), 100u);
  RngStream rng2(1, 0, RngPurpose::poisson);
  EXPECT_TRUE(poisson_sample(100, 0.0, rng2).empty());
}

TEST(PoissonSample, BinomialConcentration) {
  // q = 0.5, n = 10^4: each fixed-seed draw within 3 binomial SDs (= 150) of
  // 5000, and the mean over draws much closer.
  const std::size_t n = 10000;
  const double q = 0.5;
  const double sd = std::sqrt(n * q * (1 - q));
  double mean = 0.0;
  const int draws = 30;
  for (int t = 0; t < draws; ++t) {
    RngStream rng(42, static_cast<std::uint64_t>(t), RngPurpose::poisson);
    double size = static_cast<double>(poisson_sample(n, q, rng).size());
    EXPECT_NEAR(size, 5000.0, 3.0 * sd) << "draw " << t;
    mean += size;
  }
  mean /= draws;
  EXPECT_NEAR(mean, 5000.0, 3.0 * sd / std::sqrt(static_cast<double>(draws)));
}

TEST(PoissonSample, DeterministicPerKey) {
  RngStream a(7, 3, RngPurpose::poisson);
  RngStream b(7, 3, RngPurpose::poisson);
  EXPECT_EQ(poisson_sample(1000, 0.3, a), poisson_sample(1000, 0.3, b));
  RngStream c(7, 4, RngPurpose::poisson);
  EXPECT_NE(poisson_sample(1000, 0.3, c), [&] {
    RngStream d(7, 3, RngPurpose::poisson);
    return poisson_sample(1000, 0.3, d);
  }());
}

TEST(PrivateOracle, NoClipNoNoiseReturnsRawMean) {
  PerSampleGradients psg = random_psg(8, 5, 11, 0.1);  // norms well below C
  PrivacyConfig cfg;
  cfg.clip_bound = 10.0;
  cfg.noise_multiplier = 0.0;
  cfg.expected_batch_size = 8;  // equals actual
  RngStream rng(11, 0, RngPurpose::gauss_noise);
  GradientEstimates est = private_oracle(psg, cfg, rng);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(est.g_priv[j], est.g_hat[j]);
    EXPECT_EQ(est.g_clip[j], est.g_hat[j]);
  }
  EXPECT_EQ(est.clipped_count, 0u);
}

TEST(PrivateOracle, HandComputedClippedMean) {
  // 1-D gradients {3, 0.5}, C = 1, sigma = 0, l = 2: clip -> {1, 0.5},
  // mean 0.75.
  PerSampleGradients psg = psg_from_rows({{3.0}, {0.5}});
  PrivacyConfig cfg;
  cfg.clip_bound = 1.0;
  cfg.expected_batch_size = 2;
  RngStream rng(0, 0, RngPurpose::gauss_noise);
  GradientEstimates est = private_oracle(psg, cfg, rng);
  EXPECT_DOUBLE_EQ(est.g_clip[0], 0.75);
  EXPECT_DOUBLE_EQ(est.g_priv[0], 0.75);
  EXPECT_DOUBLE_EQ(est.g_hat[0], 1.75);
  EXPECT_EQ(est.clipped_count, 1u);
}

TEST(PrivateOracle, NoiseIsUnbiasedMonteCarlo) {
  // Mean of g_priv over fresh draws approaches g_clip; per-coordinate error
  // bounded by 4 Monte-Carlo standard errors.
  PerSampleGradients psg = random_psg(8, 4, 21, 1.5);
  PrivacyConfig cfg;
  cfg.clip_bound = 1.0;
  cfg.noise_multiplier = 1.0;
  cfg.expected_batch_size = 8;
  const int N = 100000;
  std::vector<double> mean(4, 0.0);
  GradientEstimates est;
  for (int t = 0; t < N; ++t) {
    RngStream rng(55, static_cast<std::uint64_t>(t), RngPurpose::gauss_noise);
    est = private_oracle(psg, cfg, rng);
    for (std::size_t j = 0; j < 4; ++j) mean[j] += est.g_priv[j];
  }
  double se = cfg.noise_multiplier * cfg.clip_bound /
              (static_cast<double>(cfg.expected_batch_size) * std::sqrt(static_cast<double>(N)));
  for (std::size_t j = 0; j < 4; ++j) {
    mean[j] /= N;
    EXPECT_NEAR(mean[j], est.g_clip[j], 4.0 * se) << "coordinate " << j;
  }
}

TEST(PrivateOracle, DeterministicPerRngKey) {
  PerSampleGradients psg = random_psg(4, 6, 31, 2.0);
  PrivacyConfig cfg;
  cfg.clip_bound = 1.0;
  cfg.noise_multiplier = 2.0;
  cfg.expected_batch_size = 4;
  RngStream r1(9, 5, RngPurpose::gauss_noise);
  RngStream r2(9, 5, RngPurpose::gauss_noise);
  GradientEstimates a = private_oracle(psg, cfg, r1);
  GradientEstimates b = private_oracle(psg, cfg, r2);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(a.g_priv[j], b.g_priv[j]);
}

TEST(PrivateOracle, ZeroExpectedBatchWithRowsIsContractError) {
  PerSampleGradients psg = random_psg(3, 2, 41, 1.0);
  PrivacyConfig cfg;
  cfg.expected_batch_size = 0;
  RngStream rng(0, 0, RngPurpose::gauss_noise);
  EXPECT_THROW(private_oracle(psg, cfg, rng), ContractError);
}

TEST(PrivateOracle, EmptyBatchEmitsPureNoise) {
  PerSampleGradients psg;
  psg.grads = Tensor({0, 3});
  psg.batch_size = 0;
  psg.layout = ParamLayout::flat(3);
  PrivacyConfig cfg;
  cfg.clip_bound = 1.0;
  cfg.noise_multiplier = 1.0;
  cfg.expected_batch_size = 16;
  RngStream rng(13, 0, RngPurpose::gauss_noise);
  GradientEstimates est = private_oracle(psg, cfg, rng);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(est.g_hat[j], 0.0);
    EXPECT_EQ(est.g_clip[j], 0.0);
    EXPECT_EQ(est.g_priv[j], est.noise_total[j] / 16.0);
  }
}

TEST(PrivateOracle, ZeroBiasWhenNothingClips) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    PerSampleGradients psg = random_psg(6, 4, seed, 0.05);  // norms < C = 1
    PrivacyConfig cfg;
    cfg.clip_bound = 1.0;
    cfg.expected_batch_size = 6;
    RngStream rng(seed, 0, RngPurpose::gauss_noise);
    GradientEstimates est = private_oracle(psg, cfg, rng);
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_NEAR(est.g_clip_actual[j], est.g_hat[j], 1e-12);
  }
}

TEST(PrivateOracle, AllClippedBiasMatchesRatioFormula) {
  // When every norm exceeds C the clipped mean is (1/l) sum (C/||g_i||) g_i.
  for (std::uint64_t seed = 200; seed < 240; ++seed) {
    PerSampleGradients psg = random_psg(5, 3, seed, 4.0);
    bool all_big = true;
    for (double n : psg.norms) all_big &= (n > 1.0);
    if (!all_big) continue;
    PrivacyConfig cfg;
    cfg.clip_bound = 1.0;
    cfg.expected_batch_size = 5;
    RngStream rng(seed, 0, RngPurpose::gauss_noise);
    GradientEstimates est = private_oracle(psg, cfg, rng);
    for (std::size_t j = 0; j < 3; ++j) {
      double formula = 0.0;
      for (std::size_t i = 0; i < 5; ++i)
        formula += (cfg.clip_bound / psg.norms[i]) * psg.row(i)[j];
      formula /= 5.0;
      EXPECT_NEAR(est.g_clip_actual[j], formula, 1e-12 * std::max(1.0, std::abs(formula)));
    }
  }
}

TEST(Clip, PerSampleDeviationShrinksWithNorm) {
  // ||clip(g) - g|| = max(0, ||g|| - C): monotone non-increasing as one
  // sample's norm shrinks toward C with the direction held fixed.
  RngStream rng(77, 0, RngPurpose::probe);
  for (int t = 0; t < 50; ++t) {
    std::size_t d = 1 + rng.next_u64() % 2;  // 1-D and 2-D probes
    std::vector<double> dir(d);
    for (double& v : dir) v = rng.next_gauss();
    double nd = l2_norm(dir);
    if (nd == 0.0) continue;
    for (double& v : dir) v /= nd;
    double C = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (double norm = 4.0; norm >= C; norm -= 0.25) {
      std::vector<double> g(d);
      for (std::size_t j = 0; j < d; ++j) g[j] = norm * dir[j];
      std::vector<double> c = clip(g, C);
      double dev = 0.0;
      for (std::size_t j = 0; j < d; ++j) dev += (c[j] - g[j]) * (c[j] - g[j]);
      dev = std::sqrt(dev);
      EXPECT_LE(dev, prev + 1e-12);
      EXPECT_NEAR(dev, std::max(0.0, norm - C), 1e-9);
      prev = dev;
    }
  }
}

TEST(PrivateOracle, PerSampleNoiseVariantMatchesSingleDrawWhenSigmaZero) {
  PerSampleGradients psg = random_psg(4, 3, 61, 1.0);
  PrivacyConfig cfg;
  cfg.clip_bound = 1.0;
  cfg.expected_batch_size = 4;
  cfg.noise_inside_sum = true;
  RngStream rng(1, 0, RngPurpose::gauss_noise);
  GradientEstimates est = private_oracle(psg, cfg, rng);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(est.g_priv[j], est.g_clip[j]);
}

TEST(PrivateOracle, PerSampleNoiseVariantIsUnbiasedToo) {
  PerSampleGradients psg = random_psg(4, 3, 71, 1.5);
  PrivacyConfig cfg;
  cfg.clip_bound = 1.0;
  cfg.noise_multiplier = 0.5;
  cfg.expected_batch_size = 4;
  cfg.noise_inside_sum = true;
  const int N = 20000;
  std::vector<double> mean(3, 0.0);
  GradientEstimates est;
  for (int t = 0; t < N; ++t) {
    RngStream rng(72, static_cast<std::uint64_t>(t), RngPurpose::gauss_noise);
    est = private_oracle(psg, cfg, rng);
    for (std::size_t j = 0; j < 3; ++j) mean[j] += est.g_priv[j];
  }
  // l independent draws inflate the variance by sqrt(l).
  double se = std::sqrt(4.0) * cfg.noise_multiplier * cfg.clip_bound /
              (4.0 * std::sqrt(static_cast<double>(N)));
  for (std::size_t j = 0; j < 3; ++j) {
    mean[j] /= N;
    EXPECT_NEAR(mean[j], est.g_clip[j], 4.0 * se);
  }
}

TEST(PrivacyConfigValidation, RejectsBadParameters) {
  PrivacyConfig cfg;
  cfg.clip_bound = 0.0;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg.clip_bound = 1.0;
  cfg.noise_multiplier = -0.1;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg.noise_multiplier = 1.0;
  cfg.sampling_rate = 1.5;
  EXPECT_THROW(cfg.validate(), ContractError);
}
