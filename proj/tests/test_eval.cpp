#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "numprobe/error.hpp"
#include "numprobe/eval.hpp"

using namespace numprobe;
using namespace numprobe::eval;

namespace {

const std::vector<double> kLevels(data::kQuantileLevels.begin(), data::kQuantileLevels.end());

// Reference GP: dense Gaussian elimination with partial pivoting, no Eigen.
struct RefGp {
  double lml;
  double prediction;
};

RefGp reference_gp(const std::vector<double>& y, double l, double noise) {
  const std::size_t n = y.size();
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 2));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      a[i][j] = std::exp(-d * d / (2 * l * l)) + (i == j ? noise : 0.0);
    }
    a[i][n] = y[i];
    const double d = static_cast<double>(n) - static_cast<double>(i);
    a[i][n + 1] = std::exp(-d * d / (2 * l * l));
  }
  double log_det = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[p][c])) p = r;
    std::swap(a[c], a[p]);
    log_det += std::log(std::fabs(a[c][c]));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n + 2; ++k) a[r][k] -= f * a[c][k];
    }
  }
  // Back substitution for K^{-1} y; k_* is used only through y^T K^{-1} k_*.
  std::vector<double> alpha(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = a[i][n];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * alpha[k];
    alpha[i] = s / a[i][i];
  }
  double fit = 0.0, pred = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fit += y[i] * alpha[i];
    const double d = static_cast<double>(n) - static_cast<double>(i);
    pred += std::exp(-d * d / (2 * l * l)) * alpha[i];
  }
  return {-0.5 * fit - 0.5 * log_det - 0.5 * n * std::log(2 * std::numbers::pi), pred};
}

// Textbook Pearson: sum of products of deviations over root of products.
double textbook_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> one_to_hundred() {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  return v;
}

// Empirical quantiles (linear interpolation) as an S x N matrix.
nn::Matrix exact_quantiles(const std::vector<std::vector<double>>& samples) {
  nn::Matrix q(static_cast<Eigen::Index>(kLevels.size()), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::vector<double> s = samples[i];
    std::sort(s.begin(), s.end());
    for (std::size_t k = 0; k < kLevels.size(); ++k)
      q(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = data::empirical_quantile(s, kLevels[k]);
  }
  return q;
}

}  // namespace

TEST(Mse, ExampleTable) {
  const std::vector<double> a = {1.5, -2.0, 3.0};
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(mse(std::vector<double>{0, 0}, std::vector<double>{1, -1}), 1.0);
  EXPECT_DOUBLE_EQ(mse(std::vector<double>{2}, std::vector<double>{5}), 9.0);
  EXPECT_THROW(mse(std::vector<double>{1, 2}, std::vector<double>{1}), InputError);
  EXPECT_THROW(mse(std::vector<double>{}, std::vector<double>{}), InputError);
}

TEST(MagnitudeAccuracy, CountsMatches) {
  const probes::MagnitudeRange r{-3, 0};
  const std::vector<int> pred = {3, 2, 0, 1};
  const std::vector<double> truth = {5.0, 0.5, 0.0001, 0.5};
  EXPECT_DOUBLE_EQ(magnitude_accuracy(pred, truth, r), 0.75);
}

TEST(Baselines, ExampleTable) {
  const std::vector<double> s = {1, 2, 3};
  const Baselines b = baselines(s, 7.0);
  EXPECT_DOUBLE_EQ(b.series_mean, 2.0);
  EXPECT_DOUBLE_EQ(b.last_value, 3.0);
  EXPECT_DOUBLE_EQ(b.global_mean, 7.0);
  EXPECT_DOUBLE_EQ(global_mean(std::vector<double>(10, 4.25)), 4.25);
}

TEST(Gp, ConstantSeriesPredictsConstant) {
  EXPECT_DOUBLE_EQ(gp_baseline(std::vector<double>{2.5, 2.5, 2.5, 2.5}), 2.5);
}

TEST(Gp, RampAtFixedHyperparametersMatchesReferenceOracle) {
  const std::vector<double> ramp = {0, 1, 2, 3};
  const double mean = 1.5;
  const double sd = std::sqrt(1.25);
  std::vector<double> z;
  for (double v : ramp) z.push_back((v - mean) / sd);

  GpConfig fixed;
  fixed.lengthscales = {5.0};
  fixed.noise_variances = {1e-4};
  const GpFit at_fixed = gp_fit(ramp, fixed);
  const RefGp ref = reference_gp(z, 5.0, 1e-4);
  EXPECT_NEAR(at_fixed.prediction, mean + sd * ref.prediction, 1e-6);
  EXPECT_NEAR(at_fixed.prediction, 4.0, 0.5);
}

TEST(Gp, GridSelectionMatchesReferenceOracle) {
  const std::vector<double> ramp = {0, 1, 2, 3};
  const GpFit fit = gp_fit(ramp);
  const double mean = 1.5;
  const double sd = std::sqrt(1.25);
  std::vector<double> z;
  for (double v : ramp) z.push_back((v - mean) / sd);
  const GpConfig grid;
  double best_lml = -INFINITY, best_pred = 0.0;
  for (double l : grid.lengthscales)
    for (double v : grid.noise_variances) {
      const RefGp r = reference_gp(z, l, v);
      if (r.lml > best_lml) {
        best_lml = r.lml;
        best_pred = mean + sd * r.prediction;
      }
    }
  EXPECT_NEAR(fit.log_marginal_likelihood, best_lml, 1e-6);
  EXPECT_NEAR(fit.prediction, best_pred, 1e-6);
}

TEST(Gp, RerunsAreIdenticalAndShortSeriesRejected) {
  const std::vector<double> s = {0.3, -1.2, 0.8, 2.2, 1.9};
  EXPECT_EQ(gp_baseline(s), gp_baseline(s));
  EXPECT_THROW(gp_baseline(std::vector<double>{1.0}), InputError);
  GpConfig bad;
  bad.lengthscales.clear();
  EXPECT_THROW(gp_baseline(s, bad), ConfigError);
}

TEST(Coverage, ExampleTable) {
  const auto s = one_to_hundred();
  EXPECT_DOUBLE_EQ(fraction_inside(s, 25.5, 75.5), 0.5);
  EXPECT_DOUBLE_EQ(fraction_inside(s, -1e9, 1e9), 1.0);
  EXPECT_DOUBLE_EQ(fraction_inside(s, 25.0, 75.0), 0.51);  // closed interval
}

TEST(Coverage, MeanAndStandardError) {
  // Record 0 covers 50%, record 1 covers 100% of samples in every interval.
  std::vector<std::vector<double>> samples = {one_to_hundred(), one_to_hundred()};
  nn::Matrix q(7, 2);
  for (int s = 0; s < 7; ++s) {
    q(s, 0) = s < 3 ? 25.5 : 75.5;
    q(s, 1) = s < 3 ? 0.0 : 200.0;
  }
  const auto res = coverage(q, kLevels, samples);
  ASSERT_EQ(res.size(), 3u);
  EXPECT_DOUBLE_EQ(res[0].alpha, 0.5);
  EXPECT_DOUBLE_EQ(res[0].mean_percent, 75.0);
  // Sample sd of {50, 100} is 35.355...; SEM = sd / sqrt(2) = 25.
  EXPECT_NEAR(res[0].sem_percent, 25.0, 1e-12);
  EXPECT_EQ(res[0].records, 2u);
}

TEST(Coverage, NestedIntervalsAreMonotonePerRecord) {
  Rng rng(3);
  std::vector<std::vector<double>> samples(200);
  for (auto& s : samples)
    for (int j = 0; j < 100; ++j) s.push_back(rng.normal());
  nn::Matrix q(7, 200);
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    for (Eigen::Index s = 0; s < 7; ++s) q(s, i) = rng.normal();
    std::sort(q.col(i).begin(), q.col(i).end());
  }
  const nn::Matrix per = coverage_per_record(q, kLevels, samples);
  for (Eigen::Index i = 0; i < per.cols(); ++i) {
    EXPECT_LE(per(0, i), per(1, i));
    EXPECT_LE(per(1, i), per(2, i));
  }
}

TEST(Coverage, ExactQuantilesAreNearNominal) {
  Rng rng(4);
  std::vector<std::vector<double>> samples(50);
  for (auto& s : samples)
    for (int j = 0; j < 100; ++j) s.push_back(rng.normal(3.0, 2.0));
  const auto res = coverage(exact_quantiles(samples), kLevels, samples);
  EXPECT_NEAR(res[0].mean_percent, 50.0, 2.0);
  EXPECT_NEAR(res[1].mean_percent, 90.0, 2.0);
  EXPECT_NEAR(res[2].mean_percent, 95.0, 2.0);
}

TEST(Pearson, MatchesTextbookFormula) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x, y;
    for (int i = 0; i < 500; ++i) {
      x.push_back(rng.normal(1e3, 5.0));
      y.push_back(0.3 * x.back() + rng.normal());
    }
    EXPECT_NEAR(pearson(x, y), textbook_pearson(x, y), 1e-12);
  }
  EXPECT_DOUBLE_EQ(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}), 1.0);
  EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), InputError);
}

TEST(Iqr, NormalisedExampleAndPerfectProbe) {
  EXPECT_DOUBLE_EQ(normalised_iqr(2.0, 4.0, 6.0), 1.0);
  Rng rng(6);
  std::vector<std::vector<double>> samples(40);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (int j = 0; j < 100; ++j) samples[i].push_back(rng.normal(5.0, 0.1 + 0.05 * i));
  const auto c = iqr_correlation(exact_quantiles(samples), kLevels, samples);
  EXPECT_NEAR(c.r, 1.0, 1e-12);
  EXPECT_EQ(c.points.size(), 40u);
  EXPECT_EQ(c.excluded, 0u);
}

TEST(Iqr, ZeroMediansExcludedAndCounted) {
  std::vector<std::vector<double>> samples;
  for (int i = 0; i < 5; ++i) samples.push_back({1.0 + i, 2.0 + 2 * i, 3.0 + 5 * i});
  samples.push_back({-1.0, 0.0, 1.0});
  const auto c = iqr_correlation(exact_quantiles(samples), kLevels, samples);
  EXPECT_EQ(c.excluded, 1u);
  EXPECT_EQ(c.points.size(), 5u);
  samples.resize(2);
  samples.push_back({-1.0, 0.0, 1.0});
  samples.push_back({-2.0, 0.0, 1.0});
  EXPECT_THROW(iqr_correlation(exact_quantiles(samples), kLevels, samples), InputError);
}

TEST(QuantileMae, PerfectAndOffsetProbes) {
  Rng rng(7);
  std::vector<std::vector<double>> samples(10), targets;
  for (auto& s : samples)
    for (int j = 0; j < 100; ++j) s.push_back(rng.normal());
  const nn::Matrix q = exact_quantiles(samples);
  for (Eigen::Index i = 0; i < q.cols(); ++i)
    targets.emplace_back(q.col(i).data(), q.col(i).data() + q.rows());
  for (double v : per_quantile_mae(q, targets)) EXPECT_EQ(v, 0.0);
  const nn::Matrix shifted = q.array() + 0.75;
  for (double v : per_quantile_mae(shifted, targets)) EXPECT_NEAR(v, 0.75, 1e-12);
}

TEST(SampleEfficiency, FullSampleHasNoResamplingVariance) {
  Rng rng(8);
  std::vector<std::vector<double>> samples(60);
  std::vector<double> truth(60), probe(60, 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    truth[i] = rng.normal();
    for (int j = 0; j < 100; ++j) samples[i].push_back(truth[i] + rng.normal());
  }
  const std::vector<int> ns = {1, 5, 10, 20, 25, 50, 100};
  const auto curve = sample_efficiency(samples, truth, probe, ns, 100, 9);
  std::vector<double> full_means;
  for (const auto& s : samples) {
    double m = 0.0;
    for (double v : s) m += v / 100.0;
    full_means.push_back(m);
  }
  EXPECT_NEAR(curve.points.back().mse, mse(full_means, truth), 1e-12);
  for (const auto& p : curve.points) {
    EXPECT_LE(p.lower, p.mse);
    EXPECT_GE(p.upper, p.mse);
  }
  // Variance reduction: the mean-of-1 error exceeds the full-sample error.
  EXPECT_GT(curve.points.front().mse, curve.points.back().mse);
  for (std::size_t k = 1; k < curve.points.size(); ++k)
    EXPECT_LE(curve.points[k].mse, curve.points[k - 1].upper);
  EXPECT_THROW(sample_efficiency(samples, truth, probe, std::vector<int>{101}, 10, 1), InputError);
}

TEST(SampleEfficiency, CrossoverIsLargestNNotBeatingProbe) {
  std::vector<std::vector<double>> samples(20);
  std::vector<double> truth(20, 0.0), probe(20, 0.0);
  Rng rng(10);
  for (auto& s : samples)
    for (int j = 0; j < 100; ++j) s.push_back(rng.normal());
  const std::vector<int> ns = {1, 5, 100};
  auto curve = sample_efficiency(samples, truth, probe, ns, 10, 3);
  EXPECT_EQ(curve.probe_mse, 0.0);
  EXPECT_EQ(curve.crossover, 100);
  std::vector<double> bad(20, 100.0);
  curve = sample_efficiency(samples, truth, bad, ns, 10, 3);
  EXPECT_FALSE(curve.crossover.has_value());
  EXPECT_EQ(sample_efficiency(samples, truth, probe, ns, 10, 3).points[1].mse, curve.points[1].mse);
}

TEST(Flops, ExampleTable) {
  EXPECT_EQ(mlp_multiply_adds(std::vector<int>{1, 1, 1}), 2u);
  // 32768 * 512 + 512 * 9.
  EXPECT_EQ(mlp_multiply_adds(std::vector<int>{32768, 512, 9}), 16781824u);
  EXPECT_EQ(mlp_multiply_adds(std::vector<int>{32768, 512, 1}), 16777728u);
}

TEST(Flops, ProbeTotalsCountEveryHead) {
  probes::ProbeConfig c;
  c.hidden_dim = 8;
  Rng rng(1);
  probes::ScalarSettings st;
  st.range = probes::MagnitudeRange::combined();
  const auto scalar = probes::ScalarProbe::create(10, st, c, rng);
  EXPECT_EQ(flop_estimate(scalar), 10u * 8 + 8 * 8 + 11 * 8 + 8);
  probes::QuantileSettings qs;
  qs.range = st.range;
  const auto quantile = probes::QuantileProbe::create(10, qs, c, rng);
  EXPECT_EQ(flop_estimate(quantile), 7u * (10 * 8 + 8 * 8 + 11 * 8 + 8));
  const auto vanilla = probes::VanillaProbe::create(10, {}, c, rng);
  EXPECT_EQ(flop_estimate(vanilla), 10u * 8 + 8);
}

TEST(ContextLength, BucketsAndOutOfRangeDeviation) {
  nn::Matrix per(3, 4);
  per << 40, 50, 60, 50,  //
      80, 90, 90, 90,     //
      95, 95, 95, 85;
  const std::vector<int> lengths = {5, 15, 15, 30};
  const auto table = coverage_by_length(per, lengths);
  ASSERT_EQ(table.size(), 9u);
  const auto it = std::find_if(table.begin(), table.end(),
                               [](const LengthCoverage& c) { return c.length == 15 && c.alpha == 0.5; });
  ASSERT_NE(it, table.end());
  EXPECT_DOUBLE_EQ(it->mean_percent, 55.0);
  EXPECT_EQ(it->records, 2u);
  // Outside [10, 20]: lengths 5 and 30 -> |40-50|,|80-90|,0,0,0,|85-95|.
  EXPECT_NEAR(out_of_range_deviation(table, 10, 20), 30.0 / 6.0, 1e-12);
  EXPECT_THROW(out_of_range_deviation(table, 1, 40), InputError);
}
