#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "numprobe/dataset.hpp"
#include "numprobe/nn.hpp"
#include "numprobe/probes.hpp"

namespace numprobe::eval {

// Mean squared difference. InputError on empty or unequal inputs.
double mse(std::span<const double> predictions, std::span<const double> targets);

// Fraction of predicted classes equal to the class of each target.
double magnitude_accuracy(std::span<const int> predicted,
                          std::span<const double> targets,
                          const probes::MagnitudeRange& range);

struct Baselines {
  double global_mean = 0.0;  // mean training target
  double series_mean = 0.0;
  double last_value = 0.0;
};

double global_mean(std::span<const double> train_targets);
Baselines baselines(std::span<const double> series, double global_mean);

// Squared-exponential GP on (index, value) with standardised values and unit
// signal variance; hyperparameters by log marginal likelihood over the grid.
struct GpConfig {
  std::vector<double> lengthscales = {1.0, 2.0, 5.0, 10.0, 20.0};
  std::vector<double> noise_variances = {1e-4, 1e-2, 1e-1};
  int jitter_retries = 5;
  void validate() const;
};

struct GpFit {
  double lengthscale = 0.0;
  double noise_variance = 0.0;
  double log_marginal_likelihood = 0.0;
  double prediction = 0.0;
};

// Predictive mean at index n + 1 (series indices 1..n). InputError for fewer
// than two points; NumericError when the kernel stays singular after jitter.
GpFit gp_fit(std::span<const double> series, const GpConfig& config = {});
double gp_baseline(std::span<const double> series, const GpConfig& config = {});

// Interval levels: 50% = [q.25, q.75], 90% = [q.05, q.95], 95% = [q.025, q.975].
struct IntervalSpec {
  double alpha;
  double lower;
  double upper;
};
inline constexpr std::array<IntervalSpec, 3> kIntervals = {{
    {0.50, 0.25, 0.75}, {0.90, 0.05, 0.95}, {0.95, 0.025, 0.975}}};

// Fraction of samples in the closed interval [lo, hi].
double fraction_inside(std::span<const double> samples, double lo, double hi);

struct CoverageResult {
  double alpha = 0.0;
  double mean_percent = 0.0;
  double sem_percent = 0.0;
  std::size_t records = 0;
};

// Per record and interval: percentage of samples covered. Rows follow
// kIntervals, columns follow the records. `quantiles` is S x N.
nn::Matrix coverage_per_record(const nn::Matrix& quantiles,
                               std::span<const double> levels,
                               const std::vector<std::vector<double>>& samples);

std::vector<CoverageResult> coverage(const nn::Matrix& quantiles,
                                     std::span<const double> levels,
                                     const std::vector<std::vector<double>>& samples);

// Two-pass Pearson correlation. InputError on fewer than 2 points or zero
// variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct IqrPoint {
  std::size_t index = 0;
  double predicted = 0.0;  // predicted IQR / |predicted median|
  double sample = 0.0;     // sample IQR / |sample median|
};

struct IqrCorrelation {
  double r = 0.0;
  std::vector<IqrPoint> points;
  std::size_t excluded = 0;
};

double normalised_iqr(double q25, double median, double q75);

IqrCorrelation iqr_correlation(const nn::Matrix& quantiles,
                               std::span<const double> levels,
                               const std::vector<std::vector<double>>& samples);

struct EfficiencyPoint {
  int n = 0;
  double mse = 0.0;
  double lower = 0.0;  // 2.5% bootstrap percentile
  double upper = 0.0;  // 97.5% bootstrap percentile
};

struct EfficiencyCurve {
  std::vector<EfficiencyPoint> points;
  double probe_mse = 0.0;
  // Largest N whose sample-mean error is still at least the probe's.
  std::optional<int> crossover;
};

inline constexpr std::array<int, 7> kEfficiencyN = {1, 5, 10, 20, 25, 50, 100};

// Error of the mean of N samples drawn without replacement per record, with
// a percentile band from bootstrap resampling of records.
EfficiencyCurve sample_efficiency(const std::vector<std::vector<double>>& samples,
                                  std::span<const double> truth,
                                  std::span<const double> probe_predictions,
                                  std::span<const int> n_list, int bootstraps,
                                  std::uint64_t seed);

// Mean |empirical - predicted| per level. `quantiles` is S x N.
std::vector<double> per_quantile_mae(const nn::Matrix& quantiles,
                                     const std::vector<std::vector<double>>& targets);

// Multiply-adds of one forward pass (one multiply-add counts as one FLOP).
std::uint64_t mlp_multiply_adds(std::span<const int> widths);
std::uint64_t flop_estimate(const nn::Mlp& net);
std::uint64_t flop_estimate(const probes::ScalarProbe& probe);
std::uint64_t flop_estimate(const probes::QuantileProbe& probe);
std::uint64_t flop_estimate(const probes::VanillaProbe& probe);

struct LengthCoverage {
  int length = 0;
  double alpha = 0.0;
  double mean_percent = 0.0;
  std::size_t records = 0;
};

// Coverage per (series length, interval). `per_record` comes from
// coverage_per_record.
std::vector<LengthCoverage> coverage_by_length(const nn::Matrix& per_record,
                                               std::span<const int> lengths);

// Mean |coverage - 100 alpha| over buckets whose length lies outside
// [lo, hi]. InputError when no such bucket exists.
double out_of_range_deviation(std::span<const LengthCoverage> table, int lo, int hi);

}  // namespace numprobe::eval
