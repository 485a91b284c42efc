#include "numprobe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "numprobe/error.hpp"
#include "numprobe/rng.hpp"

namespace numprobe::eval {
namespace {

void check_quantiles(const nn::Matrix& q, std::span<const double> levels,
                     std::size_t records) {
  if (static_cast<std::size_t>(q.rows()) != levels.size())
    throw InputError("quantile rows do not match the number of levels");
  if (static_cast<std::size_t>(q.cols()) != records)
    throw InputError("quantile columns do not match the number of records");
}

Eigen::Index level_row(std::span<const double> levels, double tau) {
  for (std::size_t s = 0; s < levels.size(); ++s)
    if (std::fabs(levels[s] - tau) < 1e-12) return static_cast<Eigen::Index>(s);
  throw InputError("quantile level " + std::to_string(tau) + " is not predicted");
}

std::pair<double, double> mean_sem(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

}  // namespace

double mse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size())
    throw InputError("mse: " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(targets.size()) +
                     " targets");
  if (predictions.empty()) throw InputError("mse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    total += d * d;
  }
  return total / static_cast<double>(predictions.size());
}

double magnitude_accuracy(std::span<const int> predicted,
                          std::span<const double> targets,
                          const probes::MagnitudeRange& range) {
  if (predicted.size() != targets.size() || predicted.empty())
    throw InputError("magnitude accuracy: empty or mismatched inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (predicted[i] == probes::magnitude_class(targets[i], range)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

double global_mean(std::span<const double> train_targets) {
  if (train_targets.empty()) throw InputError("global mean of an empty set");
  return std::accumulate(train_targets.begin(), train_targets.end(), 0.0) /
         static_cast<double>(train_targets.size());
}

Baselines baselines(std::span<const double> series, double global) {
  if (series.empty()) throw InputError("baselines of an empty series");
  Baselines b;
  b.global_mean = global;
  b.series_mean = std::accumulate(series.begin(), series.end(), 0.0) /
                  static_cast<double>(series.size());
  b.last_value = series.back();
  return b;
}

double fraction_inside(std::span<const double> samples, double lo, double hi) {
  if (samples.empty()) throw InputError("coverage of an empty sample set");
  std::size_t in = 0;
  for (double y : samples)
    if (y >= lo && y <= hi) ++in;
  return static_cast<double>(in) / static_cast<double>(samples.size());
}

nn::Matrix coverage_per_record(const nn::Matrix& quantiles,
                               std::span<const double> levels,
                               const std::vector<std::vector<double>>& samples) {
  check_quantiles(quantiles, levels, samples.size());
  nn::Matrix out(static_cast<Eigen::Index>(kIntervals.size()), quantiles.cols());
  for (std::size_t a = 0; a < kIntervals.size(); ++a) {
    const Eigen::Index lo = level_row(levels, kIntervals[a].lower);
    const Eigen::Index hi = level_row(levels, kIntervals[a].upper);
    for (Eigen::Index i = 0; i < quantiles.cols(); ++i)
      out(static_cast<Eigen::Index>(a), i) =
          100.0 * fraction_inside(samples[static_cast<std::size_t>(i)],
                                  quantiles(lo, i), quantiles(hi, i));
  }
  return out;
}

std::vector<CoverageResult> coverage(const nn::Matrix& quantiles,
                                     std::span<const double> levels,
                                     const std::vector<std::vector<double>>& samples) {
  if (samples.empty()) throw InputError("coverage of an empty record set");
  const nn::Matrix per = coverage_per_record(quantiles, levels, samples);
  std::vector<CoverageResult> out;
  for (std::size_t a = 0; a < kIntervals.size(); ++a) {
    std::vector<double> row(per.cols());
    for (Eigen::Index i = 0; i < per.cols(); ++i)
      row[static_cast<std::size_t>(i)] = per(static_cast<Eigen::Index>(a), i);
    const auto [mean, sem] = mean_sem(row);
    out.push_back({kIntervals[a].alpha, mean, sem, row.size()});
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("pearson: length mismatch");
  if (x.size() < 2) throw InputError("pearson: fewer than two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw InputError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double normalised_iqr(double q25, double median, double q75) {
  if (median == 0.0) throw InputError("normalised IQR with zero median");
  return (q75 - q25) / std::fabs(median);
}

IqrCorrelation iqr_correlation(const nn::Matrix& quantiles,
                               std::span<const double> levels,
                               const std::vector<std::vector<double>>& samples) {
  check_quantiles(quantiles, levels, samples.size());
  const Eigen::Index r25 = level_row(levels, 0.25);
  const Eigen::Index r50 = level_row(levels, 0.5);
  const Eigen::Index r75 = level_row(levels, 0.75);
  IqrCorrelation out;
  std::vector<double> px, sx;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    std::vector<double> sorted = samples[i];
    if (sorted.empty()) throw InputError("record without samples");
    std::sort(sorted.begin(), sorted.end());
    const double s50 = data::empirical_quantile(sorted, 0.5);
    const double p50 = quantiles(r50, col);
    if (s50 == 0.0 || p50 == 0.0) {
      ++out.excluded;
      continue;
    }
    IqrPoint pt;
    pt.index = i;
    pt.predicted = normalised_iqr(quantiles(r25, col), p50, quantiles(r75, col));
    pt.sample = normalised_iqr(data::empirical_quantile(sorted, 0.25), s50,
                               data::empirical_quantile(sorted, 0.75));
    px.push_back(pt.predicted);
    sx.push_back(pt.sample);
    out.points.push_back(pt);
  }
  if (out.points.size() < 3)
    throw InputError("IQR correlation needs at least 3 records with nonzero medians");
  out.r = pearson(px, sx);
  return out;
}

EfficiencyCurve sample_efficiency(const std::vector<std::vector<double>>& samples,
                                  std::span<const double> truth,
                                  std::span<const double> probe_predictions,
                                  std::span<const int> n_list, int bootstraps,
                                  std::uint64_t seed) {
  const std::size_t n_rec = samples.size();
  if (n_rec == 0) throw InputError("sample efficiency on an empty record set");
  if (truth.size() != n_rec || probe_predictions.size() != n_rec)
    throw InputError("sample efficiency: mismatched record counts");
  if (bootstraps < 1) throw ConfigError("bootstrap count must be positive");
  std::size_t n_sa = samples.front().size();
  for (const auto& s : samples) n_sa = std::min(n_sa, s.size());

  EfficiencyCurve curve;
  curve.probe_mse = mse(probe_predictions, truth);
  for (int n : n_list) {
    if (n < 1 || static_cast<std::size_t>(n) > n_sa)
      throw InputError("N = " + std::to_string(n) + " exceeds the " +
                       std::to_string(n_sa) + " available samples");
    std::vector<double> err(n_rec);
    for (std::size_t i = 0; i < n_rec; ++i) {
      const auto& s = samples[i];
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(n), i}));
      std::vector<std::size_t> idx(s.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      double sum = 0.0;
      for (int k = 0; k < n; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const std::size_t j = uk + static_cast<std::size_t>(rng.below(s.size() - uk));
        std::swap(idx[uk], idx[j]);
        sum += s[idx[uk]];
      }
      const double d = sum / n - truth[i];
      err[i] = d * d;
    }
    EfficiencyPoint pt;
    pt.n = n;
    pt.mse = std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(n_rec);

    Rng boot(derive_seed(seed, {0x626f6f74ULL, static_cast<std::uint64_t>(n)}));
    std::vector<double> means(static_cast<std::size_t>(bootstraps));
    for (auto& m : means) {
      double total = 0.0;
      for (std::size_t k = 0; k < n_rec; ++k) total += err[boot.below(n_rec)];
      m = total / static_cast<double>(n_rec);
    }
    std::sort(means.begin(), means.end());
    pt.lower = data::empirical_quantile(means, 0.025);
    pt.upper = data::empirical_quantile(means, 0.975);
    curve.points.push_back(pt);
    if (curve.probe_mse <= pt.mse) curve.crossover = std::max(curve.crossover.value_or(n), n);
  }
  return curve;
}

std::vector<double> per_quantile_mae(const nn::Matrix& quantiles,
                                     const std::vector<std::vector<double>>& targets) {
  if (static_cast<std::size_t>(quantiles.cols()) != targets.size() || targets.empty())
    throw InputError("per-quantile MAE: empty or mismatched inputs");
  std::vector<double> out(static_cast<std::size_t>(quantiles.rows()), 0.0);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].size() != out.size())
      throw InputError("per-quantile MAE: target count does not match levels");
    for (std::size_t s = 0; s < out.size(); ++s)
      out[s] += std::fabs(targets[i][s] -
                          quantiles(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)));
  }
  for (double& v : out) v /= static_cast<double>(targets.size());
  return out;
}

std::uint64_t mlp_multiply_adds(std::span<const int> widths) {
  std::uint64_t total = 0;
  for (std::size_t l = 1; l < widths.size(); ++l)
    total += static_cast<std::uint64_t>(widths[l - 1]) * static_cast<std::uint64_t>(widths[l]);
  return total;
}

std::uint64_t flop_estimate(const nn::Mlp& net) { return mlp_multiply_adds(net.widths()); }

std::uint64_t flop_estimate(const probes::ScalarProbe& probe) {
  return flop_estimate(probe.order_head()) + flop_estimate(probe.value_head());
}

std::uint64_t flop_estimate(const probes::QuantileProbe& probe) {
  std::uint64_t total = 0;
  for (const auto& h : probe.heads()) total += flop_estimate(h.order) + flop_estimate(h.value);
  return total;
}

std::uint64_t flop_estimate(const probes::VanillaProbe& probe) {
  return flop_estimate(probe.net());
}

std::vector<LengthCoverage> coverage_by_length(const nn::Matrix& per_record,
                                               std::span<const int> lengths) {
  if (static_cast<std::size_t>(per_record.cols()) != lengths.size())
    throw InputError("coverage by length: mismatched record counts");
  if (lengths.empty()) throw InputError("coverage by length: no records");
  std::map<int, std::vector<Eigen::Index>> buckets;
  for (std::size_t i = 0; i < lengths.size(); ++i)
    buckets[lengths[i]].push_back(static_cast<Eigen::Index>(i));
  std::vector<LengthCoverage> out;
  for (const auto& [len, cols] : buckets) {
    for (Eigen::Index a = 0; a < per_record.rows(); ++a) {
      double total = 0.0;
      for (Eigen::Index c : cols) total += per_record(a, c);
      out.push_back({len, kIntervals[static_cast<std::size_t>(a)].alpha,
                     total / static_cast<double>(cols.size()), cols.size()});
    }
  }
  return out;
}

double out_of_range_deviation(std::span<const LengthCoverage> table, int lo, int hi) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& row : table) {
    if (row.length >= lo && row.length <= hi) continue;
    total += std::fabs(row.mean_percent - 100.0 * row.alpha);
    ++n;
  }
  if (n == 0) throw InputError("no length bucket outside the training range");
  return total / static_cast<double>(n);
}

}  // namespace numprobe::eval
