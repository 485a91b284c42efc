#include "numprobe/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "numprobe/error.hpp"

namespace numprobe::surrogate {
namespace {

double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double phi_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
}

double phi_inv(double p) {
  static const boost::math::normal_distribution<double> unit;
  return boost::math::quantile(unit, p);
}

double tail_transform(double z) {
  const double m = (std::exp(kTailLambda * std::fabs(z)) - 1.0) / kTailLambda;
  return z < 0.0 ? -m : m;
}

double tail_inverse(double u) {
  const double z = std::log1p(kTailLambda * std::fabs(u)) / kTailLambda;
  return u < 0.0 ? -z : z;
}

double mixture_pdf(const PredictiveSpec& p, double y) {
  const double sd = kMixtureSd * p.spread;
  const double z1 = (y - (p.center + kMixtureLeft * p.spread)) / sd;
  const double z2 = (y - (p.center + kMixtureRight * p.spread)) / sd;
  return (kMixtureWeight * phi_pdf(z1) + (1.0 - kMixtureWeight) * phi_pdf(z2)) /
         sd;
}

std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string_view shape_name(Shape shape) {
  switch (shape) {
    case Shape::kGaussian:
      return "gaussian";
    case Shape::kLognormalSymmetrised:
      return "lognormal_symmetrised";
    case Shape::kMixture:
      return "mixture";
  }
  return "gaussian";
}

Shape parse_shape(std::string_view name) {
  if (name == "gaussian") return Shape::kGaussian;
  if (name == "lognormal_symmetrised") return Shape::kLognormalSymmetrised;
  if (name == "mixture") return Shape::kMixture;
  throw InputError("unknown predictive shape '" + std::string(name) + "'");
}

double PredictiveSpec::mode() const {
  if (shape != Shape::kMixture) return center;
  // Heavier component dominates; golden-section search around its mean.
  const double sd = kMixtureSd * spread;
  double lo = center + kMixtureLeft * spread - sd;
  double hi = center + kMixtureLeft * spread + sd;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - g * (hi - lo);
  double x2 = lo + g * (hi - lo);
  double f1 = mixture_pdf(*this, x1);
  double f2 = mixture_pdf(*this, x2);
  for (int i = 0; i < 200 && hi - lo > 1e-15 * (std::fabs(center) + spread);
       ++i) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = mixture_pdf(*this, x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = mixture_pdf(*this, x1);
    }
  }
  return 0.5 * (lo + hi);
}

double PredictiveSpec::cdf(double y) const {
  const double u = (y - center) / spread;
  switch (shape) {
    case Shape::kGaussian:
      return phi_cdf(u);
    case Shape::kLognormalSymmetrised:
      return phi_cdf(tail_inverse(u));
    case Shape::kMixture:
      return kMixtureWeight * phi_cdf((u - kMixtureLeft) / kMixtureSd) +
             (1.0 - kMixtureWeight) *
                 phi_cdf((u - kMixtureRight) / kMixtureSd);
  }
  return 0.0;
}

double PredictiveSpec::quantile(double tau) const {
  if (!(tau > 0.0 && tau < 1.0))
    throw InputError("quantile level must lie in (0, 1)");
  switch (shape) {
    case Shape::kGaussian:
      return center + spread * phi_inv(tau);
    case Shape::kLognormalSymmetrised:
      return center + spread * tail_transform(phi_inv(tau));
    case Shape::kMixture: {
      double lo = center - 12.0 * spread;
      double hi = center + 12.0 * spread;
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (cdf(mid) < tau ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
  }
  return center;
}

double PredictiveSpec::draw(Rng& rng) const {
  switch (shape) {
    case Shape::kGaussian:
      return center + spread * rng.normal();
    case Shape::kLognormalSymmetrised:
      return center + spread * tail_transform(rng.normal());
    case Shape::kMixture: {
      const bool left = rng.uniform() < kMixtureWeight;
      const double mu = center + (left ? kMixtureLeft : kMixtureRight) * spread;
      return mu + kMixtureSd * spread * rng.normal();
    }
  }
  return center;
}

SurrogateModel::SurrogateModel(SurrogateConfig config) : config_(config) {
  if (config_.d_model < 8) throw ConfigError("d_model must be >= 8");
  if (config_.n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (config_.noise_floor < 0.0 || config_.layer_noise < 0.0)
    throw ConfigError("noise parameters must be >= 0");

  Rng rng(derive_seed(config_.projection_seed, {0x70726f6aULL}));
  const double gain = 1.5 / std::sqrt(static_cast<double>(kFeatureCount));
  for (int l = 0; l < config_.n_layers; ++l) {
    Eigen::MatrixXd w(config_.d_model, kFeatureCount);
    Eigen::MatrixXd v(config_.d_model, kFeatureCount);
    Eigen::VectorXd b(config_.d_model);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gain * rng.normal();
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = gain * rng.normal();
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * rng.normal();
    weights_.push_back(std::move(w));
    drift_.push_back(std::move(v));
    bias_.push_back(std::move(b));
  }
}

PredictiveSpec SurrogateModel::predictive_spec(
    const datagen::RawSeries& series) const {
  using datagen::Family;
  if (series.values.empty()) throw InputError("empty series");
  PredictiveSpec spec;
  if (series.family == Family::kRandom) {
    spec.center = std::accumulate(series.values.begin(), series.values.end(),
                                  0.0) /
                  static_cast<double>(series.values.size());
  } else {
    spec.center = (1.0 - config_.anchor) * series.next_clean +
                  config_.anchor * series.values.back();
  }

  double rel = 0.06 + 0.45 * std::sqrt(series.sigma2);
  switch (series.family) {
    case Family::kRandom:
      rel += 0.04;
      spec.shape = Shape::kLognormalSymmetrised;
      break;
    case Family::kXSine:
      rel += 0.02;
      spec.shape = Shape::kLognormalSymmetrised;
      break;
    case Family::kBeat:
      rel += 0.02;
      spec.shape = Shape::kMixture;
      break;
    default:
      spec.shape = Shape::kGaussian;
      break;
  }
  spec.spread = rel * std::fabs(spec.center) +
                config_.noise_floor * series.d_scale;
  if (!(spec.spread > 0.0))
    spec.spread = std::max(config_.noise_floor, 1e-12);
  return spec;
}

std::vector<double> SurrogateModel::features(
    const datagen::RawSeries& series) const {
  const PredictiveSpec spec = predictive_spec(series);
  const double c = spec.center;
  const double ac = std::max(std::fabs(c), 1e-12);
  const double lc = std::log10(ac);
  const double frac = lc - std::floor(lc);
  const double mantissa = std::pow(10.0, frac);
  const double two_pi = 2.0 * 3.14159265358979323846;

  const auto& v = series.values;
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  const double last = v.back();
  const double diff = v.size() > 1 ? last - v[v.size() - 2] : 0.0;
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());

  std::vector<double> f(kFeatureCount);
  f[0] = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
  f[1] = lc / 2.0;
  f[2] = (mantissa - 5.5) / 4.5;
  f[3] = std::cos(two_pi * frac);
  f[4] = std::sin(two_pi * frac);
  f[5] = std::log10(spec.spread) / 2.0;
  f[6] = (std::log10(spec.spread / ac) + 1.0) * 2.0;
  f[7] = spec.shape == Shape::kGaussian ? 1.0 : 0.0;
  f[8] = spec.shape == Shape::kLognormalSymmetrised ? 1.0 : 0.0;
  f[9] = spec.shape == Shape::kMixture ? 1.0 : 0.0;
  f[10] = std::log(n) - std::log(14.0);
  f[11] = std::asinh(mean) / 4.0;
  f[12] = std::asinh(sd) / 4.0;
  f[13] = std::asinh(last) / 4.0;
  f[14] = std::asinh(diff) / 4.0;
  f[15] = std::asinh(*mn) / 4.0;
  f[16] = std::asinh(*mx) / 4.0;
  return f;
}

std::vector<float> SurrogateModel::embed(
    const datagen::RawSeries& series) const {
  return embed_features(features(series));
}

std::vector<float> SurrogateModel::embed_features(
    std::span<const double> features) const {
  if (features.size() != static_cast<std::size_t>(kFeatureCount))
    throw InputError("feature vector has wrong length");
  const int layers = config_.n_layers;
  const int dm = config_.d_model;
  const std::uint64_t key =
      hash_bytes(features.data(), features.size() * sizeof(double),
                 0xcbf29ce484222325ULL ^ config_.projection_seed);
  // Context-length drift of the representation, in (-1, 1).
  const double drift = std::tanh(features[10] / 0.7);

  std::vector<float> out(static_cast<std::size_t>(dm) * layers);
  Eigen::VectorXd phi(kFeatureCount);
  for (int l = 0; l < layers; ++l) {
    const double depth = layers > 1 ? static_cast<double>(l) / (layers - 1) : 1.0;
    const double strength = 0.3 + 0.7 * depth;
    const double noise_sd = config_.layer_noise * (1.0 + 2.0 * (1.0 - depth));
    Rng rng(derive_seed(key, {static_cast<std::uint64_t>(l)}));
    for (int i = 0; i < kFeatureCount; ++i) {
      if (i < kDistributionalFeatures)
        phi[i] = strength * features[i] + noise_sd * rng.normal();
      else
        phi[i] = features[i];
    }
    const Eigen::VectorXd pre =
        weights_[l] * phi + (0.5 * drift) * (drift_[l] * phi) + bias_[l];
    for (int j = 0; j < dm; ++j)
      out[static_cast<std::size_t>(l) * dm + j] =
          static_cast<float>(std::tanh(pre[j]));
  }
  return out;
}

SampleDraw SurrogateModel::sample(const datagen::RawSeries& series, int n,
                                  std::uint64_t seed) const {
  if (n < 1) throw InputError("sample count must be >= 1");
  const PredictiveSpec spec = predictive_spec(series);
  Rng rng(seed);
  SampleDraw draw;
  draw.samples.resize(static_cast<std::size_t>(n));
  for (double& s : draw.samples) s = spec.draw(rng);
  draw.greedy = datagen::round_half_away(spec.mode(), series.decimal_places);
  return draw;
}

}  // namespace numprobe::surrogate
