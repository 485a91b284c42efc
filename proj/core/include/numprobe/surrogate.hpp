#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "numprobe/datagen.hpp"
#include "numprobe/rng.hpp"

namespace numprobe::surrogate {

enum class Shape {
  kGaussian,
  // c + spread * sign(z) * (exp(lambda |z|) - 1) / lambda, z ~ N(0, 1).
  kLognormalSymmetrised,
  // 0.6 N(c - 0.8 s, 0.5 s) + 0.4 N(c + 1.2 s, 0.5 s); mean stays at c.
  kMixture,
};

std::string_view shape_name(Shape shape);
Shape parse_shape(std::string_view name);

inline constexpr double kTailLambda = 0.25;
inline constexpr double kMixtureWeight = 0.6;
inline constexpr double kMixtureLeft = -0.8;
inline constexpr double kMixtureRight = 1.2;
inline constexpr double kMixtureSd = 0.5;

// Ground-truth next-value distribution with exact quantiles.
struct PredictiveSpec {
  double center = 0.0;
  double spread = 1.0;
  Shape shape = Shape::kGaussian;

  double mean() const { return center; }
  double mode() const;
  double cdf(double y) const;
  double quantile(double tau) const;
  double draw(Rng& rng) const;
};

struct SurrogateConfig {
  int d_model = 256;
  int n_layers = 8;
  std::uint64_t projection_seed = 0x5eedULL;
  // Additive spread floor, in units of the series' D_scale.
  double noise_floor = 1e-6;
  // Per-layer feature noise for the last layer; earlier layers get up to 3x.
  double layer_noise = 0.01;
  // Weight of the last observed value in the predictive centre.
  double anchor = 0.2;
};

struct SampleDraw {
  std::vector<double> samples;
  double greedy = 0.0;
};

// Deterministic stand-in for a sequence model: maps a series to a
// concatenated multi-layer embedding and to predictive samples drawn from a
// known distribution. Immutable after construction.
class SurrogateModel {
 public:
  static constexpr int kFeatureCount = 17;
  // Features [0, kDistributionalFeatures) describe the predictive
  // distribution and strengthen with depth; the rest are series summaries.
  static constexpr int kDistributionalFeatures = 10;

  explicit SurrogateModel(SurrogateConfig config = {});

  const SurrogateConfig& config() const { return config_; }
  int embedding_dim() const { return config_.d_model * config_.n_layers; }

  PredictiveSpec predictive_spec(const datagen::RawSeries& series) const;

  // Feature vector: sign, log10|c|, mantissa, phase of log10|c|,
  // log10(spread), log10(spread/|c|), shape one-hot, context length, and
  // asinh-compressed series summaries.
  std::vector<double> features(const datagen::RawSeries& series) const;

  std::vector<float> embed(const datagen::RawSeries& series) const;
  std::vector<float> embed_features(std::span<const double> features) const;

  SampleDraw sample(const datagen::RawSeries& series, int n,
                    std::uint64_t seed) const;

 private:
  SurrogateConfig config_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::MatrixXd> drift_;
  std::vector<Eigen::VectorXd> bias_;
};

}  // namespace numprobe::surrogate
