#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "numprobe/dataset.hpp"
#include "numprobe/nn.hpp"
#include "numprobe/rng.hpp"

namespace numprobe::probes {

// 10^m for integer m, correctly rounded for |m| <= 22 and by repeated
// division/multiplication beyond.
double pow10(int m);

// floor(log10 |y|), corrected at exact powers of ten. InputError for y == 0
// or non-finite y.
int order_of_magnitude(double y);

struct MagnitudeRange {
  int m_min = -3;
  int m_max = 0;

  int classes() const { return m_max - m_min + 1; }
  int exponent(int k) const { return m_min + k; }
  double scale(int k) const { return pow10(exponent(k)); }
  void validate() const;

  // m_max = floor(log10 D_scale).
  static MagnitudeRange for_scale(double d_scale, int m_min = -3);
  // All four scales pooled: [-3, 4].
  static MagnitudeRange combined() { return {-3, 4}; }
};

// Class index of clamp(m(y), m_min, m_max); y == 0 maps to class 0.
int magnitude_class(double y, const MagnitudeRange& range);
// y / 10^{m_min + magnitude_class(y)}; 0 for y == 0.
double scaled_target(double y, const MagnitudeRange& range);

enum class TargetKind { kGreedy, kMean, kMedian };
std::string_view target_name(TargetKind kind);
TargetKind parse_target(std::string_view name);

// How the scale of class k enters the value head: raw s_k = 10^{m_k}, or the
// exponent m_k itself.
enum class ScaleInput { kRaw, kExponent };
std::string_view scale_input_name(ScaleInput s);
ScaleInput parse_scale_input(std::string_view name);

// Model hyperparameters. Defaults are the reference values; max_mag
// defaults to floor(log10 D_scale) of the dataset.
struct ProbeConfig {
  int min_mag = -3;
  std::optional<int> max_mag;
  double alpha = 100.0;
  double beta = 50.0;
  int top_k = 3;
  int hidden_layers = 1;
  int hidden_dim = 512;
  std::vector<int> layer_list = {25, 26, 27, 28, 29, 30, 31, 32};
  ScaleInput scale_input = ScaleInput::kRaw;
  bool renormalise_top_k = false;
  bool repair_crossing = false;
  std::vector<double> quantile_levels = {data::kQuantileLevels.begin(),
                                         data::kQuantileLevels.end()};

  MagnitudeRange range_for(double d_scale) const;
  std::vector<int> widths(int input, int output) const;
  void validate() const;
};

// Training/evaluation view of a record set: embeddings as columns plus the
// targets each probe family needs.
struct ProbeData {
  Eigen::MatrixXf embeddings;  // d_input x N
  std::vector<double> targets;
  std::vector<std::vector<double>> samples;
  std::vector<std::vector<double>> quantile_targets;

  std::size_t size() const { return static_cast<std::size_t>(embeddings.cols()); }
  int dim() const { return static_cast<int>(embeddings.rows()); }
};

double target_value(const data::SeriesRecord& record,
                    const data::Targets& targets, TargetKind kind);

ProbeData make_probe_data(const std::vector<data::SeriesRecord>& records,
                          TargetKind kind,
                          std::span<const double> levels = data::kQuantileLevels);

// Embedding columns restricted to the given rows (e.g. one layer block).
ProbeData select_rows(const ProbeData& data, Eigen::Index first, Eigen::Index count);

struct ScalarSettings {
  MagnitudeRange range;
  TargetKind target = TargetKind::kMean;
  int top_k = 3;
  ScaleInput scale_input = ScaleInput::kRaw;
  bool renormalise_top_k = false;
};

struct ScalarPrediction {
  std::vector<double> probabilities;
  std::vector<double> scaled_values;  // r_k
  int top_class = 0;
  double argmax_value = 0.0;
  double expected_value = 0.0;
};

struct ScalarBatch {
  nn::Matrix probabilities;  // M x N
  nn::Matrix scaled_values;  // M x N
  std::vector<int> top_class;
  std::vector<double> argmax_value;
  std::vector<double> expected_value;
};

// Magnitude-factorised point probe: f_order classifies the exponent, f_val
// regresses the value scaled by the exponent given [e; s_k].
class ScalarProbe {
 public:
  ScalarProbe(ScalarSettings settings, nn::Mlp order, nn::Mlp value);
  static ScalarProbe create(int d_input, ScalarSettings settings,
                            const ProbeConfig& config, Rng& rng);

  const ScalarSettings& settings() const { return settings_; }
  int input_dim() const { return order_.input_dim(); }
  nn::Mlp& order_head() { return order_; }
  const nn::Mlp& order_head() const { return order_; }
  nn::Mlp& value_head() { return value_; }
  const nn::Mlp& value_head() const { return value_; }

  double scale_feature(int k) const;

  ScalarPrediction forward(std::span<const float> embedding) const;
  ScalarBatch predict(const Eigen::MatrixXf& embeddings) const;

 private:
  ScalarSettings settings_;
  nn::Mlp order_;
  nn::Mlp value_;
};

struct ScalarTrainOptions {
  bool train_order = true;
  bool train_value = true;
};

// Phase 1 fits f_order by cross-entropy with f_val frozen; phase 2 fits f_val
// by MSE at the predicted class with f_order frozen.
nn::History train_scalar(ScalarProbe& probe, const ProbeData& train,
                         const ProbeData& val, const nn::TrainConfig& config,
                         ScalarTrainOptions options = {});

struct QuantileSettings {
  MagnitudeRange range;
  std::vector<double> levels = {data::kQuantileLevels.begin(),
                                data::kQuantileLevels.end()};
  double alpha = 100.0;
  double beta = 50.0;
  ScaleInput scale_input = ScaleInput::kRaw;
  bool repair_crossing = false;
};

struct QuantileHead {
  nn::Mlp order;
  nn::Mlp value;
};

struct QuantileDetail {
  std::vector<double> quantiles;
  std::vector<std::vector<double>> probabilities;  // per head
  std::vector<std::vector<double>> scaled_values;  // per head
};

// One (classifier, regressor) pair per quantile level.
class QuantileProbe {
 public:
  QuantileProbe(QuantileSettings settings, std::vector<QuantileHead> heads);
  static QuantileProbe create(int d_input, QuantileSettings settings,
                              const ProbeConfig& config, Rng& rng);

  const QuantileSettings& settings() const { return settings_; }
  QuantileSettings& settings() { return settings_; }
  int input_dim() const { return heads_.front().order.input_dim(); }
  std::vector<QuantileHead>& heads() { return heads_; }
  const std::vector<QuantileHead>& heads() const { return heads_; }

  double scale_feature(int k) const;
  // Index of a level in the settings, InputError when absent.
  int level_index(double tau) const;

  std::vector<double> forward(std::span<const float> embedding) const;
  QuantileDetail forward_detail(std::span<const float> embedding) const;
  nn::Matrix predict(const Eigen::MatrixXf& embeddings) const;  // S x N

 private:
  QuantileSettings settings_;
  std::vector<QuantileHead> heads_;
};

// Joint loss sum_s (alpha CE_s + beta pinball_s); the pinball term scores
// r^s at the class of the empirical quantile against samples scaled by it.
nn::History train_quantile(QuantileProbe& probe, const ProbeData& train,
                           const ProbeData& val, const nn::TrainConfig& config);

struct VanillaSettings {
  TargetKind target = TargetKind::kMean;
  bool log_scaling = false;
};

// Direct regression baseline e -> y with plain MSE.
class VanillaProbe {
 public:
  VanillaProbe(VanillaSettings settings, nn::Mlp net);
  static VanillaProbe create(int d_input, VanillaSettings settings,
                             const ProbeConfig& config, Rng& rng);

  const VanillaSettings& settings() const { return settings_; }
  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }
  int input_dim() const { return net_.input_dim(); }

  // sign(y) log(1 + |y|) when log_scaling, identity otherwise.
  double transform(double y) const;
  double inverse(double t) const;

  double forward(std::span<const float> embedding) const;
  std::vector<double> predict(const Eigen::MatrixXf& embeddings) const;

 private:
  VanillaSettings settings_;
  nn::Mlp net_;
};

nn::History train_vanilla(VanillaProbe& probe, const ProbeData& train,
                          const ProbeData& val, const nn::TrainConfig& config);

}  // namespace numprobe::probes
