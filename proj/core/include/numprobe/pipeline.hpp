#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "numprobe/datagen.hpp"
#include "numprobe/dataset.hpp"
#include "numprobe/eval.hpp"
#include "numprobe/probes.hpp"
#include "numprobe/surrogate.hpp"

namespace numprobe::pipeline {

struct GenerateConfig {
  // Desk-scale corpus: 4 a-values x 3 windows per length, about 4k series
  // per scale. full_scale() restores 10 x 10 (33,600 per scale).
  int a_grid_size = 4;
  int subseqs_per_length = 3;
  int n_samples = data::kDefaultSamples;
  std::size_t bin_cap = 12000;
  std::vector<int> layer_list = {25, 26, 27, 28, 29, 30, 31, 32};
  std::vector<datagen::Family> families = {
      datagen::Family::kSin,  datagen::Family::kLinearSin, datagen::Family::kSinc,
      datagen::Family::kXSine, datagen::Family::kBeat, datagen::Family::kGaussianWave,
      datagen::Family::kRandom};
  surrogate::SurrogateConfig surrogate;
  std::uint64_t seed = 0;

  void full_scale();
  void validate() const;
};

// Turns raw series into records: serialisation, embedding, N_sa samples,
// greedy value and ground-truth metadata.
std::vector<data::SeriesRecord> build_records(const std::vector<datagen::RawSeries>& corpus,
                                              const surrogate::SurrogateModel& model,
                                              int n_samples, std::uint64_t seed,
                                              std::uint64_t first_id);

struct ScaleData {
  double d_scale = 1.0;
  data::BalanceReport balance;
  data::SplitSets sets;
};

// Balanced, filtered and split records for one D_scale.
ScaleData generate_scale(double d_scale, const GenerateConfig& config);

// Pools already balanced per-scale records, rebalances the pool with the
// bin cap and splits it again.
ScaleData combine_scales(const std::vector<ScaleData>& scales, const GenerateConfig& config);

data::Dataset make_dataset(std::vector<data::SeriesRecord> records, double d_scale,
                           data::Split split, const std::vector<int>& layer_list);

// Writes <dir>/<name>_{train,val,test}.<npd|jsonl>; returns the paths.
std::vector<std::filesystem::path> write_splits(const std::filesystem::path& dir,
                                                const std::string& name,
                                                const ScaleData& data,
                                                const std::vector<int>& layer_list,
                                                data::FileFormat format);

std::string scale_label(double d_scale);

// Point-prediction metrics against the probe's target statistic.
struct PointReport {
  double magnitude_accuracy = 0.0;
  double mse_expected = 0.0;
  double mse_argmax = 0.0;
  double mse_global_mean = 0.0;
  double mse_series_mean = 0.0;
  double mse_last_value = 0.0;
  std::size_t records = 0;
};

PointReport evaluate_scalar(const probes::ScalarProbe& probe,
                            const probes::ProbeData& test,
                            const std::vector<data::SeriesRecord>& test_records,
                            double train_global_mean);

// Errors of each predictor against the true next value x_{n+1}.
struct TruthRow {
  std::string predictor;
  double mse = 0.0;
};

std::vector<TruthRow> evaluate_against_truth(
    const std::vector<data::SeriesRecord>& test, std::span<const double> probe_predictions,
    double train_global_mean, const eval::GpConfig& gp = {});

struct AblationRow {
  std::string layers;
  int d_input = 0;
  double mse = 0.0;
  double magnitude_accuracy = 0.0;
};

// One scalar probe per embedding block of width d_model, then one on the
// full concatenation.
std::vector<AblationRow> layer_ablation(const probes::ProbeData& train,
                                        const probes::ProbeData& val,
                                        const probes::ProbeData& test,
                                        const std::vector<int>& layer_list, int d_model,
                                        const probes::MagnitudeRange& range,
                                        const probes::ProbeConfig& probe_config,
                                        const nn::TrainConfig& train_config,
                                        probes::TargetKind target);

struct ContextLengthResult {
  std::vector<eval::LengthCoverage> base;
  std::vector<eval::LengthCoverage> restricted;
  double base_deviation = 0.0;
  double restricted_deviation = 0.0;
  std::size_t restricted_train_records = 0;
};

inline constexpr int kBaseMinLength = 3;
inline constexpr int kBaseMaxLength = 40;
inline constexpr int kRestrictedMinLength = 10;
inline constexpr int kRestrictedMaxLength = 20;

std::vector<data::SeriesRecord> filter_lengths(const std::vector<data::SeriesRecord>& records,
                                               int lo, int hi);

// Trains Base (lengths 3..40) and Restricted (10..20) quantile probes and
// tabulates test coverage per series length.
ContextLengthResult context_length_experiment(const data::SplitSets& sets,
                                              double d_scale,
                                              const probes::ProbeConfig& probe_config,
                                              const nn::TrainConfig& train_config);

}  // namespace numprobe::pipeline
