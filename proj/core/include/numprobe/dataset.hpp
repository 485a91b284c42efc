#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "numprobe/rng.hpp"
#include "numprobe/surrogate.hpp"

namespace numprobe::data {

// Quantile levels used by the quantile probe: median, IQR, 90% and 95%
// intervals.
inline constexpr std::array<double, 7> kQuantileLevels = {
    0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975};
inline constexpr int kDefaultSamples = 100;

struct RecordMeta {
  std::string family;
  int length = 0;
  double sigma2 = 0.0;
  double d_scale = 1.0;
  // Decimal places used to serialise `values`.
  int decimals = 4;
  std::string source = "surrogate";
  // Ground-truth next value x_{n+1}, when known.
  std::optional<double> next_value;
  // Surrogate ground-truth predictive distribution, when known.
  std::optional<surrogate::PredictiveSpec> truth;
  // Unrecognised keys, kept as raw JSON text.
  std::map<std::string, std::string> extra;
};

struct SeriesRecord {
  std::uint64_t id = 0;
  std::vector<double> values;
  std::string serialized;
  std::vector<float> embedding;
  std::vector<double> samples;
  double greedy = 0.0;
  RecordMeta meta;
};

enum class Split { kTrain, kVal, kTest, kUnspecified };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct DatasetManifest {
  std::uint32_t embedding_dim = 0;
  std::uint32_t n_sa = kDefaultSamples;
  double d_scale = 1.0;
  std::vector<int> layer_list;
  Split split = Split::kUnspecified;
  std::uint64_t record_count = 0;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<SeriesRecord> records;

  // Recomputes record_count/embedding_dim/n_sa from records and checks
  // per-record invariants. InputError on violation.
  void refresh_manifest();
  void validate() const;
};

struct Targets {
  double mean = 0.0;
  double median = 0.0;
  std::vector<double> quantiles;  // one per requested level
};

// Linear interpolation between order statistics: h = (n - 1) tau.
double empirical_quantile(std::span<const double> sorted, double tau);

// Pure function of the record's samples. InputError on empty samples.
Targets derive_targets(const SeriesRecord& record,
                       std::span<const double> levels = kQuantileLevels);

// Bins of width 7/8 decade over [1e-3, 1e4]; smaller magnitudes clamp into
// bin 0, larger ones into bin 7.
inline constexpr int kMagnitudeBins = 8;
inline constexpr double kBinLogLo = -3.0;
inline constexpr double kBinLogHi = 4.0;
int magnitude_bin(double abs_value);
double bin_lower_edge(int bin);
double bin_upper_edge(int bin);

struct BalanceReport {
  std::size_t dropped_out_of_range = 0;
  std::size_t dropped_by_cap = 0;
  std::array<std::size_t, kMagnitudeBins> bin_counts{};
};

// Keeps records with |median|, |mean|, |greedy| < d_scale, then caps each
// |median| bin at `cap` by seeded uniform subsampling. Input order is kept.
std::vector<SeriesRecord> balance_and_filter(std::vector<SeriesRecord> records,
                                             double d_scale,
                                             std::size_t cap = 12000,
                                             std::uint64_t seed = 0,
                                             BalanceReport* report = nullptr);

struct SplitSets {
  std::vector<SeriesRecord> train;
  std::vector<SeriesRecord> val;
  std::vector<SeriesRecord> test;
};

// Seeded shuffle then 80/10/10. InputError with fewer than 10 records.
SplitSets split(std::vector<SeriesRecord> records, std::uint64_t seed);

// Binary "NPD1" and JSON-lines text formats.
enum class FileFormat { kBinary, kText };

inline constexpr std::uint32_t kFormatVersion = 1;

void write_binary(std::ostream& out, const Dataset& dataset);
Dataset read_binary(std::istream& in);
void write_text(std::ostream& out, const Dataset& dataset);
// Warnings (e.g. unknown meta keys) are appended when `warnings` is set.
Dataset read_text(std::istream& in, std::vector<std::string>* warnings = nullptr);

void write_dataset(const std::filesystem::path& path, const Dataset& dataset,
                   FileFormat format);
// Detects the format from the leading bytes.
Dataset read_dataset(const std::filesystem::path& path,
                     std::vector<std::string>* warnings = nullptr);

}  // namespace numprobe::data
