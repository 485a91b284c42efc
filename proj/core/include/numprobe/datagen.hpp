#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "numprobe/rng.hpp"

namespace numprobe::datagen {

enum class Family {
  kSin,
  kLinearSin,
  kSinc,
  kXSine,
  kBeat,
  kGaussianWave,
  kRandom,
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// One row of the base-function table: name and the range of the time-scaling
// parameter a (series are y = f(a * x)).
struct FunctionFamily {
  Family id;
  std::string_view name;
  Interval a_range;
};

std::span<const FunctionFamily> function_families();
const FunctionFamily& family_info(Family family);
std::string_view family_name(Family family);
// Throws ConfigError for unknown names.
Family parse_family(std::string_view name);

// Evaluates the base function at x. `sinc` follows the normalised convention
// sin(pi x) / (pi x). `random` ignores x and consumes one U(-1, 1) draw from
// `rng`, which is then required.
double eval_family(Family family, double x, Rng* rng = nullptr);

inline constexpr int kGridPoints = 120;
inline constexpr double kDomainEnd = 60.0;
inline constexpr std::array<int, 12> kSubseqLengths = {3,  5,  7,  10, 13, 15,
                                                       17, 20, 25, 30, 35, 40};
inline constexpr std::array<double, 4> kNoiseVariances = {0.0, 0.01, 0.05,
                                                          0.1};
inline constexpr std::array<double, 4> kScales = {1.0, 10.0, 1000.0, 10000.0};

// p = 4, 3, 2, 1 for D_scale = 1, 10, 1000, 10000. ConfigError otherwise.
int decimal_places_for_scale(double d_scale);

struct AugmentationSpec {
  std::vector<Family> families = {Family::kSin,  Family::kLinearSin,
                                  Family::kSinc, Family::kXSine,
                                  Family::kBeat, Family::kGaussianWave,
                                  Family::kRandom};
  // Evenly spaced a-values per family over its a_range, endpoints included.
  // 10 values reproduces 33,600 raw series per scale.
  int a_grid_size = 10;
  std::vector<double> noise_variances = {kNoiseVariances.begin(),
                                         kNoiseVariances.end()};
  double d_scale = 1.0;
  int decimal_places = 4;
  std::vector<int> subseq_lengths = {kSubseqLengths.begin(),
                                     kSubseqLengths.end()};
  int subseqs_per_length = 10;
  // Pin the vertical scale/translation instead of drawing them.
  std::optional<double> fixed_b;
  std::optional<double> fixed_d;

  static AugmentationSpec for_scale(double d_scale);
  void validate() const;
  std::size_t expected_count() const;
};

std::vector<double> a_grid(const FunctionFamily& family, int n);

struct RawSeries {
  std::vector<double> values;
  Family family = Family::kSin;
  double a = 0.0;
  double b = 1.0;
  double d = 0.0;
  double sigma2 = 0.0;
  int origin_offset = 0;
  // Transformed (noisy) and clean value at index origin_offset + n.
  double next_value = 0.0;
  double next_clean = 0.0;
  double d_scale = 1.0;
  int decimal_places = 4;
};

// Deterministic in (spec, seed). Each (family, a, noise) cell draws from its
// own substream, so the result does not depend on iteration order.
std::vector<RawSeries> generate_corpus(const AugmentationSpec& spec,
                                       std::uint64_t seed);

// Round half away from zero at p decimals, applied to v * 10^p.
double round_half_away(double v, int p);

// "x1, x2, ..., xn, " with exactly p decimals; "-0.0000" renders as
// "0.0000". InputError on non-finite values.
std::string serialize_series(std::span<const double> values, int p);

// Inverse of serialize_series up to rounding. InputError on malformed text.
std::vector<double> parse_series(std::string_view text);

}  // namespace numprobe::datagen
