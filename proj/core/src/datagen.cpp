#include "numprobe/datagen.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "numprobe/error.hpp"

namespace numprobe::datagen {
namespace {

constexpr std::array<FunctionFamily, 7> kFamilies = {{
    {Family::kSin, "sin", {0.5, 6.0}},
    {Family::kLinearSin, "linear_sin", {0.5, 6.0}},
    {Family::kSinc, "sinc", {0.05, 0.2}},
    {Family::kXSine, "xsine", {0.5, 1.3}},
    {Family::kBeat, "beat", {0.1, 6.0}},
    {Family::kGaussianWave, "gaussian_wave", {0.01, 0.1}},
    {Family::kRandom, "random", {0.0, 1.0}},
}};

double pow10_exact(int p) {
  double s = 1.0;
  for (int i = 0; i < p; ++i) s *= 10.0;
  return s;
}

}  // namespace

std::span<const FunctionFamily> function_families() { return kFamilies; }

const FunctionFamily& family_info(Family family) {
  for (const auto& f : kFamilies)
    if (f.id == family) return f;
  throw ConfigError("unknown function family");
}

std::string_view family_name(Family family) {
  return family_info(family).name;
}

Family parse_family(std::string_view name) {
  for (const auto& f : kFamilies)
    if (f.name == name) return f.id;
  throw ConfigError("unknown function family '" + std::string(name) + "'");
}

double eval_family(Family family, double x, Rng* rng) {
  using std::numbers::pi;
  switch (family) {
    case Family::kSin:
      return std::sin(x);
    case Family::kLinearSin:
      return 0.2 * std::sin(x) + x / 450.0;
    case Family::kSinc: {
      if (x == 0.0) return 1.0;
      const double px = pi * x;
      return std::sin(px) / px;
    }
    case Family::kXSine:
      return (x - 30.0) / 50.0 * std::sin(x - 30.0);
    case Family::kBeat:
      return std::sin(x) * std::sin(x / 2.0);
    case Family::kGaussianWave: {
      const double u = x - 2.0;
      return std::exp(-u * u / 2.0) * std::cos(10.0 * pi * u);
    }
    case Family::kRandom:
      if (rng == nullptr)
        throw ConfigError("family 'random' requires a seeded stream");
      return rng->uniform(-1.0, 1.0);
  }
  throw ConfigError("unknown function family");
}

int decimal_places_for_scale(double d_scale) {
  if (d_scale == 1.0) return 4;
  if (d_scale == 10.0) return 3;
  if (d_scale == 1000.0) return 2;
  if (d_scale == 10000.0) return 1;
  throw ConfigError("unsupported D_scale " + std::to_string(d_scale) +
                    " (expected 1, 10, 1000 or 10000)");
}

AugmentationSpec AugmentationSpec::for_scale(double d_scale) {
  AugmentationSpec spec;
  spec.d_scale = d_scale;
  spec.decimal_places = decimal_places_for_scale(d_scale);
  return spec;
}

void AugmentationSpec::validate() const {
  if (families.empty()) throw ConfigError("no function families selected");
  if (a_grid_size < 1) throw ConfigError("a_grid_size must be >= 1");
  if (noise_variances.empty())
    throw ConfigError("noise_variances must be nonempty");
  for (double v : noise_variances)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError("noise variance must be finite and >= 0");
  if (decimal_places != decimal_places_for_scale(d_scale))
    throw ConfigError("decimal_places does not match D_scale " +
                      std::to_string(d_scale));
  if (subseq_lengths.empty()) throw ConfigError("no subsequence lengths");
  for (int n : subseq_lengths)
    if (n < 1 || n >= kGridPoints)
      throw ConfigError("subsequence length out of range: " +
                        std::to_string(n));
  if (subseqs_per_length < 1)
    throw ConfigError("subseqs_per_length must be >= 1");
}

std::size_t AugmentationSpec::expected_count() const {
  return families.size() * static_cast<std::size_t>(a_grid_size) *
         noise_variances.size() * subseq_lengths.size() *
         static_cast<std::size_t>(subseqs_per_length);
}

std::vector<double> a_grid(const FunctionFamily& family, int n) {
  std::vector<double> grid(static_cast<std::size_t>(n));
  if (n == 1) {
    grid[0] = family.a_range.lo;
    return grid;
  }
  const double step = (family.a_range.hi - family.a_range.lo) / (n - 1);
  for (int i = 0; i < n; ++i) grid[i] = family.a_range.lo + step * i;
  grid.back() = family.a_range.hi;
  return grid;
}

std::vector<RawSeries> generate_corpus(const AugmentationSpec& spec,
                                       std::uint64_t seed) {
  spec.validate();
  std::vector<RawSeries> out;
  out.reserve(spec.expected_count());

  std::array<double, kGridPoints> xs{};
  for (int j = 0; j < kGridPoints; ++j)
    xs[j] = kDomainEnd * static_cast<double>(j) / (kGridPoints - 1);

  for (Family fam : spec.families) {
    const auto& info = family_info(fam);
    const auto grid = a_grid(info, spec.a_grid_size);
    for (std::size_t ia = 0; ia < grid.size(); ++ia) {
      for (std::size_t is = 0; is < spec.noise_variances.size(); ++is) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(fam), ia, is}));
        const double a = grid[ia];
        const double sigma2 = spec.noise_variances[is];
        const double sigma = std::sqrt(sigma2);

        std::array<double, kGridPoints> clean{};
        for (int j = 0; j < kGridPoints; ++j)
          clean[j] = eval_family(fam, a * xs[j], &rng);
        std::array<double, kGridPoints> noisy = clean;
        if (sigma > 0.0)
          for (double& v : noisy) v += sigma * rng.normal();

        const double b = spec.fixed_b ? *spec.fixed_b
                                      : rng.uniform(0.0, spec.d_scale);
        const double d = spec.fixed_d
                             ? *spec.fixed_d
                             : rng.uniform(-spec.d_scale, spec.d_scale);
        for (int j = 0; j < kGridPoints; ++j) {
          noisy[j] = b * noisy[j] + d;
          clean[j] = b * clean[j] + d;
        }

        for (int n : spec.subseq_lengths) {
          // The value after the window must exist: offset <= 119 - n.
          const auto span = static_cast<std::uint64_t>(kGridPoints - n);
          for (int k = 0; k < spec.subseqs_per_length; ++k) {
            const int off = static_cast<int>(rng.below(span));
            RawSeries s;
            s.values.assign(noisy.begin() + off, noisy.begin() + off + n);
            s.family = fam;
            s.a = a;
            s.b = b;
            s.d = d;
            s.sigma2 = sigma2;
            s.origin_offset = off;
            s.next_value = noisy[off + n];
            s.next_clean = clean[off + n];
            s.d_scale = spec.d_scale;
            s.decimal_places = spec.decimal_places;
            out.push_back(std::move(s));
          }
        }
      }
    }
  }
  return out;
}

double round_half_away(double v, int p) {
  const double scale = pow10_exact(p);
  return std::round(v * scale) / scale;
}

std::string serialize_series(std::span<const double> values, int p) {
  if (p < 0) throw InputError("decimal places must be >= 0");
  const double scale = pow10_exact(p);
  const auto unit = static_cast<unsigned long long>(scale);
  std::string out;
  out.reserve(values.size() * static_cast<std::size_t>(p + 8));
  char buf[64];
  for (double v : values) {
    if (!std::isfinite(v))
      throw InputError("cannot serialise non-finite value");
    const double scaled = std::round(v * scale);
    if (std::fabs(scaled) < 0x1.0p62) {
      const auto mag = static_cast<unsigned long long>(std::fabs(scaled));
      const bool negative = scaled < 0.0 && mag != 0;
      int len;
      if (p == 0) {
        len = std::snprintf(buf, sizeof buf, "%s%llu", negative ? "-" : "",
                            mag);
      } else {
        len = std::snprintf(buf, sizeof buf, "%s%llu.%0*llu",
                            negative ? "-" : "", mag / unit, p, mag % unit);
      }
      out.append(buf, static_cast<std::size_t>(len));
    } else {
      const int len = std::snprintf(buf, sizeof buf, "%.*f", p, scaled / scale);
      out.append(buf, static_cast<std::size_t>(len));
    }
    out += ", ";
  }
  return out;
}

std::vector<double> parse_series(std::string_view text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && text[pos] == ' ') ++pos;
    if (pos >= text.size()) break;
    const std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos)
      throw InputError("series text is missing the trailing separator");
    const std::string_view token = text.substr(pos, comma - pos);
    double v = 0.0;
    const auto [ptr, ec] =
        std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size())
      throw InputError("malformed number '" + std::string(token) + "'");
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

}  // namespace numprobe::datagen
