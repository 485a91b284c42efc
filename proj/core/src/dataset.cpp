#include "numprobe/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "numprobe/datagen.hpp"
#include "numprobe/error.hpp"

namespace numprobe::data {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'N', 'P', 'D', '1'};

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(&value, bytes, sizeof(T));
  return true;
}

void append_number(std::string& out, double v) {
  if (!std::isfinite(v)) throw InputError("cannot write non-finite number");
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

// Shortest float text that also survives a parse through double.
void append_float(std::string& out, float f) {
  if (!std::isfinite(f)) throw InputError("cannot write non-finite number");
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, f);
  double back = 0.0;
  std::from_chars(buf, res.ptr, back);
  if (static_cast<float>(back) != f)
    res = std::to_chars(buf, buf + sizeof buf, static_cast<double>(f));
  out.append(buf, res.ptr);
}

template <typename Range, typename Fn>
void append_array(std::string& out, const Range& values, Fn&& fn) {
  out += '[';
  bool first = true;
  for (const auto& v : values) {
    if (!first) out += ',';
    first = false;
    fn(out, v);
  }
  out += ']';
}

json meta_to_json(const RecordMeta& meta) {
  json j = json::object();
  for (const auto& [k, v] : meta.extra) j[k] = json::parse(v);
  j["family"] = meta.family;
  j["n"] = meta.length;
  j["sigma2"] = meta.sigma2;
  j["d_scale"] = meta.d_scale;
  j["decimals"] = meta.decimals;
  j["source"] = meta.source;
  if (meta.next_value) j["next"] = *meta.next_value;
  if (meta.truth) {
    j["truth"] = {{"center", meta.truth->center},
                  {"spread", meta.truth->spread},
                  {"shape", surrogate::shape_name(meta.truth->shape)}};
  }
  return j;
}

RecordMeta meta_from_json(const json& j, std::vector<std::string>* warnings,
                          std::uint64_t index) {
  if (!j.is_object()) throw FormatError("meta must be a JSON object", index);
  RecordMeta meta;
  for (const auto& [key, value] : j.items()) {
    if (key == "family") {
      meta.family = value.get<std::string>();
    } else if (key == "n") {
      meta.length = value.get<int>();
    } else if (key == "sigma2") {
      meta.sigma2 = value.get<double>();
    } else if (key == "d_scale") {
      meta.d_scale = value.get<double>();
    } else if (key == "decimals") {
      meta.decimals = value.get<int>();
    } else if (key == "source") {
      meta.source = value.get<std::string>();
    } else if (key == "next") {
      meta.next_value = value.get<double>();
    } else if (key == "truth") {
      surrogate::PredictiveSpec spec;
      spec.center = value.at("center").get<double>();
      spec.spread = value.at("spread").get<double>();
      spec.shape = surrogate::parse_shape(value.at("shape").get<std::string>());
      meta.truth = spec;
    } else {
      meta.extra[key] = value.dump();
      if (warnings)
        warnings->push_back("record " + std::to_string(index) +
                            ": unknown meta key '" + key + "'");
    }
  }
  return meta;
}

std::string record_to_line(const SeriesRecord& r) {
  std::string line;
  line.reserve(64 + r.embedding.size() * 12 + r.samples.size() * 22);
  line += "{\"id\":";
  line += std::to_string(r.id);
  line += ",\"values\":";
  append_array(line, r.values, [](std::string& o, double v) { append_number(o, v); });
  line += ",\"serialized\":";
  line += json(r.serialized).dump();
  line += ",\"embedding\":";
  append_array(line, r.embedding, [](std::string& o, float v) { append_float(o, v); });
  line += ",\"samples\":";
  append_array(line, r.samples, [](std::string& o, double v) { append_number(o, v); });
  line += ",\"greedy\":";
  append_number(line, r.greedy);
  line += ",\"meta\":";
  line += meta_to_json(r.meta).dump();
  line += '}';
  return line;
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
    case Split::kUnspecified:
      return "unspecified";
  }
  return "unspecified";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  if (name == "unspecified") return Split::kUnspecified;
  throw InputError("unknown split '" + std::string(name) + "'");
}

void Dataset::refresh_manifest() {
  manifest.record_count = records.size();
  if (!records.empty()) {
    manifest.embedding_dim =
        static_cast<std::uint32_t>(records.front().embedding.size());
    manifest.n_sa = static_cast<std::uint32_t>(records.front().samples.size());
  }
}

void Dataset::validate() const {
  if (manifest.record_count != records.size())
    throw FormatError("record_count " + std::to_string(manifest.record_count) +
                      " does not match " + std::to_string(records.size()) +
                      " records present");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.embedding.size() != manifest.embedding_dim)
      throw FormatError("embedding-dim mismatch: expected " +
                            std::to_string(manifest.embedding_dim) + ", got " +
                            std::to_string(r.embedding.size()),
                        i);
    if (r.samples.size() != manifest.n_sa)
      throw FormatError("expected exactly " + std::to_string(manifest.n_sa) +
                            " samples, got " + std::to_string(r.samples.size()),
                        i);
    for (double v : r.values)
      if (!std::isfinite(v)) throw FormatError("non-finite series value", i);
    for (double v : r.samples)
      if (!std::isfinite(v)) throw FormatError("non-finite sample", i);
    if (!std::isfinite(r.greedy)) throw FormatError("non-finite greedy", i);
    for (float v : r.embedding)
      if (!std::isfinite(v)) throw FormatError("non-finite embedding", i);
    if (r.serialized != datagen::serialize_series(r.values, r.meta.decimals))
      throw FormatError("serialized text does not match values", i);
  }
}

double empirical_quantile(std::span<const double> sorted, double tau) {
  if (sorted.empty()) throw InputError("quantile of empty sample");
  if (!(tau >= 0.0 && tau <= 1.0))
    throw InputError("quantile level must lie in [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * tau;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double w = h - static_cast<double>(lo);
  return sorted[lo] + w * (sorted[lo + 1] - sorted[lo]);
}

Targets derive_targets(const SeriesRecord& record,
                       std::span<const double> levels) {
  if (record.samples.empty())
    throw InputError("record " + std::to_string(record.id) + " has no samples");
  std::vector<double> sorted = record.samples;
  std::sort(sorted.begin(), sorted.end());
  Targets t;
  t.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
           static_cast<double>(sorted.size());
  t.median = empirical_quantile(sorted, 0.5);
  t.quantiles.reserve(levels.size());
  for (double tau : levels) t.quantiles.push_back(empirical_quantile(sorted, tau));
  return t;
}

int magnitude_bin(double abs_value) {
  if (!(abs_value > 0.0)) return 0;
  const double width = (kBinLogHi - kBinLogLo) / kMagnitudeBins;
  const double pos = (std::log10(abs_value) - kBinLogLo) / width;
  const int bin = static_cast<int>(std::floor(pos));
  return std::clamp(bin, 0, kMagnitudeBins - 1);
}

double bin_lower_edge(int bin) {
  const double width = (kBinLogHi - kBinLogLo) / kMagnitudeBins;
  return std::pow(10.0, kBinLogLo + width * bin);
}

double bin_upper_edge(int bin) {
  const double width = (kBinLogHi - kBinLogLo) / kMagnitudeBins;
  return std::pow(10.0, kBinLogLo + width * (bin + 1));
}

std::vector<SeriesRecord> balance_and_filter(std::vector<SeriesRecord> records,
                                             double d_scale, std::size_t cap,
                                             std::uint64_t seed,
                                             BalanceReport* report) {
  BalanceReport local;
  std::array<std::vector<std::size_t>, kMagnitudeBins> bins;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Targets t = derive_targets(records[i], {});
    if (std::fabs(t.median) >= d_scale || std::fabs(t.mean) >= d_scale ||
        std::fabs(records[i].greedy) >= d_scale) {
      ++local.dropped_out_of_range;
      continue;
    }
    bins[magnitude_bin(std::fabs(t.median))].push_back(i);
  }

  std::vector<std::size_t> keep;
  for (int b = 0; b < kMagnitudeBins; ++b) {
    auto& idx = bins[b];
    if (idx.size() > cap) {
      Rng rng(derive_seed(seed, {0x62616c616e6365ULL, static_cast<std::uint64_t>(b)}));
      // Partial Fisher-Yates: the first `cap` entries become a uniform subset.
      for (std::size_t i = 0; i < cap; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
      }
      local.dropped_by_cap += idx.size() - cap;
      idx.resize(cap);
    }
    local.bin_counts[b] = idx.size();
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());

  std::vector<SeriesRecord> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(std::move(records[i]));
  if (report) *report = local;
  return out;
}

SplitSets split(std::vector<SeriesRecord> records, std::uint64_t seed) {
  const std::size_t n = records.size();
  if (n < 10)
    throw InputError("need at least 10 records to split, got " +
                     std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x73706c6974ULL}));
  rng.shuffle(order);

  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  const std::size_t n_test = n_val;
  const std::size_t n_train = n - n_val - n_test;

  SplitSets out;
  out.train.reserve(n_train);
  out.val.reserve(n_val);
  out.test.reserve(n_test);
  for (std::size_t i = 0; i < n; ++i) {
    auto& rec = records[order[i]];
    if (i < n_train)
      out.train.push_back(std::move(rec));
    else if (i < n_train + n_val)
      out.val.push_back(std::move(rec));
    else
      out.test.push_back(std::move(rec));
  }
  return out;
}

void write_binary(std::ostream& out, const Dataset& dataset) {
  const auto& m = dataset.manifest;
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, m.embedding_dim);
  put<std::uint32_t>(out, m.n_sa);
  put<std::uint64_t>(out, dataset.records.size());
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    if (r.embedding.size() != m.embedding_dim)
      throw FormatError("embedding-dim mismatch on write", i);
    if (r.samples.size() != m.n_sa)
      throw FormatError("sample count mismatch on write", i);
    put<std::uint64_t>(out, r.id);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.values.size()));
    for (double v : r.values) put<double>(out, v);
    for (float v : r.embedding) put<float>(out, v);
    for (double v : r.samples) put<double>(out, v);
    put<double>(out, r.greedy);
    const std::string meta = meta_to_json(r.meta).dump();
    if (meta.size() > 0xffff) throw FormatError("meta blob exceeds 65535 bytes", i);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  }
  if (!out) throw FormatError("write failed");
}

Dataset read_binary(std::istream& in) {
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic: expected \"NPD1\"");
  std::uint32_t version = 0;
  Dataset ds;
  std::uint64_t count = 0;
  if (!get(in, version) || !get(in, ds.manifest.embedding_dim) ||
      !get(in, ds.manifest.n_sa) || !get(in, count))
    throw FormatError("truncated header");
  if (version != kFormatVersion)
    throw FormatError("unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kFormatVersion) + ")");
  ds.manifest.record_count = count;
  ds.records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    SeriesRecord r;
    std::uint32_t n = 0;
    if (!get(in, r.id) || !get(in, n)) throw FormatError("truncated record", i);
    if (n > (1u << 24)) throw FormatError("implausible series length", i);
    r.values.resize(n);
    for (double& v : r.values)
      if (!get(in, v)) throw FormatError("truncated record", i);
    r.embedding.resize(ds.manifest.embedding_dim);
    for (float& v : r.embedding)
      if (!get(in, v)) throw FormatError("truncated record", i);
    r.samples.resize(ds.manifest.n_sa);
    for (double& v : r.samples)
      if (!get(in, v)) throw FormatError("truncated record", i);
    std::uint16_t meta_len = 0;
    if (!get(in, r.greedy) || !get(in, meta_len))
      throw FormatError("truncated record", i);
    std::string meta(meta_len, '\0');
    if (meta_len > 0 && !in.read(meta.data(), meta_len))
      throw FormatError("truncated record", i);
    try {
      r.meta = meta_from_json(json::parse(meta), nullptr, i);
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed meta: ") + e.what(), i);
    }
    r.serialized = datagen::serialize_series(r.values, r.meta.decimals);
    ds.records.push_back(std::move(r));
  }
  // The binary header has no d_scale; a pooled set reports its largest scale.
  if (!ds.records.empty()) {
    ds.manifest.d_scale = ds.records.front().meta.d_scale;
    for (const auto& r : ds.records)
      ds.manifest.d_scale = std::max(ds.manifest.d_scale, r.meta.d_scale);
  }
  return ds;
}

void write_text(std::ostream& out, const Dataset& dataset) {
  const auto& m = dataset.manifest;
  json header = {{"format", "NPD1"},
                 {"version", kFormatVersion},
                 {"embedding_dim", m.embedding_dim},
                 {"n_sa", m.n_sa},
                 {"d_scale", m.d_scale},
                 {"layer_list", m.layer_list},
                 {"split", split_name(m.split)},
                 {"record_count", dataset.records.size()}};
  out << json{{"manifest", header}}.dump() << '\n';
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    if (r.embedding.size() != m.embedding_dim)
      throw FormatError("embedding-dim mismatch on write", i);
    out << record_to_line(r) << '\n';
  }
  if (!out) throw FormatError("write failed");
}

Dataset read_text(std::istream& in, std::vector<std::string>* warnings) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty text dataset");
  Dataset ds;
  try {
    const json header = json::parse(line).at("manifest");
    if (header.at("format").get<std::string>() != "NPD1")
      throw FormatError("bad format tag: expected \"NPD1\"");
    const auto version = header.at("version").get<std::uint32_t>();
    if (version != kFormatVersion)
      throw FormatError("unsupported version " + std::to_string(version));
    ds.manifest.embedding_dim = header.at("embedding_dim").get<std::uint32_t>();
    ds.manifest.n_sa = header.at("n_sa").get<std::uint32_t>();
    ds.manifest.d_scale = header.at("d_scale").get<double>();
    ds.manifest.layer_list = header.at("layer_list").get<std::vector<int>>();
    ds.manifest.split = parse_split(header.at("split").get<std::string>());
    ds.manifest.record_count = header.at("record_count").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest line: ") + e.what());
  }

  std::uint64_t index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SeriesRecord r;
    try {
      const json j = json::parse(line);
      for (const auto& [key, value] : j.items()) {
        if (key == "id") {
          r.id = value.get<std::uint64_t>();
        } else if (key == "values") {
          r.values = value.get<std::vector<double>>();
        } else if (key == "serialized") {
          r.serialized = value.get<std::string>();
        } else if (key == "embedding") {
          r.embedding.reserve(value.size());
          for (const auto& x : value) r.embedding.push_back(static_cast<float>(x.get<double>()));
        } else if (key == "samples") {
          r.samples = value.get<std::vector<double>>();
        } else if (key == "greedy") {
          r.greedy = value.get<double>();
        } else if (key == "meta") {
          r.meta = meta_from_json(value, warnings, index);
        } else if (warnings) {
          warnings->push_back("record " + std::to_string(index) +
                              ": unknown key '" + key + "'");
        }
      }
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed record: ") + e.what(), index);
    }
    if (r.embedding.size() != ds.manifest.embedding_dim)
      throw FormatError("embedding-dim mismatch: expected " +
                            std::to_string(ds.manifest.embedding_dim) +
                            ", got " + std::to_string(r.embedding.size()),
                        index);
    ds.records.push_back(std::move(r));
    ++index;
  }
  if (ds.records.size() != ds.manifest.record_count)
    throw FormatError("truncated dataset: manifest declares " +
                      std::to_string(ds.manifest.record_count) +
                      " records, found " + std::to_string(ds.records.size()));
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset,
                   FileFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  if (format == FileFormat::kBinary)
    write_binary(out, dataset);
  else
    write_text(out, dataset);
}

Dataset read_dataset(const std::filesystem::path& path,
                     std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  const int first = in.peek();
  if (first == '{') return read_text(in, warnings);
  return read_binary(in);
}

}  // namespace numprobe::data
