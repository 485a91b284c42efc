#include "numprobe/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "numprobe/error.hpp"
#include "numprobe/report.hpp"

namespace numprobe::pipeline {
namespace {

std::uint64_t scale_tag(double d_scale) {
  for (std::size_t i = 0; i < datagen::kScales.size(); ++i)
    if (datagen::kScales[i] == d_scale) return i;
  return static_cast<std::uint64_t>(std::llround(d_scale));
}

}  // namespace

void GenerateConfig::full_scale() {
  a_grid_size = 10;
  subseqs_per_length = 10;
}

void GenerateConfig::validate() const {
  if (a_grid_size < 1) throw ConfigError("a_grid_size must be positive");
  if (subseqs_per_length < 1) throw ConfigError("subseqs_per_length must be positive");
  if (n_samples < 1) throw ConfigError("n_samples must be positive");
  if (bin_cap < 1) throw ConfigError("bin_cap must be positive");
  if (families.empty()) throw ConfigError("at least one function family is required");
  if (static_cast<int>(layer_list.size()) != surrogate.n_layers)
    throw ConfigError("layer_list has " + std::to_string(layer_list.size()) +
                      " entries but the surrogate has " +
                      std::to_string(surrogate.n_layers) + " layers");
  if (surrogate.d_model < 1) throw ConfigError("d_model must be positive");
}

std::vector<data::SeriesRecord> build_records(const std::vector<datagen::RawSeries>& corpus,
                                              const surrogate::SurrogateModel& model,
                                              int n_samples, std::uint64_t seed,
                                              std::uint64_t first_id) {
  std::vector<data::SeriesRecord> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    data::SeriesRecord r;
    r.id = first_id + i;
    r.values = s.values;
    r.serialized = datagen::serialize_series(s.values, s.decimal_places);
    r.embedding = model.embed(s);
    auto draw = model.sample(s, n_samples, derive_seed(seed, {0x73616d70ULL, r.id}));
    r.samples = std::move(draw.samples);
    r.greedy = draw.greedy;
    r.meta.family = std::string(datagen::family_name(s.family));
    r.meta.length = static_cast<int>(s.values.size());
    r.meta.sigma2 = s.sigma2;
    r.meta.d_scale = s.d_scale;
    r.meta.decimals = s.decimal_places;
    r.meta.source = "surrogate";
    r.meta.next_value = s.next_value;
    r.meta.truth = model.predictive_spec(s);
    out.push_back(std::move(r));
  }
  return out;
}

ScaleData generate_scale(double d_scale, const GenerateConfig& config) {
  config.validate();
  datagen::AugmentationSpec spec = datagen::AugmentationSpec::for_scale(d_scale);
  spec.families = config.families;
  spec.a_grid_size = config.a_grid_size;
  spec.subseqs_per_length = config.subseqs_per_length;
  const std::uint64_t tag = scale_tag(d_scale);
  const auto corpus = datagen::generate_corpus(spec, derive_seed(config.seed, {0x636f7270ULL, tag}));
  const surrogate::SurrogateModel model(config.surrogate);
  auto records = build_records(corpus, model, config.n_samples,
                               derive_seed(config.seed, {0x7265636bULL, tag}), tag << 32);
  ScaleData out;
  out.d_scale = d_scale;
  records = data::balance_and_filter(std::move(records), d_scale, config.bin_cap,
                                     derive_seed(config.seed, {0x62616cULL, tag}), &out.balance);
  out.sets = data::split(std::move(records), derive_seed(config.seed, {0x73706cULL, tag}));
  return out;
}

ScaleData combine_scales(const std::vector<ScaleData>& scales, const GenerateConfig& config) {
  if (scales.empty()) throw ConfigError("no scales to combine");
  std::vector<data::SeriesRecord> pool;
  double d_max = 0.0;
  for (const auto& s : scales) {
    d_max = std::max(d_max, s.d_scale);
    for (const auto* part : {&s.sets.train, &s.sets.val, &s.sets.test})
      pool.insert(pool.end(), part->begin(), part->end());
  }
  std::sort(pool.begin(), pool.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  ScaleData out;
  out.d_scale = d_max;
  pool = data::balance_and_filter(std::move(pool), d_max, config.bin_cap,
                                  derive_seed(config.seed, {0x62616cULL, 0x616c6cULL}),
                                  &out.balance);
  out.sets = data::split(std::move(pool), derive_seed(config.seed, {0x73706cULL, 0x616c6cULL}));
  return out;
}

data::Dataset make_dataset(std::vector<data::SeriesRecord> records, double d_scale,
                           data::Split split, const std::vector<int>& layer_list) {
  data::Dataset ds;
  ds.records = std::move(records);
  ds.manifest.d_scale = d_scale;
  ds.manifest.split = split;
  ds.manifest.layer_list = layer_list;
  ds.refresh_manifest();
  return ds;
}

std::string scale_label(double d_scale) { return report::number(d_scale); }

std::vector<std::filesystem::path> write_splits(const std::filesystem::path& dir,
                                                const std::string& name,
                                                const ScaleData& data,
                                                const std::vector<int>& layer_list,
                                                data::FileFormat format) {
  std::filesystem::create_directories(dir);
  const std::string ext = format == data::FileFormat::kBinary ? ".npd" : ".jsonl";
  std::vector<std::filesystem::path> paths;
  const std::pair<data::Split, const std::vector<data::SeriesRecord>*> parts[] = {
      {data::Split::kTrain, &data.sets.train},
      {data::Split::kVal, &data.sets.val},
      {data::Split::kTest, &data.sets.test}};
  for (const auto& [split, records] : parts) {
    const auto path = dir / (name + "_" + std::string(data::split_name(split)) + ext);
    data::write_dataset(path, make_dataset(*records, data.d_scale, split, layer_list), format);
    paths.push_back(path);
  }
  return paths;
}

PointReport evaluate_scalar(const probes::ScalarProbe& probe,
                            const probes::ProbeData& test,
                            const std::vector<data::SeriesRecord>& test_records,
                            double train_global_mean) {
  if (test.size() != test_records.size())
    throw InputError("probe data and records differ in length");
  const probes::ScalarBatch pred = probe.predict(test.embeddings);
  PointReport r;
  r.records = test.size();
  r.magnitude_accuracy =
      eval::magnitude_accuracy(pred.top_class, test.targets, probe.settings().range);
  r.mse_expected = eval::mse(pred.expected_value, test.targets);
  r.mse_argmax = eval::mse(pred.argmax_value, test.targets);
  std::vector<double> g(test.size()), m(test.size()), l(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto b = eval::baselines(test_records[i].values, train_global_mean);
    g[i] = b.global_mean;
    m[i] = b.series_mean;
    l[i] = b.last_value;
  }
  r.mse_global_mean = eval::mse(g, test.targets);
  r.mse_series_mean = eval::mse(m, test.targets);
  r.mse_last_value = eval::mse(l, test.targets);
  return r;
}

std::vector<TruthRow> evaluate_against_truth(
    const std::vector<data::SeriesRecord>& test, std::span<const double> probe_predictions,
    double train_global_mean, const eval::GpConfig& gp) {
  if (test.empty()) throw InputError("no test records");
  if (probe_predictions.size() != test.size())
    throw InputError("probe predictions and records differ in length");
  const std::size_t n = test.size();
  std::vector<double> truth(n), llm_mean(n), llm_median(n), greedy(n), global(n),
      series_mean(n), last(n), gp_pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = test[i];
    if (!r.meta.next_value)
      throw InputError("record " + std::to_string(r.id) + " has no ground-truth next value");
    truth[i] = *r.meta.next_value;
    const data::Targets t = data::derive_targets(r);
    llm_mean[i] = t.mean;
    llm_median[i] = t.median;
    greedy[i] = r.greedy;
    const auto b = eval::baselines(r.values, train_global_mean);
    global[i] = b.global_mean;
    series_mean[i] = b.series_mean;
    last[i] = b.last_value;
    gp_pred[i] = eval::gp_baseline(r.values, gp);
  }
  return {{"probe", eval::mse(probe_predictions, truth)},
          {"sample_mean", eval::mse(llm_mean, truth)},
          {"sample_median", eval::mse(llm_median, truth)},
          {"greedy", eval::mse(greedy, truth)},
          {"global_mean", eval::mse(global, truth)},
          {"series_mean", eval::mse(series_mean, truth)},
          {"last_value", eval::mse(last, truth)},
          {"gp", eval::mse(gp_pred, truth)}};
}

std::vector<AblationRow> layer_ablation(const probes::ProbeData& train,
                                        const probes::ProbeData& val,
                                        const probes::ProbeData& test,
                                        const std::vector<int>& layer_list, int d_model,
                                        const probes::MagnitudeRange& range,
                                        const probes::ProbeConfig& probe_config,
                                        const nn::TrainConfig& train_config,
                                        probes::TargetKind target) {
  if (layer_list.empty()) throw ConfigError("empty layer list");
  const auto expected = static_cast<Eigen::Index>(layer_list.size()) * d_model;
  for (const auto* d : {&train, &val, &test})
    if (d->embeddings.rows() != expected)
      throw InputError("embedding dimension " + std::to_string(d->embeddings.rows()) +
                       " does not match " + std::to_string(layer_list.size()) +
                       " layers of width " + std::to_string(d_model));

  std::vector<AblationRow> rows;
  auto run = [&](const std::string& label, Eigen::Index first, Eigen::Index count,
                 std::uint64_t tag) {
    const auto tr = probes::select_rows(train, first, count);
    const auto va = probes::select_rows(val, first, count);
    const auto te = probes::select_rows(test, first, count);
    Rng rng(derive_seed(train_config.seed, {0x61626cULL, tag}));
    probes::ScalarSettings st{range, target, std::min(probe_config.top_k, range.classes()),
                              probe_config.scale_input, probe_config.renormalise_top_k};
    auto probe = probes::ScalarProbe::create(static_cast<int>(count), st, probe_config, rng);
    nn::TrainConfig tc = train_config;
    tc.seed = derive_seed(train_config.seed, {tag});
    probes::train_scalar(probe, tr, va, tc);
    const auto pred = probe.predict(te.embeddings);
    rows.push_back({label, static_cast<int>(count), eval::mse(pred.expected_value, te.targets),
                    eval::magnitude_accuracy(pred.top_class, te.targets, range)});
  };
  for (std::size_t l = 0; l < layer_list.size(); ++l)
    run(std::to_string(layer_list[l]), static_cast<Eigen::Index>(l) * d_model, d_model, l);
  run("concat", 0, expected, layer_list.size());
  return rows;
}

std::vector<data::SeriesRecord> filter_lengths(const std::vector<data::SeriesRecord>& records,
                                               int lo, int hi) {
  std::vector<data::SeriesRecord> out;
  for (const auto& r : records)
    if (r.meta.length >= lo && r.meta.length <= hi) out.push_back(r);
  return out;
}

ContextLengthResult context_length_experiment(const data::SplitSets& sets,
                                              double d_scale,
                                              const probes::ProbeConfig& probe_config,
                                              const nn::TrainConfig& train_config) {
  const probes::MagnitudeRange range = probe_config.range_for(d_scale);
  const auto test = probes::make_probe_data(sets.test, probes::TargetKind::kMean,
                                            probe_config.quantile_levels);
  std::vector<int> lengths;
  for (const auto& r : sets.test) lengths.push_back(r.meta.length);

  auto run = [&](int lo, int hi, std::uint64_t tag, std::size_t* n_train) {
    const auto tr_records = filter_lengths(sets.train, lo, hi);
    const auto va_records = filter_lengths(sets.val, lo, hi);
    if (n_train) *n_train = tr_records.size();
    const auto tr = probes::make_probe_data(tr_records, probes::TargetKind::kMean,
                                            probe_config.quantile_levels);
    const auto va = probes::make_probe_data(va_records, probes::TargetKind::kMean,
                                            probe_config.quantile_levels);
    Rng rng(derive_seed(train_config.seed, {0x63746cULL, tag}));
    probes::QuantileSettings st{range, probe_config.quantile_levels, probe_config.alpha,
                                probe_config.beta, probe_config.scale_input,
                                probe_config.repair_crossing};
    auto probe = probes::QuantileProbe::create(test.dim(), st, probe_config, rng);
    nn::TrainConfig tc = train_config;
    tc.seed = derive_seed(train_config.seed, {0x63746cULL, tag});
    probes::train_quantile(probe, tr, va, tc);
    const nn::Matrix q = probe.predict(test.embeddings);
    return eval::coverage_by_length(
        eval::coverage_per_record(q, probe_config.quantile_levels, test.samples), lengths);
  };

  ContextLengthResult out;
  out.base = run(kBaseMinLength, kBaseMaxLength, 0, nullptr);
  out.restricted = run(kRestrictedMinLength, kRestrictedMaxLength, 1,
                       &out.restricted_train_records);
  out.base_deviation =
      eval::out_of_range_deviation(out.base, kRestrictedMinLength, kRestrictedMaxLength);
  out.restricted_deviation =
      eval::out_of_range_deviation(out.restricted, kRestrictedMinLength, kRestrictedMaxLength);
  return out;
}

}  // namespace numprobe::pipeline
