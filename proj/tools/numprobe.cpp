#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "numprobe/checkpoint.hpp"
#include "numprobe/config.hpp"
#include "numprobe/dataset.hpp"
#include "numprobe/error.hpp"
#include "numprobe/eval.hpp"
#include "numprobe/pipeline.hpp"
#include "numprobe/probes.hpp"
#include "numprobe/report.hpp"

namespace fs = std::filesystem;
using namespace numprobe;

namespace {

// Flags that override values loaded from --config. Each is applied only when
// given on the command line.
class Overrides {
 public:
  template <typename T, typename Setter>
  void add(CLI::App* app, const std::string& name, const std::string& desc, Setter set) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, desc);
    apply_.push_back([opt, value, set](config::RunConfig& c) {
      if (opt->count() > 0) set(c, *value);
    });
  }

  template <typename Setter>
  void flag(CLI::App* app, const std::string& name, const std::string& desc, Setter set) {
    CLI::Option* opt = app->add_flag(name, desc);
    apply_.push_back([opt, set](config::RunConfig& c) {
      if (opt->count() > 0) set(c);
    });
  }

  void apply(config::RunConfig& c) const {
    for (const auto& f : apply_) f(c);
  }

 private:
  std::vector<std::function<void(config::RunConfig&)>> apply_;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

config::RunConfig load_run_config(const Globals& g, const Overrides& o) {
  config::RunConfig c = g.config_path.empty() ? config::RunConfig{}
                                              : config::load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  o.apply(c);
  c.train.seed = c.seed;
  c.validate();
  return c;
}

std::string fmt(double v) { return report::number(v); }

void add_probe_overrides(CLI::App* app, Overrides& o) {
  const probes::ProbeConfig d;
  o.add<int>(app, "--min-mag", "smallest exponent class (default " + std::to_string(d.min_mag) + ")",
             [](auto& c, int v) { c.probe.min_mag = v; });
  o.add<int>(app, "--max-mag", "largest exponent class (default floor(log10 D_scale))",
             [](auto& c, int v) { c.probe.max_mag = v; });
  o.add<double>(app, "--alpha", "classification loss weight (default " + fmt(d.alpha) + ")",
                [](auto& c, double v) { c.probe.alpha = v; });
  o.add<double>(app, "--beta", "pinball loss weight (default " + fmt(d.beta) + ")",
                [](auto& c, double v) { c.probe.beta = v; });
  o.add<int>(app, "--top-k", "classes marginalised in the expected prediction (default " +
                                 std::to_string(d.top_k) + ")",
             [](auto& c, int v) { c.probe.top_k = v; });
  o.add<int>(app, "--hidden-layers", "hidden layers per network (default " +
                                         std::to_string(d.hidden_layers) + ")",
             [](auto& c, int v) { c.probe.hidden_layers = v; });
  o.add<int>(app, "--hidden-dim", "hidden width (default " + std::to_string(d.hidden_dim) + ")",
             [](auto& c, int v) { c.probe.hidden_dim = v; });
  o.add<std::string>(app, "--scale-input", "scale fed to the value head: raw or exponent (default raw)",
                     [](auto& c, const std::string& v) {
                       c.probe.scale_input = probes::parse_scale_input(v);
                     });
  o.flag(app, "--renormalise-top-k", "renormalise the top-K probabilities (default off)",
         [](auto& c) { c.probe.renormalise_top_k = true; });
  o.flag(app, "--repair-crossing", "sort predicted quantiles ascending (default off)",
         [](auto& c) { c.probe.repair_crossing = true; });
}

void add_train_overrides(CLI::App* app, Overrides& o) {
  const nn::TrainConfig d;
  o.add<double>(app, "--lr", "learning rate (default " + fmt(d.learning_rate) + ")",
                [](auto& c, double v) { c.train.learning_rate = v; });
  o.add<double>(app, "--weight-decay", "weight decay (default " + fmt(d.weight_decay) + ")",
                [](auto& c, double v) { c.train.weight_decay = v; });
  o.flag(app, "--decoupled-weight-decay", "apply weight decay AdamW-style (default coupled)",
         [](auto& c) { c.train.decoupled_weight_decay = true; });
  o.add<int>(app, "--step-size", "epochs per learning-rate step (default " +
                                     std::to_string(d.scheduler_step_size) + ")",
             [](auto& c, int v) { c.train.scheduler_step_size = v; });
  o.add<double>(app, "--gamma", "learning-rate decay factor (default " + fmt(d.scheduler_gamma) + ")",
                [](auto& c, double v) { c.train.scheduler_gamma = v; });
  o.add<int>(app, "--batch-size", "batch size (default " + std::to_string(d.batch_size) + ")",
             [](auto& c, int v) { c.train.batch_size = v; });
  o.add<int>(app, "--epochs", "maximum epochs per phase (default " + std::to_string(d.max_epochs) + ")",
             [](auto& c, int v) { c.train.max_epochs = v; });
  o.add<int>(app, "--patience", "early-stopping patience in epochs (default " +
                                    std::to_string(d.patience) + ")",
             [](auto& c, int v) { c.train.patience = v; });
}

data::Dataset load(const std::string& path) {
  std::vector<std::string> warnings;
  data::Dataset ds = data::read_dataset(path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << path << ": " << w << "\n";
  return ds;
}

void check_dims(const data::Dataset& a, const data::Dataset& b) {
  if (a.manifest.embedding_dim != b.manifest.embedding_dim)
    throw InputError("embedding dimensions differ between datasets (" +
                     std::to_string(a.manifest.embedding_dim) + " vs " +
                     std::to_string(b.manifest.embedding_dim) + ")");
}

void check_probe_dim(int probe_dim, const data::Dataset& ds) {
  if (static_cast<std::uint32_t>(probe_dim) != ds.manifest.embedding_dim)
    throw InputError("dataset embedding dimension " + std::to_string(ds.manifest.embedding_dim) +
                     " does not match probe input " + std::to_string(probe_dim));
}

probes::MagnitudeRange range_for(const config::RunConfig& c, double d_scale) {
  return c.probe.range_for(d_scale);
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out += suffix;
  return out;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// ---- generate ----

int run_generate(const config::RunConfig& c, const std::string& scale, const std::string& out,
                 const std::string& format, bool full_scale) {
  pipeline::GenerateConfig g = c.generate;
  g.seed = c.seed;
  if (full_scale) g.full_scale();
  const auto ff = format == "text" ? data::FileFormat::kText : data::FileFormat::kBinary;

  std::vector<double> scales;
  if (scale == "all") scales.assign(datagen::kScales.begin(), datagen::kScales.end());
  else {
    double v = 0.0;
    try {
      v = std::stod(scale);
    } catch (const std::exception&) {
      throw ConfigError("invalid scale '" + scale + "'");
    }
    scales.push_back(v);
  }
  report::Table summary({"set", "d_scale", "train", "val", "test", "dropped_range", "dropped_cap"});
  std::vector<pipeline::ScaleData> per_scale;
  for (double s : scales) {
    per_scale.push_back(pipeline::generate_scale(s, g));
    const auto& d = per_scale.back();
    const std::string name = "scale_" + pipeline::scale_label(s);
    pipeline::write_splits(out, name, d, g.layer_list, ff);
    summary.add_row({name, fmt(s), std::to_string(d.sets.train.size()),
                     std::to_string(d.sets.val.size()), std::to_string(d.sets.test.size()),
                     std::to_string(d.balance.dropped_out_of_range),
                     std::to_string(d.balance.dropped_by_cap)});
  }
  if (scales.size() > 1) {
    const auto combined = pipeline::combine_scales(per_scale, g);
    pipeline::write_splits(out, "combined", combined, g.layer_list, ff);
    summary.add_row({"combined", fmt(combined.d_scale), std::to_string(combined.sets.train.size()),
                     std::to_string(combined.sets.val.size()),
                     std::to_string(combined.sets.test.size()),
                     std::to_string(combined.balance.dropped_out_of_range),
                     std::to_string(combined.balance.dropped_by_cap)});
  }
  summary.save(fs::path(out) / "generate_summary");
  summary.write_text(std::cout);
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string kind = "scalar";
  std::string train;
  std::string val;
  std::string out;
  std::string history;
  std::string target = "mean";
  bool log_scaling = false;
  bool order_only = false;
};

int run_train(const config::RunConfig& c, const TrainArgs& a) {
  const data::Dataset train = load(a.train);
  const data::Dataset val = load(a.val);
  check_dims(train, val);
  const double d_scale = train.manifest.d_scale;
  const auto target = probes::parse_target(a.target);
  const int dim = static_cast<int>(train.manifest.embedding_dim);
  Rng rng(derive_seed(c.seed, {0x696e6974ULL}));

  io::Checkpoint ckpt;
  ckpt.d_scale = d_scale;
  ckpt.layer_list = train.manifest.layer_list.empty() ? c.probe.layer_list
                                                      : train.manifest.layer_list;
  nn::History history;
  if (a.kind == "scalar") {
    const auto range = range_for(c, d_scale);
    probes::ScalarSettings st{range, target, std::min(c.probe.top_k, range.classes()),
                              c.probe.scale_input, c.probe.renormalise_top_k};
    auto probe = probes::ScalarProbe::create(dim, st, c.probe, rng);
    const auto tr = probes::make_probe_data(train.records, target);
    const auto va = probes::make_probe_data(val.records, target);
    probes::ScalarTrainOptions opts;
    opts.train_value = !a.order_only;
    history = probes::train_scalar(probe, tr, va, c.train, opts);
    ckpt.model = std::move(probe);
  } else if (a.kind == "quantile") {
    const auto range = range_for(c, d_scale);
    probes::QuantileSettings st{range, c.probe.quantile_levels, c.probe.alpha, c.probe.beta,
                                c.probe.scale_input, c.probe.repair_crossing};
    auto probe = probes::QuantileProbe::create(dim, st, c.probe, rng);
    const auto tr = probes::make_probe_data(train.records, target, c.probe.quantile_levels);
    const auto va = probes::make_probe_data(val.records, target, c.probe.quantile_levels);
    history = probes::train_quantile(probe, tr, va, c.train);
    ckpt.model = std::move(probe);
  } else {
    auto probe = probes::VanillaProbe::create(dim, {target, a.log_scaling}, c.probe, rng);
    const auto tr = probes::make_probe_data(train.records, target);
    const auto va = probes::make_probe_data(val.records, target);
    history = probes::train_vanilla(probe, tr, va, c.train);
    ckpt.model = std::move(probe);
  }
  ensure_parent(a.out);
  io::save_checkpoint(a.out, ckpt);
  const fs::path hist = a.history.empty() ? with_suffix(a.out, ".history.csv") : fs::path(a.history);
  std::ofstream h(hist, std::ios::binary);
  if (!h) throw InputError("cannot open " + hist.string() + " for writing");
  report::history_table(history).write_csv(h);
  std::cout << "trained " << a.kind << " probe: " << history.size() << " epochs, final val loss "
            << (history.empty() ? 0.0 : history.back().val_loss) << "\n";
  return 0;
}

// ---- evaluate ----

struct EvalArgs {
  std::string report = "all";
  std::string checkpoint;
  std::string test;
  std::string train;
  std::string out;
};

double train_mean(const std::string& path, probes::TargetKind target) {
  if (path.empty()) throw ConfigError("--train is required for baseline reports");
  const data::Dataset ds = load(path);
  return eval::global_mean(probes::make_probe_data(ds.records, target).targets);
}

void report_point(const io::Checkpoint& ckpt, const data::Dataset& test, const EvalArgs& a,
                  const fs::path& out) {
  report::Table t({"metric", "value"});
  if (const auto* sp = std::get_if<probes::ScalarProbe>(&ckpt.model)) {
    const auto target = sp->settings().target;
    const auto td = probes::make_probe_data(test.records, target);
    const auto r = pipeline::evaluate_scalar(*sp, td, test.records, train_mean(a.train, target));
    t.add_row({"target", std::string(probes::target_name(target))});
    t.add_row({"records", std::to_string(r.records)});
    t.add_row({"magnitude_accuracy", fmt(r.magnitude_accuracy)});
    t.add_row({"mse_probe_expected", fmt(r.mse_expected)});
    t.add_row({"mse_probe_argmax", fmt(r.mse_argmax)});
    t.add_row({"mse_global_mean", fmt(r.mse_global_mean)});
    t.add_row({"mse_series_mean", fmt(r.mse_series_mean)});
    t.add_row({"mse_last_value", fmt(r.mse_last_value)});
  } else if (const auto* vp = std::get_if<probes::VanillaProbe>(&ckpt.model)) {
    const auto td = probes::make_probe_data(test.records, vp->settings().target);
    t.add_row({"target", std::string(probes::target_name(vp->settings().target))});
    t.add_row({"records", std::to_string(td.size())});
    t.add_row({"mse_vanilla", fmt(eval::mse(vp->predict(td.embeddings), td.targets))});
  } else {
    throw ConfigError("point report needs a scalar or vanilla checkpoint");
  }
  t.save(out / "point");
  t.write_text(std::cout);
}

void report_truth(const io::Checkpoint& ckpt, const data::Dataset& test, const EvalArgs& a,
                  const config::RunConfig& c, const fs::path& out) {
  const auto* sp = std::get_if<probes::ScalarProbe>(&ckpt.model);
  if (!sp) throw ConfigError("truth report needs a scalar checkpoint");
  const auto target = sp->settings().target;
  const auto td = probes::make_probe_data(test.records, target);
  const auto pred = sp->predict(td.embeddings);
  const auto rows = pipeline::evaluate_against_truth(test.records, pred.expected_value,
                                                     train_mean(a.train, target), c.gp);
  report::Table t({"predictor", "mse_vs_next_value"});
  for (const auto& r : rows) t.add_row({r.predictor, fmt(r.mse)});
  t.save(out / "truth");
  t.write_text(std::cout);
}

void report_quantile(const probes::QuantileProbe& qp, const data::Dataset& test,
                     const std::string& which, const fs::path& out) {
  const auto& levels = qp.settings().levels;
  const auto td = probes::make_probe_data(test.records, probes::TargetKind::kMean, levels);
  const nn::Matrix q = qp.predict(td.embeddings);
  const bool all = which == "all";
  if (all || which == "coverage") {
    report::Table t({"alpha", "coverage_percent", "sem_percent", "records"});
    for (const auto& r : eval::coverage(q, levels, td.samples))
      t.add_row({fmt(r.alpha), fmt(r.mean_percent), fmt(r.sem_percent), std::to_string(r.records)});
    t.save(out / "coverage");
    t.write_text(std::cout);
  }
  if (all || which == "iqr") {
    const auto iqr = eval::iqr_correlation(q, levels, td.samples);
    report::Table t({"metric", "value"});
    t.add_row({"pearson_r", fmt(iqr.r)});
    t.add_row({"valid_records", std::to_string(iqr.points.size())});
    t.add_row({"excluded_zero_median", std::to_string(iqr.excluded)});
    t.save(out / "iqr");
    t.write_text(std::cout);
    report::Table scatter({"record_id", "predicted_norm_iqr", "sample_norm_iqr"});
    for (const auto& p : iqr.points)
      scatter.add_row({std::to_string(test.records[p.index].id), fmt(p.predicted), fmt(p.sample)});
    std::ofstream s(out / "iqr_scatter.csv", std::ios::binary);
    scatter.write_csv(s);
  }
  if (all || which == "mae") {
    const auto mae = eval::per_quantile_mae(q, td.quantile_targets);
    report::Table t({"tau", "mae"});
    for (std::size_t s = 0; s < mae.size(); ++s) t.add_row({fmt(levels[s]), fmt(mae[s])});
    t.save(out / "quantile_mae");
    t.write_text(std::cout);
  }
}

void report_flops(const io::Checkpoint& ckpt, const fs::path& out) {
  const std::uint64_t flops = std::visit([](const auto& m) { return eval::flop_estimate(m); },
                                         ckpt.model);
  report::Table t({"kind", "multiply_adds"});
  t.add_row({std::string(io::kind_name(ckpt.kind())), std::to_string(flops)});
  t.save(out / "flops");
  t.write_text(std::cout);
}

int run_evaluate(const config::RunConfig& c, const EvalArgs& a) {
  const io::Checkpoint ckpt = io::load_checkpoint(a.checkpoint);
  const fs::path out = a.out;
  fs::create_directories(out);
  const bool all = a.report == "all";
  if (a.report == "flops" || all) report_flops(ckpt, out);
  if (a.report == "flops") return 0;

  if (a.test.empty()) throw ConfigError("--test is required for report '" + a.report + "'");
  const data::Dataset test = load(a.test);
  std::visit([&](const auto& m) { check_probe_dim(m.input_dim(), test); }, ckpt.model);

  const bool scalar_kind = ckpt.kind() == io::ProbeKind::kScalar ||
                           ckpt.kind() == io::ProbeKind::kVanilla;
  if (a.report == "point" || (all && scalar_kind)) report_point(ckpt, test, a, out);
  if (a.report == "truth" || (all && ckpt.kind() == io::ProbeKind::kScalar))
    report_truth(ckpt, test, a, c, out);
  if (a.report == "coverage" || a.report == "iqr" || a.report == "mae" ||
      (all && ckpt.kind() == io::ProbeKind::kQuantile)) {
    const auto* qp = std::get_if<probes::QuantileProbe>(&ckpt.model);
    if (!qp) throw ConfigError("report '" + a.report + "' needs a quantile checkpoint");
    report_quantile(*qp, test, a.report, out);
  }
  return 0;
}

// ---- ablate ----

std::vector<int> parse_list(const std::string& text) {
  std::vector<int> out;
  const auto dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      const int lo = std::stoi(text.substr(0, dots));
      const int hi = std::stoi(text.substr(dots + 2));
      if (hi < lo) throw ConfigError("empty layer range '" + text + "'");
      for (int i = lo; i <= hi; ++i) out.push_back(i);
    } else {
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    }
  } catch (const std::logic_error&) {
    throw ConfigError("invalid layer list '" + text + "'");
  }
  if (out.empty()) throw ConfigError("empty layer list");
  return out;
}

struct AblateArgs {
  std::string what = "layers";
  std::string train;
  std::string val;
  std::string test;
  std::string out;
  std::string list = "1..8";
  std::string target = "mean";
};

int run_ablate(const config::RunConfig& c, const AblateArgs& a) {
  const data::Dataset train = load(a.train);
  const data::Dataset val = load(a.val);
  const data::Dataset test = load(a.test);
  check_dims(train, val);
  check_dims(train, test);
  fs::create_directories(a.out);
  const double d_scale = train.manifest.d_scale;

  if (a.what == "context") {
    data::SplitSets sets{train.records, val.records, test.records};
    const auto r = pipeline::context_length_experiment(sets, d_scale, c.probe, c.train);
    report::Table t({"model", "length", "alpha", "coverage_percent", "records"});
    for (const auto* rows : {&r.base, &r.restricted})
      for (const auto& row : *rows)
        t.add_row({rows == &r.base ? "base" : "restricted", std::to_string(row.length),
                   fmt(row.alpha), fmt(row.mean_percent), std::to_string(row.records)});
    t.save(fs::path(a.out) / "context_length");
    t.write_text(std::cout);
    report::Table s({"model", "mean_abs_deviation_outside_10_20"});
    s.add_row({"base", fmt(r.base_deviation)});
    s.add_row({"restricted", fmt(r.restricted_deviation)});
    s.save(fs::path(a.out) / "context_length_summary");
    s.write_text(std::cout);
    return 0;
  }

  const std::vector<int> positions = parse_list(a.list);
  const auto& layers = train.manifest.layer_list;
  const int n_blocks = static_cast<int>(layers.empty() ? c.probe.layer_list.size() : layers.size());
  const int dim = static_cast<int>(train.manifest.embedding_dim);
  if (n_blocks < 1 || dim % n_blocks != 0)
    throw InputError("embedding dimension " + std::to_string(dim) + " is not divisible into " +
                     std::to_string(n_blocks) + " layers");
  const int d_model = dim / n_blocks;
  for (int p : positions)
    if (p < 1 || p > n_blocks)
      throw ConfigError("layer position " + std::to_string(p) + " outside 1.." +
                        std::to_string(n_blocks));

  const auto target = probes::parse_target(a.target);
  auto tr = probes::make_probe_data(train.records, target);
  auto va = probes::make_probe_data(val.records, target);
  auto te = probes::make_probe_data(test.records, target);
  // Keep only the requested blocks, in the requested order.
  auto pick = [&](const probes::ProbeData& d) {
    probes::ProbeData out = d;
    out.embeddings.resize(static_cast<Eigen::Index>(positions.size()) * d_model, d.embeddings.cols());
    for (std::size_t i = 0; i < positions.size(); ++i)
      out.embeddings.middleRows(static_cast<Eigen::Index>(i) * d_model, d_model) =
          d.embeddings.middleRows(static_cast<Eigen::Index>(positions[i] - 1) * d_model, d_model);
    return out;
  };
  std::vector<int> labels;
  for (int p : positions) labels.push_back(layers.empty() ? p : layers[static_cast<std::size_t>(p - 1)]);
  const auto rows = pipeline::layer_ablation(pick(tr), pick(va), pick(te), labels, d_model,
                                             range_for(c, d_scale), c.probe, c.train, target);
  report::Table t({"layers", "d_input", "mse", "magnitude_accuracy"});
  for (const auto& r : rows)
    t.add_row({r.layers, std::to_string(r.d_input), fmt(r.mse), fmt(r.magnitude_accuracy)});
  t.save(fs::path(a.out) / "layer_ablation");
  t.write_text(std::cout);
  return 0;
}

// ---- efficiency ----

struct EfficiencyArgs {
  std::string checkpoint;
  std::string test;
  std::string out;
  std::vector<int> n_list{eval::kEfficiencyN.begin(), eval::kEfficiencyN.end()};
  int bootstraps = 100;
};

int run_efficiency(const config::RunConfig& c, const EfficiencyArgs& a) {
  const io::Checkpoint ckpt = io::load_checkpoint(a.checkpoint);
  const auto* sp = std::get_if<probes::ScalarProbe>(&ckpt.model);
  if (!sp) throw ConfigError("efficiency needs a scalar checkpoint");
  const data::Dataset test = load(a.test);
  check_probe_dim(sp->input_dim(), test);
  const auto td = probes::make_probe_data(test.records, sp->settings().target);
  std::vector<double> truth;
  for (const auto& r : test.records) {
    if (!r.meta.next_value)
      throw InputError("record " + std::to_string(r.id) + " has no ground-truth next value");
    truth.push_back(*r.meta.next_value);
  }
  const auto pred = sp->predict(td.embeddings);
  const auto curve = eval::sample_efficiency(td.samples, truth, pred.expected_value, a.n_list,
                                             a.bootstraps, c.seed);
  fs::create_directories(a.out);
  report::Table t({"n", "mse_sample_mean", "lower_95", "upper_95", "mse_probe"});
  for (const auto& p : curve.points)
    t.add_row({std::to_string(p.n), fmt(p.mse), fmt(p.lower), fmt(p.upper), fmt(curve.probe_mse)});
  t.save(fs::path(a.out) / "sample_efficiency");
  t.write_text(std::cout);
  std::cout << "crossover N*: "
            << (curve.crossover ? std::to_string(*curve.crossover) : std::string("none")) << "\n";
  return 0;
}

// ---- import ----

int run_import(const std::string& in, const std::string& out, const std::string& format) {
  std::vector<std::string> warnings;
  data::Dataset ds = data::read_dataset(in, &warnings);
  ds.validate();
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "ok: " << ds.records.size() << " records, embedding_dim "
            << ds.manifest.embedding_dim << ", n_sa " << ds.manifest.n_sa << ", "
            << warnings.size() << " warnings\n";
  if (!out.empty()) {
    ensure_parent(out);
    data::write_dataset(out, ds, format == "text" ? data::FileFormat::kText
                                                  : data::FileFormat::kBinary);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Magnitude-factorised probes for numeric prediction from sequence-model embeddings",
               "numprobe"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration (defaults when omitted)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed (default 0, or the config's seed)");

  Overrides overrides;

  auto* gen = app.add_subcommand("generate", "generate surrogate datasets");
  std::string scale;
  std::string out_dir;
  std::string format = "binary";
  bool full_scale = false;
  gen->add_option("--scale", scale, "D_scale: 1, 10, 1000, 10000 or all")
      ->required()
      ->check(CLI::IsMember({"1", "10", "1000", "10000", "all"}));
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--format", format, "binary or text (default binary)")
      ->check(CLI::IsMember({"binary", "text"}));
  gen->add_flag("--full-scale", full_scale, "full corpus: 10 a-values x 10 windows per length");
  {
    const pipeline::GenerateConfig d;
    overrides.add<int>(gen, "--a-grid", "a-values per family (default " + std::to_string(d.a_grid_size) + ")",
                       [](auto& c, int v) { c.generate.a_grid_size = v; });
    overrides.add<int>(gen, "--windows", "windows per series length (default " +
                                             std::to_string(d.subseqs_per_length) + ")",
                       [](auto& c, int v) { c.generate.subseqs_per_length = v; });
    overrides.add<int>(gen, "--samples", "samples per record (default " + std::to_string(d.n_samples) + ")",
                       [](auto& c, int v) { c.generate.n_samples = v; });
    overrides.add<std::size_t>(gen, "--bin-cap", "records per magnitude bin (default " +
                                                     std::to_string(d.bin_cap) + ")",
                               [](auto& c, std::size_t v) { c.generate.bin_cap = v; });
    overrides.add<int>(gen, "--d-model", "surrogate width per layer (default " +
                                             std::to_string(d.surrogate.d_model) + ")",
                       [](auto& c, int v) { c.generate.surrogate.d_model = v; });
  }

  auto* train = app.add_subcommand("train", "train a probe");
  TrainArgs ta;
  train->add_option("kind", ta.kind, "scalar, quantile or vanilla (default scalar)")
      ->check(CLI::IsMember({"scalar", "quantile", "vanilla"}));
  train->add_option("--probe", ta.kind, "same as the positional kind")
      ->check(CLI::IsMember({"scalar", "quantile", "vanilla"}));
  train->add_option("--train", ta.train, "training dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--val", ta.val, "validation dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "checkpoint path")->required();
  train->add_option("--history", ta.history, "history CSV (default <out>.history.csv)");
  train->add_option("--target", ta.target, "greedy, mean or median (default mean)")
      ->check(CLI::IsMember({"greedy", "mean", "median"}));
  train->add_flag("--log-scaling", ta.log_scaling, "vanilla: sign(y) log(1+|y|) targets");
  train->add_flag("--order-only", ta.order_only, "scalar: run the classification phase only");
  add_probe_overrides(train, overrides);
  add_train_overrides(train, overrides);

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
  EvalArgs ea;
  evaluate->add_option("report", ea.report,
                       "point, truth, coverage, iqr, mae, flops or all (default all)")
      ->check(CLI::IsMember({"point", "truth", "coverage", "iqr", "mae", "flops", "all"}));
  evaluate->add_option("--checkpoint", ea.checkpoint, "probe checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--test", ea.test, "test dataset")->check(CLI::ExistingFile);
  evaluate->add_option("--train", ea.train, "training dataset, for the global-mean baseline")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--out", ea.out, "report directory")->required();

  auto* ablate = app.add_subcommand("ablate", "layer or context-length ablation");
  AblateArgs aa;
  ablate->add_option("what", aa.what, "layers or context (default layers)")
      ->check(CLI::IsMember({"layers", "context"}));
  ablate->add_option("--train", aa.train, "training dataset")->required()->check(CLI::ExistingFile);
  ablate->add_option("--val", aa.val, "validation dataset")->required()->check(CLI::ExistingFile);
  ablate->add_option("--test", aa.test, "test dataset")->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", aa.out, "report directory")->required();
  ablate->add_option("--list", aa.list, "1-based layer positions, a..b or comma list (default 1..8)");
  ablate->add_option("--target", aa.target, "greedy, mean or median (default mean)")
      ->check(CLI::IsMember({"greedy", "mean", "median"}));
  add_probe_overrides(ablate, overrides);
  add_train_overrides(ablate, overrides);

  auto* eff = app.add_subcommand("efficiency", "probe error vs mean of N samples");
  EfficiencyArgs fa;
  eff->add_option("--checkpoint", fa.checkpoint, "scalar probe checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  eff->add_option("--test", fa.test, "test dataset")->required()->check(CLI::ExistingFile);
  eff->add_option("--out", fa.out, "report directory")->required();
  eff->add_option("--n", fa.n_list, "sample counts (default 1 5 10 20 25 50 100)");
  eff->add_option("--bootstraps", fa.bootstraps, "bootstrap resamples (default 100)");

  auto* imp = app.add_subcommand("import", "validate a dataset file, optionally re-encode it");
  std::string import_in;
  std::string import_out;
  std::string import_format = "binary";
  imp->add_option("input", import_in, "dataset file")->required()->check(CLI::ExistingFile);
  imp->add_option("--out", import_out, "re-encoded output path");
  imp->add_option("--format", import_format, "binary or text (default binary)")
      ->check(CLI::IsMember({"binary", "text"}));

  auto* show = app.add_subcommand("config", "print the effective configuration as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    const config::RunConfig cfg = load_run_config(g, overrides);
    if (gen->parsed()) return run_generate(cfg, scale, out_dir, format, full_scale);
    if (train->parsed()) return run_train(cfg, ta);
    if (evaluate->parsed()) return run_evaluate(cfg, ea);
    if (ablate->parsed()) return run_ablate(cfg, aa);
    if (eff->parsed()) return run_efficiency(cfg, fa);
    if (imp->parsed()) return run_import(import_in, import_out, import_format);
    if (show->parsed()) {
      std::cout << config::dump_config(cfg);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kUsage);
}
