#include "numprobe/probes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "numprobe/error.hpp"

namespace numprobe::probes {
namespace {

constexpr Eigen::Index kChunk = 1024;

constexpr std::array<double, 23> kPow10 = {
    1e0,  1e1,  1e2,  1e3,  1e4,  1e5,  1e6,  1e7,  1e8,  1e9,  1e10, 1e11,
    1e12, 1e13, 1e14, 1e15, 1e16, 1e17, 1e18, 1e19, 1e20, 1e21, 1e22};

nn::Matrix gather(const Eigen::MatrixXf& e, std::span<const std::size_t> idx) {
  nn::Matrix x(e.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    x.col(static_cast<Eigen::Index>(j)) =
        e.col(static_cast<Eigen::Index>(idx[j])).cast<double>();
  return x;
}

nn::Matrix block(const Eigen::MatrixXf& e, Eigen::Index first, Eigen::Index n) {
  return e.middleCols(first, n).cast<double>();
}

// [x; s] with one scale value per column.
nn::Matrix augment(const nn::Matrix& x, std::span<const double> scale) {
  nn::Matrix out(x.rows() + 1, x.cols());
  out.topRows(x.rows()) = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    out(x.rows(), j) = scale[static_cast<std::size_t>(j)];
  return out;
}

// Value head evaluated at every class. The first affine layer is shared
// across classes except for its scale column.
nn::Matrix value_all_classes(const nn::Mlp& value, const nn::Matrix& x,
                             std::span<const double> scales) {
  const auto& layers = value.layers();
  const Eigen::Index d = x.rows();
  const nn::Dense& first = layers.front();
  nn::Matrix base = first.weight.leftCols(d) * x;
  base.colwise() += first.bias;
  nn::Matrix out(static_cast<Eigen::Index>(scales.size()), x.cols());
  for (std::size_t k = 0; k < scales.size(); ++k) {
    nn::Matrix z = base;
    z.colwise() += first.weight.col(d) * scales[k];
    for (std::size_t l = 1; l < layers.size(); ++l) {
      z = z.unaryExpr([](double v) { return nn::gelu(v); }).eval();
      nn::Matrix next = layers[l].weight * z;
      next.colwise() += layers[l].bias;
      z = std::move(next);
    }
    out.row(static_cast<Eigen::Index>(k)) = z.row(0);
  }
  return out;
}

void check_dim(std::size_t got, int want) {
  if (got != static_cast<std::size_t>(want))
    throw InputError("embedding length " + std::to_string(got) +
                     " does not match probe input " + std::to_string(want));
}

void check_data(const ProbeData& d, int dim, const char* what) {
  if (d.size() == 0) throw InputError(std::string("empty ") + what + " set");
  if (d.dim() != dim)
    throw InputError(std::string(what) + " embedding dimension " +
                     std::to_string(d.dim()) + " does not match probe input " +
                     std::to_string(dim));
}

int argmax_col(const nn::Matrix& m, Eigen::Index col) {
  Eigen::Index best = 0;
  m.col(col).maxCoeff(&best);
  return static_cast<int>(best);
}

std::vector<int> predicted_classes(const nn::Mlp& order, const Eigen::MatrixXf& e) {
  std::vector<int> out(static_cast<std::size_t>(e.cols()));
  for (Eigen::Index start = 0; start < e.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, e.cols() - start);
    const nn::Matrix logits = order.forward(block(e, start, n));
    for (Eigen::Index j = 0; j < n; ++j)
      out[static_cast<std::size_t>(start + j)] = argmax_col(logits, j);
  }
  return out;
}

std::vector<double> scales_for(std::span<const int> classes,
                               std::span<const std::size_t> idx,
                               const std::vector<double>& table) {
  std::vector<double> s(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j)
    s[j] = table[static_cast<std::size_t>(classes[idx[j]])];
  return s;
}

std::vector<std::size_t> range_indices(std::size_t first, std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), first);
  return idx;
}

std::vector<double> scale_table(const MagnitudeRange& range, ScaleInput input) {
  std::vector<double> t(static_cast<std::size_t>(range.classes()));
  for (int k = 0; k < range.classes(); ++k)
    t[static_cast<std::size_t>(k)] = input == ScaleInput::kRaw
                                         ? range.scale(k)
                                         : static_cast<double>(range.exponent(k));
  return t;
}

void check_levels(std::span<const double> levels) {
  if (levels.empty()) throw ConfigError("quantile levels must not be empty");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0 && levels[i] < 1.0))
      throw ConfigError("quantile level outside (0, 1)");
    if (i > 0 && !(levels[i] > levels[i - 1]))
      throw ConfigError("quantile levels must be strictly increasing");
  }
}

}  // namespace

double pow10(int m) {
  if (m >= 0 && m < static_cast<int>(kPow10.size())) return kPow10[static_cast<std::size_t>(m)];
  if (m < 0 && -m < static_cast<int>(kPow10.size())) return 1.0 / kPow10[static_cast<std::size_t>(-m)];
  return std::pow(10.0, m);
}

int order_of_magnitude(double y) {
  if (!std::isfinite(y)) throw InputError("order of magnitude of a non-finite value");
  const double a = std::fabs(y);
  if (a == 0.0) throw InputError("order of magnitude of zero");
  int m = static_cast<int>(std::floor(std::log10(a)));
  if (pow10(m) > a) --m;
  else if (pow10(m + 1) <= a) ++m;
  return m;
}

void MagnitudeRange::validate() const {
  if (m_min > m_max)
    throw ConfigError("magnitude range: m_min " + std::to_string(m_min) +
                      " exceeds m_max " + std::to_string(m_max));
}

MagnitudeRange MagnitudeRange::for_scale(double d_scale, int m_min) {
  if (!(d_scale > 0.0) || !std::isfinite(d_scale))
    throw ConfigError("d_scale must be positive");
  MagnitudeRange r{m_min, order_of_magnitude(d_scale)};
  r.validate();
  return r;
}

int magnitude_class(double y, const MagnitudeRange& range) {
  if (std::isnan(y)) throw InputError("magnitude of NaN");
  if (y == 0.0) return 0;
  const int m = std::isinf(y) ? range.m_max : order_of_magnitude(y);
  return std::clamp(m, range.m_min, range.m_max) - range.m_min;
}

double scaled_target(double y, const MagnitudeRange& range) {
  if (y == 0.0) return 0.0;
  return y / range.scale(magnitude_class(y, range));
}

std::string_view target_name(TargetKind kind) {
  switch (kind) {
    case TargetKind::kGreedy: return "greedy";
    case TargetKind::kMean: return "mean";
    case TargetKind::kMedian: return "median";
  }
  return "mean";
}

TargetKind parse_target(std::string_view name) {
  if (name == "greedy") return TargetKind::kGreedy;
  if (name == "mean") return TargetKind::kMean;
  if (name == "median") return TargetKind::kMedian;
  throw ConfigError("unknown target '" + std::string(name) +
                    "' (expected greedy, mean or median)");
}

std::string_view scale_input_name(ScaleInput s) {
  return s == ScaleInput::kRaw ? "raw" : "exponent";
}

ScaleInput parse_scale_input(std::string_view name) {
  if (name == "raw") return ScaleInput::kRaw;
  if (name == "exponent") return ScaleInput::kExponent;
  throw ConfigError("unknown scale input '" + std::string(name) +
                    "' (expected raw or exponent)");
}

MagnitudeRange ProbeConfig::range_for(double d_scale) const {
  MagnitudeRange r = MagnitudeRange::for_scale(d_scale, min_mag);
  if (max_mag) r.m_max = *max_mag;
  r.validate();
  return r;
}

std::vector<int> ProbeConfig::widths(int input, int output) const {
  std::vector<int> w{input};
  for (int i = 0; i < hidden_layers; ++i) w.push_back(hidden_dim);
  w.push_back(output);
  return w;
}

void ProbeConfig::validate() const {
  if (max_mag && *max_mag < min_mag)
    throw ConfigError("max_mag must not be below min_mag");
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (hidden_layers < 0) throw ConfigError("hidden_layers must be non-negative");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
  if (alpha < 0.0 || beta < 0.0 || !std::isfinite(alpha) || !std::isfinite(beta))
    throw ConfigError("loss weights must be finite and non-negative");
  if (layer_list.empty()) throw ConfigError("layer_list must not be empty");
  check_levels(quantile_levels);
}

double target_value(const data::SeriesRecord& record,
                    const data::Targets& targets, TargetKind kind) {
  switch (kind) {
    case TargetKind::kGreedy: return record.greedy;
    case TargetKind::kMean: return targets.mean;
    case TargetKind::kMedian: return targets.median;
  }
  return targets.mean;
}

ProbeData make_probe_data(const std::vector<data::SeriesRecord>& records,
                          TargetKind kind, std::span<const double> levels) {
  ProbeData out;
  if (records.empty()) return out;
  const auto dim = static_cast<Eigen::Index>(records.front().embedding.size());
  out.embeddings.resize(dim, static_cast<Eigen::Index>(records.size()));
  out.targets.reserve(records.size());
  out.samples.reserve(records.size());
  out.quantile_targets.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (static_cast<Eigen::Index>(r.embedding.size()) != dim)
      throw InputError("record " + std::to_string(r.id) +
                       ": embedding length differs from the first record");
    out.embeddings.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::VectorXf>(r.embedding.data(), dim);
    const data::Targets t = data::derive_targets(r, levels);
    const double y = target_value(r, t, kind);
    if (!std::isfinite(y))
      throw InputError("record " + std::to_string(r.id) + ": non-finite target");
    if (y != 0.0) {
      const double s = std::fabs(y) / pow10(order_of_magnitude(y));
      if (!(s >= 1.0 - 1e-12 && s < 10.0 + 1e-12))
        throw NumericError("scaled target outside [1, 10) for record " +
                           std::to_string(r.id));
    }
    out.targets.push_back(y);
    out.samples.push_back(r.samples);
    out.quantile_targets.push_back(t.quantiles);
  }
  return out;
}

ProbeData select_rows(const ProbeData& data, Eigen::Index first, Eigen::Index count) {
  if (first < 0 || count < 1 || first + count > data.embeddings.rows())
    throw ConfigError("embedding row range out of bounds");
  ProbeData out;
  out.embeddings = data.embeddings.middleRows(first, count);
  out.targets = data.targets;
  out.samples = data.samples;
  out.quantile_targets = data.quantile_targets;
  return out;
}

// ---- scalar probe ----

ScalarProbe::ScalarProbe(ScalarSettings settings, nn::Mlp order, nn::Mlp value)
    : settings_(settings), order_(std::move(order)), value_(std::move(value)) {
  settings_.range.validate();
  const int m = settings_.range.classes();
  if (order_.output_dim() != m)
    throw FormatError("order head has " + std::to_string(order_.output_dim()) +
                      " outputs for " + std::to_string(m) + " classes");
  if (value_.input_dim() != order_.input_dim() + 1 || value_.output_dim() != 1)
    throw FormatError("value head shape does not match the order head");
  if (settings_.top_k < 1 || settings_.top_k > m)
    throw ConfigError("top_k must lie in [1, " + std::to_string(m) + "]");
}

ScalarProbe ScalarProbe::create(int d_input, ScalarSettings settings,
                                const ProbeConfig& config, Rng& rng) {
  if (d_input < 1) throw ConfigError("probe input dimension must be positive");
  settings.range.validate();
  nn::Mlp order(config.widths(d_input, settings.range.classes()), rng);
  nn::Mlp value(config.widths(d_input + 1, 1), rng);
  order.round_to_float();
  value.round_to_float();
  return ScalarProbe(settings, std::move(order), std::move(value));
}

double ScalarProbe::scale_feature(int k) const {
  return settings_.scale_input == ScaleInput::kRaw
             ? settings_.range.scale(k)
             : static_cast<double>(settings_.range.exponent(k));
}

ScalarPrediction ScalarProbe::forward(std::span<const float> embedding) const {
  check_dim(embedding.size(), input_dim());
  Eigen::MatrixXf e = Eigen::Map<const Eigen::VectorXf>(
      embedding.data(), static_cast<Eigen::Index>(embedding.size()));
  const ScalarBatch b = predict(e);
  ScalarPrediction p;
  p.probabilities.assign(b.probabilities.data(),
                         b.probabilities.data() + b.probabilities.rows());
  p.scaled_values.assign(b.scaled_values.data(),
                         b.scaled_values.data() + b.scaled_values.rows());
  p.top_class = b.top_class.front();
  p.argmax_value = b.argmax_value.front();
  p.expected_value = b.expected_value.front();
  return p;
}

ScalarBatch ScalarProbe::predict(const Eigen::MatrixXf& embeddings) const {
  if (embeddings.rows() != input_dim())
    throw InputError("embedding dimension " + std::to_string(embeddings.rows()) +
                     " does not match probe input " + std::to_string(input_dim()));
  const int m = settings_.range.classes();
  const Eigen::Index n = embeddings.cols();
  const std::vector<double> table = scale_table(settings_.range, settings_.scale_input);
  ScalarBatch out;
  out.probabilities.resize(m, n);
  out.scaled_values.resize(m, n);
  out.top_class.resize(static_cast<std::size_t>(n));
  out.argmax_value.resize(static_cast<std::size_t>(n));
  out.expected_value.resize(static_cast<std::size_t>(n));

  std::vector<int> order(static_cast<std::size_t>(m));
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const nn::Matrix x = block(embeddings, start, len);
    const nn::Matrix logits = order_.forward(x);
    const nn::Matrix r = value_all_classes(value_, x, table);
    for (Eigen::Index j = 0; j < len; ++j) {
      const Eigen::Index col = start + j;
      const nn::Vector p = nn::softmax(logits.col(j));
      out.probabilities.col(col) = p;
      out.scaled_values.col(col) = r.col(j);
      const int top = argmax_col(logits, j);
      const auto i = static_cast<std::size_t>(col);
      out.top_class[i] = top;
      out.argmax_value[i] = r(top, j) * settings_.range.scale(top);

      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return p(a) > p(b); });
      double sum = 0.0;
      double mass = 0.0;
      for (int t = 0; t < settings_.top_k; ++t) {
        const int k = order[static_cast<std::size_t>(t)];
        sum += p(k) * r(k, j) * settings_.range.scale(k);
        mass += p(k);
      }
      out.expected_value[i] =
          settings_.renormalise_top_k && mass > 0.0 ? sum / mass : sum;
    }
  }
  return out;
}

nn::History train_scalar(ScalarProbe& probe, const ProbeData& train,
                         const ProbeData& val, const nn::TrainConfig& config,
                         ScalarTrainOptions options) {
  config.validate();
  check_data(train, probe.input_dim(), "training");
  check_data(val, probe.input_dim(), "validation");
  const MagnitudeRange range = probe.settings().range;
  const std::vector<double> table = scale_table(range, probe.settings().scale_input);
  nn::History history;

  if (options.train_order) {
    nn::Mlp& order = probe.order_head();
    std::vector<int> train_cls(train.size());
    std::vector<int> val_cls(val.size());
    for (std::size_t i = 0; i < train.size(); ++i)
      train_cls[i] = magnitude_class(train.targets[i], range);
    for (std::size_t i = 0; i < val.size(); ++i)
      val_cls[i] = magnitude_class(val.targets[i], range);

    nn::Adam adam(order, config.adam());
    nn::Mlp best = order;
    nn::TrainingLoop loop;
    loop.set_learning_rate = [&](double lr) { adam.set_learning_rate(lr); };
    loop.train_batch = [&](std::span<const std::size_t> idx) {
      const nn::Matrix x = gather(train.embeddings, idx);
      std::vector<int> y(idx.size());
      for (std::size_t j = 0; j < idx.size(); ++j) y[j] = train_cls[idx[j]];
      nn::Mlp::Cache cache;
      const nn::Matrix logits = order.forward(x, cache);
      nn::Matrix d;
      const double loss = nn::cross_entropy_batch(logits, y, &d);
      adam.step(order, order.backward(cache, d));
      return loss;
    };
    loop.validate = [&] {
      double total = 0.0;
      for (std::size_t start = 0; start < val.size(); start += kChunk) {
        const std::size_t len = std::min<std::size_t>(kChunk, val.size() - start);
        const nn::Matrix logits = order.forward(
            block(val.embeddings, static_cast<Eigen::Index>(start),
                  static_cast<Eigen::Index>(len)));
        total += nn::cross_entropy_batch(
                     logits, std::span<const int>(val_cls.data() + start, len),
                     nullptr) *
                 static_cast<double>(len);
      }
      return total / static_cast<double>(val.size());
    };
    loop.save_best = [&] { best = order; };
    loop.restore_best = [&] { order = best; };
    const nn::History h = nn::run_training("order", train.size(), config, loop);
    history.insert(history.end(), h.begin(), h.end());
    order.round_to_float();
  }

  if (options.train_value) {
    nn::Mlp& value = probe.value_head();
    const std::vector<int> train_hat = predicted_classes(probe.order_head(), train.embeddings);
    const std::vector<int> val_hat = predicted_classes(probe.order_head(), val.embeddings);
    std::vector<double> train_t(train.size());
    std::vector<double> val_t(val.size());
    for (std::size_t i = 0; i < train.size(); ++i)
      train_t[i] = scaled_target(train.targets[i], range);
    for (std::size_t i = 0; i < val.size(); ++i)
      val_t[i] = scaled_target(val.targets[i], range);

    nn::Adam adam(value, config.adam());
    nn::Mlp best = value;
    nn::TrainingLoop loop;
    loop.set_learning_rate = [&](double lr) { adam.set_learning_rate(lr); };
    loop.train_batch = [&](std::span<const std::size_t> idx) {
      const nn::Matrix x =
          augment(gather(train.embeddings, idx), scales_for(train_hat, idx, table));
      std::vector<double> t(idx.size());
      for (std::size_t j = 0; j < idx.size(); ++j) t[j] = train_t[idx[j]];
      nn::Mlp::Cache cache;
      const nn::Matrix pred = value.forward(x, cache);
      nn::Matrix d;
      const double loss = nn::mse_batch(pred, t, &d);
      adam.step(value, value.backward(cache, d));
      return loss;
    };
    loop.validate = [&] {
      double total = 0.0;
      for (std::size_t start = 0; start < val.size(); start += kChunk) {
        const std::size_t len = std::min<std::size_t>(kChunk, val.size() - start);
        const auto idx = range_indices(start, len);
        const nn::Matrix x = augment(block(val.embeddings, static_cast<Eigen::Index>(start),
                                           static_cast<Eigen::Index>(len)),
                                     scales_for(val_hat, idx, table));
        total += nn::mse_batch(value.forward(x),
                               std::span<const double>(val_t.data() + start, len),
                               nullptr) *
                 static_cast<double>(len);
      }
      return total / static_cast<double>(val.size());
    };
    loop.save_best = [&] { best = value; };
    loop.restore_best = [&] { value = best; };
    const nn::History h = nn::run_training("value", train.size(), config, loop);
    history.insert(history.end(), h.begin(), h.end());
    value.round_to_float();
  }
  return history;
}

// ---- quantile probe ----

QuantileProbe::QuantileProbe(QuantileSettings settings, std::vector<QuantileHead> heads)
    : settings_(std::move(settings)), heads_(std::move(heads)) {
  settings_.range.validate();
  check_levels(settings_.levels);
  if (heads_.size() != settings_.levels.size())
    throw FormatError("quantile probe has " + std::to_string(heads_.size()) +
                      " heads for " + std::to_string(settings_.levels.size()) +
                      " levels");
  const int m = settings_.range.classes();
  const int d = heads_.front().order.input_dim();
  for (const auto& h : heads_) {
    if (h.order.input_dim() != d || h.order.output_dim() != m ||
        h.value.input_dim() != d + 1 || h.value.output_dim() != 1)
      throw FormatError("quantile head shapes are inconsistent");
  }
}

QuantileProbe QuantileProbe::create(int d_input, QuantileSettings settings,
                                    const ProbeConfig& config, Rng& rng) {
  if (d_input < 1) throw ConfigError("probe input dimension must be positive");
  settings.range.validate();
  check_levels(settings.levels);
  std::vector<QuantileHead> heads;
  for (std::size_t s = 0; s < settings.levels.size(); ++s) {
    QuantileHead h{nn::Mlp(config.widths(d_input, settings.range.classes()), rng),
                   nn::Mlp(config.widths(d_input + 1, 1), rng)};
    h.order.round_to_float();
    h.value.round_to_float();
    heads.push_back(std::move(h));
  }
  return QuantileProbe(std::move(settings), std::move(heads));
}

double QuantileProbe::scale_feature(int k) const {
  return settings_.scale_input == ScaleInput::kRaw
             ? settings_.range.scale(k)
             : static_cast<double>(settings_.range.exponent(k));
}

int QuantileProbe::level_index(double tau) const {
  for (std::size_t s = 0; s < settings_.levels.size(); ++s)
    if (std::fabs(settings_.levels[s] - tau) < 1e-12) return static_cast<int>(s);
  throw InputError("quantile level " + std::to_string(tau) + " is not predicted");
}

std::vector<double> QuantileProbe::forward(std::span<const float> embedding) const {
  return forward_detail(embedding).quantiles;
}

QuantileDetail QuantileProbe::forward_detail(std::span<const float> embedding) const {
  check_dim(embedding.size(), input_dim());
  const nn::Matrix x =
      Eigen::Map<const Eigen::VectorXf>(embedding.data(),
                                        static_cast<Eigen::Index>(embedding.size()))
          .cast<double>();
  const std::vector<double> table = scale_table(settings_.range, settings_.scale_input);
  QuantileDetail out;
  for (const auto& h : heads_) {
    const nn::Matrix logits = h.order.forward(x);
    const nn::Vector p = nn::softmax(logits.col(0));
    const nn::Matrix r = value_all_classes(h.value, x, table);
    const int top = argmax_col(logits, 0);
    out.quantiles.push_back(r(top, 0) * settings_.range.scale(top));
    out.probabilities.emplace_back(p.data(), p.data() + p.size());
    out.scaled_values.emplace_back(r.data(), r.data() + r.rows());
  }
  if (settings_.repair_crossing) std::sort(out.quantiles.begin(), out.quantiles.end());
  return out;
}

nn::Matrix QuantileProbe::predict(const Eigen::MatrixXf& embeddings) const {
  if (embeddings.rows() != input_dim())
    throw InputError("embedding dimension " + std::to_string(embeddings.rows()) +
                     " does not match probe input " + std::to_string(input_dim()));
  const Eigen::Index n = embeddings.cols();
  const auto s_count = static_cast<Eigen::Index>(heads_.size());
  const std::vector<double> table = scale_table(settings_.range, settings_.scale_input);
  nn::Matrix out(s_count, n);
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const nn::Matrix x = block(embeddings, start, len);
    for (Eigen::Index s = 0; s < s_count; ++s) {
      const auto& h = heads_[static_cast<std::size_t>(s)];
      const nn::Matrix logits = h.order.forward(x);
      std::vector<int> cls(static_cast<std::size_t>(len));
      std::vector<double> sc(static_cast<std::size_t>(len));
      for (Eigen::Index j = 0; j < len; ++j) {
        cls[static_cast<std::size_t>(j)] = argmax_col(logits, j);
        sc[static_cast<std::size_t>(j)] = table[static_cast<std::size_t>(cls[static_cast<std::size_t>(j)])];
      }
      const nn::Matrix r = h.value.forward(augment(x, sc));
      for (Eigen::Index j = 0; j < len; ++j)
        out(s, start + j) = r(0, j) * settings_.range.scale(cls[static_cast<std::size_t>(j)]);
    }
  }
  if (settings_.repair_crossing)
    for (Eigen::Index j = 0; j < n; ++j) {
      auto col = out.col(j);
      std::sort(col.begin(), col.end());
    }
  return out;
}

namespace {

struct HeadTargets {
  std::vector<int> classes;       // m(q~^s_i) per record
  std::vector<double> inv_scale;  // 10^{-m} per record
};

std::vector<HeadTargets> head_targets(const ProbeData& d, const MagnitudeRange& range,
                                      std::size_t heads) {
  std::vector<HeadTargets> out(heads);
  for (std::size_t s = 0; s < heads; ++s) {
    out[s].classes.resize(d.size());
    out[s].inv_scale.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.quantile_targets[i].size() != heads)
        throw InputError("quantile targets do not match the probe's levels");
      const int k = magnitude_class(d.quantile_targets[i][s], range);
      out[s].classes[i] = k;
      out[s].inv_scale[i] = 1.0 / range.scale(k);
    }
  }
  return out;
}

// Mean over the batch of the per-record sample-averaged pinball loss, with
// its gradient with respect to each prediction.
double pinball_batch(double tau, const nn::Matrix& pred, std::span<const std::size_t> idx,
                     const ProbeData& d, const HeadTargets& ht, nn::Matrix* grad) {
  const double inv_b = 1.0 / static_cast<double>(idx.size());
  double total = 0.0;
  if (grad) grad->resize(1, pred.cols());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto& ys = d.samples[idx[j]];
    if (ys.empty()) throw InputError("record without samples");
    const double q = pred(0, static_cast<Eigen::Index>(j));
    const double inv = ht.inv_scale[idx[j]];
    double loss = 0.0;
    double deriv = 0.0;
    for (double y : ys) {
      loss += nn::pinball(tau, q, y * inv);
      deriv += nn::pinball_derivative(tau, q, y * inv);
    }
    const double inv_n = 1.0 / static_cast<double>(ys.size());
    total += loss * inv_n;
    if (grad) (*grad)(0, static_cast<Eigen::Index>(j)) = deriv * inv_n * inv_b;
  }
  return total * inv_b;
}

}  // namespace

nn::History train_quantile(QuantileProbe& probe, const ProbeData& train,
                           const ProbeData& val, const nn::TrainConfig& config) {
  config.validate();
  check_data(train, probe.input_dim(), "training");
  check_data(val, probe.input_dim(), "validation");
  const QuantileSettings& st = probe.settings();
  const std::size_t heads = probe.heads().size();
  const std::vector<double> table = scale_table(st.range, st.scale_input);
  const auto train_ht = head_targets(train, st.range, heads);
  const auto val_ht = head_targets(val, st.range, heads);

  struct Optimisers {
    nn::Adam order;
    nn::Adam value;
  };
  std::vector<Optimisers> opt;
  for (const auto& h : probe.heads())
    opt.push_back({nn::Adam(h.order, config.adam()), nn::Adam(h.value, config.adam())});
  std::vector<QuantileHead> best = probe.heads();

  auto head_class_scales = [&](const HeadTargets& ht, std::span<const std::size_t> idx) {
    return scales_for(ht.classes, idx, table);
  };

  nn::TrainingLoop loop;
  loop.set_learning_rate = [&](double lr) {
    for (auto& o : opt) {
      o.order.set_learning_rate(lr);
      o.value.set_learning_rate(lr);
    }
  };
  loop.train_batch = [&](std::span<const std::size_t> idx) {
    const nn::Matrix x = gather(train.embeddings, idx);
    double total = 0.0;
    for (std::size_t s = 0; s < heads; ++s) {
      QuantileHead& h = probe.heads()[s];
      const HeadTargets& ht = train_ht[s];

      std::vector<int> y(idx.size());
      for (std::size_t j = 0; j < idx.size(); ++j) y[j] = ht.classes[idx[j]];
      nn::Mlp::Cache oc;
      const nn::Matrix logits = h.order.forward(x, oc);
      nn::Matrix d_logits;
      const double ce = nn::cross_entropy_batch(logits, y, &d_logits);
      if (st.alpha > 0.0) {
        d_logits *= st.alpha;
        opt[s].order.step(h.order, h.order.backward(oc, d_logits));
      }

      nn::Mlp::Cache vc;
      const nn::Matrix pred = h.value.forward(augment(x, head_class_scales(ht, idx)), vc);
      nn::Matrix d_pred;
      const double pb = pinball_batch(st.levels[s], pred, idx, train, ht, &d_pred);
      if (st.beta > 0.0) {
        d_pred *= st.beta;
        opt[s].value.step(h.value, h.value.backward(vc, d_pred));
      }
      total += st.alpha * ce + st.beta * pb;
    }
    return total;
  };
  loop.validate = [&] {
    double total = 0.0;
    for (std::size_t start = 0; start < val.size(); start += kChunk) {
      const std::size_t len = std::min<std::size_t>(kChunk, val.size() - start);
      const auto idx = range_indices(start, len);
      const nn::Matrix x = block(val.embeddings, static_cast<Eigen::Index>(start),
                                 static_cast<Eigen::Index>(len));
      for (std::size_t s = 0; s < heads; ++s) {
        const QuantileHead& h = probe.heads()[s];
        const HeadTargets& ht = val_ht[s];
        const double ce = nn::cross_entropy_batch(
            h.order.forward(x), std::span<const int>(ht.classes.data() + start, len),
            nullptr);
        const nn::Matrix pred = h.value.forward(augment(x, head_class_scales(ht, idx)));
        const double pb = pinball_batch(st.levels[s], pred, idx, val, ht, nullptr);
        total += (st.alpha * ce + st.beta * pb) * static_cast<double>(len);
      }
    }
    return total / static_cast<double>(val.size());
  };
  loop.save_best = [&] { best = probe.heads(); };
  loop.restore_best = [&] { probe.heads() = best; };
  nn::History history = nn::run_training("quantile", train.size(), config, loop);
  for (auto& h : probe.heads()) {
    h.order.round_to_float();
    h.value.round_to_float();
  }
  return history;
}

// ---- vanilla baseline ----

VanillaProbe::VanillaProbe(VanillaSettings settings, nn::Mlp net)
    : settings_(settings), net_(std::move(net)) {
  if (net_.output_dim() != 1) throw FormatError("vanilla probe must have one output");
}

VanillaProbe VanillaProbe::create(int d_input, VanillaSettings settings,
                                  const ProbeConfig& config, Rng& rng) {
  if (d_input < 1) throw ConfigError("probe input dimension must be positive");
  nn::Mlp net(config.widths(d_input, 1), rng);
  net.round_to_float();
  return VanillaProbe(settings, std::move(net));
}

double VanillaProbe::transform(double y) const {
  if (!settings_.log_scaling) return y;
  return std::copysign(std::log1p(std::fabs(y)), y);
}

double VanillaProbe::inverse(double t) const {
  if (!settings_.log_scaling) return t;
  return std::copysign(std::expm1(std::fabs(t)), t);
}

double VanillaProbe::forward(std::span<const float> embedding) const {
  check_dim(embedding.size(), input_dim());
  Eigen::MatrixXf e = Eigen::Map<const Eigen::VectorXf>(
      embedding.data(), static_cast<Eigen::Index>(embedding.size()));
  return predict(e).front();
}

std::vector<double> VanillaProbe::predict(const Eigen::MatrixXf& embeddings) const {
  if (embeddings.rows() != input_dim())
    throw InputError("embedding dimension " + std::to_string(embeddings.rows()) +
                     " does not match probe input " + std::to_string(input_dim()));
  std::vector<double> out(static_cast<std::size_t>(embeddings.cols()));
  for (Eigen::Index start = 0; start < embeddings.cols(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, embeddings.cols() - start);
    const nn::Matrix r = net_.forward(block(embeddings, start, len));
    for (Eigen::Index j = 0; j < len; ++j)
      out[static_cast<std::size_t>(start + j)] = inverse(r(0, j));
  }
  return out;
}

nn::History train_vanilla(VanillaProbe& probe, const ProbeData& train,
                          const ProbeData& val, const nn::TrainConfig& config) {
  config.validate();
  check_data(train, probe.input_dim(), "training");
  check_data(val, probe.input_dim(), "validation");
  nn::Mlp& net = probe.net();
  std::vector<double> train_t(train.size());
  std::vector<double> val_t(val.size());
  for (std::size_t i = 0; i < train.size(); ++i) train_t[i] = probe.transform(train.targets[i]);
  for (std::size_t i = 0; i < val.size(); ++i) val_t[i] = probe.transform(val.targets[i]);

  nn::Adam adam(net, config.adam());
  nn::Mlp best = net;
  nn::TrainingLoop loop;
  loop.set_learning_rate = [&](double lr) { adam.set_learning_rate(lr); };
  loop.train_batch = [&](std::span<const std::size_t> idx) {
    const nn::Matrix x = gather(train.embeddings, idx);
    std::vector<double> t(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) t[j] = train_t[idx[j]];
    nn::Mlp::Cache cache;
    const nn::Matrix pred = net.forward(x, cache);
    nn::Matrix d;
    const double loss = nn::mse_batch(pred, t, &d);
    adam.step(net, net.backward(cache, d));
    return loss;
  };
  loop.validate = [&] {
    double total = 0.0;
    for (std::size_t start = 0; start < val.size(); start += kChunk) {
      const std::size_t len = std::min<std::size_t>(kChunk, val.size() - start);
      total += nn::mse_batch(net.forward(block(val.embeddings,
                                               static_cast<Eigen::Index>(start),
                                               static_cast<Eigen::Index>(len))),
                             std::span<const double>(val_t.data() + start, len),
                             nullptr) *
               static_cast<double>(len);
    }
    return total / static_cast<double>(val.size());
  };
  loop.save_best = [&] { best = net; };
  loop.restore_best = [&] { net = best; };
  nn::History history = nn::run_training("vanilla", train.size(), config, loop);
  net.round_to_float();
  return history;
}

}  // namespace numprobe::probes
