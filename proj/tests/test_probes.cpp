#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "numprobe/error.hpp"
#include "numprobe/probes.hpp"

using namespace numprobe;
using namespace numprobe::probes;

namespace {

ProbeConfig small_config() {
  ProbeConfig c;
  c.hidden_dim = 16;
  return c;
}

nn::TrainConfig fast_train(int epochs) {
  nn::TrainConfig t;
  t.learning_rate = 1e-2;
  t.weight_decay = 0.0;
  t.batch_size = 16;
  t.max_epochs = epochs;
  t.patience = epochs;
  t.scheduler_step_size = std::max(1, epochs / 4);
  t.seed = 5;
  return t;
}

// N random embeddings of width d, with scalar targets and samples filled in.
ProbeData noise_data(int d, int n, std::uint64_t seed) {
  Rng rng(seed);
  ProbeData p;
  p.embeddings.resize(d, n);
  for (Eigen::Index i = 0; i < p.embeddings.size(); ++i)
    p.embeddings.data()[i] = static_cast<float>(rng.normal());
  p.targets.assign(static_cast<std::size_t>(n), 0.0);
  p.samples.assign(static_cast<std::size_t>(n), {});
  p.quantile_targets.assign(static_cast<std::size_t>(n), {});
  return p;
}

void fill_point_mass(ProbeData& p, double c, std::span<const double> levels) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    p.targets[i] = c;
    p.samples[i].assign(20, c);
    p.quantile_targets[i].assign(levels.size(), c);
  }
}

// Value head whose output at scale input s interpolates piecewise linearly:
// hidden units GELU(1000 (s - t)) act as exact ramps at integer s.
nn::Mlp ramp_value_head(int d, std::vector<double> knots, std::vector<double> slopes) {
  const int h = static_cast<int>(knots.size());
  nn::Mlp net = nn::Mlp::zeros({d + 1, h, 1});
  for (int j = 0; j < h; ++j) {
    net.layers()[0].weight(j, d) = 1000.0;
    net.layers()[0].bias(j) = -1000.0 * knots[static_cast<std::size_t>(j)];
    net.layers()[1].weight(0, j) = slopes[static_cast<std::size_t>(j)] / 1000.0;
  }
  return net;
}

}  // namespace

TEST(Magnitude, ExampleTable) {
  const MagnitudeRange combined = MagnitudeRange::combined();
  EXPECT_EQ(magnitude_class(123.4, combined), 5);
  EXPECT_EQ(combined.exponent(magnitude_class(123.4, combined)), 2);
  EXPECT_EQ(order_of_magnitude(0.05), -2);
  EXPECT_EQ(order_of_magnitude(-7.3), 0);
}

TEST(Magnitude, ExactPowersAndClamping) {
  EXPECT_EQ(order_of_magnitude(1000.0), 3);
  EXPECT_EQ(order_of_magnitude(0.001), -3);
  EXPECT_EQ(order_of_magnitude(999.999), 2);
  EXPECT_EQ(order_of_magnitude(1e-300), -300);
  EXPECT_THROW(order_of_magnitude(0.0), InputError);
  const MagnitudeRange r{-3, 0};
  EXPECT_EQ(magnitude_class(0.0, r), 0);
  EXPECT_EQ(scaled_target(0.0, r), 0.0);
  EXPECT_EQ(magnitude_class(1e-7, r), 0);
  EXPECT_EQ(magnitude_class(55.0, r), 3);
  EXPECT_EQ(MagnitudeRange::for_scale(10000).m_max, 4);
  EXPECT_EQ(MagnitudeRange::for_scale(1).classes(), 4);
}

TEST(Magnitude, ScaledTargetsInsideRangeLieInUnitDecade) {
  Rng rng(1);
  const MagnitudeRange r = MagnitudeRange::combined();
  for (int i = 0; i < 10000; ++i) {
    const double y = std::pow(10.0, rng.uniform(-3.0, 4.999)) * (rng.uniform() < 0.5 ? -1 : 1);
    const double t = std::fabs(scaled_target(y, r));
    EXPECT_GE(t, 1.0);
    EXPECT_LT(t, 10.0);
  }
}

TEST(ScalarForward, OneHotOnUnitClass) {
  const int d = 2;
  nn::Mlp order = nn::Mlp::zeros({d, 4});
  order.layers()[0].bias << -1000, -1000, -1000, 1000;  // m = 0
  nn::Mlp value = nn::Mlp::zeros({d + 1, 1});
  value.layers()[0].bias << 2.5;
  ScalarSettings st;
  st.range = {-3, 0};
  const ScalarProbe probe(st, order, value);
  const std::vector<float> e = {0.3f, -1.0f};
  const auto p = probe.forward(e);
  EXPECT_EQ(p.top_class, 3);
  EXPECT_DOUBLE_EQ(p.expected_value, 2.5);
  EXPECT_DOUBLE_EQ(p.argmax_value, 2.5);
}

TEST(ScalarForward, TopKExpectationExample) {
  // p = {0.7 at m=2, 0.2 at m=1, 0.1 at m=3}; r = {1.2, 9.0, 0.11}.
  const int d = 1;
  ScalarSettings st;
  st.range = MagnitudeRange::combined();
  st.top_k = 3;
  st.scale_input = ScaleInput::kExponent;
  nn::Mlp order = nn::Mlp::zeros({d, 8});
  order.layers()[0].bias.setConstant(-1000.0);
  order.layers()[0].bias(5) = std::log(0.7);
  order.layers()[0].bias(4) = std::log(0.2);
  order.layers()[0].bias(6) = std::log(0.1);
  // f(1) = 9, f(2) = 1.2, f(3) = 0.11 from ramps at 0.5, 1.5, 2.5.
  const ScalarProbe probe(st, order, ramp_value_head(d, {0.5, 1.5, 2.5}, {18.0, -51.6, 65.02}));
  const auto p = probe.forward(std::vector<float>{0.0f});
  EXPECT_NEAR(p.scaled_values[5], 1.2, 1e-9);
  EXPECT_NEAR(p.scaled_values[4], 9.0, 1e-9);
  EXPECT_NEAR(p.scaled_values[6], 0.11, 1e-9);
  EXPECT_NEAR(p.expected_value, 113.0, 1e-9);
  EXPECT_NEAR(p.argmax_value, 120.0, 1e-9);
}

TEST(ScalarForward, RenormalisedTopKDividesByMass) {
  const int d = 1;
  ScalarSettings st;
  st.range = {0, 3};
  st.top_k = 2;
  st.renormalise_top_k = true;
  nn::Mlp order = nn::Mlp::zeros({d, 4});
  order.layers()[0].bias << std::log(0.5), std::log(0.3), std::log(0.2), -1000;
  nn::Mlp value = nn::Mlp::zeros({d + 1, 1});
  value.layers()[0].bias << 2.0;
  const ScalarProbe probe(st, order, value);
  EXPECT_NEAR(probe.forward(std::vector<float>{0.0f}).expected_value,
              (0.5 * 2.0 + 0.3 * 20.0) / 0.8, 1e-9);
}

TEST(ScalarForward, ZeroLogitsGiveUniformProbabilities) {
  ScalarSettings st;
  st.range = MagnitudeRange::combined();
  Rng rng(2);
  ScalarProbe probe = ScalarProbe::create(4, st, small_config(), rng);
  for (auto& layer : probe.order_head().layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  for (double p : probe.forward(std::vector<float>{1, 2, 3, 4}).probabilities)
    EXPECT_DOUBLE_EQ(p, 0.125);
}

TEST(ScalarForward, ArgmaxConsistencyAndFullKOneHot) {
  ScalarSettings st;
  st.range = MagnitudeRange::combined();
  Rng rng(3);
  const ScalarProbe probe = ScalarProbe::create(6, st, small_config(), rng);
  const ProbeData data = noise_data(6, 50, 4);
  const ScalarBatch b = probe.predict(data.embeddings);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int k = b.top_class[i];
    EXPECT_EQ(b.argmax_value[i], b.scaled_values(k, static_cast<Eigen::Index>(i)) * st.range.scale(k));
  }

  st.top_k = 8;
  nn::Mlp order = nn::Mlp::zeros({6, 8});
  order.layers()[0].bias.setConstant(-1e4);
  order.layers()[0].bias(2) = 1e4;
  const ScalarProbe one_hot(st, order, probe.value_head());
  const auto p = one_hot.forward(std::vector<float>(6, 0.5f));
  EXPECT_DOUBLE_EQ(p.expected_value, p.argmax_value);
}

TEST(ScalarForward, DimensionMismatchIsInputError) {
  ScalarSettings st;
  st.range = {-3, 0};
  Rng rng(1);
  const ScalarProbe probe = ScalarProbe::create(3, st, small_config(), rng);
  EXPECT_THROW(probe.forward(std::vector<float>{1.0f}), InputError);
}

TEST(TrainScalar, PhaseFreezeKeepsOtherHeadBitIdentical) {
  ScalarSettings st;
  st.range = {-3, 0};
  Rng rng(5);
  ScalarProbe probe = ScalarProbe::create(4, st, small_config(), rng);
  ProbeData data = noise_data(4, 64, 6);
  for (std::size_t i = 0; i < data.size(); ++i) data.targets[i] = 0.01 + 0.1 * static_cast<double>(i % 9);

  const auto value_before = probe.value_head().checksum();
  const auto order_before = probe.order_head().checksum();
  train_scalar(probe, data, data, fast_train(5), {true, false});
  EXPECT_EQ(probe.value_head().checksum(), value_before);
  const auto order_after = probe.order_head().checksum();
  EXPECT_NE(order_after, order_before);

  train_scalar(probe, data, data, fast_train(5), {false, true});
  EXPECT_EQ(probe.order_head().checksum(), order_after);
  EXPECT_NE(probe.value_head().checksum(), value_before);
}

TEST(TrainScalar, ConstantTargetConverges) {
  ScalarSettings st;
  st.range = {-3, 0};
  Rng rng(7);
  ScalarProbe probe = ScalarProbe::create(4, st, small_config(), rng);
  ProbeData data = noise_data(4, 64, 8);
  fill_point_mass(data, 3.7, data::kQuantileLevels);
  train_scalar(probe, data, data, fast_train(1000));
  const ScalarBatch b = probe.predict(data.embeddings);
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_NEAR(b.argmax_value[i], 3.7, 0.037);
    EXPECT_NEAR(b.expected_value[i], 3.7, 0.037);
  }
}

TEST(TrainScalar, EmptyTrainingSetIsInputError) {
  ScalarSettings st;
  st.range = {-3, 0};
  Rng rng(7);
  ScalarProbe probe = ScalarProbe::create(4, st, small_config(), rng);
  const ProbeData empty = noise_data(4, 0, 1);
  const ProbeData val = noise_data(4, 3, 1);
  EXPECT_THROW(train_scalar(probe, empty, val, fast_train(2)), InputError);
}

TEST(QuantileForward, IdenticalHeadsGiveIdenticalQuantiles) {
  QuantileSettings st;
  st.range = {-3, 0};
  Rng rng(9);
  QuantileProbe probe = QuantileProbe::create(5, st, small_config(), rng);
  for (auto& h : probe.heads()) h = probe.heads().front();
  const auto q = probe.forward(std::vector<float>{0.1f, 0.2f, -0.3f, 1.0f, 2.0f});
  ASSERT_EQ(q.size(), 7u);
  for (double v : q) EXPECT_EQ(v, q.front());
}

TEST(QuantileForward, RepairSortsAndIqrUsesHeadsTwoAndFour) {
  QuantileSettings st;
  st.range = {-3, 0};
  const std::vector<double> raw = {3, 1, 2, 4, 5, 7, 6};
  std::vector<QuantileHead> heads;
  for (double v : raw) {
    QuantileHead h{nn::Mlp::zeros({1, 4}), nn::Mlp::zeros({2, 1})};
    h.order.layers()[0].bias << 0, 0, 0, 50;
    h.value.layers()[0].bias << v;
    heads.push_back(h);
  }
  QuantileProbe probe(st, heads);
  const std::vector<float> e = {0.0f};
  EXPECT_EQ(probe.forward(e), raw);
  EXPECT_EQ(probe.level_index(0.25), 2);
  EXPECT_EQ(probe.level_index(0.75), 4);
  EXPECT_THROW(probe.level_index(0.3), InputError);
  probe.settings().repair_crossing = true;
  const auto q = probe.forward(e);
  EXPECT_TRUE(std::is_sorted(q.begin(), q.end()));
  EXPECT_EQ(q.front(), 1.0);
  EXPECT_EQ(q.back(), 7.0);
  const nn::Matrix batch = probe.predict(Eigen::MatrixXf::Zero(1, 3));
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(batch(6, j), 7.0);
}

TEST(TrainQuantile, PointMassConvergesToConstant) {
  QuantileSettings st;
  st.range = {-3, 0};
  Rng rng(10);
  QuantileProbe probe = QuantileProbe::create(4, st, small_config(), rng);
  ProbeData data = noise_data(4, 32, 11);
  fill_point_mass(data, 0.42, st.levels);
  // Pinball subgradients have constant magnitude, so the step size has to
  // decay for the heads to settle.
  auto cfg = fast_train(2000);
  cfg.learning_rate = 3e-2;
  cfg.scheduler_step_size = 200;
  train_quantile(probe, data, data, cfg);
  const nn::Matrix q = probe.predict(data.embeddings);
  for (Eigen::Index i = 0; i < q.size(); ++i) EXPECT_NEAR(q.data()[i], 0.42, 0.0042);
}

TEST(TrainQuantile, ZeroWeightsFreezeTheirHeads) {
  QuantileSettings st;
  st.range = {-3, 0};
  st.beta = 0.0;
  Rng rng(12);
  QuantileProbe probe = QuantileProbe::create(4, st, small_config(), rng);
  ProbeData data = noise_data(4, 32, 13);
  fill_point_mass(data, 0.5, st.levels);
  std::vector<std::uint64_t> value_sums, order_sums;
  for (const auto& h : probe.heads()) {
    value_sums.push_back(h.value.checksum());
    order_sums.push_back(h.order.checksum());
  }
  train_quantile(probe, data, data, fast_train(3));
  for (std::size_t s = 0; s < 7; ++s) {
    EXPECT_EQ(probe.heads()[s].value.checksum(), value_sums[s]);
    EXPECT_NE(probe.heads()[s].order.checksum(), order_sums[s]);
  }

  probe.settings().beta = 50.0;
  probe.settings().alpha = 0.0;
  for (std::size_t s = 0; s < 7; ++s) order_sums[s] = probe.heads()[s].order.checksum();
  train_quantile(probe, data, data, fast_train(3));
  for (std::size_t s = 0; s < 7; ++s) EXPECT_EQ(probe.heads()[s].order.checksum(), order_sums[s]);
}

TEST(TrainQuantile, PinballDrivesHeadsToEmpiricalQuantiles) {
  // One fixed embedding, 200 i.i.d. draws: each head should settle at the
  // order-statistics quantile of its level.
  QuantileSettings st;
  st.range = {-3, 0};
  st.alpha = 1.0;
  st.beta = 1.0;
  Rng rng(14);
  QuantileProbe probe = QuantileProbe::create(3, st, small_config(), rng);
  ProbeData data = noise_data(3, 1, 15);
  const double spread = 0.8;
  Rng draws(16);
  for (int j = 0; j < 200; ++j) data.samples[0].push_back(5.0 + spread * draws.normal());
  std::vector<double> sorted = data.samples[0];
  std::sort(sorted.begin(), sorted.end());
  data.quantile_targets[0].clear();
  for (double tau : st.levels) {
    const double h = tau * (sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    data.quantile_targets[0].push_back(sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo]));
  }
  auto cfg = fast_train(3000);
  cfg.batch_size = 1;
  train_quantile(probe, data, data, cfg);
  const auto q = probe.forward(std::vector<float>(data.embeddings.data(), data.embeddings.data() + 3));
  for (std::size_t s = 0; s < q.size(); ++s)
    EXPECT_NEAR(q[s], data.quantile_targets[0][s], 0.05 * spread) << st.levels[s];
}

TEST(Vanilla, ConstantTargetConverges) {
  Rng rng(17);
  VanillaProbe probe = VanillaProbe::create(4, {}, small_config(), rng);
  ProbeData data = noise_data(4, 64, 18);
  fill_point_mass(data, -2.5, data::kQuantileLevels);
  train_vanilla(probe, data, data, fast_train(1000));
  for (double v : probe.predict(data.embeddings)) EXPECT_NEAR(v, -2.5, 0.025);
}

TEST(Vanilla, LogScalingChangesOnlyTheTransform) {
  Rng a(19), b(19);
  const VanillaProbe plain = VanillaProbe::create(4, {TargetKind::kMean, false}, small_config(), a);
  const VanillaProbe logged = VanillaProbe::create(4, {TargetKind::kMean, true}, small_config(), b);
  EXPECT_EQ(plain.net().widths(), logged.net().widths());
  EXPECT_EQ(plain.net().parameters(), logged.net().parameters());
  EXPECT_DOUBLE_EQ(logged.transform(-(std::exp(2.0) - 1.0)), -2.0);
  EXPECT_DOUBLE_EQ(logged.inverse(logged.transform(1234.5)), 1234.5);
  EXPECT_EQ(plain.transform(1234.5), 1234.5);
}

TEST(ProbeConfig, ValidationAndWidths) {
  ProbeConfig c;
  EXPECT_EQ(c.widths(2048, 4), (std::vector<int>{2048, 512, 4}));
  c.hidden_layers = 2;
  EXPECT_EQ(c.widths(10, 1), (std::vector<int>{10, 512, 512, 1}));
  c.top_k = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ProbeConfig{};
  c.quantile_levels = {0.5, 0.25};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_target("mode"), ConfigError);
}

TEST(ProbeData, ScaledTargetsAssertedDuringPreparation) {
  data::SeriesRecord r;
  r.embedding = {1.0f, 2.0f};
  r.samples = {0.5, 0.7, 0.9};
  r.greedy = 0.7;
  const ProbeData p = make_probe_data({r}, TargetKind::kMedian);
  EXPECT_EQ(p.dim(), 2);
  EXPECT_DOUBLE_EQ(p.targets[0], 0.7);
  EXPECT_EQ(p.quantile_targets[0].size(), 7u);
  const ProbeData top = select_rows(p, 1, 1);
  EXPECT_EQ(top.embeddings(0, 0), 2.0f);
}
