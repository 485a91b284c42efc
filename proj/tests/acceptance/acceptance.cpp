// Acceptance suite: one PASS/FAIL line per criterion.
//
//   numprobe_acceptance [work_dir] [--known-shortfall NAME]...
//
// Exit status 1 if any criterion fails that is not named as a known
// shortfall. Known shortfalls still print FAIL.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "numprobe/datagen.hpp"
#include "numprobe/dataset.hpp"
#include "numprobe/eval.hpp"
#include "numprobe/nn.hpp"
#include "numprobe/pipeline.hpp"
#include "numprobe/probes.hpp"
#include "support/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace numprobe;

namespace {

// Desk-scale settings shared by the trained criteria.
constexpr std::uint64_t kSeed = 20240611;
constexpr int kDModel = 32;
constexpr int kHidden = 128;

pipeline::GenerateConfig desk_generate() {
  pipeline::GenerateConfig g;
  g.surrogate.d_model = kDModel;
  g.seed = kSeed;
  return g;
}

probes::ProbeConfig desk_probe() {
  probes::ProbeConfig p;
  p.hidden_dim = kHidden;
  return p;
}

nn::TrainConfig desk_train(int epochs) {
  nn::TrainConfig t;
  t.learning_rate = 1e-3;
  t.weight_decay = 0.0;
  t.batch_size = 128;
  t.max_epochs = epochs;
  t.patience = 20;
  t.scheduler_step_size = 1000;
  t.seed = kSeed;
  return t;
}

// Quantile probes: exponent scale input, sorted outputs, step decay.
probes::ProbeConfig quantile_probe() {
  probes::ProbeConfig p = desk_probe();
  p.scale_input = probes::ScaleInput::kExponent;
  p.repair_crossing = true;
  return p;
}

nn::TrainConfig quantile_train(int epochs) {
  nn::TrainConfig t = desk_train(epochs);
  t.learning_rate = 2e-3;
  t.scheduler_step_size = 25;
  return t;
}

int failures = 0;
int unexpected_failures = 0;
std::vector<std::string> known_shortfalls;

void report(bool pass, const std::string& name, const std::string& detail) {
  const bool known =
      std::find(known_shortfalls.begin(), known_shortfalls.end(), name) != known_shortfalls.end();
  std::printf("%s %s: %s%s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str(),
              !pass && known ? " [known shortfall]" : "");
  std::fflush(stdout);
  if (pass) return;
  ++failures;
  if (!known) ++unexpected_failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

nn::Matrix random_batch(int rows, int cols, Rng& rng) {
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Appends one row holding the scale feature to every column.
nn::Matrix with_scale(const nn::Matrix& x, const std::vector<double>& s) {
  nn::Matrix out(x.rows() + 1, x.cols());
  out.topRows(x.rows()) = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) out(x.rows(), j) = s[static_cast<std::size_t>(j)];
  return out;
}

// ---- gradient correctness ----

void gradient_correctness() {
  Timer timer;
  Rng rng(kSeed);
  const int d = 12;
  const int batch = 6;
  probes::ProbeConfig cfg;
  cfg.hidden_dim = 10;
  const nn::Matrix x = random_batch(d, batch, rng);
  const std::vector<int> classes = {0, 3, 1, 2, 3, 0};
  const probes::MagnitudeRange range{-3, 0};
  std::vector<double> scales;
  for (int k : classes) scales.push_back(range.scale(k));
  const nn::Matrix xs = with_scale(x, scales);
  int coords = 0;
  double worst = 0.0;
  auto check = [&](nn::Mlp& net, const nn::Gradients& g, const std::function<double()>& loss,
                   std::uint64_t seed) {
    const auto r = gradcheck::check_gradient(net, gradcheck::flatten(g), loss, 120, seed);
    coords += r.checked;
    worst = std::max(worst, r.worst);
  };

  // Scalar probe: cross-entropy on the classifier, MSE on the regressor.
  probes::ScalarSettings ss;
  ss.range = range;
  auto scalar = probes::ScalarProbe::create(d, ss, cfg, rng);
  {
    nn::Mlp& net = scalar.order_head();
    nn::Mlp::Cache cache;
    nn::Matrix dl;
    nn::cross_entropy_batch(net.forward(x, cache), classes, &dl);
    check(net, net.backward(cache, dl),
          [&] { return nn::cross_entropy_batch(net.forward(x), classes, nullptr); }, 1);
  }
  {
    nn::Mlp& net = scalar.value_head();
    const std::vector<double> t = {1.5, -2.0, 9.9, 3.3, -1.1, 4.0};
    nn::Mlp::Cache cache;
    nn::Matrix dl;
    nn::mse_batch(net.forward(xs, cache), t, &dl);
    check(net, net.backward(cache, dl), [&] { return nn::mse_batch(net.forward(xs), t, nullptr); },
          2);
  }

  // Quantile probe: alpha * cross-entropy and beta * pinball, per head.
  probes::QuantileSettings qs;
  qs.range = range;
  auto quantile = probes::QuantileProbe::create(d, qs, cfg, rng);
  std::vector<std::vector<double>> samples(batch);
  for (auto& s : samples)
    for (int j = 0; j < 50; ++j) s.push_back(rng.normal(3.0, 2.0));
  for (std::size_t h = 0; h < quantile.heads().size(); ++h) {
    const double tau = qs.levels[h];
    nn::Mlp& order = quantile.heads()[h].order;
    {
      nn::Mlp::Cache cache;
      nn::Matrix dl;
      nn::cross_entropy_batch(order.forward(x, cache), classes, &dl);
      dl *= qs.alpha;
      check(order, order.backward(cache, dl),
            [&] { return qs.alpha * nn::cross_entropy_batch(order.forward(x), classes, nullptr); },
            10 + h);
    }
    nn::Mlp& value = quantile.heads()[h].value;
    auto pinball = [&](const nn::Matrix& pred, nn::Matrix* grad) {
      double total = 0.0;
      if (grad) grad->resize(1, pred.cols());
      for (Eigen::Index i = 0; i < pred.cols(); ++i) {
        const auto& ys = samples[static_cast<std::size_t>(i)];
        const double inv = 1.0 / scales[static_cast<std::size_t>(i)];
        double l = 0.0, dl = 0.0;
        for (double y : ys) {
          l += nn::pinball(tau, pred(0, i), y * inv);
          dl += nn::pinball_derivative(tau, pred(0, i), y * inv);
        }
        total += l / static_cast<double>(ys.size());
        if (grad) (*grad)(0, i) = qs.beta * dl / static_cast<double>(ys.size()) / batch;
      }
      return qs.beta * total / batch;
    };
    nn::Mlp::Cache cache;
    nn::Matrix dl;
    pinball(value.forward(xs, cache), &dl);
    check(value, value.backward(cache, dl), [&] { return pinball(value.forward(xs), nullptr); },
          20 + h);
  }
  const bool ok = worst < 1e-3 && coords >= 100 && timer.seconds() < 60.0;
  report(ok, "gradient-correctness",
         std::to_string(coords) + " coordinates, worst relative error " + fmt("%.3g", worst) +
             " (< 1e-3), " + fmt("%.1f s", timer.seconds()) + " (< 60 s)");
}

// ---- loss oracles ----

void loss_oracles() {
  bool ok = true;
  for (int m : {2, 4, 8, 9}) {
    const std::vector<double> logits(static_cast<std::size_t>(m), 0.0);
    ok &= std::fabs(nn::cross_entropy(logits, 0) - std::log(static_cast<double>(m))) <= 1e-12;
  }
  ok &= std::fabs(nn::cross_entropy(std::vector<double>{0.0, 0.0}, 0) - std::log(2.0)) <= 1e-12;
  ok &= nn::cross_entropy(std::vector<double>{1000.0, 0.0, 0.0}, 0) <= 1e-12;
  ok &= nn::pinball(0.25, 1.0, 1.0) == 0.0;
  ok &= nn::pinball(0.9, 0.0, 1.0) == 0.9;
  ok &= std::fabs(nn::pinball(0.9, 1.0, 0.0) - 0.1) <= 1e-15;
  report(ok, "loss-oracles", "cross-entropy ln M within 1e-12; pinball table exact");
}

// ---- FLOP accounting ----

void flop_accounting() {
  const probes::ProbeConfig cfg;  // hidden 512
  const std::uint64_t classifier = eval::mlp_multiply_adds(cfg.widths(32768, 9));
  const std::uint64_t regressor = eval::mlp_multiply_adds(cfg.widths(32768, 1));
  const std::uint64_t reference_quantile = 7 * (classifier + regressor);
  const std::uint64_t with_scale_input =
      7 * (classifier + eval::mlp_multiply_adds(cfg.widths(32769, 1)));

  // The estimator on real probe objects agrees with the width arithmetic.
  probes::ProbeConfig small;
  small.hidden_dim = 16;
  Rng rng(1);
  probes::QuantileSettings qs;
  qs.range = {-3, 5};
  const auto q = probes::QuantileProbe::create(64, qs, small, rng);
  const bool consistent =
      eval::flop_estimate(q) == 7 * (eval::mlp_multiply_adds(small.widths(64, 9)) +
                                      eval::mlp_multiply_adds(small.widths(65, 1)));

  const bool ok = classifier == 32768ull * 512 + 512 * 9 && std::llround(classifier / 1e6) == 17 &&
                  reference_quantile == 234916864ull &&
                  reference_quantile / 1000000 == 234 && consistent &&
                  with_scale_input / 1000000 == 234;
  report(ok, "flop-accounting",
         "classifier " + std::to_string(classifier) + " (~17M), 7-head quantile " +
             std::to_string(reference_quantile) + " (~234M; " + std::to_string(with_scale_input) +
             " counting the scale input)");
}

// ---- trained criteria ----

struct Splits {
  probes::ProbeData train, val, test;
};

Splits probe_splits(const data::SplitSets& sets, probes::TargetKind kind) {
  return {probes::make_probe_data(sets.train, kind), probes::make_probe_data(sets.val, kind),
          probes::make_probe_data(sets.test, kind)};
}

std::size_t total(const data::SplitSets& s) {
  return s.train.size() + s.val.size() + s.test.size();
}

void point_probes(const pipeline::ScaleData& scale1, const pipeline::ScaleData& combined) {
  const probes::TargetKind kind = probes::TargetKind::kMean;

  // Combined scales: exponent accuracy and the vanilla comparison.
  Timer timer;
  const Splits c = probe_splits(combined.sets, kind);
  Rng rng(derive_seed(kSeed, {1}));
  probes::ScalarSettings ss;
  ss.range = probes::MagnitudeRange::combined();
  ss.target = kind;
  auto scalar = probes::ScalarProbe::create(c.train.dim(), ss, desk_probe(), rng);
  probes::train_scalar(scalar, c.train, c.val, desk_train(60));
  const auto point = pipeline::evaluate_scalar(scalar, c.test, combined.sets.test,
                                               eval::global_mean(c.train.targets));
  const bool acc_ok = total(combined.sets) >= 8000 && point.magnitude_accuracy >= 0.9 &&
                      timer.seconds() < 900.0;
  report(acc_ok, "magnitude-accuracy",
         fmt("%.4f", point.magnitude_accuracy) + " held-out on " +
             std::to_string(total(combined.sets)) + " combined records, m in [-3, 4] (>= 0.90, >= 8000 records), " +
             fmt("%.0f s", timer.seconds()));

  auto vanilla = probes::VanillaProbe::create(c.train.dim(), {kind, false}, desk_probe(), rng);
  probes::train_vanilla(vanilla, c.train, c.val, desk_train(60));
  const double vanilla_mse = eval::mse(vanilla.predict(c.test.embeddings), c.test.targets);
  report(point.mse_expected < vanilla_mse, "vanilla-comparison",
         "factorised MSE " + fmt("%.6g", point.mse_expected) + " < vanilla MSE " +
             fmt("%.6g", vanilla_mse) + " on combined test split");

  // Scale 1: the probe against the three naive predictors.
  const Splits s = probe_splits(scale1.sets, kind);
  probes::ScalarSettings s1;
  s1.range = probes::MagnitudeRange::for_scale(1.0);
  s1.target = kind;
  auto probe1 = probes::ScalarProbe::create(s.train.dim(), s1, desk_probe(), rng);
  probes::train_scalar(probe1, s.train, s.val, desk_train(60));
  const auto p1 = pipeline::evaluate_scalar(probe1, s.test, scale1.sets.test,
                                            eval::global_mean(s.train.targets));
  const bool dom = p1.mse_expected < p1.mse_global_mean && p1.mse_expected < p1.mse_series_mean &&
                   p1.mse_expected < p1.mse_last_value;
  report(dom, "baseline-dominance",
         "scale-1 probe MSE " + fmt("%.4g", p1.mse_expected) + " < global mean " +
             fmt("%.4g", p1.mse_global_mean) + ", series mean " + fmt("%.4g", p1.mse_series_mean) +
             ", last value " + fmt("%.4g", p1.mse_last_value));
}

void quantile_probe_criteria(const pipeline::ScaleData& scale1) {
  Timer timer;
  const probes::ProbeConfig pc = quantile_probe();
  const Splits s = probe_splits(scale1.sets, probes::TargetKind::kMean);
  Rng rng(derive_seed(kSeed, {2}));
  probes::QuantileSettings qs{probes::MagnitudeRange::for_scale(1.0), pc.quantile_levels, pc.alpha,
                              pc.beta, pc.scale_input, pc.repair_crossing};
  auto probe = probes::QuantileProbe::create(s.train.dim(), qs, pc, rng);
  probes::train_quantile(probe, s.train, s.val, quantile_train(80));
  const nn::Matrix q = probe.predict(s.test.embeddings);
  const double seconds = timer.seconds();

  const auto cov = eval::coverage(q, pc.quantile_levels, s.test.samples);
  bool cov_ok = seconds < 1200.0;
  std::string detail;
  for (const auto& c : cov) {
    cov_ok &= std::fabs(c.mean_percent - 100.0 * c.alpha) <= 3.0;
    detail += fmt("%.0f%%: ", 100.0 * c.alpha) + fmt("%.2f", c.mean_percent) + " +- " +
              fmt("%.2f", c.sem_percent) + "; ";
  }
  report(cov_ok, "coverage-calibration",
         detail + "tolerance +-3pp, " + std::to_string(s.test.size()) + " test records, " +
             fmt("%.0f s", seconds));

  const auto iqr = eval::iqr_correlation(q, pc.quantile_levels, s.test.samples);
  // Ground truth: Gaussian predictive distributions have a 95% width of
  // 2 * 1.959964 * spread.
  std::vector<double> ratios;
  const int lo = probe.level_index(0.025);
  const int hi = probe.level_index(0.975);
  for (std::size_t i = 0; i < scale1.sets.test.size(); ++i) {
    const auto& truth = scale1.sets.test[i].meta.truth;
    if (!truth || truth->shape != surrogate::Shape::kGaussian) continue;
    const auto col = static_cast<Eigen::Index>(i);
    ratios.push_back((q(hi, col) - q(lo, col)) / (2.0 * 1.959963984540054 * truth->spread));
  }
  std::sort(ratios.begin(), ratios.end());
  const double median_ratio = ratios.empty() ? 0.0 : ratios[ratios.size() / 2];
  const bool width_ok = !ratios.empty() && std::fabs(median_ratio - 1.0) <= 0.15;
  report(iqr.r >= 0.9 && width_ok, "iqr-fidelity",
         "Pearson r " + fmt("%.4f", iqr.r) + " (>= 0.90) over " + std::to_string(iqr.points.size()) +
             " records; gaussian 95% width / 3.92 spread, median over " +
             std::to_string(ratios.size()) + " records = " + fmt("%.4f", median_ratio) +
             " (within 15%)");

  std::vector<std::vector<double>> targets = s.test.quantile_targets;
  const auto mae = eval::per_quantile_mae(q, targets);
  const auto at = [&](double tau) { return mae[static_cast<std::size_t>(probe.level_index(tau))]; };
  report(at(0.025) > at(0.5) && at(0.975) > at(0.5), "quantile-mae-ordering",
         "MAE(0.025) " + fmt("%.4g", at(0.025)) + ", MAE(0.5) " + fmt("%.4g", at(0.5)) +
             ", MAE(0.975) " + fmt("%.4g", at(0.975)));
}

void context_length(const pipeline::ScaleData& scale1) {
  Timer timer;
  const auto r = pipeline::context_length_experiment(scale1.sets, 1.0, quantile_probe(),
                                                     quantile_train(80));
  report(r.restricted_deviation >= r.base_deviation, "context-length-direction",
         "mean |coverage - alpha| outside [10, 20]: restricted " +
             fmt("%.3f", r.restricted_deviation) + " >= base " + fmt("%.3f", r.base_deviation) +
             " pp (" + std::to_string(r.restricted_train_records) + " restricted training records, " +
             fmt("%.0f s", timer.seconds()) + ")");
}

// ---- determinism through the CLI ----

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NUMPROBE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tree_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    all += fs::relative(f, dir).string() + '\0';
    all.append(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return all;
}

void determinism(const fs::path& work) {
  const std::string flags =
      " --hidden-dim 32 --epochs 5 --batch-size 64 --lr 0.001 --weight-decay 0";
  std::string bytes[2];
  bool ran = true;
  std::size_t files = 0;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = work / ("determinism_" + std::to_string(rep));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string();
    ran &= run_cli("--seed 11 generate --scale 10 --out " + d + " --d-model 16") == 0;
    ran &= run_cli("--seed 11 train scalar --train " + d + "/scale_10_train.npd --val " + d +
                   "/scale_10_val.npd --out " + d + "/s.npw" + flags) == 0;
    ran &= run_cli("--seed 11 train quantile --train " + d + "/scale_10_train.npd --val " + d +
                   "/scale_10_val.npd --out " + d + "/q.npw" + flags) == 0;
    ran &= run_cli("evaluate point --checkpoint " + d + "/s.npw --test " + d +
                   "/scale_10_test.npd --train " + d + "/scale_10_train.npd --out " + d + "/rs") == 0;
    ran &= run_cli("evaluate all --checkpoint " + d + "/q.npw --test " + d +
                   "/scale_10_test.npd --out " + d + "/rq") == 0;
    bytes[rep] = tree_bytes(dir);
    files = static_cast<std::size_t>(std::distance(fs::recursive_directory_iterator(dir),
                                                   fs::recursive_directory_iterator()));
  }
  report(ran && bytes[0] == bytes[1], "determinism",
         "generate -> train -> evaluate twice with seed 11: " + std::to_string(files) +
             " entries, " + (bytes[0] == bytes[1] ? "byte-identical" : "outputs differ") +
             (ran ? "" : ", a CLI step failed"));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "numprobe_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--known-shortfall" && i + 1 < argc)
      known_shortfalls.emplace_back(argv[++i]);
    else
      work = arg;
  }
  fs::create_directories(work);
  Timer total_time;

  gradient_correctness();
  loss_oracles();
  flop_accounting();

  const auto g = desk_generate();
  std::vector<pipeline::ScaleData> scales;
  for (double s : datagen::kScales) scales.push_back(pipeline::generate_scale(s, g));
  const auto combined = pipeline::combine_scales(scales, g);
  point_probes(scales.front(), combined);

  auto full = desk_generate();
  full.full_scale();
  const auto scale1 = pipeline::generate_scale(1.0, full);
  quantile_probe_criteria(scale1);
  context_length(scales.front());

  determinism(work);

  std::printf("%d criteria failed (%d unexpected), %.0f s total\n", failures,
              unexpected_failures, total_time.seconds());
  return unexpected_failures == 0 ? 0 : 1;
}
