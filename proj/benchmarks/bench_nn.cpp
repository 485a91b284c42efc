#include <benchmark/benchmark.h>

#include "numprobe/nn.hpp"
#include "numprobe/probes.hpp"

namespace {

using numprobe::Rng;
namespace nn = numprobe::nn;

nn::Matrix random_matrix(int rows, int cols, Rng& rng) {
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

void BM_MlpForward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(1);
  const nn::Mlp net({d, 128, 9}, rng);
  const nn::Matrix x = random_matrix(d, 128, rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetItemsProcessed(state.iterations() * x.cols());
}
BENCHMARK(BM_MlpForward)->Arg(256)->Arg(2048);

void BM_MlpForwardBackward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(2);
  const nn::Mlp net({d, 128, 9}, rng);
  const nn::Matrix x = random_matrix(d, 128, rng);
  std::vector<int> targets(128);
  for (int i = 0; i < 128; ++i) targets[static_cast<std::size_t>(i)] = i % 9;
  for (auto _ : state) {
    nn::Mlp::Cache cache;
    nn::Matrix dl;
    nn::cross_entropy_batch(net.forward(x, cache), targets, &dl);
    benchmark::DoNotOptimize(net.backward(cache, dl));
  }
  state.SetItemsProcessed(state.iterations() * x.cols());
}
BENCHMARK(BM_MlpForwardBackward)->Arg(256)->Arg(2048);

void BM_AdamStep(benchmark::State& state) {
  Rng rng(3);
  nn::Mlp net({2048, 128, 9}, rng);
  nn::Adam adam(net, {});
  const nn::Gradients g = net.zero_gradients();
  for (auto _ : state) adam.step(net, g);
}
BENCHMARK(BM_AdamStep);

void BM_QuantilePredict(benchmark::State& state) {
  Rng rng(4);
  numprobe::probes::ProbeConfig cfg;
  cfg.hidden_dim = 128;
  numprobe::probes::QuantileSettings qs;
  qs.range = {-3, 4};
  const auto probe = numprobe::probes::QuantileProbe::create(256, qs, cfg, rng);
  Eigen::MatrixXf e = random_matrix(256, 256, rng).cast<float>();
  for (auto _ : state) benchmark::DoNotOptimize(probe.predict(e));
  state.SetItemsProcessed(state.iterations() * e.cols());
}
BENCHMARK(BM_QuantilePredict);

}  // namespace
BENCHMARK_MAIN();
