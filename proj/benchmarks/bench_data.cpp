#include <benchmark/benchmark.h>

#include <cmath>

#include "numprobe/datagen.hpp"
#include "numprobe/dataset.hpp"
#include "numprobe/eval.hpp"

namespace {

namespace datagen = numprobe::datagen;

void BM_GenerateCorpus(benchmark::State& state) {
  auto spec = datagen::AugmentationSpec::for_scale(10.0);
  spec.a_grid_size = 2;
  spec.subseqs_per_length = 2;
  for (auto _ : state) benchmark::DoNotOptimize(datagen::generate_corpus(spec, 7));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(spec.expected_count()));
}
BENCHMARK(BM_GenerateCorpus);

void BM_SerializeParse(benchmark::State& state) {
  std::vector<double> values;
  for (int i = 0; i < 40; ++i) values.push_back(0.37 * i - 5.0);
  for (auto _ : state) {
    const std::string text = datagen::serialize_series(values, 4);
    benchmark::DoNotOptimize(datagen::parse_series(text));
  }
}
BENCHMARK(BM_SerializeParse);

void BM_GpBaseline(benchmark::State& state) {
  std::vector<double> series;
  for (int i = 0; i < state.range(0); ++i) series.push_back(std::sin(0.3 * i));
  for (auto _ : state) benchmark::DoNotOptimize(numprobe::eval::gp_baseline(series));
}
BENCHMARK(BM_GpBaseline)->Arg(10)->Arg(40);

}  // namespace
