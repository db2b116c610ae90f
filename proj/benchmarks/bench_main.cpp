// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "therblig/actionreg.hpp"
#include "therblig/datagen.hpp"
#include "therblig/mgsf.hpp"
#include "therblig/rng.hpp"

using namespace tbk;

namespace {

const datagen::TaskTemplate& first_template() {
  static const auto all = datagen::training_templates();
  return all.front();
}

void BM_GenerateDemo(benchmark::State& state) {
  const auto& tmpl = first_template();
  const auto scene = datagen::generate_scene(static_cast<int>(tmpl.roles().size()), 0, 7);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(datagen::generate_demo(tmpl, scene, ++seed));
}
BENCHMARK(BM_GenerateDemo)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  mgsf::MgsfConfig cfg;
  cfg.variant = static_cast<mgsf::Variant>(state.range(0));
  const auto model = mgsf::init_model(cfg, 1);
  const auto& tmpl = first_template();
  const auto scene = datagen::generate_scene(static_cast<int>(tmpl.roles().size()), 0, 7);
  const auto g = datagen::generate_demo(tmpl, scene, 3);
  for (auto _ : state) benchmark::DoNotOptimize(mgsf::predict_probabilities(model, g.demo.states));
  state.SetLabel(std::string(mgsf::variant_name(cfg.variant)));
}
BENCHMARK(BM_Forward)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_MedianSmooth(benchmark::State& state) {
  Rng rng(5);
  std::vector<int> codes(600);
  for (auto& c : codes) c = static_cast<int>(rng.uniform_int(0, kNumTherbligs - 1));
  const auto labels = LabelSequence::from_codes(codes);
  for (auto _ : state) benchmark::DoNotOptimize(mgsf::median_smooth(labels, 5));
}
BENCHMARK(BM_MedianSmooth);

void BM_OrientationPca(benchmark::State& state) {
  Rng rng(11);
  std::vector<Vec2> pts(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pts) p = Vec2(rng.normal(0.0, 0.05), rng.normal(0.0, 0.01));
  for (auto _ : state) benchmark::DoNotOptimize(actionreg::estimate_orientation_pca(pts));
}
BENCHMARK(BM_OrientationPca)->Arg(64)->Arg(1024);

void BM_Transfer(benchmark::State& state) {
  const auto& tmpl = first_template();
  const int n = static_cast<int>(tmpl.roles().size());
  const auto scene = datagen::generate_scene(n, 0, 9);
  const auto moved = datagen::generate_layout(n, 0, 9, 10);
  const auto g = datagen::generate_demo(tmpl, scene, 9);
  for (auto _ : state)
    benchmark::DoNotOptimize(actionreg::transfer(g.demo, g.phases, scene, moved, actionreg::Calibration()));
}
BENCHMARK(BM_Transfer)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
