#include <benchmark/benchmark.h>

#include "advdet/detector.hpp"
#include "advdet/evalkit.hpp"
#include "advdet/fixtures.hpp"
#include "advdet/ood.hpp"
#include "advdet/perturb_gan.hpp"
#include "advdet/perturb_gradient.hpp"
#include "advdet/trainer.hpp"

using namespace advdet;

namespace {

Fixture bench_fixture() {
  FixtureSpec spec;
  spec.side = 64;
  spec.seed = 12;
  return gen_fixture(spec);
}

}  // namespace

static void BM_SobelMagnitude(benchmark::State& state) {
  const auto fx = bench_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(sobel_magnitude(fx.image));
}
BENCHMARK(BM_SobelMagnitude);

static void BM_GenPointwise(benchmark::State& state) {
  GradientPerturbConfig cfg;
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(gen_pointwise(64, 64, cfg, rng));
}
BENCHMARK(BM_GenPointwise);

static void BM_GenBlockwise(benchmark::State& state) {
  GradientPerturbConfig cfg;
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(gen_blockwise(64, 64, cfg, rng));
}
BENCHMARK(BM_GenBlockwise);

static void BM_PerturbGan(benchmark::State& state) {
  const auto fx = bench_fixture();
  GanPerturbConfig cfg;
  Rng rng(3);
  for (auto _ : state)
    benchmark::DoNotOptimize(perturb_image_gan(fx.image, fx.landmarks, cfg, rng));
}
BENCHMARK(BM_PerturbGan);

static void BM_GenFixture(benchmark::State& state) {
  FixtureSpec spec;
  spec.side = 64;
  uint64_t seed = 0;
  for (auto _ : state) {
    spec.seed = seed++;
    benchmark::DoNotOptimize(gen_fixture(spec));
  }
}
BENCHMARK(BM_GenFixture);

static void BM_DetectorForward(benchmark::State& state) {
  const auto fx = bench_fixture();
  DetectorConfig cfg;
  const auto model = init_model(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, fx.image));
}
BENCHMARK(BM_DetectorForward);

static void BM_TrainStep(benchmark::State& state) {
  FixtureSpec spec;
  spec.side = 64;
  std::vector<ImageTensor> imgs;
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) {
    spec.seed = static_cast<uint64_t>(i);
    imgs.push_back(gen_fixture(spec).image);
    labels.push_back(i % 2);
  }
  std::vector<const ImageTensor*> batch;
  for (auto& im : imgs) batch.push_back(&im);

  DetectorConfig cfg;
  auto model = init_model(cfg);
  AdamState adam(cfg);
  for (auto _ : state)
    benchmark::DoNotOptimize(train_step(model, batch, labels, nullptr, 0.0, adam, nullptr));
}
BENCHMARK(BM_TrainStep);

static void BM_Auc(benchmark::State& state) {
  Rng rng(4);
  std::vector<ScoredSample> samples;
  for (int i = 0; i < 2000; ++i)
    samples.push_back({rng.uniform01(), static_cast<int>(rng.uniform_int(0, 1)), "x"});
  for (auto _ : state) benchmark::DoNotOptimize(auc(samples));
}
BENCHMARK(BM_Auc);

static void BM_FitGaussian(benchmark::State& state) {
  Rng rng(5);
  std::vector<std::vector<double>> feats;
  for (int i = 0; i < 256; ++i) {
    std::vector<double> v(32);
    for (auto& x : v) x = rng.normal();
    feats.push_back(std::move(v));
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_gaussian(feats, 1e-4));
}
BENCHMARK(BM_FitGaussian);

static void BM_KMeansNoise(benchmark::State& state) {
  GradientPerturbConfig cfg;
  std::vector<PerturbationField> fields;
  std::vector<std::string> tags;
  Rng gen(6);
  for (int i = 0; i < 30; ++i) {
    fields.push_back(i % 2 ? gen_pointwise(64, 64, cfg, gen) : gen_blockwise(64, 64, cfg, gen));
    tags.push_back(i % 2 ? "point" : "block");
  }
  for (auto _ : state) {
    Rng rng(7);
    benchmark::DoNotOptimize(kmeans_noise(fields, tags, 2, 32, rng));
  }
}
BENCHMARK(BM_KMeansNoise);

BENCHMARK_MAIN();
