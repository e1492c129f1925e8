#include <benchmark/benchmark.h>

#include "raincycle/engine.hpp"

using namespace raincycle;

namespace {

TrainingConfig toy() {
  TrainingConfig cfg;
  cfg.crop = 64;
  cfg.stages = 6;
  cfg.uarse_width = 8;
  cfg.gen_width = 8;
  cfg.disc_width = 8;
  cfg.perceptual_width = 8;
  cfg.gmm_k = 3;
  cfg.seed = 1;
  cfg.lr_decay_start = 0;
  return cfg;
}

Tensor random_image(int c, int hw, uint64_t seed) {
  Rng rng(seed);
  Tensor t({c, hw, hw});
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

void ConvForward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  Rng rng(3);
  Conv2dLayer conv("c", width, width, 3, 1, 1, 2.0, rng);
  const Tensor x = random_image(width, 64, 4);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(t.val(conv.apply(t, t.leaf(x))).data.data());
  }
}
BENCHMARK(ConvForward)->Arg(8)->Arg(32);

void ConvForwardBackward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  Rng rng(3);
  Conv2dLayer conv("c", width, width, 3, 1, 1, 2.0, rng);
  const Tensor x = random_image(width, 64, 4);
  for (auto _ : state) {
    Tape t;
    const Var out = t.sum(conv.apply(t, t.leaf(x)));
    t.backward(out);
    benchmark::DoNotOptimize(t.grad(out).data.data());
  }
}
BENCHMARK(ConvForwardBackward)->Arg(8)->Arg(32);

void UarseForward(benchmark::State& state) {
  TrainingConfig cfg = toy();
  Rng rng(5);
  AttentionExtractor uarse("u", cfg, rng);
  const Tensor img = random_image(3, 64, 6);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(t.val(uarse.forward(t, t.leaf(img)).final_mask).data.data());
  }
}
BENCHMARK(UarseForward);

void GeneratorForward(benchmark::State& state) {
  Rng rng(5);
  UnetGenerator gen("g", 8, rng);
  const Tensor img = random_image(3, 64, 6);
  Tensor mask({1, 64, 64});
  mask.fill(0.5);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(t.val(gen.forward(t, t.leaf(mask), t.leaf(img))).data.data());
  }
}
BENCHMARK(GeneratorForward);

void TrainStep(benchmark::State& state) {
  TrainingConfig cfg = toy();
  Trainer tr(cfg);
  Image r(random_image(3, 64, 7));
  Image n(random_image(3, 64, 8));
  int epoch = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tr.train_step({{r, n}}, epoch++, 0, nullptr).total);
  }
}
BENCHMARK(TrainStep)->Unit(benchmark::kMillisecond)->Iterations(5);

void Psnr(benchmark::State& state) {
  const Image a = toy_clean_image(96, 1);
  RainSynthSpec spec;
  spec.seed = 2;
  const Image b = synth_rain(a, spec).rainy;
  for (auto _ : state) benchmark::DoNotOptimize(psnr(a, b));
}
BENCHMARK(Psnr);

void Ssim(benchmark::State& state) {
  const Image a = toy_clean_image(96, 1);
  RainSynthSpec spec;
  spec.seed = 2;
  const Image b = synth_rain(a, spec).rainy;
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(Ssim);

void EmFit(benchmark::State& state) {
  Rng rng(11);
  std::vector<double> samples(100000);
  for (double& v : samples) v = (rng.uniform() < 0.5 ? 0.5 : 2.0) * rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(gmm_em_fit(samples, 3, 10, 9).model.pi[0]);
  }
}
BENCHMARK(EmFit);

}  // namespace

BENCHMARK_MAIN();
