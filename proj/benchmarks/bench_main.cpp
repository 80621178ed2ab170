#include "lrgan/data.hpp"
#include "lrgan/imaging.hpp"
#include "lrgan/norm.hpp"
#include "lrgan/training.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_Downscale(benchmark::State& state) {
  const auto img = torch::rand({8, 3, state.range(0), state.range(0)}) * 2 - 1;
  for (auto _ : state) benchmark::DoNotOptimize(lrgan::downscale(img, state.range(0) / 8));
}
BENCHMARK(BM_Downscale)->Arg(64)->Arg(128)->Arg(256);

void BM_Pono(benchmark::State& state) {
  const auto f = torch::randn({8, state.range(0), 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(lrgan::pono(f).first);
}
BENCHMARK(BM_Pono)->Arg(32)->Arg(128);

lrgan::TrainConfig toy_with(int64_t base) {
  auto c = lrgan::TrainConfig::toy();
  c.base_channels = base;
  c.d_base_channels = base;
  c.max_channels = base * 8;
  c.d_max_channels = base * 8;
  return c;
}

void BM_GeneratorForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  const auto c = toy_with(state.range(0));
  lrgan::Generator g(c.generator_spec());
  g->eval();
  const auto x = torch::rand({8, 3, c.hr_size, c.hr_size}) * 2 - 1;
  const auto lr = lrgan::downscale_to(x.flip(0), c.lr_size, c.lr_size);
  for (auto _ : state) benchmark::DoNotOptimize(g->forward(x, lr));
}
BENCHMARK(BM_GeneratorForward)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  auto c = toy_with(state.range(0));
  c.synthetic_count = 32;
  auto s = lrgan::make_train_state(c);
  const auto data = lrgan::make_synthetic_dataset(c.synthetic_count, c.hr_size, 1);
  for (auto _ : state) benchmark::DoNotOptimize(lrgan::train_step(s, data));
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond)->Iterations(5);

}  // namespace

BENCHMARK_MAIN();
