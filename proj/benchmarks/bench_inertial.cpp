#include <vector>

#include <benchmark/benchmark.h>

#include "cpgt/inertial.hpp"
#include "cpgt/synth.hpp"

using namespace cpgt;

static void BM_Preintegrate(benchmark::State& state) {
  SynthConfig c;
  c.duration_s = 10.0;
  c.imu_rate_hz = static_cast<double>(state.range(0));
  const auto imu = gen_imu(gen_world(c));
  const std::vector<ImuSample> second(imu.begin(), imu.begin() + state.range(0) + 1);
  for (auto _ : state) benchmark::DoNotOptimize(preintegrate(second, Bias(), ImuNoise{}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Preintegrate)->Arg(200)->Arg(1000)->Arg(4000)->Unit(benchmark::kMicrosecond);

static void BM_BiasCorrect(benchmark::State& state) {
  SynthConfig c;
  c.duration_s = 2.0;
  const auto seg = preintegrate_between(gen_imu(gen_world(c)), 0, 1'000'000'000, Bias(), ImuNoise{});
  Bias b;
  b.gyro = Vec3(1e-3, -2e-3, 5e-4);
  for (auto _ : state) benchmark::DoNotOptimize(bias_correct(seg, b));
}
BENCHMARK(BM_BiasCorrect);
