#include <benchmark/benchmark.h>

#include "cpgt/fusion.hpp"
#include "cpgt/synth.hpp"

using namespace cpgt;

static void BM_Fuse(benchmark::State& state) {
  SynthConfig c;
  c.duration_s = 20.0;
  c.landmark_count = static_cast<int>(state.range(0));
  c.detection_sigma_px = c.feature_sigma_px = 1.0;
  c.imu_add_noise = true;
  const SynthWorld w = gen_world(c);
  const SynthDetections d = gen_detections(w);
  FusionInput in;
  in.initial = w.trajectory;
  in.tracks = d.tracks;
  in.cp_detections = d.control_points;
  in.control_points = w.control_points;
  in.imu = gen_imu(w);
  in.rig = w.rig;
  FusionConfig cfg;
  cfg.rounds = 1;
  for (auto _ : state) benchmark::DoNotOptimize(fuse(in, cfg));
}
BENCHMARK(BM_Fuse)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond)->Iterations(2);

BENCHMARK_MAIN();
