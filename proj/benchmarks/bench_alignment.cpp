#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "cpgt/alignment.hpp"
#include "cpgt/pipeline.hpp"
#include "cpgt/synth.hpp"
#include "cpgt/triangulation.hpp"

using namespace cpgt;

static void BM_Umeyama(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 10.0);
  const Similarity t(1.7, Rotation::exp(Vec3(0.1, 0.2, 0.3)), Vec3(5, -2, 1));
  std::vector<Vec3> src, dst;
  for (int i = 0; i < state.range(0); ++i) {
    src.emplace_back(g(rng), g(rng), g(rng));
    dst.push_back(t.apply(src.back()));
  }
  for (auto _ : state) benchmark::DoNotOptimize(umeyama(src, dst));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Umeyama)->RangeMultiplier(4)->Range(4, 4096)->Complexity();

namespace {

struct SparseFixture {
  SynthWorld world;
  ObservationMap posed;
};

const SparseFixture& sparse_fixture() {
  static const SparseFixture f = [] {
    SparseFixture s;
    SynthConfig c;
    c.detection_sigma_px = 1.0;
    s.world = gen_world(c);
    s.posed = observations_with_poses(gen_detections(s.world).control_points, s.world.trajectory, 10'000'000);
    return s;
  }();
  return f;
}

}  // namespace

static void BM_TriangulateControlPoint(benchmark::State& state) {
  const SparseFixture& f = sparse_fixture();
  const auto& [id, obs] = *f.posed.begin();
  for (auto _ : state) {
    benchmark::DoNotOptimize(triangulate_control_point(id, obs, f.world.trajectory, f.world.rig));
  }
  state.counters["observations"] = static_cast<double>(obs.size());
}
BENCHMARK(BM_TriangulateControlPoint)->Unit(benchmark::kMicrosecond);

static void BM_Evaluate(benchmark::State& state) {
  const SparseFixture& f = sparse_fixture();
  const SynthDetections d = gen_detections(f.world);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate(f.world.trajectory, d.control_points, f.world.control_points, f.world.rig));
  }
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);
