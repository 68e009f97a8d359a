// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set to the
// thread count of interest; the serial variants ignore it.

#include <benchmark/benchmark.h>

#include <memory>

#include "flowassoc/assoc.hpp"
#include "flowassoc/core.hpp"
#include "flowassoc/flow.hpp"
#include "flowassoc/rng.hpp"

using namespace flowassoc;

namespace {

flow::FlowModel bench_model() {
  flow::FlowConfig c;
  c.blocks = 4;
  c.hidden = 32;
  flow::FlowModel m(c);
  m.randomize(1, 0.3);
  return m;
}

context::TrackWindow random_window(Rng& rng) {
  context::TrackWindow w;
  for (int s = 0; s < context::kWindowLength; ++s) {
    w.valid[s] = true;
    for (auto& v : w.steps[s]) v = normal(rng, 0.0, 3.0);
  }
  return w;
}

flow::FlowBatch bench_batch(int n) {
  Rng rng(2);
  flow::FlowBatch b;
  b.x.resize(5, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < 5; ++i) b.x(i, j) = normal(rng);
    b.windows.push_back(random_window(rng));
    b.clusters.push_back(j % 4);
  }
  return b;
}

flow::Exec exec_of(const benchmark::State& st) { return st.range(1) ? flow::Exec::parallel : flow::Exec::serial; }

void BM_LogProbBatch(benchmark::State& st) {
  const auto m = bench_model();
  const auto b = bench_batch(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(flow::log_prob_batch(m, b, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_LogProbScalar(benchmark::State& st) {
  const auto m = bench_model();
  const auto b = bench_batch(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    double s = 0.0;
    for (int j = 0; j < b.x.cols(); ++j) {
      const Eigen::VectorXd col = b.x.col(j);
      s += flow::log_prob(m, std::span(col.data(), 5), {&b.windows[j], b.clusters[j]});
    }
    benchmark::DoNotOptimize(s);
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_GradNll(benchmark::State& st) {
  const auto m = bench_model();
  const auto b = bench_batch(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(flow::grad_nll(m, b, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_FlowCostMatrix(benchmark::State& st) {
  auto m = std::make_shared<flow::FlowModel>(bench_model());
  Rng rng(3);
  const int n = static_cast<int>(st.range(0));
  std::vector<assoc::TrackInput> tracks;
  std::vector<Detection> dets;
  for (int i = 0; i < n; ++i) {
    assoc::TrackInput t;
    t.id = i;
    t.predicted << uniform(rng, 0, 300), uniform(rng, 0, 300), 40, 100, uniform(rng, 5, 20);
    t.window = random_window(rng);
    t.cluster = i % 4;
    tracks.push_back(t);
    Detection d;
    d.bbox = {uniform(rng, 0, 300), uniform(rng, 0, 300), 40, 100};
    d.dist_mean = uniform(rng, 5, 20);
    d.dist_var = 0.25;
    dets.push_back(d);
  }
  const auto provider = assoc::CostProvider::flow(m);
  for (auto _ : st) benchmark::DoNotOptimize(assoc::build_cost_matrix(tracks, dets, provider, {}, nullptr, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * n * n);
}

void BM_OcclusionLevels(benchmark::State& st) {
  Rng rng(4);
  const int n = static_cast<int>(st.range(0));
  std::vector<BBox> boxes;
  std::vector<double> depths;
  for (int i = 0; i < n; ++i) {
    boxes.push_back({uniform(rng, 0, 1920), uniform(rng, 300, 800), uniform(rng, 20, 80), uniform(rng, 60, 250)});
    depths.push_back(uniform(rng, 5, 30));
  }
  for (auto _ : st) {
    if (st.range(1)) {
      benchmark::DoNotOptimize(occlusion_levels(boxes, depths));
    } else {
      benchmark::DoNotOptimize(occlusion_levels_serial(boxes, depths));
    }
  }
  st.SetItemsProcessed(st.iterations() * n);
}

}  // namespace

// Second argument: 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_LogProbScalar)->Args({4096, 0});
BENCHMARK(BM_LogProbBatch)->ArgsProduct({{4096, 32768}, {0, 1}});
BENCHMARK(BM_GradNll)->ArgsProduct({{4096}, {0, 1}});
BENCHMARK(BM_FlowCostMatrix)->ArgsProduct({{16, 48}, {0, 1}});
BENCHMARK(BM_OcclusionLevels)->ArgsProduct({{64, 256}, {0, 1}});

BENCHMARK_MAIN();
