// Serial reference vs OpenMP kernels. Arg(0) is the serial path, Arg(1) parallel.

#include <benchmark/benchmark.h>

#include "periop/explain.hpp"
#include "periop/metrics.hpp"
#include "periop/models.hpp"
#include "periop/random.hpp"
#include "periop/reference.hpp"
#include "periop/tree.hpp"

using namespace periop;

namespace {

struct Data {
  EncodedMatrix X;
  std::vector<int> y;
};

const Data& data() {
  static const Data d = [] {
    Stream s(1, 1);
    const std::size_t n = 5000, p = 40;
    std::vector<std::vector<double>> rows(n, std::vector<double>(p));
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (double& v : rows[i]) v = s.uniform();
      y[i] = s.uniform() < 1 / (1 + std::exp(-6 * (rows[i][0] - rows[i][1] + rows[i][2] * rows[i][3] - 0.25)));
    }
    return Data{EncodedMatrix::from_rows(rows), y};
  }();
  return d;
}

RowStats gini_stats(const Data& d) {
  RowStats st;
  for (int v : d.y) {
    st.a.push_back(1.0);
    st.b.push_back(v);
    st.cover.push_back(1.0);
  }
  return st;
}

GrowParams bench_params() {
  GrowParams gp;
  gp.max_depth = 8;
  gp.min_samples_leaf = 5;
  return gp;
}

void BM_GrowTreeReference(benchmark::State& state) {
  const auto& d = data();
  const auto st = gini_stats(d);
  const auto gp = bench_params();
  for (auto _ : state) benchmark::DoNotOptimize(grow_tree_reference(d.X, st, gp, 1));
}
BENCHMARK(BM_GrowTreeReference)->Unit(benchmark::kMillisecond);

void BM_GrowTree(benchmark::State& state) {
  const auto& d = data();
  const PresortedMatrix ps(d.X);
  const auto st = gini_stats(d);
  const auto gp = bench_params();
  for (auto _ : state) benchmark::DoNotOptimize(grow_tree(ps, st, gp, 1, state.range(0) != 0));
}
BENCHMARK(BM_GrowTree)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ForestFit(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state)
    benchmark::DoNotOptimize(fit(d.X, d.y, ForestParams{32, 8, 0, true, 2}, 3, state.range(0) != 0));
}
BENCHMARK(BM_ForestFit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TreeShap(benchmark::State& state) {
  const auto& d = data();
  static const TrainedModel m = fit(d.X, d.y, GradBoostParams{50, 0.1, 4, 1.0, 0.0, 0.1}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(tree_shap(m, d.X, state.range(0) != 0));
}
BENCHMARK(BM_TreeShap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Bootstrap(benchmark::State& state) {
  const auto& d = data();
  std::vector<double> scores(d.X.rows);
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = d.X.at(i, 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(bootstrap_ci(scores, d.y, 100, 7, 0.5, state.range(0) != 0));
}
BENCHMARK(BM_Bootstrap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
