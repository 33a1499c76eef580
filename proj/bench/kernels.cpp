// Serial reference vs OpenMP path for each parallel kernel. The second
// benchmark argument selects the path: 0 serial, 1 parallel.
#include <benchmark/benchmark.h>

#include <random>

#include "ipath/experiment.hpp"
#include "ipath/nn/layers.hpp"

using namespace ipath;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(1) == 0 ? Exec::serial : Exec::parallel; }

const Environment& env() {
  static const Environment e = [] {
    RunConfig c;
    c.walks.count = 200;
    return make_environment(c);
  }();
  return e;
}

const Dataset& dataset() {
  static const Dataset ds = [] {
    RunConfig c;
    c.walks.count = 200;
    c.dataset.size = 2000;
    return synthesize(c, env(), Exec::parallel);
  }();
  return ds;
}

const Model& model() {
  static const Model m = [] {
    RunConfig c;
    c.dataset.size = 2000;
    return Model::init(resolved_model(c), 5);
  }();
  return m;
}

void BM_GprQueryBatch(benchmark::State& state) {
  Rng rng = make_rng({1});
  const FieldLayout& layout = env().bundle.layout;
  std::uniform_real_distribution<double> ux(0.0, layout.width_m), uy(0.0, layout.height_m);
  std::vector<Vec2> pts(static_cast<std::size_t>(state.range(0)));
  for (Vec2& p : pts) p = {ux(rng), uy(rng)};
  for (auto _ : state) benchmark::DoNotOptimize(env().map.query_batch(pts, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GprQueryBatch)->ArgsProduct({{4096}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_BuildDataset(benchmark::State& state) {
  DatasetOptions o;
  o.size = state.range(0);
  o.seed = 3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_dataset(env().bundle.layout, env().map, env().bank, o, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildDataset)->ArgsProduct({{1000}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_AttentionCore(benchmark::State& state) {
  const int len = 9, heads = 4, dim = 64;
  const int rows = static_cast<int>(state.range(0)) * len;
  Rng rng = make_rng({2});
  std::normal_distribution<double> g(0.0, 1.0);
  nn::Mat q(rows, dim), k(rows, dim), v(rows, dim);
  for (nn::Mat* m : {&q, &k, &v}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = g(rng);
  }
  nn::Mat attn;
  for (auto _ : state) benchmark::DoNotOptimize(nn::attention_core(q, k, v, len, heads, &attn, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AttentionCore)->ArgsProduct({{128, 1024}, {0, 1}})->Unit(benchmark::kMicrosecond);

void BM_EncodeEndpoints(benchmark::State& state) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i);
  for (auto _ : state) benchmark::DoNotOptimize(encode_endpoints(model(), dataset(), ids, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncodeEndpoints)->ArgsProduct({{1024}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_PairErrors(benchmark::State& state) {
  const auto pairs = sample_pairs(dataset(), state.range(0), 4);
  std::vector<Vec2> pred(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) pred[i] = pairs[i].target * 0.9;
  for (auto _ : state) benchmark::DoNotOptimize(pair_errors(pairs, pred, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PairErrors)->ArgsProduct({{10000}, {0, 1}})->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
