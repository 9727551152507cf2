#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "fuserank/fusion.hpp"
#include "fuserank/metrics.hpp"
#include "fuserank/random.hpp"
#include "fuserank/search.hpp"

using namespace fuserank;

namespace {

EmbeddingMatrix random_matrix(std::uint64_t seed, std::size_t rows, std::size_t dim,
                              const char* prefix) {
  Rng rng(seed);
  RawMatrix raw;
  raw.dim = dim;
  for (std::size_t r = 0; r < rows; ++r) raw.ids.push_back(prefix + std::to_string(r));
  for (std::size_t i = 0; i < rows * dim; ++i) raw.values.push_back(rng.gaussian());
  return normalize_rows(raw);
}

void BM_TopK(benchmark::State& state) {
  const auto docs = static_cast<std::size_t>(state.range(0));
  const SearchIndex index(random_matrix(1, docs, 64, "d"));
  const EmbeddingMatrix q = random_matrix(2, 1, 64, "q");
  for (auto _ : state) benchmark::DoNotOptimize(top_k(q.row(0), index, 10));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(docs));
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_BatchSearch(benchmark::State& state) {
  const SearchIndex index(random_matrix(1, 10000, 64, "d"));
  const EmbeddingMatrix queries = random_matrix(2, 256, 64, "q");
  const auto threads = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(batch_search(queries, index, 100, "b", threads));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_BatchSearch)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_InfoNceGrad(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  AdapterSet set;
  auto unit = [&] {
    Vector v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.gaussian();
    return Vector(v / v.norm());
  };
  for (Modality m : kAllModalities) {
    Adapter a = identity_adapter(m, dim, 8);
    for (Eigen::Index i = 0; i < a.down.size(); ++i) a.down.data()[i] = rng.gaussian(0.0, 0.3);
    for (Eigen::Index i = 0; i < a.up.size(); ++i) a.up.data()[i] = rng.gaussian(0.0, 0.3);
    set.adapters.emplace(m, a);
  }
  auto item = [&] {
    ModalityVectors v;
    for (Modality m : kAllModalities) v[m] = unit();
    return v;
  };
  InstanceVectors inst{item(), item(), {item(), item(), item()}};
  for (auto _ : state)
    benchmark::DoNotOptimize(info_nce_grad(inst, ModalityMask::all(), set, 0.05));
}
BENCHMARK(BM_InfoNceGrad)->Arg(32)->Arg(256)->Arg(1024);

void BM_EvaluateRun(benchmark::State& state) {
  Rng rng(4);
  Qrels qrels;
  RunFile run;
  for (int q = 0; q < 500; ++q) {
    const std::string qid = "q" + std::to_string(q);
    for (int j = 0; j < 20; ++j)
      qrels.set(qid, "d" + std::to_string(rng.index(5000)), static_cast<int>(rng.index(4)));
    qrels.set(qid, "d" + std::to_string(rng.index(5000)), 1);
    for (int r = 0; r < 1000; ++r)
      run.entries.push_back({qid, "d" + std::to_string(r * 5 + q % 5), r + 1, -double(r), "b"});
  }
  const MetricConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_run(run, qrels, cfg));
  state.SetItemsProcessed(state.iterations() * 500);
}
BENCHMARK(BM_EvaluateRun)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
