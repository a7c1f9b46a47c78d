// Serial reference vs OpenMP kernels on a random sparse graph.
#include <algorithm>
#include <random>

#include <benchmark/benchmark.h>

#include "evogood/kernels.hpp"

namespace {

using namespace evogood::kernels;

struct Fixture {
  std::vector<int> offsets, indices, reverse;
  Matrix z, a_src, a_dst, grad;
  AttentionCache cache;

  Fixture(int n, int degree, int dim, int heads) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(n));
    for (int u = 0; u < n; ++u)
      for (int k = 0; k < degree / 2; ++k) {
        const int v = pick(rng);
        if (v == u) continue;
        rows[static_cast<std::size_t>(u)].push_back(v);
        rows[static_cast<std::size_t>(v)].push_back(u);
      }
    offsets.push_back(0);
    for (auto& r : rows) {
      std::sort(r.begin(), r.end());
      r.erase(std::unique(r.begin(), r.end()), r.end());
      indices.insert(indices.end(), r.begin(), r.end());
      offsets.push_back(static_cast<int>(indices.size()));
    }
    reverse = reverse_index(csr());
    z = Matrix::Random(n, dim);
    a_src = Matrix::Random(heads, dim);
    a_dst = Matrix::Random(heads, dim);
    grad = Matrix::Random(n, dim);
    serial::attention_forward(csr(), z, a_src, a_dst, 0.2, cache);
  }
  Csr csr() const { return {offsets, indices}; }
};

template <bool Parallel>
void BM_AttentionForward(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)), 16, 32, 4);
  AttentionCache cache;
  for (auto _ : state) {
    Matrix out = Parallel ? parallel::attention_forward(f.csr(), f.z, f.a_src, f.a_dst, 0.2, cache)
                          : serial::attention_forward(f.csr(), f.z, f.a_src, f.a_dst, 0.2, cache);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.indices.size()));
}

template <bool Parallel>
void BM_AttentionBackward(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)), 16, 32, 4);
  for (auto _ : state) {
    AttentionGrads g =
        Parallel ? parallel::attention_backward(f.csr(), f.reverse, f.z, f.a_src, f.a_dst, 0.2, f.cache, f.grad)
                 : serial::attention_backward(f.csr(), f.z, f.a_src, f.a_dst, 0.2, f.cache, f.grad);
    benchmark::DoNotOptimize(g.dz.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.indices.size()));
}

template <bool Parallel>
void BM_PairwiseCosine(benchmark::State& state) {
  const Matrix x = Matrix::Random(state.range(0), 16);
  for (auto _ : state) {
    Matrix s = Parallel ? parallel::pairwise_cosine(x) : serial::pairwise_cosine(x);
    benchmark::DoNotOptimize(s.data());
  }
}

template <bool Parallel>
void BM_AssignNearest(benchmark::State& state) {
  const Matrix x = Matrix::Random(state.range(0), 16);
  const Matrix c = Matrix::Random(10, 16);
  std::vector<int> a(static_cast<std::size_t>(x.rows()));
  std::vector<double> d(a.size());
  for (auto _ : state) {
    if (Parallel) parallel::assign_nearest(x, c, a, d);
    else serial::assign_nearest(x, c, a, d);
    benchmark::DoNotOptimize(a.data());
  }
}

}  // namespace

BENCHMARK(BM_AttentionForward<false>)->Arg(1000)->Arg(10000);
BENCHMARK(BM_AttentionForward<true>)->Arg(1000)->Arg(10000);
BENCHMARK(BM_AttentionBackward<false>)->Arg(1000)->Arg(10000);
BENCHMARK(BM_AttentionBackward<true>)->Arg(1000)->Arg(10000);
BENCHMARK(BM_PairwiseCosine<false>)->Arg(500)->Arg(2000);
BENCHMARK(BM_PairwiseCosine<true>)->Arg(500)->Arg(2000);
BENCHMARK(BM_AssignNearest<false>)->Arg(10000);
BENCHMARK(BM_AssignNearest<true>)->Arg(10000);

BENCHMARK_MAIN();
