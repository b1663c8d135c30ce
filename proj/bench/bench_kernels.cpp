// Serial reference kernels against their OpenMP versions.

#include "layoutgen/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace layoutgen;

namespace {

Positions random_positions(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return Positions::NullaryExpr(static_cast<Eigen::Index>(n), 2, [&]() { return u(rng); });
}

Graph random_graph(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> node(0, static_cast<int>(n) - 1);
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < n; ++i) edges.emplace_back(static_cast<int>(i) - 1, static_cast<int>(i));
  while (edges.size() < m) {
    const int u = node(rng), v = node(rng);
    if (u != v) edges.emplace_back(u, v);
  }
  return Graph(n, edges);
}

template <Matrix (*Kernel)(const Positions&)>
void pairwise(benchmark::State& state) {
  const Positions p = random_positions(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(p));
}

template <Matrix (*Kernel)(const SparseOperator&, const Matrix&, std::size_t)>
void propagate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const SparseOperator op = SparseOperator::gcn(random_graph(n, 3 * n, 2));
  const std::size_t batch = 100;
  const Matrix x = Matrix::Random(static_cast<Eigen::Index>(n * batch), 32);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(op, x, batch));
}

template <std::int64_t (*Kernel)(std::span<const Edge>, const Positions&)>
void crossings(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Graph g = random_graph(n, 3 * n, 3);
  const Positions p = random_positions(n, 4);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(g.edges(), p));
}

template <std::vector<Edge> (*Kernel)(const Positions&)>
void gabriel(benchmark::State& state) {
  const Positions p = random_positions(static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(p));
}

}  // namespace

BENCHMARK(pairwise<kernels::serial::pairwise_distances>)->Name("pairwise_distances/serial")->Arg(77)->Arg(419)->Arg(1138);
BENCHMARK(pairwise<kernels::parallel::pairwise_distances>)->Name("pairwise_distances/parallel")->Arg(77)->Arg(419)->Arg(1138);
BENCHMARK(propagate<kernels::serial::propagate>)->Name("propagate/serial")->Arg(77)->Arg(419);
BENCHMARK(propagate<kernels::parallel::propagate>)->Name("propagate/parallel")->Arg(77)->Arg(419);
BENCHMARK(crossings<kernels::serial::count_crossings>)->Name("count_crossings/serial")->Arg(77)->Arg(419);
BENCHMARK(crossings<kernels::parallel::count_crossings>)->Name("count_crossings/parallel")->Arg(77)->Arg(419);
BENCHMARK(gabriel<kernels::serial::gabriel_edges>)->Name("gabriel_edges/serial")->Arg(77)->Arg(419);
BENCHMARK(gabriel<kernels::parallel::gabriel_edges>)->Name("gabriel_edges/parallel")->Arg(77)->Arg(419);

BENCHMARK_MAIN();
