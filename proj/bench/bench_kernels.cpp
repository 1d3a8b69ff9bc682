#include <benchmark/benchmark.h>

#include "miro/graph.hpp"
#include "miro/kernels.hpp"
#include "miro/model.hpp"
#include "miro/rng.hpp"

using namespace miro;
namespace k = miro::kernels;

namespace {

constexpr std::size_t kNodes = 4096, kEdges = 6 * kNodes, kLatent = 64;

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.values()) v = uniform(rng, -1.0, 1.0);
  return m;
}

struct Fixture {
  Rng rng{1};
  Matrix x = random_matrix(rng, kNodes, kLatent);
  Matrix w = random_matrix(rng, kLatent, kLatent);
  Matrix dy = random_matrix(rng, kNodes, kLatent);
  Matrix edge = random_matrix(rng, kEdges, kLatent);
  std::vector<double> b = std::vector<double>(kLatent, 0.1);
  std::vector<std::uint32_t> src, dst;
  k::Csr groups;

  Fixture() {
    for (std::size_t e = 0; e < kEdges; ++e) {
      src.push_back(std::uint32_t(uniform_int(rng, 0, int(kNodes) - 1)));
      dst.push_back(std::uint32_t(uniform_int(rng, 0, int(kNodes) - 1)));
    }
    groups = k::group_by(src, kNodes);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

template <bool Parallel>
void BM_linear(benchmark::State& state) {
  const auto& f = fixture();
  Matrix y;
  for (auto _ : state) {
    if constexpr (Parallel) k::linear(f.x, f.w, f.b, y);
    else k::serial::linear(f.x, f.w, f.b, y);
    benchmark::DoNotOptimize(y.values().data());
  }
}

template <bool Parallel>
void BM_linear_grad_params(benchmark::State& state) {
  const auto& f = fixture();
  Matrix dw(kLatent, kLatent);
  std::vector<double> db(kLatent);
  for (auto _ : state) {
    if constexpr (Parallel) k::linear_grad_params(f.dy, f.x, dw, db);
    else k::serial::linear_grad_params(f.dy, f.x, dw, db);
    benchmark::DoNotOptimize(dw.values().data());
  }
}

template <bool Parallel>
void BM_edge_combine(benchmark::State& state) {
  const auto& f = fixture();
  Matrix z;
  for (auto _ : state) {
    if constexpr (Parallel) k::edge_combine(f.x, f.dy, f.edge, f.src, f.dst, z);
    else k::serial::edge_combine(f.x, f.dy, f.edge, f.src, f.dst, z);
    benchmark::DoNotOptimize(z.values().data());
  }
}

template <bool Parallel>
void BM_segment_sum(benchmark::State& state) {
  const auto& f = fixture();
  Matrix s;
  for (auto _ : state) {
    if constexpr (Parallel) k::segment_sum(f.edge, f.groups, s);
    else k::serial::segment_sum(f.edge, f.groups, s);
    benchmark::DoNotOptimize(s.values().data());
  }
}

// Whole forward pass on a simulated-size graph, at the current thread count.
void BM_forward(benchmark::State& state) {
  Rng rng(2);
  std::vector<Vec2> pts(2000);
  for (auto& p : pts) p = {uniform(rng, 0.0, 5000.0), uniform(rng, 0.0, 5000.0)};
  const auto g = build_graph(pts, GraphConfig{});
  ModelConfig mc;
  mc.latent_dim = 32;
  mc.K = 4;
  const auto params = init_params(mc, 1);
  k::set_threads(int(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward(g, params).displacements.data());
}

}  // namespace

BENCHMARK(BM_linear<false>)->Name("linear/serial");
BENCHMARK(BM_linear<true>)->Name("linear/omp");
BENCHMARK(BM_linear_grad_params<false>)->Name("linear_grad_params/serial");
BENCHMARK(BM_linear_grad_params<true>)->Name("linear_grad_params/omp");
BENCHMARK(BM_edge_combine<false>)->Name("edge_combine/serial");
BENCHMARK(BM_edge_combine<true>)->Name("edge_combine/omp");
BENCHMARK(BM_segment_sum<false>)->Name("segment_sum/serial");
BENCHMARK(BM_segment_sum<true>)->Name("segment_sum/omp");
BENCHMARK(BM_forward)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
