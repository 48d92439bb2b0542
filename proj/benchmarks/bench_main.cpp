#include <benchmark/benchmark.h>

#include "mcat/attacks.hpp"
#include "mcat/manifold.hpp"
#include "mcat/nets.hpp"
#include "mcat/ops.hpp"
#include "mcat/rng.hpp"

namespace {

mcat::Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  mcat::Rng rng(seed);
  auto t = mcat::Tensor::matrix(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

void BM_MatmulTape(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) {
    mcat::Tape tape;
    auto va = tape.leaf(a, true), vb = tape.leaf(b, true);
    tape.backward(mcat::sum_squares(mcat::matmul(va, vb)));
    benchmark::DoNotOptimize(va.grad().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_MatmulTape)->Arg(16)->Arg(64);

void BM_LatentDescent(benchmark::State& state) {
  mcat::Generator g(0, {16, 64, 64, 16}, 3);
  g.freeze();
  auto u = random_matrix(64, 16, 4);
  auto z0 = random_matrix(64, 16, 5);
  mcat::LatentSearch search{static_cast<std::size_t>(state.range(0)), 0.1};
  for (auto _ : state) {
    auto d = mcat::latent_descent(g, u, z0, search);
    benchmark::DoNotOptimize(d.distance.data());
  }
}
BENCHMARK(BM_LatentDescent)->Arg(1)->Arg(5);

void BM_MsPgd(benchmark::State& state) {
  mcat::ModelShape shape;
  shape.num_classes = 4;
  auto model = mcat::make_model(shape, 7);
  for (int c = 0; c < 4; ++c) {
    model.generators.emplace_back(c, std::vector<std::size_t>{16, 64, 64, 16}, 10 + c);
    model.generators.back().freeze();
  }
  auto x = random_matrix(64, 16, 8);
  std::vector<int> y(64);
  std::vector<std::size_t> ids(64);
  for (std::size_t i = 0; i < 64; ++i) {
    y[i] = static_cast<int>(i % 4);
    ids[i] = i;
  }
  mcat::AttackConfig cfg;
  cfg.steps = static_cast<std::size_t>(state.range(0));
  cfg.lambda = 0.1;
  for (auto _ : state) {
    auto r = mcat::ms_pgd(model, {x, y, ids}, cfg);
    benchmark::DoNotOptimize(r.x_adv.data().data());
  }
}
BENCHMARK(BM_MsPgd)->Arg(1)->Arg(10);

}  // namespace
BENCHMARK_MAIN();
