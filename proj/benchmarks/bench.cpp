#include <benchmark/benchmark.h>

#include <random>

#include "spectral/attack.hpp"
#include "spectral/experiments.hpp"
#include "spectral/guard.hpp"
#include "spectral/linalg.hpp"
#include "spectral/ssm.hpp"

using namespace spectral;

namespace {

const SelectiveSsm& model() {
  static const SelectiveSsm m = init_ssm({});
  return m;
}

linalg::Matrix random_dense(std::size_t n) {
  std::mt19937_64 rng(n);
  std::normal_distribution<double> g(0.0, 1.0 / static_cast<double>(n));
  std::vector<double> v(n * n);
  for (auto& x : v) x = g(rng);
  return linalg::Matrix::dense(n, n, std::move(v));
}

void BM_PowerMethodDiagonal(benchmark::State& state) {
  const auto op = discretize(model(), 0, 1.6);
  for (auto _ : state) benchmark::DoNotOptimize(linalg::power_method(op.abar, state.range(0), 0).rho_hat);
}
BENCHMARK(BM_PowerMethodDiagonal)->Arg(1)->Arg(3)->Arg(10);

void BM_PowerMethodDense(benchmark::State& state) {
  const auto m = random_dense(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(linalg::power_method(m, 3, 0).rho_hat);
}
BENCHMARK(BM_PowerMethodDense)->Arg(16)->Arg(64);

void BM_EigRadiusExactDense(benchmark::State& state) {
  const auto m = random_dense(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(linalg::eig_radius_exact(m).rho_hat);
}
BENCHMARK(BM_EigRadiusExactDense)->Arg(16)->Arg(64);

void BM_MatExpDense(benchmark::State& state) {
  const auto m = random_dense(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(linalg::mat_exp(m, 2.0));
}
BENCHMARK(BM_MatExpDense)->Arg(16)->Arg(64);

void BM_RunSequence(benchmark::State& state) {
  const auto tokens = uniform_tokens(256, 256, 1);
  RunOptions opts;
  opts.probe = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_sequence(model(), tokens, opts).logits.size());
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(tokens.size()));
}
BENCHMARK(BM_RunSequence)->Arg(0)->Arg(1)->ArgName("probe");

void BM_MonitorStep(benchmark::State& state) {
  RhoWindow window(10);
  GuardConfig cfg;
  std::size_t t = 0;
  for (auto _ : state) benchmark::DoNotOptimize(monitor_step(window, 0.9 + 1e-3 * static_cast<double>(t % 7), cfg, t++));
}
BENCHMARK(BM_MonitorStep);

void BM_AttackGradient(benchmark::State& state) {
  const auto tokens = uniform_tokens(static_cast<std::size_t>(state.range(0)), 256, 2);
  const auto embeds = embed_tokens(model(), tokens);
  const auto ref = log_softmax_rows(run_sequence(model(), tokens).logits);
  const double lambda = static_cast<double>(state.range(1));
  for (auto _ : state)
    benchmark::DoNotOptimize(attack_objective(model(), embeds, &ref, lambda, true).gradient.size());
}
BENCHMARK(BM_AttackGradient)->Args({20, 0})->Args({20, 1})->ArgNames({"T", "lambda"});

}  // namespace
BENCHMARK_MAIN();
