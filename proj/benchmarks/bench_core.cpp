#include <benchmark/benchmark.h>

#include <random>

#include "behavsim/embed/model.hpp"
#include "behavsim/envs/jumping.hpp"
#include "behavsim/lqr.hpp"
#include "behavsim/metrics.hpp"
#include "behavsim/transfer.hpp"
#include "behavsim/transport.hpp"

namespace {

using namespace behavsim;

Eigen::VectorXd random_simplex(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Eigen::VectorXd p = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
  return p / p.sum();
}

void BM_Wasserstein1(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::VectorXd p = random_simplex(rng, n), q = random_simplex(rng, n);
  const Eigen::MatrixXd cost = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return u(rng); });
  for (auto _ : state) benchmark::DoNotOptimize(wasserstein1(cost, p, q).value);
}
BENCHMARK(BM_Wasserstein1)->Arg(4)->Arg(16)->Arg(64);

void BM_PsmExact(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const auto x = random_mdp(rng, n, 3, 0.9, true, 0.1);
  const auto y = random_mdp(rng, n, 3, 0.9, true, 0.1);
  const Policy px = value_iteration(x).policy, py = value_iteration(y).policy;
  for (auto _ : state) benchmark::DoNotOptimize(psm_exact(x, px, y, py).values.sum());
}
BENCHMARK(BM_PsmExact)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_JumpingTrajectoryPsm(benchmark::State& state) {
  const JumpingTask tx(JumpingInstance{25, 15}), ty(JumpingInstance{45, 15});
  const auto trajX = jumping_optimal_trajectory(tx, jumping_optimal_policy(tx));
  const auto trajY = jumping_optimal_trajectory(ty, jumping_optimal_policy(ty));
  for (auto _ : state) benchmark::DoNotOptimize(psm_trajectory_dp(trajX, trajY, DistKind::tv, kJumpingGamma).values.sum());
}
BENCHMARK(BM_JumpingTrajectoryPsm);

void BM_EmbeddingForwardBackward(benchmark::State& state) {
  const EmbeddingModel model(ModelConfig{}, 0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::MatrixXd inputs = Eigen::MatrixXd::NullaryExpr(model.config().input_dim, state.range(0), [&] { return u(rng); });
  for (auto _ : state) {
    const ForwardPass pass = model.forward(inputs);
    benchmark::DoNotOptimize(model.backward(pass, pass.embedding, pass.logits));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EmbeddingForwardBackward)->Arg(32)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_LqrCostGradient(benchmark::State& state) {
  const LqrSuite suite = lqr_build(0, 20);
  const LqrSystem& s = suite.train.front();
  const Eigen::MatrixXd S0 = second_moment(suite.init_states);
  const Eigen::MatrixXd K = Eigen::MatrixXd::Zero(s.n_a(), s.n_s());
  for (auto _ : state) benchmark::DoNotOptimize(lqr_state_cost_grad(s, K, S0).cost);
}
BENCHMARK(BM_LqrCostGradient)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
