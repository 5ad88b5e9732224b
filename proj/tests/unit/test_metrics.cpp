#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "behavsim/envs/cake.hpp"
#include "behavsim/envs/jumping.hpp"
#include "behavsim/error.hpp"
#include "behavsim/metrics.hpp"
#include "behavsim/transfer.hpp"
#include "behavsim/transport.hpp"
#include "support.hpp"

namespace behavsim {
namespace {

using testing::random_distribution;
using testing::random_policy;
using testing::self_loop_mdp;

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

void expect_certificate(const CouplingCertificate& c, const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                        const Eigen::VectorXd& q) {
  EXPECT_GE(c.coupling.minCoeff(), 0.0);
  EXPECT_LE((c.coupling.rowwise().sum() - p).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((c.coupling.colwise().sum().transpose() - q).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index i = 0; i < cost.rows(); ++i)
    for (Eigen::Index j = 0; j < cost.cols(); ++j) EXPECT_LE(c.u[i] - c.v[j], cost(i, j) + 1e-10);
  EXPECT_LE(std::abs(c.primal_value(cost) - c.dual_value(p, q)), 1e-9);
  EXPECT_NEAR(c.value, c.primal_value(cost), 1e-9);
}

struct CakePair {
  TabularMdp x = cake_mdp(1.0, 0.9);
  TabularMdp y = cake_mdp(3.0, 0.9);
  Policy px = value_iteration(x).policy;
  Policy py = value_iteration(y).policy;
};

TEST(TvDistance, Examples) {
  EXPECT_EQ(tv_distance(vec({0.5, 0.5}), vec({0.5, 0.5})), 0.0);
  EXPECT_EQ(tv_distance(vec({1, 0}), vec({0, 1})), 1.0);
  EXPECT_NEAR(tv_distance(vec({0.7, 0.3}), vec({0.4, 0.6})), 0.3, 1e-15);
  EXPECT_THROW(tv_distance(vec({1}), vec({0.5, 0.5})), InvalidArgument);
}

TEST(TvDistance, SymmetricAndBounded) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const auto p = random_distribution(rng, 4);
    const auto q = random_distribution(rng, 4);
    const double d = tv_distance(p, q);
    EXPECT_EQ(d, tv_distance(q, p));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
}

TEST(L1Distance, MeanActions) {
  EXPECT_NEAR(l1_distance(vec({0.5, -1.0}), vec({1.5, 1.0})), 3.0, 1e-15);
  EXPECT_EQ(action_distance(DistKind::l1_mean_action, vec({2}), vec({-1})), 3.0);
  EXPECT_EQ(action_distance(DistKind::tv, vec({1, 0}), vec({0, 1})), 1.0);
}

TEST(Wasserstein1, IdenticalDistributionsCostNothing) {
  const Eigen::VectorXd p = vec({0.2, 0.3, 0.5});
  Eigen::MatrixXd cost(3, 3);
  cost << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  const auto c = wasserstein1(cost, p, p);
  EXPECT_NEAR(c.value, 0.0, 1e-15);
  EXPECT_LE((c.coupling - Eigen::MatrixXd(p.asDiagonal())).cwiseAbs().maxCoeff(), 1e-12);
  expect_certificate(c, cost, p, p);
}

TEST(Wasserstein1, PointMassesUseTheSingleRoute) {
  Eigen::MatrixXd cost(2, 3);
  cost << 0.0, 4.0, 2.5, 1.0, 7.0, 3.0;
  const auto c = wasserstein1(cost, vec({0, 1}), vec({0, 0, 1}));
  EXPECT_EQ(c.value, 3.0);
  expect_certificate(c, cost, vec({0, 1}), vec({0, 0, 1}));
}

TEST(Wasserstein1, ShiftedUniformOnTheLine) {
  const std::vector<double> xp{0, 1}, xq{1, 2};
  Eigen::MatrixXd cost(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) cost(i, j) = std::abs(xp[i] - xq[j]);
  const Eigen::VectorXd p = vec({0.5, 0.5});
  const auto c = wasserstein1(cost, p, p);
  EXPECT_NEAR(c.value, 1.0, 1e-12);
  EXPECT_NEAR(c.value, testing::w1_cdf_oracle(xp, p, xq, p), 1e-12);
}

TEST(Wasserstein1, RejectsBadInputs) {
  Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(2, 2);
  EXPECT_THROW(wasserstein1(cost, vec({0, 0}), vec({0.5, 0.5})), InvalidArgument);
  EXPECT_THROW(wasserstein1(cost, vec({1}), vec({0.5, 0.5})), InvalidArgument);
  cost(0, 1) = -1;
  EXPECT_THROW(wasserstein1(cost, vec({0.5, 0.5}), vec({0.5, 0.5})), InvalidArgument);
  cost(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(wasserstein1(cost, vec({0.5, 0.5}), vec({0.5, 0.5})), InvalidArgument);
}

TEST(Wasserstein1, CertificateOnRandomInstances) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::uniform_int_distribution<int> size(1, 7);
  for (int k = 0; k < 200; ++k) {
    const auto n = static_cast<std::size_t>(size(rng)), m = static_cast<std::size_t>(size(rng));
    Eigen::VectorXd p = random_distribution(rng, n), q = random_distribution(rng, m);
    if (k % 3 == 0) p[0] = 0.0, p /= p.sum() > 0 ? p.sum() : 1.0;
    if (p.sum() == 0.0) continue;
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (auto& x : cost.reshaped()) x = u(rng);
    expect_certificate(wasserstein1(cost, p, q), cost, p, q);
  }
}

TEST(Wasserstein1, MatchesCdfOracleOnSortedSupports) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> xp(5), xq(4);
    for (auto& x : xp) x = u(rng);
    for (auto& x : xq) x = u(rng);
    std::sort(xp.begin(), xp.end());
    std::sort(xq.begin(), xq.end());
    const auto p = random_distribution(rng, xp.size()), q = random_distribution(rng, xq.size());
    Eigen::MatrixXd cost(5, 4);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) cost(i, j) = std::abs(xp[i] - xq[j]);
    EXPECT_NEAR(wasserstein1(cost, p, q).value, testing::w1_cdf_oracle(xp, p, xq, q), 1e-9);
  }
}

TEST(TransportSolver, WarmStartMatchesColdSolve) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto p = random_distribution(rng, 6), q = random_distribution(rng, 5);
  TransportSolver warm(std::vector<double>(p.begin(), p.end()), std::vector<double>(q.begin(), q.end()));
  Eigen::MatrixXd cost(6, 5);
  for (auto& x : cost.reshaped()) x = u(rng);
  for (int k = 0; k < 30; ++k) {
    cost += 0.05 * Eigen::MatrixXd::NullaryExpr(6, 5, [&] { return u(rng); });
    EXPECT_NEAR(warm.solve(cost), wasserstein1(cost, p, q).value, 1e-12);
  }
}

TEST(PsmExact, ZeroDiagonalOnIdenticalInputs) {
  std::mt19937_64 rng(19);
  const auto mdp = random_mdp(rng, 6, 2, 0.9, true, 0.2);
  const Policy pi = value_iteration(mdp).policy;
  const auto t = psm_exact(mdp, pi, mdp, pi);
  EXPECT_EQ(t.metric_kind, MetricKind::psm);
  for (std::size_t s = 0; s < 6; ++s) EXPECT_NEAR(t(s, s), 0.0, 1e-12);
}

TEST(PsmExact, CakeValues) {
  CakePair c;
  const auto t = psm_exact(c.x, c.px, c.y, c.py);
  EXPECT_NEAR(t(0, 0), 0.0, 1e-9);
  EXPECT_NEAR(t(0, 1), 1.0 + 0.9 * 0.5, 1e-9);
}

TEST(PiBisimulation, CakeValues) {
  CakePair c;
  const double g = 0.9, rx = 1.0, ry = 3.0;
  const auto t = pi_bisimulation(c.x, c.px, c.y, c.py);
  EXPECT_NEAR(t(0, 0), (1 + g) * std::abs(ry - rx), 1e-9);
  EXPECT_NEAR(t(0, 1), std::abs(ry - rx) + g * rx, 1e-9);
  EXPECT_NEAR(t(0, 0), 3.8, 1e-9);
  EXPECT_NEAR(t(0, 1), 2.9, 1e-9);
}

TEST(Bisimulation, CakeValues) {
  CakePair c;
  const auto t = bisimulation(c.x, c.y);
  EXPECT_NEAR(t(0, 0), 3.8, 1e-9);
  EXPECT_NEAR(t(0, 1), std::max((1 + 0.9) * 1.0, 3.0), 1e-9);
}

TEST(PiBisimulation, ZeroDiagonal) {
  std::mt19937_64 rng(31);
  const auto mdp = random_mdp(rng, 6, 3, 0.9, true, 0.2);
  const Policy pi = random_policy(rng, 6, 3);
  const auto t = pi_bisimulation(mdp, pi, mdp, pi);
  for (std::size_t s = 0; s < 6; ++s) EXPECT_NEAR(t(s, s), 0.0, 1e-12);
  const auto b = bisimulation(mdp, mdp);
  for (std::size_t s = 0; s < 6; ++s) EXPECT_NEAR(b(s, s), 0.0, 1e-12);
}

TEST(Metrics, RejectMismatchedMdps) {
  const auto a = cake_mdp(1.0, 0.9);
  const auto b = cake_mdp(1.0, 0.5);
  const Policy pa = value_iteration(a).policy;
  EXPECT_THROW(psm_exact(a, pa, b, pa), InvalidArgument);
  EXPECT_THROW(bisimulation(a, b), InvalidArgument);
  const auto three = self_loop_mdp(3, 0.9);
  EXPECT_THROW(pi_bisimulation(a, pa, three, Policy::uniform(1, 3)), InvalidArgument);
  FixedPointOptions bad;
  bad.tol = 0.0;
  EXPECT_THROW(psm_exact(a, pa, a, pa, DistKind::tv, bad), InvalidArgument);
}

TEST(PsmTrajectoryDp, ZeroDiagonalForIdenticalTrajectories) {
  const JumpingTask task({30, 12});
  const auto traj = jumping_optimal_trajectory(task, jumping_optimal_policy(task));
  const auto t = psm_trajectory_dp(traj, traj, DistKind::tv, 0.99);
  for (std::size_t i = 0; i < traj.size(); ++i) EXPECT_EQ(t(i, i), 0.0);
}

TEST(PsmTrajectoryDp, SingleStateGeometricSeries) {
  Trajectory a, b;
  a.states = {0};
  a.action_dists = {vec({0.9, 0.1})};
  b.states = {0};
  b.action_dists = {vec({0.3, 0.7})};
  const double tv = 0.6, gamma = 0.9;
  EXPECT_NEAR(psm_trajectory_dp(a, b, DistKind::tv, gamma)(0, 0), tv / (1 - gamma), 1e-8);
}

TEST(PsmTrajectoryDp, EqualObstacleDistanceGivesZero) {
  const JumpingTask tx({25, 10});
  const JumpingTask ty({45, 10});
  const auto trajX = jumping_optimal_trajectory(tx, jumping_optimal_policy(tx));
  const auto trajY = jumping_optimal_trajectory(ty, jumping_optimal_policy(ty));
  const auto t = psm_trajectory_dp(trajX, trajY, DistKind::tv, 0.99);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < trajX.size(); ++i)
    for (std::size_t j = 0; j < trajY.size(); ++j) {
      const auto sx = tx.decode(trajX.states[i]);
      const auto sy = ty.decode(trajY.states[j]);
      if (25 - sx->x == 45 - sy->x) {
        EXPECT_EQ(t(i, j), 0.0) << i << "," << j;
        ++checked;
      }
    }
  EXPECT_GT(checked, 20u);
  EXPECT_GT(t.values.maxCoeff(), 0.0);
}

TEST(PsmTrajectoryDp, IndependentOfInitialization) {
  const JumpingTask tx({22, 14});
  const JumpingTask ty({39, 18});
  const auto trajX = jumping_optimal_trajectory(tx, jumping_optimal_policy(tx));
  const auto trajY = jumping_optimal_trajectory(ty, jumping_optimal_policy(ty));
  const auto zero = psm_trajectory_dp(trajX, trajY, DistKind::tv, 0.99);
  FixedPointOptions opt;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  opt.init = Eigen::MatrixXd::NullaryExpr(zero.values.rows(), zero.values.cols(), [&] { return u(rng); });
  const auto other = psm_trajectory_dp(trajX, trajY, DistKind::tv, 0.99, opt);
  EXPECT_LE((zero.values - other.values).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(PsmTrajectoryDp, RejectsEmptyTrajectory) {
  Trajectory a, b;
  b.states = {0};
  b.action_dists = {vec({1, 0})};
  EXPECT_THROW(psm_trajectory_dp(a, b, DistKind::tv, 0.9), InvalidArgument);
}

TEST(GeneralizedPsm, MatchesPsmForOptimalPolicies) {
  CakePair c;
  const auto a = psm_exact(c.x, c.px, c.y, c.py);
  const auto b = generalized_psm(c.x, c.px, c.y, c.py);
  EXPECT_EQ(b.metric_kind, MetricKind::generalized_psm);
  EXPECT_EQ(a.values, b.values);
}

TEST(GeneralizedPsm, PseudometricOnOneMdp) {
  std::mt19937_64 rng(37);
  const auto mdp = random_mdp(rng, 7, 3, 0.9, true, 0.2);
  const Policy pi = random_policy(rng, 7, 3);
  const auto t = generalized_psm(mdp, pi, mdp, pi);
  const auto& d = t.values;
  EXPECT_LE(d.diagonal().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((d - d.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index j = 0; j < 7; ++j)
      for (Eigen::Index k = 0; k < 7; ++k) EXPECT_LE(d(i, k), d(i, j) + d(j, k) + 1e-9);
}

TEST(GeneralizedPsm, SelfLoopsWithDifferentActions) {
  const auto mdp = self_loop_mdp(2, 0.9);
  const auto t = generalized_psm(mdp, Policy::deterministic({0}, 2), mdp, Policy::deterministic({1}, 2));
  EXPECT_NEAR(t(0, 0), 1.0 / (1.0 - 0.9), 1e-8);
}

TEST(GaussianKernel, Examples) {
  const double beta = 0.37;
  EXPECT_EQ(gaussian_kernel(0.0, beta), 1.0);
  EXPECT_NEAR(gaussian_kernel(beta, beta), 0.36788, 1e-5);
  EXPECT_NEAR(gaussian_kernel(2 * beta, beta), 0.13534, 1e-5);
  EXPECT_THROW(gaussian_kernel(1.0, 0.0), InvalidArgument);
  EXPECT_THROW(gaussian_kernel(-1.0, 1.0), InvalidArgument);
  double prev = 1.0;
  for (int k = 1; k < 20; ++k) {
    const double g = gaussian_kernel(0.1 * k, beta);
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, prev);
    prev = g;
  }
}

TEST(FixedPointCap, Formula) {
  EXPECT_EQ(fixed_point_cap(0.9, 1e-9), static_cast<std::size_t>(std::ceil(std::log(1e-10) / std::log(0.9))) + 64);
  EXPECT_EQ(fixed_point_cap(0.5, 1e-9, 4.0),
            static_cast<std::size_t>(std::ceil(std::log(1e-9 * 0.5 / 4.0) / std::log(0.5))) + 64);
}

class MetricProperty : public ::testing::TestWithParam<int> {
 protected:
  struct Instance {
    TabularMdp x, y;
    Policy px, py;
  };
  Instance make(double gamma) {
    std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(GetParam()));
    const bool stochastic = GetParam() % 2 == 0;
    auto x = random_mdp(rng, 5, 2, gamma, stochastic, 0.2);
    auto y = random_mdp(rng, 6, 2, gamma, stochastic, 0.2);
    Policy px = value_iteration(x).policy, py = value_iteration(y).policy;
    return {std::move(x), std::move(y), std::move(px), std::move(py)};
  }
  std::vector<PairwiseMetricTable> all_metrics(const Instance& m, const FixedPointOptions& opt = {}) {
    std::mt19937_64 rng(5 + static_cast<std::uint64_t>(GetParam()));
    return {psm_exact(m.x, m.px, m.y, m.py, DistKind::tv, opt), pi_bisimulation(m.x, m.px, m.y, m.py, opt),
            bisimulation(m.x, m.y, opt),
            generalized_psm(m.x, random_policy(rng, 5, 2), m.y, random_policy(rng, 6, 2), DistKind::tv, opt)};
  }
};

TEST_P(MetricProperty, ResidualsContractAtRateGamma) {
  for (double gamma : {0.5, 0.9, 0.99}) {
    for (const auto& t : all_metrics(make(gamma))) {
      // Residuals are differences of entries of size |d|, so each carries
      // about |d| * machine epsilon of cancellation error.
      const double roundoff = 16 * std::numeric_limits<double>::epsilon() * std::max(1.0, t.values.maxCoeff());
      for (std::size_t k = 2; k < t.residual_trace.size(); ++k)
        EXPECT_LE(t.residual_trace[k], (gamma + 1e-9) * t.residual_trace[k - 1] + roundoff)
            << to_string(t.metric_kind) << " gamma " << gamma << " sweep " << k;
      EXPECT_LE(t.residual_trace.back(), t.tol);
    }
  }
}

TEST_P(MetricProperty, FixedPointIsUniqueAcrossInitializations) {
  const auto m = make(0.9);
  const auto zero = all_metrics(m);
  std::mt19937_64 rng(77 + static_cast<std::uint64_t>(GetParam()));
  std::uniform_real_distribution<double> u(0.0, 20.0);
  FixedPointOptions opt;
  opt.init = Eigen::MatrixXd::NullaryExpr(5, 6, [&] { return u(rng); });
  const auto other = all_metrics(m, opt);
  for (std::size_t k = 0; k < zero.size(); ++k)
    EXPECT_LE((zero[k].values - other[k].values).cwiseAbs().maxCoeff(), 1e-7) << to_string(zero[k].metric_kind);
}

TEST_P(MetricProperty, PsmIsBoundedAndNonNegative) {
  for (double gamma : {0.5, 0.9, 0.99}) {
    const auto m = make(gamma);
    const auto t = psm_exact(m.x, m.px, m.y, m.py);
    EXPECT_GE(t.values.minCoeff(), 0.0);
    EXPECT_LE(t.values.maxCoeff(), 1.0 / (1.0 - gamma) + 1e-9);
    EXPECT_TRUE(t.values.allFinite());
  }
}

TEST_P(MetricProperty, SymmetricOnIdenticalInputs) {
  const auto m = make(0.9);
  const auto t = psm_exact(m.y, m.py, m.y, m.py);
  EXPECT_LE((t.values - t.values.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  const auto b = pi_bisimulation(m.x, m.px, m.x, m.px);
  EXPECT_LE((b.values - b.values.transpose()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST_P(MetricProperty, PermutedCopyMatchesItsOriginal) {
  const auto m = make(0.9);
  const std::size_t n = m.y.n_states();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  std::shuffle(perm.begin(), perm.end(), rng);
  // Copy with state s of y renamed perm[s].
  Eigen::MatrixXd R(m.y.rewards().rows(), m.y.rewards().cols());
  std::vector<Eigen::MatrixXd> P(m.y.n_actions(), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                                        static_cast<Eigen::Index>(n)));
  std::vector<bool> terminal(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto ps = static_cast<Eigen::Index>(perm[s]);
    R.row(ps) = m.y.rewards().row(static_cast<Eigen::Index>(s));
    terminal[perm[s]] = m.y.is_terminal(s);
    for (std::size_t a = 0; a < m.y.n_actions(); ++a)
      for (std::size_t t = 0; t < n; ++t)
        P[a](ps, static_cast<Eigen::Index>(perm[t])) =
            m.y.transition(a)(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t));
  }
  const TabularMdp copy(R, P, m.y.gamma(), terminal, {perm[0]});
  const Policy pc = value_iteration(copy).policy;
  const auto t = psm_exact(m.y, m.py, copy, pc);
  for (std::size_t s = 0; s < n; ++s) EXPECT_NEAR(t(s, perm[s]), 0.0, 1e-9);
  const auto id = psm_exact(m.y, m.py, m.y, m.py);
  for (std::size_t s = 0; s < n; ++s) EXPECT_NEAR(id(s, s), 0.0, 1e-9);
}

INSTANTIATE_TEST_SUITE_P(Seeds, MetricProperty, ::testing::Range(0, 6));

TEST(Counterexample, OrderingFlipsForLargeRewardGap) {
  for (double gamma : {0.5, 0.9, 0.99}) {
    for (double rx : {0.5, 1.0, 2.0}) {
      const double ry = (1.0 + 1.0 / gamma) * rx * 1.1;
      const auto x = cake_mdp(rx, gamma), y = cake_mdp(ry, gamma);
      const Policy px = value_iteration(x).policy, py = value_iteration(y).policy;
      const auto bis = bisimulation(x, y);
      const auto pib = pi_bisimulation(x, px, y, py);
      const auto psm = psm_exact(x, px, y, py);
      EXPECT_LT(bis(0, 1), bis(0, 0));
      EXPECT_LT(pib(0, 1), pib(0, 0));
      EXPECT_NEAR(psm(0, 0), 0.0, 1e-9);
      const auto report = verify_bisim_counterexample(rx, ry, gamma);
      EXPECT_TRUE(report.passed);
    }
  }
}

TEST(ApproximationBound, HoldsOnRandomMdps) {
  FuzzConfig config;
  config.seed = 4;
  config.approx_mdps = 25;
  const auto summary = fuzz_psm_approx(config);
  EXPECT_EQ(summary.failures, 0u) << summary.failing.dump();
  EXPECT_EQ(summary.cases, 25u * config.approx_eps.size());
}

}  // namespace
}  // namespace behavsim
