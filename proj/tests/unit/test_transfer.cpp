#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "behavsim/embed/losses.hpp"
#include "behavsim/envs/cake.hpp"
#include "behavsim/error.hpp"
#include "behavsim/transfer.hpp"
#include "support.hpp"

namespace behavsim {
namespace {

using testing::random_policy;

// Closed-form LHS: (I - gamma P^pi_tilde)^-1 TV(pi_tilde, pi_star).
Eigen::VectorXd divergence_oracle(const TabularMdp& mdp, const Policy& pi_tilde, const Policy& pi_star) {
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  Eigen::VectorXd gap(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    gap[s] = 0.5 * (pi_tilde.probs().row(s) - pi_star.probs().row(s)).cwiseAbs().sum();
  }
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - mdp.gamma() * policy_transition(mdp, pi_tilde);
  return A.partialPivLu().solve(gap);
}

PairwiseMetricTable table_of(const Eigen::MatrixXd& d) {
  PairwiseMetricTable t;
  t.values = d;
  return t;
}

struct Cakes {
  TabularMdp x = cake_mdp(1.0, 0.9);
  TabularMdp y = cake_mdp(3.0, 0.9);
  Policy px = value_iteration(x).policy;
  Policy py = value_iteration(y).policy;
};

TEST(NearestNeighborMatch, Examples) {
  Eigen::MatrixXd d(3, 3);
  d << 0.5, 0.0, 0.2,
       0.1, 0.3, 0.2,
       0.1, 0.0, 0.9;
  EXPECT_EQ(nearest_neighbor_match(table_of(d)), (std::vector<std::size_t>{1, 0, 0}));
  EXPECT_THROW(nearest_neighbor_match(table_of(Eigen::MatrixXd(0, 0))), InvalidArgument);
}

TEST(NearestNeighborMatch, IdentityOnTheSameMdp) {
  std::mt19937_64 rng(3);
  const auto mdp = random_mdp(rng, 6, 2, 0.9, true, 0.0);
  const Policy pi = value_iteration(mdp).policy;
  const auto t = psm_exact(mdp, pi, mdp, pi);
  const auto m = nearest_neighbor_match(t);
  for (std::size_t y = 0; y < m.size(); ++y) EXPECT_NEAR(t(m[y], y), 0.0, 1e-12);
}

TEST(NearestNeighborMatch, AgreesWithPositiveSelection) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    Eigen::MatrixXd d = Eigen::MatrixXd::NullaryExpr(6, 4, [&] { return u(rng); });
    d(2, 1) = d(4, 1);  // a tie
    const auto m = nearest_neighbor_match(table_of(d));
    for (double beta : {1e-3, 0.1, 10.0}) {
      const auto pairs = select_positive_pairs(table_of(d), beta);
      for (std::size_t j = 0; j < m.size(); ++j) EXPECT_EQ(pairs[j].positive, m[j]);
    }
  }
}

TEST(TransferPolicy, Examples) {
  std::mt19937_64 rng(7);
  const Policy pi = random_policy(rng, 4, 3);
  EXPECT_EQ(transfer_policy(pi, {0, 1, 2, 3}), pi);
  const Policy constant = transfer_policy(pi, {2, 2, 2});
  for (StateIndex y = 0; y < 3; ++y) EXPECT_EQ(constant.row(y), pi.row(2));
  EXPECT_THROW(transfer_policy(pi, {0, 4}), InvalidArgument);
  EXPECT_THROW(transfer_policy(pi, {}), InvalidArgument);
}

TEST(TransferPolicy, ZeroDistanceMatchingIsOptimalOnCakes) {
  Cakes c;
  const auto t = psm_exact(c.x, c.px, c.y, c.py);
  const auto m = nearest_neighbor_match(t);
  for (std::size_t y = 0; y < m.size(); ++y) ASSERT_NEAR(t(m[y], y), 0.0, 1e-9);
  const Policy moved = transfer_policy(c.px, m);
  EXPECT_LE((policy_evaluation(c.y, moved) - policy_evaluation(c.y, c.py)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(policy_evaluation(c.y, moved)[0], 3.0 + 0.9 * 3.0, 1e-12);
}

TEST(VerifyTransferBound, OptimalTransferHasZeroLhs) {
  Cakes c;
  const auto t = psm_exact(c.x, c.px, c.y, c.py);
  const auto report = verify_transfer_bound(c.y, c.py, c.py, t, nearest_neighbor_match(t));
  EXPECT_TRUE(report.passed());
  for (const auto& e : report.entries) {
    EXPECT_EQ(e.lhs, 0.0);
    EXPECT_EQ(e.slack, e.rhs - e.lhs);
  }
  EXPECT_NEAR(report.entries[0].rhs, 0.0, 1e-9);
  EXPECT_EQ(report.gamma, 0.9);
  EXPECT_EQ(report.metric_kind, MetricKind::psm);
}

TEST(VerifyTransferBound, ForcedBadMatchStillWithinBound) {
  Cakes c;
  const auto t = psm_exact(c.x, c.px, c.y, c.py);
  // y0 borrows x1's action (a1), which skips the cake.
  const std::vector<std::size_t> matching{1, 1, 2};
  const Policy moved = transfer_policy(c.px, matching);
  const auto report = verify_transfer_bound(c.y, c.py, moved, t, matching);
  EXPECT_TRUE(report.passed());
  EXPECT_NEAR(report.entries[0].lhs, 1.0, 1e-9);
  EXPECT_NEAR(report.entries[0].rhs, 19.0 * t(1, 0), 1e-9);
  EXPECT_EQ(report.entries[0].matched_x, 1u);
}

TEST(VerifyTransferBound, LhsMatchesLinearSolve) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 10; ++k) {
    const double gamma = k % 2 ? 0.9 : 0.5;
    const auto x = random_mdp(rng, 5, 2, gamma, k % 3 == 0, 0.2);
    const auto y = random_mdp(rng, 4, 2, gamma, k % 3 != 0, 0.2);
    const Policy px = value_iteration(x).policy, py = value_iteration(y).policy;
    const auto t = psm_exact(x, px, y, py, DistKind::tv, {1e-12, {}});
    const auto m = nearest_neighbor_match(t);
    const Policy moved = transfer_policy(px, m);
    const auto report = verify_transfer_bound(y, py, moved, t, m);
    const Eigen::VectorXd oracle = divergence_oracle(y, moved, py);
    for (const auto& e : report.entries) EXPECT_NEAR(e.lhs, oracle[static_cast<Eigen::Index>(e.y)], 1e-8);
    EXPECT_TRUE(report.passed()) << to_json(report).dump();
  }
}

TEST(VerifyTransferBound, RejectsMismatchedInputs) {
  Cakes c;
  const auto t = psm_exact(c.x, c.px, c.y, c.py);
  const auto m = nearest_neighbor_match(t);
  const auto l1 = psm_exact(c.x, c.px, c.y, c.py, DistKind::l1_mean_action);
  EXPECT_THROW(verify_transfer_bound(c.y, c.py, c.py, l1, m), InvalidArgument);
  EXPECT_THROW(verify_transfer_bound(cake_mdp(3.0, 0.5), c.py, c.py, t, m), InvalidArgument);
  EXPECT_THROW(verify_transfer_bound(c.y, c.py, c.py, t, {0, 1}), InvalidArgument);
  EXPECT_THROW(verify_transfer_bound(c.y, c.py, c.py, t, {0, 1, 3}), InvalidArgument);
}

TEST(VerifyTransferBound, JsonIsSelfContained) {
  Cakes c;
  const auto t = psm_exact(c.x, c.px, c.y, c.py);
  const auto j = to_json(verify_transfer_bound(c.y, c.py, c.py, t, nearest_neighbor_match(t)));
  EXPECT_EQ(j.at("gamma").get<double>(), 0.9);
  EXPECT_TRUE(j.contains("metric_kind"));
  EXPECT_TRUE(j.contains("dist_kind"));
  EXPECT_EQ(j.at("entries").size(), 3u);
  EXPECT_TRUE(j.at("entries")[0].contains("slack"));
}

TEST(VerifyPsmApproxBound, ExactPoliciesHaveZeroGap) {
  std::mt19937_64 rng(13);
  const auto x = random_mdp(rng, 5, 3, 0.9, true, 0.2), y = random_mdp(rng, 4, 3, 0.9, false, 0.2);
  const Policy px = value_iteration(x).policy, py = value_iteration(y).policy;
  const auto r = verify_psm_approx_bound(x, y, px, py, px, py);
  EXPECT_TRUE(r.passed());
  EXPECT_NEAR(r.mean_gap, 0.0, 1e-12);
  EXPECT_NEAR(r.min_slack, 0.0, 1e-12);
  EXPECT_EQ(r.entries, 20u);
}

TEST(VerifyPsmApproxBound, OneStateMdpsReduceToScalars) {
  const auto x = testing::self_loop_mdp(2, 0.5), y = testing::self_loop_mdp(2, 0.5);
  const Policy star = Policy::deterministic({0}, 2), hat(Eigen::RowVector2d(0.7, 0.3));
  const auto r = verify_psm_approx_bound(x, y, star, star, hat, star);
  // d* = 0, d_hat = 0.3 / (1 - gamma), corrections 0.6 and 0.
  EXPECT_NEAR(r.mean_gap, 0.6, 1e-10);
  EXPECT_NEAR(r.min_slack, 0.0, 1e-10);
  EXPECT_TRUE(r.passed());
}

TEST(VerifyPsmApproxBound, GapShrinksWithEps) {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 5; ++k) {
    const auto x = random_mdp(rng, 5, 2, 0.9, true, 0.2), y = random_mdp(rng, 5, 2, 0.9, true, 0.2);
    const Policy px = value_iteration(x).policy, py = value_iteration(y).policy;
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {0.4, 0.2, 0.1, 0.05, 0.0}) {
      const auto r = verify_psm_approx_bound(x, y, px, py, epsilon_suboptimal(px, eps), epsilon_suboptimal(py, eps));
      EXPECT_TRUE(r.passed());
      EXPECT_LE(r.mean_gap, prev + 1e-12);
      prev = r.mean_gap;
    }
    EXPECT_NEAR(prev, 0.0, 1e-12);
  }
}

TEST(BisimCounterexample, CakeNumbers) {
  const auto r = verify_bisim_counterexample(1.0, 3.0, 0.9);
  EXPECT_TRUE(r.passed);
  EXPECT_NEAR(r.pi_bisim_x0_y0, 3.8, 1e-9);
  EXPECT_NEAR(r.pi_bisim_x0_y1, 2.9, 1e-9);
  EXPECT_NEAR(r.bisim_x0_y0, 3.8, 1e-9);
  EXPECT_NEAR(r.psm_x0_y0, 0.0, 1e-9);
}

TEST(BisimCounterexample, JustAboveThreshold) {
  const auto r = verify_bisim_counterexample(1.0, 2.2, 0.9);
  EXPECT_TRUE(r.passed);
  // (1 + gamma)(r_y - r_x) against (r_y - r_x) + gamma r_x.
  EXPECT_NEAR(r.pi_bisim_x0_y0, 1.9 * 1.2, 1e-9);
  EXPECT_NEAR(r.pi_bisim_x0_y1, 1.2 + 0.9, 1e-9);
  EXPECT_LT(r.bisim_x0_y1, r.bisim_x0_y0);
}

TEST(BisimCounterexample, RejectsSmallRewardGap) {
  EXPECT_THROW(verify_bisim_counterexample(1.0, 2.0, 0.9), InvalidArgument);
  EXPECT_THROW(verify_bisim_counterexample(1.0, 1.0 + 1.0 / 0.9, 0.9), InvalidArgument);
}

TEST(RandomMdp, WellFormedAndSeeded) {
  std::mt19937_64 a(1), b(1);
  const auto m1 = random_mdp(a, 6, 3, 0.9, true, 0.3), m2 = random_mdp(b, 6, 3, 0.9, true, 0.3);
  EXPECT_EQ(m1.rewards(), m2.rewards());
  for (std::size_t act = 0; act < 3; ++act) {
    EXPECT_EQ(m1.transition(act), m2.transition(act));
    EXPECT_LE((m1.transition(act).rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
  EXPECT_GE(m1.rewards().minCoeff(), 0.0);
  EXPECT_LT(m1.rewards().maxCoeff(), 1.0);
  std::mt19937_64 c(2);
  const auto det = random_mdp(c, 5, 2, 0.5, false, 0.0);
  for (std::size_t act = 0; act < 2; ++act) EXPECT_EQ(det.transition(act).rowwise().maxCoeff().minCoeff(), 1.0);
}

TEST(Fuzz, ConfigRoundTrip) {
  FuzzConfig c;
  c.seed = 9;
  c.gammas = {0.3};
  const auto back = fuzz_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Fuzz, TransferBoundHoldsOnTheCorpus) {
  std::ifstream in(std::string(BEHAVSIM_CONFIG_DIR) + "/fuzz_corpus.json");
  ASSERT_TRUE(in) << "missing fuzz corpus";
  const FuzzConfig config = fuzz_config_from_json(nlohmann::json::parse(in));
  EXPECT_EQ(config.pairs, 200u);
  const auto s = fuzz_transfer_bound(config);
  EXPECT_EQ(s.cases, 200u);
  EXPECT_EQ(s.failures, 0u) << s.failing.dump();
  EXPECT_TRUE(s.passed());
}

TEST(Fuzz, Reproducible) {
  FuzzConfig c;
  c.seed = 21;
  c.pairs = 12;
  EXPECT_EQ(to_json(fuzz_transfer_bound(c)), to_json(fuzz_transfer_bound(c)));
}

TEST(Fuzz, ApproxGapMonotoneInEps) {
  FuzzConfig c;
  c.seed = 23;
  c.approx_mdps = 15;
  const auto s = fuzz_psm_approx(c, {0.4, 0.1});
  EXPECT_EQ(s.cases, 30u);
  ASSERT_EQ(s.mean_gap_by_eps.size(), 2u);
  EXPECT_GT(s.mean_gap_by_eps[0], s.mean_gap_by_eps[1]);
  EXPECT_TRUE(s.passed());
}

}  // namespace
}  // namespace behavsim
