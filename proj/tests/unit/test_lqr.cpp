#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "behavsim/error.hpp"
#include "behavsim/lqr.hpp"

namespace behavsim {
namespace {

LqrSystem plain_system(const Eigen::MatrixXd& A) {
  const auto n = A.rows();
  LqrSystem s;
  s.A = A;
  s.B = s.Q = s.R = s.W_c = Eigen::MatrixXd::Identity(n, n);
  s.W_d = Eigen::MatrixXd::Identity(n, n);
  return s;
}

// Infinite-horizon cost of a = K_s s: 1/2 tr(X S0) with X = C + M' X M, solved as a Kronecker system.
double lyapunov_cost(const LqrSystem& s, const Eigen::MatrixXd& K_s, const Eigen::MatrixXd& S0) {
  const Eigen::MatrixXd M = s.A + s.B * K_s;
  const Eigen::MatrixXd C = s.Q + K_s.transpose() * s.R * K_s;
  const auto n = M.rows();
  Eigen::MatrixXd kron(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = M(j, i) * M.transpose();
  // vec(M' X M) = (M' kron M') vec(X) with column-major vec.
  const Eigen::VectorXd x = (Eigen::MatrixXd::Identity(n * n, n * n) - kron).partialPivLu().solve(C.reshaped());
  return 0.5 * (x.reshaped(n, n).cwiseProduct(S0)).sum();
}

TEST(Dare, ZeroDynamicsGiveIdentity) {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(3, 3);
  const auto sol = dare_solve(Eigen::MatrixXd::Zero(3, 3), I, I, I);
  EXPECT_LE((sol.P - I).norm(), 1e-12);
  EXPECT_LE(sol.residual, 1e-10);
}

TEST(Dare, ScalarRoot) {
  // p = 1 + a^2 p - a^2 p^2 / (p + 1) reduces to p^2 - a^2 p - 1 = 0.
  const double a = 0.8;
  const double root = 0.5 * (a * a + std::sqrt(a * a * a * a + 4.0));
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  const auto sol = dare_solve(a * one, one, one, one);
  EXPECT_NEAR(sol.P(0, 0), root, 1e-10);
  EXPECT_NEAR(root, 1.36995, 1e-5);
  EXPECT_LE(dare_residual(a * one, one, one, one, sol.P), 1e-10);
}

TEST(Dare, ShippedSystemResidual) {
  const auto suite = lqr_build(0, 20);
  const auto sol = dare_solve(suite.train[0]);
  EXPECT_LE(sol.residual, 1e-10);
  EXPECT_LE(dare_residual(suite.train[0].A, suite.train[0].B, suite.train[0].Q, suite.train[0].R, sol.P), 1e-10);
  EXPECT_LE((sol.P - sol.P.transpose()).norm(), 1e-12);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sol.P).eigenvalues().minCoeff(), 0.0);
}

TEST(Dare, RejectsBadShapes) {
  EXPECT_THROW(dare_solve(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2),
                          Eigen::MatrixXd::Identity(2, 2)),
               InvalidArgument);
}

TEST(LqrCost, ZeroPolicyMatchesLyapunovSeries) {
  const auto suite = lqr_build(1, 20);
  const auto& s = suite.train[0];
  const Eigen::MatrixXd S0 = second_moment(suite.init_states);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(s.n_a(), s.n_s());
  const auto c = lqr_state_cost(s, zero, S0);
  EXPECT_NEAR(c.cost, lyapunov_cost(s, zero, S0), 1e-6);
  EXPECT_NEAR(c.spectral_radius, 0.8, 1e-12);
  EXPECT_EQ(lqr_cost(s, Eigen::MatrixXd::Zero(s.n_a(), s.n_obs()), suite.init_states).cost, c.cost);
}

TEST(LqrCost, OracleGainIsMinimal) {
  const auto suite = lqr_build(2, 20);
  const auto& s = suite.train[0];
  const Eigen::MatrixXd S0 = second_moment(suite.init_states);
  const Eigen::MatrixXd K = lqr_gain(s, dare_solve(s).P);
  const double best = lqr_state_cost(s, K, S0).cost;
  EXPECT_EQ(best, lqr_oracle_cost(s, suite.init_states));
  EXPECT_NEAR(best, lyapunov_cost(s, K, S0), 1e-6);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double size : {1e-3, 1e-2, 0.1}) {
    const Eigen::MatrixXd D = Eigen::MatrixXd::NullaryExpr(K.rows(), K.cols(), [&] { return size * n(rng); });
    EXPECT_GT(lqr_state_cost(s, K + D, S0).cost, best);
  }
  EXPECT_GT(lqr_state_cost(s, Eigen::MatrixXd::Zero(20, 20), S0).cost, best);
}

TEST(LqrCost, HorizonTailIsNegligible) {
  const auto suite = lqr_build(4, 20);
  const auto& s = suite.train[0];
  const Eigen::MatrixXd S0 = second_moment(suite.init_states);
  const Eigen::MatrixXd K = lqr_gain(s, dare_solve(s).P);
  EXPECT_LT(std::abs(lqr_state_cost(s, K, S0, 400).cost - lqr_state_cost(s, K, S0, 200).cost), 1e-6);
}

TEST(LqrCost, UnstableLoopIsInfiniteNotACrash) {
  const auto s = plain_system(Eigen::MatrixXd::Identity(2, 2));
  const auto c = lqr_state_cost(s, 1e3 * Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2));
  EXPECT_TRUE(std::isinf(c.cost));
  EXPECT_GT(c.spectral_radius, 1.0);
  const auto g = lqr_state_cost_grad(s, 1e3 * Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2));
  EXPECT_TRUE(std::isinf(g.cost));
}

TEST(LqrCost, RejectsBadShapes) {
  const auto s = plain_system(Eigen::MatrixXd::Zero(2, 2));
  EXPECT_THROW(lqr_state_cost(s, Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Identity(2, 2)), InvalidArgument);
  EXPECT_THROW(lqr_state_cost(s, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2), 0), InvalidArgument);
  EXPECT_THROW(lqr_cost(s, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Ones(2, 3)), InvalidArgument);
}

// Relative error as used by the embedding gradient check.
double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

TEST(LqrGradient, MatchesCentralDifferences) {
  const auto suite = lqr_build(5, 6, 1, 4, 30);
  const auto& s = suite.train[0];
  const Eigen::MatrixXd S0 = second_moment(suite.init_states);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 0.1);
  const Eigen::MatrixXd K = Eigen::MatrixXd::NullaryExpr(4, 4, [&] { return n(rng); });
  const auto cg = lqr_state_cost_grad(s, K, S0, 50);
  EXPECT_NEAR(cg.cost, lqr_state_cost(s, K, S0, 50).cost, 1e-10 * cg.cost);
  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < K.size(); ++i) {
    Eigen::MatrixXd Kp = K, Km = K;
    Kp(i) += h;
    Km(i) -= h;
    const double fd = (lqr_state_cost(s, Kp, S0, 50).cost - lqr_state_cost(s, Km, S0, 50).cost) / (2 * h);
    worst = std::max(worst, rel_err(cg.grad(i), fd));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(LqrGradient, ChainRuleThroughTwoLayers) {
  const auto suite = lqr_build(7, 6, 1, 4, 30);
  const auto& s = suite.train[0];
  const Eigen::MatrixXd S0 = second_moment(suite.init_states);
  const Eigen::MatrixXd O = s.observation_matrix();
  std::mt19937_64 rng(8);
  LinearPolicy p = init_linear_policy(s.n_obs(), s.n_a(), 5, rng, 0.3);
  const auto cost = [&](const LinearPolicy& q) { return lqr_state_cost(s, q.K() * O, S0, 50).cost; };
  const Eigen::MatrixXd gK = lqr_state_cost_grad(s, p.K() * O, S0, 50).grad * O.transpose();
  const Eigen::MatrixXd g1 = p.K2.transpose() * gK, g2 = gK * p.K1.transpose();
  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.K1.size(); ++i) {
    LinearPolicy a = p, b = p;
    a.K1(i) += h;
    b.K1(i) -= h;
    worst = std::max(worst, rel_err(g1(i), (cost(a) - cost(b)) / (2 * h)));
  }
  for (Eigen::Index i = 0; i < p.K2.size(); ++i) {
    LinearPolicy a = p, b = p;
    a.K2(i) += h;
    b.K2(i) -= h;
    worst = std::max(worst, rel_err(g2(i), (cost(a) - cost(b)) / (2 * h)));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(LinearPolicyInit, SemiOrthogonalAndScaled) {
  std::mt19937_64 rng(9);
  const auto p = init_linear_policy(520, 20, 200, rng);
  EXPECT_EQ(p.K1.rows(), 200);
  EXPECT_EQ(p.K1.cols(), 520);
  EXPECT_EQ(p.K2.rows(), 20);
  EXPECT_EQ(p.K2.cols(), 200);
  EXPECT_LE((p.K1 * p.K1.transpose() - 1e-6 * Eigen::MatrixXd::Identity(200, 200)).norm(), 1e-15);
  EXPECT_LE((p.K2 * p.K2.transpose() - 1e-6 * Eigen::MatrixXd::Identity(20, 20)).norm(), 1e-15);
  std::mt19937_64 a(10), b(10);
  EXPECT_EQ(init_linear_policy(8, 2, 4, a).K1, init_linear_policy(8, 2, 4, b).K1);
  EXPECT_THROW(init_linear_policy(0, 2, 4, a), InvalidArgument);
}

TEST(GeneralizingPolicy, ZeroErrorOnUnseenDistractors) {
  const auto suite = lqr_build(11, 500);
  const auto& s = suite.train[0];
  const Eigen::MatrixXd K = generalizing_policy(s, dare_solve(s).P);
  EXPECT_EQ(K.rightCols(500).norm(), 0.0);
  const double oracle = lqr_oracle_cost(s, suite.init_states);
  const auto r = evaluate_generalization(K, suite.test, suite.init_states, oracle);
  EXPECT_EQ(r.errors.size(), 10u);
  EXPECT_LE(r.mean_error, 1e-6);
}

TEST(LqrMethods, NamesAndAliases) {
  for (auto m : {LqrMethod::overparam, LqrMethod::l1_sparse, LqrMethod::psm_aggregation})
    EXPECT_EQ(parse_lqr_method(to_string(m)), m);
  EXPECT_EQ(parse_lqr_method("psm"), LqrMethod::psm_aggregation);
  EXPECT_EQ(parse_lqr_method("l1"), LqrMethod::l1_sparse);
  EXPECT_EQ(parse_lqr_method("overparametrized"), LqrMethod::overparam);
  EXPECT_THROW(parse_lqr_method("ipo"), InvalidArgument);
}

TEST(LqrTrainConfig, JsonRoundTrip) {
  LqrTrainConfig c;
  c.steps = 17;
  c.seed = 5;
  const auto back = lqr_train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(LqrTrainConfig{}.hidden, 200);
  EXPECT_EQ(LqrTrainConfig{}.init_scale, 1e-3);
}

TEST(LqrResultsCsv, GroupsBySettingWithSampleStd) {
  std::vector<LqrRunRecord> runs;
  runs.push_back({LqrMethod::psm_aggregation, 500, 0, 0.1, 1.0, {}});
  runs.push_back({LqrMethod::overparam, 500, 0, 0.1, 20.0, {}});
  runs.push_back({LqrMethod::psm_aggregation, 500, 1, 0.2, 3.0, {}});
  EXPECT_EQ(lqr_results_csv(runs),
            "method,n_d,seeds,mean_error,std_error\n"
            "psm_aggregation,500,2,2,1.4142135623730951\n"
            "overparam,500,1,20,0\n");
  EXPECT_EQ(lqr_runs_csv({runs[0]}), "method,n_d,seed,train_error,test_error\npsm_aggregation,500,0,0.1,1\n");
}

// Small systems so the full training schedule runs in well under a second.
struct SmallSuite {
  LqrSuite suite = lqr_build(12, 8, 4, 4, 40);
  LqrTrainConfig config() const {
    LqrTrainConfig c;
    c.hidden = 12;
    c.seed = 3;
    return c;
  }
  double oracle() const { return lqr_oracle_cost(suite.train[0], suite.init_states); }
};

TEST(TrainLqr, SolvesTheTrainingSystems) {
  SmallSuite t;
  for (auto m : {LqrMethod::overparam, LqrMethod::l1_sparse, LqrMethod::psm_aggregation}) {
    const auto p = train_lqr_policy(m, t.suite.train, t.suite.init_states, t.config());
    for (const auto& env : t.suite.train) {
      EXPECT_LE(lqr_cost(env, p.K(), t.suite.init_states).cost, 1.01 * t.oracle()) << to_string(m);
    }
  }
}

TEST(TrainLqr, DeterministicForAFixedSeed) {
  SmallSuite t;
  const auto a = train_lqr_policy(LqrMethod::psm_aggregation, t.suite.train, t.suite.init_states, t.config());
  const auto b = train_lqr_policy(LqrMethod::psm_aggregation, t.suite.train, t.suite.init_states, t.config());
  EXPECT_EQ(a.K1, b.K1);
  EXPECT_EQ(a.K2, b.K2);
}

TEST(TrainLqr, AggregationAlignsTrainingDistractors) {
  SmallSuite t;
  const auto p = train_lqr_policy(LqrMethod::psm_aggregation, t.suite.train, t.suite.init_states, t.config());
  const auto& x = t.suite.train[0];
  const Eigen::MatrixXd K_d = p.K().rightCols(x.n_d());
  EXPECT_LE((K_d * (x.W_d - t.suite.train[1].W_d)).norm(), 1e-3);
}

TEST(TrainLqr, AggregatedPolicyIgnoresFreshDistractors) {
  SmallSuite t;
  const auto p = train_lqr_policy(LqrMethod::psm_aggregation, t.suite.train, t.suite.init_states, t.config());
  const Eigen::MatrixXd K = p.K();
  const auto& x = t.suite.train[0];
  std::mt19937_64 rng(13);
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    LqrSystem fresh = x;
    fresh.W_d = random_semi_orthogonal(x.n_d(), x.n_s(), rng);
    const Eigen::MatrixXd gap = K * (x.observation_matrix() - fresh.observation_matrix()) * t.suite.init_states;
    worst = std::max(worst, gap.colwise().norm().maxCoeff());
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(TrainLqr, RejectsBadInputs) {
  SmallSuite t;
  EXPECT_THROW(train_lqr_policy(LqrMethod::overparam, {t.suite.train[0]}, t.suite.init_states, t.config()),
               InvalidArgument);
  LqrTrainConfig c = t.config();
  c.learning_rate = 0.0;
  EXPECT_THROW(train_lqr_policy(LqrMethod::overparam, t.suite.train, t.suite.init_states, c), InvalidArgument);
}

TEST(TrainLqr, DivergenceIsReported) {
  SmallSuite t;
  LqrTrainConfig c = t.config();
  c.learning_rate = 1e6;
  c.init_scale = 1.0;
  EXPECT_THROW(train_lqr_policy(LqrMethod::overparam, t.suite.train, t.suite.init_states, c), DivergenceError);
}

}  // namespace
}  // namespace behavsim
