#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "behavsim/envs/lqr_system.hpp"

namespace behavsim {

struct DareSolution {
  Eigen::MatrixXd P;
  double residual = 0.0;  ///< Frobenius norm of the Riccati residual
  std::size_t iterations = 0;
};

/// Frobenius norm of Q + A'PA - A'PB (R + B'PB)^-1 B'PA - P.
double dare_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

/// Riccati fixed-point iteration from P = Q until the residual is <= tol.
/// Throws ConvergenceError after max_iterations.
DareSolution dare_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                        const Eigen::MatrixXd& R, double tol = 1e-10, std::size_t max_iterations = 100000);
DareSolution dare_solve(const LqrSystem& system, double tol = 1e-10);

/// State feedback a = K s minimizing the infinite-horizon cost for Riccati solution P.
Eigen::MatrixXd lqr_gain(const LqrSystem& system, const Eigen::MatrixXd& P);

inline constexpr int kLqrHorizon = 200;

/// Mean of s s' over the columns of `init_states`.
Eigen::MatrixXd second_moment(const Eigen::MatrixXd& init_states);

struct LqrCost {
  /// 1/2 mean over the batch of sum_{t<T} s'Qs + a'Ra; +inf when the rollout overflows.
  double cost = 0.0;
  /// Spectral radius of the closed loop A + B K_s.
  double spectral_radius = 0.0;
};

/// Cost of the state-feedback policy a = K_s s from initial second moment S0.
LqrCost lqr_state_cost(const LqrSystem& system, const Eigen::MatrixXd& K_s, const Eigen::MatrixXd& S0,
                       int horizon = kLqrHorizon);
/// Cost of a = K o with o = observation_matrix() s, averaged over `init_states` columns.
LqrCost lqr_cost(const LqrSystem& system, const Eigen::MatrixXd& K, const Eigen::MatrixXd& init_states,
                 int horizon = kLqrHorizon);

struct CostGradient {
  double cost = 0.0;
  Eigen::MatrixXd grad;  ///< derivative of the truncated cost w.r.t. K_s
};

/// Truncated cost and its exact gradient (adjoint recursion) w.r.t. K_s.
CostGradient lqr_state_cost_grad(const LqrSystem& system, const Eigen::MatrixXd& K_s, const Eigen::MatrixXd& S0,
                                 int horizon = kLqrHorizon);

/// Truncated cost of the Riccati gain acting on the true state.
double lqr_oracle_cost(const LqrSystem& system, const Eigen::MatrixXd& init_states, int horizon = kLqrHorizon);

/// Observation-feedback matrix that recovers the oracle gain from the W_c block
/// alone and ignores the distractors.
Eigen::MatrixXd generalizing_policy(const LqrSystem& system, const Eigen::MatrixXd& P);

/// Two-layer linear policy a = K2 K1 o.
struct LinearPolicy {
  Eigen::MatrixXd K1;  ///< hidden x n_obs
  Eigen::MatrixXd K2;  ///< n_a x hidden

  Eigen::MatrixXd K() const { return K2 * K1; }
};

/// Semi-orthogonal K1 and K2 scaled by `scale`.
LinearPolicy init_linear_policy(int n_obs, int n_a, int hidden, std::mt19937_64& rng, double scale = 1e-3);

enum class LqrMethod { overparam, l1_sparse, psm_aggregation };

std::string_view to_string(LqrMethod method);
/// Also accepts "psm", "l1" and "overparametrized".
LqrMethod parse_lqr_method(std::string_view name);

struct LqrTrainConfig {
  int hidden = 200;
  int steps = 3000;
  double learning_rate = 0.01;
  double l1_weight = 1e-3;
  double aggregation_weight = 10.0;
  int pairs_per_step = 256;
  int horizon = kLqrHorizon;
  double init_scale = 1e-3;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const LqrTrainConfig& config);
LqrTrainConfig lqr_train_config_from_json(const nlohmann::json& j, LqrTrainConfig base = {});

/// Full-batch gradient descent on the summed truncated cost of the training
/// systems plus the method's regularizer. Throws DivergenceError on a
/// non-finite objective.
LinearPolicy train_lqr_policy(LqrMethod method, const std::vector<LqrSystem>& train_envs,
                              const Eigen::MatrixXd& init_states, const LqrTrainConfig& config);

struct GeneralizationReport {
  std::vector<double> errors;  ///< |cost - oracle| per test system
  double mean_error = 0.0;
};

/// Absolute cost error of the observation policy K against `oracle_cost` on every test system.
GeneralizationReport evaluate_generalization(const Eigen::MatrixXd& K, const std::vector<LqrSystem>& test_envs,
                                             const Eigen::MatrixXd& init_states, double oracle_cost,
                                             int horizon = kLqrHorizon);

struct LqrRunRecord {
  LqrMethod method = LqrMethod::overparam;
  int n_d = 0;
  std::uint64_t seed = 0;
  double train_error = 0.0;  ///< mean |cost - oracle| over the training systems
  double test_error = 0.0;
  LinearPolicy policy;
};

/// One suite per (n_d, seed); every method is trained on it.
std::vector<LqrRunRecord> run_lqr_experiment(const std::vector<LqrMethod>& methods, const std::vector<int>& n_ds,
                                             const std::vector<std::uint64_t>& seeds, const LqrTrainConfig& config,
                                             int n_test = 10, int n_init = 100);

/// Columns method,n_d,seeds,mean_error,std_error (sample std over seeds).
std::string lqr_results_csv(const std::vector<LqrRunRecord>& records);
/// One row per run: method,n_d,seed,train_error,test_error.
std::string lqr_runs_csv(const std::vector<LqrRunRecord>& records);

nlohmann::json to_json(const LinearPolicy& policy);

}  // namespace behavsim
