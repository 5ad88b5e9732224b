#include "behavsim/lqr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "behavsim/error.hpp"
#include "behavsim/io.hpp"

namespace behavsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd riccati_step(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                             const Eigen::MatrixXd& R, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd BtPA = B.transpose() * P * A;
  const Eigen::MatrixXd next = Q + A.transpose() * P * A - BtPA.transpose() * (R + B.transpose() * P * B).ldlt().solve(BtPA);
  return 0.5 * (next + next.transpose());
}

void check_shapes(const LqrSystem& s) {
  const auto n = s.A.rows();
  if (s.A.cols() != n || s.B.rows() != n || s.Q.rows() != n || s.Q.cols() != n || s.R.rows() != s.B.cols() ||
      s.R.cols() != s.B.cols() || s.W_c.rows() != n || s.W_c.cols() != n || s.W_d.cols() != n) {
    throw InvalidArgument("lqr: inconsistent system dimensions");
  }
}

double spectral_radius(const Eigen::MatrixXd& M) {
  if (!M.allFinite()) return kInf;
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void check_feedback(const LqrSystem& s, const Eigen::MatrixXd& K_s, const Eigen::MatrixXd& S0, int horizon) {
  check_shapes(s);
  if (K_s.rows() != s.B.cols() || K_s.cols() != s.A.rows()) throw InvalidArgument("lqr: K_s must be n_a x n_s");
  if (S0.rows() != s.A.rows() || S0.cols() != s.A.rows()) throw InvalidArgument("lqr: S0 must be n_s x n_s");
  if (horizon < 1) throw InvalidArgument("lqr: horizon must be at least 1");
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

double dare_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P) {
  return (riccati_step(A, B, Q, R, P) - P).norm();
}

DareSolution dare_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                        const Eigen::MatrixXd& R, double tol, std::size_t max_iterations) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || Q.rows() != A.rows() || Q.cols() != A.cols() ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw InvalidArgument("dare_solve: inconsistent dimensions");
  }
  DareSolution sol{Q, kInf, 0};
  for (; sol.iterations < max_iterations; ++sol.iterations) {
    const Eigen::MatrixXd next = riccati_step(A, B, Q, R, sol.P);
    sol.residual = (next - sol.P).norm();
    if (!std::isfinite(sol.residual)) break;
    if (sol.residual <= tol) {
      // Report the residual of the returned iterate.
      sol.P = next;
      sol.residual = dare_residual(A, B, Q, R, sol.P);
      ++sol.iterations;
      if (sol.residual <= tol) return sol;
      continue;
    }
    sol.P = next;
  }
  throw ConvergenceError("dare_solve did not converge", sol.residual, sol.iterations);
}

DareSolution dare_solve(const LqrSystem& system, double tol) {
  check_shapes(system);
  return dare_solve(system.A, system.B, system.Q, system.R, tol);
}

Eigen::MatrixXd lqr_gain(const LqrSystem& system, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd& B = system.B;
  return -(system.R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * system.A);
}

Eigen::MatrixXd second_moment(const Eigen::MatrixXd& init_states) {
  if (init_states.cols() == 0) throw InvalidArgument("lqr: empty initial-state batch");
  return init_states * init_states.transpose() / static_cast<double>(init_states.cols());
}

LqrCost lqr_state_cost(const LqrSystem& system, const Eigen::MatrixXd& K_s, const Eigen::MatrixXd& S0, int horizon) {
  check_feedback(system, K_s, S0, horizon);
  const Eigen::MatrixXd M = system.A + system.B * K_s;
  const Eigen::MatrixXd C = system.Q + K_s.transpose() * system.R * K_s;
  LqrCost out{0.0, spectral_radius(M)};
  Eigen::MatrixXd S = S0;
  for (int t = 0; t < horizon; ++t) {
    out.cost += 0.5 * (C.cwiseProduct(S)).sum();
    if (!std::isfinite(out.cost)) {
      out.cost = kInf;
      return out;
    }
    S = M * S * M.transpose();
  }
  return out;
}

LqrCost lqr_cost(const LqrSystem& system, const Eigen::MatrixXd& K, const Eigen::MatrixXd& init_states, int horizon) {
  if (K.cols() != system.n_obs()) throw InvalidArgument("lqr_cost: K must have one column per observation entry");
  return lqr_state_cost(system, K * system.observation_matrix(), second_moment(init_states), horizon);
}

CostGradient lqr_state_cost_grad(const LqrSystem& system, const Eigen::MatrixXd& K_s, const Eigen::MatrixXd& S0,
                                 int horizon) {
  check_feedback(system, K_s, S0, horizon);
  const Eigen::MatrixXd M = system.A + system.B * K_s;
  const Eigen::MatrixXd C = system.Q + K_s.transpose() * system.R * K_s;
  std::vector<Eigen::MatrixXd> S(static_cast<std::size_t>(horizon));
  S[0] = S0;
  for (int t = 1; t < horizon; ++t) S[static_cast<std::size_t>(t)] = M * S[static_cast<std::size_t>(t - 1)] * M.transpose();
  // J = tr(L_0 S_0) with L_t = C/2 + M' L_{t+1} M and L_T = 0.
  CostGradient out{0.0, Eigen::MatrixXd::Zero(K_s.rows(), K_s.cols())};
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(M.rows(), M.cols());
  Eigen::MatrixXd sum_S = Eigen::MatrixXd::Zero(M.rows(), M.cols());
  Eigen::MatrixXd sum_LMS = Eigen::MatrixXd::Zero(M.rows(), M.cols());
  for (int t = horizon; t-- > 0;) {
    const Eigen::MatrixXd& St = S[static_cast<std::size_t>(t)];
    sum_S += St;
    sum_LMS += L * M * St;
    L = 0.5 * C + M.transpose() * L * M;
  }
  out.cost = (L.cwiseProduct(S0)).sum();
  out.grad = system.R * K_s * sum_S + 2.0 * system.B.transpose() * sum_LMS;
  if (!std::isfinite(out.cost) || !out.grad.allFinite()) out.cost = kInf;
  return out;
}

double lqr_oracle_cost(const LqrSystem& system, const Eigen::MatrixXd& init_states, int horizon) {
  const DareSolution dare = dare_solve(system);
  return lqr_state_cost(system, lqr_gain(system, dare.P), second_moment(init_states), horizon).cost;
}

Eigen::MatrixXd generalizing_policy(const LqrSystem& system, const Eigen::MatrixXd& P) {
  check_shapes(system);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(system.n_a(), system.n_obs());
  // W_c is orthogonal, so W_c' (0.1 W_c s) / 0.1 = s.
  K.leftCols(system.n_s()) = lqr_gain(system, P) * system.W_c.transpose() / kLqrControlScale;
  return K;
}

LinearPolicy init_linear_policy(int n_obs, int n_a, int hidden, std::mt19937_64& rng, double scale) {
  if (n_obs < 1 || n_a < 1 || hidden < 1) throw InvalidArgument("init_linear_policy: dimensions must be positive");
  LinearPolicy p;
  p.K1 = scale * random_semi_orthogonal(hidden, n_obs, rng);
  p.K2 = scale * random_semi_orthogonal(n_a, hidden, rng);
  return p;
}

std::string_view to_string(LqrMethod method) {
  switch (method) {
    case LqrMethod::overparam: return "overparam";
    case LqrMethod::l1_sparse: return "l1_sparse";
    case LqrMethod::psm_aggregation: return "psm_aggregation";
  }
  return "overparam";
}

LqrMethod parse_lqr_method(std::string_view name) {
  if (name == "overparam" || name == "overparametrized") return LqrMethod::overparam;
  if (name == "l1_sparse" || name == "l1") return LqrMethod::l1_sparse;
  if (name == "psm_aggregation" || name == "psm") return LqrMethod::psm_aggregation;
  throw InvalidArgument("unknown LQR method '" + std::string(name) + "'");
}

nlohmann::json to_json(const LqrTrainConfig& c) {
  return {{"hidden", c.hidden},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"l1_weight", c.l1_weight},
          {"aggregation_weight", c.aggregation_weight},
          {"pairs_per_step", c.pairs_per_step},
          {"horizon", c.horizon},
          {"init_scale", c.init_scale},
          {"seed", c.seed}};
}

LqrTrainConfig lqr_train_config_from_json(const nlohmann::json& j, LqrTrainConfig c) {
  if (!j.is_object()) throw InvalidArgument("LQR training config must be a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("hidden", c.hidden);
  get("steps", c.steps);
  get("learning_rate", c.learning_rate);
  get("l1_weight", c.l1_weight);
  get("aggregation_weight", c.aggregation_weight);
  get("pairs_per_step", c.pairs_per_step);
  get("horizon", c.horizon);
  get("init_scale", c.init_scale);
  get("seed", c.seed);
  return c;
}

LinearPolicy train_lqr_policy(LqrMethod method, const std::vector<LqrSystem>& train_envs,
                              const Eigen::MatrixXd& init_states, const LqrTrainConfig& config) {
  if (train_envs.size() != 2) throw InvalidArgument("train_lqr_policy: exactly two training systems expected");
  if (config.hidden < 1 || config.steps < 0 || config.pairs_per_step < 1 || config.horizon < 1 ||
      !(config.learning_rate > 0.0) || !(config.l1_weight >= 0.0) || !(config.aggregation_weight >= 0.0)) {
    throw InvalidArgument("train_lqr_policy: invalid training config");
  }
  const LqrSystem& x = train_envs[0];
  const LqrSystem& y = train_envs[1];
  check_shapes(x);
  check_shapes(y);
  if (x.n_obs() != y.n_obs() || x.n_a() != y.n_a()) throw InvalidArgument("train_lqr_policy: systems differ in shape");

  std::mt19937_64 init_rng(config.seed);
  LinearPolicy p = init_linear_policy(x.n_obs(), x.n_a(), config.hidden, init_rng, config.init_scale);
  std::mt19937_64 pair_rng(config.seed ^ 0x5bd1e995ULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Eigen::MatrixXd S0 = second_moment(init_states);
  const std::vector<Eigen::MatrixXd> obs{x.observation_matrix(), y.observation_matrix()};
  const Eigen::MatrixXd obs_diff = obs[0] - obs[1];
  Eigen::MatrixXd shared(x.n_s(), config.pairs_per_step);

  for (int step = 0; step < config.steps; ++step) {
    const Eigen::MatrixXd K = p.K();
    Eigen::MatrixXd gK = Eigen::MatrixXd::Zero(K.rows(), K.cols());
    double objective = 0.0;
    for (std::size_t e = 0; e < 2; ++e) {
      const CostGradient cg = lqr_state_cost_grad(train_envs[e], K * obs[e], S0, config.horizon);
      objective += cg.cost;
      gK += cg.grad * obs[e].transpose();
    }
    if (method == LqrMethod::l1_sparse) {
      objective += config.l1_weight * K.cwiseAbs().sum();
      gK += config.l1_weight * K.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
    }
    Eigen::MatrixXd g1 = p.K2.transpose() * gK;
    const Eigen::MatrixXd g2 = gK * p.K1.transpose();
    if (method == LqrMethod::psm_aggregation) {
      // Both training systems observe the same sampled states; their hidden
      // representations are pulled together.
      for (Eigen::Index j = 0; j < shared.cols(); ++j) {
        for (Eigen::Index i = 0; i < shared.rows(); ++i) shared(i, j) = normal(pair_rng);
      }
      const Eigen::MatrixXd gap = (p.K1 * obs_diff) * shared;
      const double scale = config.aggregation_weight / static_cast<double>(shared.cols());
      objective += scale * gap.squaredNorm();
      g1 += (2.0 * scale * (gap * shared.transpose())) * obs_diff.transpose();
    }
    if (!std::isfinite(objective) || !g1.allFinite() || !g2.allFinite()) {
      throw DivergenceError("LQR training objective is not finite", static_cast<std::size_t>(step));
    }
    p.K1 -= config.learning_rate * g1;
    p.K2 -= config.learning_rate * g2;
  }
  return p;
}

GeneralizationReport evaluate_generalization(const Eigen::MatrixXd& K, const std::vector<LqrSystem>& test_envs,
                                             const Eigen::MatrixXd& init_states, double oracle_cost, int horizon) {
  if (test_envs.empty()) throw InvalidArgument("evaluate_generalization: no test systems");
  GeneralizationReport r;
  for (const auto& env : test_envs) r.errors.push_back(std::abs(lqr_cost(env, K, init_states, horizon).cost - oracle_cost));
  double sum = 0.0;
  for (double e : r.errors) sum += e;
  r.mean_error = sum / static_cast<double>(r.errors.size());
  return r;
}

std::vector<LqrRunRecord> run_lqr_experiment(const std::vector<LqrMethod>& methods, const std::vector<int>& n_ds,
                                             const std::vector<std::uint64_t>& seeds, const LqrTrainConfig& config,
                                             int n_test, int n_init) {
  std::vector<LqrRunRecord> out;
  for (int n_d : n_ds) {
    for (std::uint64_t seed : seeds) {
      const LqrSuite suite = lqr_build(seed, n_d, n_test, 20, n_init);
      const double oracle = lqr_oracle_cost(suite.train.front(), suite.init_states, config.horizon);
      for (LqrMethod m : methods) {
        LqrTrainConfig c = config;
        c.seed = seed;
        const LinearPolicy p = train_lqr_policy(m, suite.train, suite.init_states, c);
        const Eigen::MatrixXd K = p.K();
        LqrRunRecord rec{m, n_d, seed, 0.0, 0.0, p};
        rec.train_error = evaluate_generalization(K, suite.train, suite.init_states, oracle, c.horizon).mean_error;
        rec.test_error = evaluate_generalization(K, suite.test, suite.init_states, oracle, c.horizon).mean_error;
        out.push_back(rec);
      }
    }
  }
  return out;
}

std::string lqr_results_csv(const std::vector<LqrRunRecord>& records) {
  // Groups keep first-appearance order.
  std::vector<std::pair<LqrMethod, int>> keys;
  std::map<std::pair<LqrMethod, int>, std::vector<double>> errors;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.method, r.n_d);
    if (!errors.count(key)) keys.push_back(key);
    errors[key].push_back(r.test_error);
  }
  std::ostringstream out;
  out << "method,n_d,seeds,mean_error,std_error\n";
  for (const auto& key : keys) {
    const auto& v = errors[key];
    double mean = 0.0;
    for (double e : v) mean += e;
    mean /= static_cast<double>(v.size());
    out << to_string(key.first) << ',' << key.second << ',' << v.size() << ',' << format_double(mean) << ','
        << format_double(sample_std(v, mean)) << '\n';
  }
  return out.str();
}

std::string lqr_runs_csv(const std::vector<LqrRunRecord>& records) {
  std::ostringstream out;
  out << "method,n_d,seed,train_error,test_error\n";
  for (const auto& r : records) {
    out << to_string(r.method) << ',' << r.n_d << ',' << r.seed << ',' << format_double(r.train_error) << ','
        << format_double(r.test_error) << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const LinearPolicy& policy) {
  return {{"K1", matrix_to_json(policy.K1)}, {"K2", matrix_to_json(policy.K2)}, {"K", matrix_to_json(policy.K())}};
}

}  // namespace behavsim
