#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace behavsim {

using StateIndex = std::size_t;
using ActionIndex = std::size_t;

/// Finite MDP with dense reward and transition tables.
///
/// Invariants checked at construction:
///  - every transition row P(.|s,a) is a probability vector (entries >= 0,
///    sum = 1 within 1e-12);
///  - terminal states are absorbing self-loops with zero reward for all actions;
///  - 0 <= gamma < 1;
///  - start_states is non-empty and in range.
class TabularMdp {
 public:
  /// \param reward      n_states x n_actions
  /// \param transition  one n_states x n_states row-stochastic matrix per action
  TabularMdp(Eigen::MatrixXd reward, std::vector<Eigen::MatrixXd> transition, double gamma,
             std::vector<bool> terminal, std::vector<StateIndex> start_states,
             std::string name = {});

  std::size_t n_states() const { return static_cast<std::size_t>(reward_.rows()); }
  std::size_t n_actions() const { return static_cast<std::size_t>(reward_.cols()); }
  double gamma() const { return gamma_; }
  const std::string& name() const { return name_; }

  double reward(StateIndex s, ActionIndex a) const { return reward_(s, a); }
  const Eigen::MatrixXd& rewards() const { return reward_; }

  /// Row-stochastic matrix P(. | ., a).
  const Eigen::MatrixXd& transition(ActionIndex a) const { return transition_[a]; }
  /// Next-state distribution P(. | s, a).
  Eigen::VectorXd next_state_distribution(StateIndex s, ActionIndex a) const {
    return transition_[a].row(static_cast<Eigen::Index>(s)).transpose();
  }

  bool is_terminal(StateIndex s) const { return terminal_[s]; }
  const std::vector<bool>& terminal() const { return terminal_; }
  const std::vector<StateIndex>& start_states() const { return start_states_; }

 private:
  Eigen::MatrixXd reward_;
  std::vector<Eigen::MatrixXd> transition_;
  double gamma_;
  std::vector<bool> terminal_;
  std::vector<StateIndex> start_states_;
  std::string name_;
};

/// Stochastic policy: one action distribution per state (rows sum to 1).
class Policy {
 public:
  Policy() = default;
  explicit Policy(Eigen::MatrixXd probs);

  static Policy uniform(std::size_t n_states, std::size_t n_actions);
  static Policy deterministic(const std::vector<ActionIndex>& actions, std::size_t n_actions);

  std::size_t n_states() const { return static_cast<std::size_t>(probs_.rows()); }
  std::size_t n_actions() const { return static_cast<std::size_t>(probs_.cols()); }
  double prob(StateIndex s, ActionIndex a) const { return probs_(s, a); }
  Eigen::VectorXd row(StateIndex s) const { return probs_.row(static_cast<Eigen::Index>(s)).transpose(); }
  const Eigen::MatrixXd& probs() const { return probs_; }

  /// Action with the largest probability, lowest index on ties.
  ActionIndex greedy_action(StateIndex s) const;

  bool operator==(const Policy& other) const { return probs_ == other.probs_; }

 private:
  Eigen::MatrixXd probs_;
};

/// Throws InvalidArgument unless `policy` has one valid row per state of `mdp`.
void check_policy(const TabularMdp& mdp, const Policy& policy);

/// Expected one-step reward R^pi(s).
Eigen::VectorXd policy_reward(const TabularMdp& mdp, const Policy& policy);
/// State-to-state kernel P^pi(s' | s).
Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const Policy& policy);

struct ValueIterationResult {
  Eigen::VectorXd values;
  Policy policy;
  std::size_t iterations = 0;
  double residual = 0.0;
  /// Sup-norm Bellman residual after every sweep.
  std::vector<double> residual_trace;
};

/// Default sweep cap for value iteration and policy-divergence solves.
inline constexpr std::size_t kMaxSweeps = 10000;

/// Jacobi value iteration from V = 0 until the sup-norm Bellman residual is
/// at most `tol`. The greedy policy breaks ties towards the lowest action
/// index; actions whose Q-value is within 1e-9 * max(1, |Q_max|) of the
/// maximum count as tied. Terminal states receive the uniform row.
///
/// Throws ConvergenceError after kMaxSweeps sweeps.
ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = 1e-12);

/// Exact policy evaluation, (I - gamma P^pi) V = R^pi.
Eigen::VectorXd policy_evaluation(const TabularMdp& mdp, const Policy& policy);

struct Trajectory {
  std::vector<StateIndex> states;
  /// Policy rows at each visited state (not sampled one-hots).
  std::vector<Eigen::VectorXd> action_dists;
  std::string source_mdp;
  /// True when the rollout stopped at max_steps rather than at a terminal state.
  bool truncated = false;

  std::size_t size() const { return states.size(); }
};

/// Roll out `policy` from `start` for at most `max_steps` transitions, or until
/// a terminal state is entered. The terminal state, when reached, is the last
/// element of the trajectory. Sampling is reproducible from `seed`.
Trajectory rollout(const TabularMdp& mdp, const Policy& policy, StateIndex start,
                   std::size_t max_steps, std::uint64_t seed);

/// Drop a trailing terminal state, leaving only the states at which the agent acts.
Trajectory decision_states(const TabularMdp& mdp, Trajectory trajectory);

/// Mass (1 - eps) on the optimal action and eps spread uniformly over the others.
/// Rows that are not point masses (e.g. the uniform rows of terminal states)
/// are returned unchanged. Single-action policies are returned unchanged.
Policy epsilon_suboptimal(const Policy& optimal, double eps);

/// Solution v of v(y) = TV(pi_tilde(y), pi_star(y)) + gamma * sum_y' P^{pi_tilde}(y'|y) v(y'),
/// i.e. the expected discounted total-variation gap along pi_tilde's own trajectories.
/// Solved by Jacobi sweeps from zero to a sup residual of 1e-10.
Eigen::VectorXd discounted_policy_divergence(const TabularMdp& mdp, const Policy& pi_tilde,
                                             const Policy& pi_star);

struct Restriction {
  TabularMdp mdp;
  Policy policy;
  /// original state index of each restricted state
  std::vector<StateIndex> original;
};

/// Sub-MDP on the states reachable from `starts` under `policy`. Actions the
/// policy uses keep their transitions (they stay inside the reachable set by
/// construction); actions with zero probability are redirected to P^pi(.|s)
/// so the sub-MDP is closed. Quantities grounded in `policy` (R^pi, P^pi and
/// every metric built from them) are therefore unchanged on the kept states;
/// action-maximising quantities such as the bisimulation metric are not.
Restriction restrict_to_policy_support(const TabularMdp& mdp, const Policy& policy,
                                       const std::vector<StateIndex>& starts);

}  // namespace behavsim
