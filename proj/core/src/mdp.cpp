#include "behavsim/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

#include "behavsim/error.hpp"
#include "behavsim/metrics.hpp"

namespace behavsim {

namespace {

constexpr double kRowSumTol = 1e-12;

void check_distribution(const Eigen::Ref<const Eigen::VectorXd>& p, const std::string& what) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !std::isfinite(p[i])) {
      throw InvalidArgument(what + ": entry " + std::to_string(i) + " is negative or not finite");
    }
  }
  if (std::abs(p.sum() - 1.0) > kRowSumTol) {
    std::ostringstream os;
    os.precision(17);
    os << what << ": entries sum to " << p.sum() << ", expected 1";
    throw InvalidArgument(os.str());
  }
}

}  // namespace

TabularMdp::TabularMdp(Eigen::MatrixXd reward, std::vector<Eigen::MatrixXd> transition,
                       double gamma, std::vector<bool> terminal,
                       std::vector<StateIndex> start_states, std::string name)
    : reward_(std::move(reward)),
      transition_(std::move(transition)),
      gamma_(gamma),
      terminal_(std::move(terminal)),
      start_states_(std::move(start_states)),
      name_(std::move(name)) {
  const auto n = n_states();
  const auto n_act = n_actions();
  if (n == 0 || n_act == 0) throw InvalidArgument("MDP needs at least one state and one action");
  if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  if (transition_.size() != n_act) {
    throw InvalidArgument("transition: expected one matrix per action");
  }
  if (terminal_.size() != n) throw InvalidArgument("terminal: expected one flag per state");
  if (!reward_.allFinite()) throw InvalidArgument("reward: entries must be finite");
  for (std::size_t a = 0; a < n_act; ++a) {
    const auto& p = transition_[a];
    if (static_cast<std::size_t>(p.rows()) != n || static_cast<std::size_t>(p.cols()) != n) {
      throw InvalidArgument("transition[" + std::to_string(a) + "]: expected n_states x n_states");
    }
    for (std::size_t s = 0; s < n; ++s) {
      check_distribution(p.row(static_cast<Eigen::Index>(s)).transpose(),
                         "transition[state " + std::to_string(s) + "][action " +
                             std::to_string(a) + "]");
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (!terminal_[s]) continue;
    for (std::size_t a = 0; a < n_act; ++a) {
      if (transition_[a](s, s) != 1.0) {
        throw InvalidArgument("terminal state " + std::to_string(s) + " is not absorbing");
      }
      if (reward_(s, a) != 0.0) {
        throw InvalidArgument("terminal state " + std::to_string(s) + " has nonzero reward");
      }
    }
  }
  if (start_states_.empty()) throw InvalidArgument("start_states must be non-empty");
  for (auto s : start_states_) {
    if (s >= n) throw InvalidArgument("start state " + std::to_string(s) + " out of range");
  }
}

Policy::Policy(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
  if (probs_.rows() == 0 || probs_.cols() == 0) throw InvalidArgument("policy must be non-empty");
  for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
    check_distribution(probs_.row(s).transpose(), "policy[state " + std::to_string(s) + "]");
  }
}

Policy Policy::uniform(std::size_t n_states, std::size_t n_actions) {
  return Policy(Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n_states),
                                          static_cast<Eigen::Index>(n_actions),
                                          1.0 / static_cast<double>(n_actions)));
}

Policy Policy::deterministic(const std::vector<ActionIndex>& actions, std::size_t n_actions) {
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()),
                                                static_cast<Eigen::Index>(n_actions));
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= n_actions) throw InvalidArgument("action index out of range");
    probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(actions[s])) = 1.0;
  }
  return Policy(std::move(probs));
}

ActionIndex Policy::greedy_action(StateIndex s) const {
  Eigen::Index best = 0;
  probs_.row(static_cast<Eigen::Index>(s)).maxCoeff(&best);
  return static_cast<ActionIndex>(best);
}

void check_policy(const TabularMdp& mdp, const Policy& policy) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions()) {
    throw InvalidArgument("policy shape does not match the MDP");
  }
}

Eigen::VectorXd policy_reward(const TabularMdp& mdp, const Policy& policy) {
  check_policy(mdp, policy);
  return mdp.rewards().cwiseProduct(policy.probs()).rowwise().sum();
}

Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const Policy& policy) {
  check_policy(mdp, policy);
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
    kernel += policy.probs().col(static_cast<Eigen::Index>(a)).asDiagonal() * mdp.transition(a);
  }
  return kernel;
}

namespace {

Eigen::MatrixXd q_values(const TabularMdp& mdp, const Eigen::VectorXd& values) {
  Eigen::MatrixXd q(mdp.rewards().rows(), mdp.rewards().cols());
  for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
    const auto col = static_cast<Eigen::Index>(a);
    q.col(col) = mdp.rewards().col(col) + mdp.gamma() * (mdp.transition(a) * values);
  }
  return q;
}

}  // namespace

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol) {
  if (!(tol > 0.0)) throw InvalidArgument("value_iteration: tol must be positive");
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  ValueIterationResult result;
  Eigen::VectorXd values = Eigen::VectorXd::Zero(n);
  for (std::size_t sweep = 1;; ++sweep) {
    const Eigen::VectorXd next = q_values(mdp, values).rowwise().maxCoeff();
    const double residual = (next - values).cwiseAbs().maxCoeff();
    values = next;
    result.residual_trace.push_back(residual);
    if (residual <= tol) {
      result.iterations = sweep;
      result.residual = residual;
      break;
    }
    if (sweep >= kMaxSweeps) {
      throw ConvergenceError("value_iteration did not converge; the MDP is likely invalid",
                             residual, sweep);
    }
  }

  const Eigen::MatrixXd q = q_values(mdp, values);
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(n, q.cols());
  for (Eigen::Index s = 0; s < n; ++s) {
    if (mdp.is_terminal(static_cast<StateIndex>(s))) {
      probs.row(s).setConstant(1.0 / static_cast<double>(q.cols()));
      continue;
    }
    const double best = q.row(s).maxCoeff();
    const double tie = 1e-9 * std::max(1.0, std::abs(best));
    for (Eigen::Index a = 0; a < q.cols(); ++a) {
      if (q(s, a) >= best - tie) {
        probs(s, a) = 1.0;
        break;
      }
    }
  }
  result.values = std::move(values);
  result.policy = Policy(std::move(probs));
  return result;
}

Eigen::VectorXd policy_evaluation(const TabularMdp& mdp, const Policy& policy) {
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(n, n) - mdp.gamma() * policy_transition(mdp, policy);
  return system.partialPivLu().solve(policy_reward(mdp, policy));
}

Trajectory rollout(const TabularMdp& mdp, const Policy& policy, StateIndex start,
                   std::size_t max_steps, std::uint64_t seed) {
  check_policy(mdp, policy);
  if (start >= mdp.n_states()) throw InvalidArgument("rollout: start state out of range");
  if (max_steps < 1) throw InvalidArgument("rollout: max_steps must be at least 1");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Inverse-CDF sampling keeps results identical across standard libraries.
  auto sample = [&](const Eigen::VectorXd& p) {
    const double u = unit(rng);
    double acc = 0.0;
    Eigen::Index last_positive = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p[i] <= 0.0) continue;
      last_positive = i;
      acc += p[i];
      if (u < acc) return static_cast<std::size_t>(i);
    }
    return static_cast<std::size_t>(last_positive);
  };

  Trajectory traj;
  traj.source_mdp = mdp.name();
  StateIndex state = start;
  for (std::size_t step = 0;; ++step) {
    traj.states.push_back(state);
    traj.action_dists.push_back(policy.row(state));
    if (mdp.is_terminal(state)) break;
    if (step == max_steps) {
      traj.truncated = true;
      break;
    }
    const ActionIndex action = sample(policy.row(state));
    state = sample(mdp.next_state_distribution(state, action));
  }
  return traj;
}

Trajectory decision_states(const TabularMdp& mdp, Trajectory trajectory) {
  if (!trajectory.states.empty() && mdp.is_terminal(trajectory.states.back())) {
    trajectory.states.pop_back();
    trajectory.action_dists.pop_back();
  }
  return trajectory;
}

Policy epsilon_suboptimal(const Policy& optimal, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidArgument("epsilon_suboptimal: eps must lie in [0, 1]");
  if (eps == 0.0 || optimal.n_actions() < 2) return optimal;
  Eigen::MatrixXd probs = optimal.probs();
  const double spread = eps / static_cast<double>(optimal.n_actions() - 1);
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    Eigen::Index best = 0;
    if (probs.row(s).maxCoeff(&best) != 1.0) continue;
    probs.row(s).setConstant(spread);
    probs(s, best) = 1.0 - eps;
  }
  return Policy(std::move(probs));
}

Eigen::VectorXd discounted_policy_divergence(const TabularMdp& mdp, const Policy& pi_tilde,
                                             const Policy& pi_star) {
  check_policy(mdp, pi_tilde);
  check_policy(mdp, pi_star);
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  Eigen::VectorXd gap(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    gap[s] = tv_distance(pi_tilde.row(static_cast<StateIndex>(s)), pi_star.row(static_cast<StateIndex>(s)));
  }
  const Eigen::MatrixXd kernel = mdp.gamma() * policy_transition(mdp, pi_tilde);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  for (std::size_t sweep = 1;; ++sweep) {
    Eigen::VectorXd next = gap + kernel * v;
    const double residual = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (residual <= 1e-10) break;
    if (sweep >= kMaxSweeps) {
      throw ConvergenceError("discounted_policy_divergence did not converge", residual, sweep);
    }
  }
  return v;
}

Restriction restrict_to_policy_support(const TabularMdp& mdp, const Policy& policy,
                                       const std::vector<StateIndex>& starts) {
  check_policy(mdp, policy);
  const Eigen::MatrixXd kernel = policy_transition(mdp, policy);
  const auto n = mdp.n_states();
  std::vector<long> index(n, -1);
  std::vector<StateIndex> order;
  std::deque<StateIndex> frontier;
  for (auto s : starts) {
    if (s >= n) throw InvalidArgument("restrict_to_policy_support: start out of range");
    if (index[s] < 0) {
      index[s] = static_cast<long>(order.size());
      order.push_back(s);
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const auto s = frontier.front();
    frontier.pop_front();
    for (std::size_t t = 0; t < n; ++t) {
      if (kernel(s, t) > 0.0 && index[t] < 0) {
        index[t] = static_cast<long>(order.size());
        order.push_back(t);
        frontier.push_back(t);
      }
    }
  }

  const auto m = static_cast<Eigen::Index>(order.size());
  const auto n_act = mdp.n_actions();
  Eigen::MatrixXd reward(m, static_cast<Eigen::Index>(n_act));
  Eigen::MatrixXd probs(m, static_cast<Eigen::Index>(n_act));
  std::vector<Eigen::MatrixXd> transition(n_act, Eigen::MatrixXd::Zero(m, m));
  std::vector<bool> terminal(order.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto s = order[static_cast<std::size_t>(i)];
    terminal[static_cast<std::size_t>(i)] = mdp.is_terminal(s);
    for (std::size_t a = 0; a < n_act; ++a) {
      const auto col = static_cast<Eigen::Index>(a);
      reward(i, col) = mdp.reward(s, a);
      probs(i, col) = policy.prob(s, a);
      const bool used = policy.prob(s, a) > 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double p = used ? mdp.transition(a)(s, t) : kernel(s, t);
        if (p > 0.0) transition[a](i, index[t]) = p;
      }
    }
  }
  std::vector<StateIndex> new_starts;
  for (auto s : starts) new_starts.push_back(static_cast<StateIndex>(index[s]));
  new_starts.erase(std::unique(new_starts.begin(), new_starts.end()), new_starts.end());
  return Restriction{TabularMdp(std::move(reward), std::move(transition), mdp.gamma(),
                                std::move(terminal), std::move(new_starts), mdp.name()),
                     Policy(std::move(probs)), std::move(order)};
}

}  // namespace behavsim
