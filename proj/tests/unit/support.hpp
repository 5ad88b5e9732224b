#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "behavsim/mdp.hpp"

namespace behavsim::testing {

// Deterministic chain 0 -> 1 -> ... -> n-1 (terminal). Every action moves
// right; action 0 earns `reward`, the others nothing.
inline TabularMdp chain_mdp(std::size_t n, std::size_t n_actions, double gamma, double reward = 1.0) {
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_actions));
  std::vector<Eigen::MatrixXd> P(n_actions, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                                   static_cast<Eigen::Index>(n)));
  std::vector<bool> terminal(n, false);
  terminal[n - 1] = true;
  for (std::size_t s = 0; s < n; ++s) {
    const auto i = static_cast<Eigen::Index>(s);
    const auto next = static_cast<Eigen::Index>(std::min(s + 1, n - 1));
    for (std::size_t a = 0; a < n_actions; ++a) {
      if (terminal[s]) {
        P[a](i, i) = 1.0;
      } else {
        P[a](i, next) = 1.0;
        if (a == 0) R(i, 0) = reward;
      }
    }
  }
  return TabularMdp(R, P, gamma, terminal, {0}, "chain");
}

// One non-terminal state with a zero-reward self-loop under every action.
inline TabularMdp self_loop_mdp(std::size_t n_actions, double gamma) {
  std::vector<Eigen::MatrixXd> P(n_actions, Eigen::MatrixXd::Ones(1, 1));
  return TabularMdp(Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(n_actions)), P, gamma, {false}, {0},
                    "loop");
}

inline Eigen::VectorXd random_distribution(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::VectorXd p(static_cast<Eigen::Index>(n));
  for (auto& x : p) x = u(rng);
  return p / p.sum();
}

inline Policy random_policy(std::mt19937_64& rng, std::size_t n_states, std::size_t n_actions) {
  Eigen::MatrixXd probs(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions));
  for (std::size_t s = 0; s < n_states; ++s)
    probs.row(static_cast<Eigen::Index>(s)) = random_distribution(rng, n_actions).transpose();
  return Policy(probs);
}

// W1 on the real line: integral of |F_p - F_q| over sorted support points.
inline double w1_cdf_oracle(const std::vector<double>& xp, const Eigen::VectorXd& p, const std::vector<double>& xq,
                            const Eigen::VectorXd& q) {
  std::vector<double> pts = xp;
  pts.insert(pts.end(), xq.begin(), xq.end());
  std::sort(pts.begin(), pts.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    double Fp = 0.0, Fq = 0.0;
    for (std::size_t i = 0; i < xp.size(); ++i)
      if (xp[i] <= pts[k]) Fp += p[static_cast<Eigen::Index>(i)];
    for (std::size_t j = 0; j < xq.size(); ++j)
      if (xq[j] <= pts[k]) Fq += q[static_cast<Eigen::Index>(j)];
    total += std::abs(Fp - Fq) * (pts[k + 1] - pts[k]);
  }
  return total;
}

}  // namespace behavsim::testing
