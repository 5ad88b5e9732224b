#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "behavsim/mdp.hpp"
#include "behavsim/metrics.hpp"

namespace behavsim {

/// For each column y, the table row with the smallest distance (lowest row on ties).
std::vector<std::size_t> nearest_neighbor_match(const PairwiseMetricTable& table);

/// pi_tilde(y) = piX(matching[y]). `matching` holds X state indices, one per Y state.
Policy transfer_policy(const Policy& piX, const std::vector<StateIndex>& matching);

struct TransferEntry {
  StateIndex y = 0;
  StateIndex matched_x = 0;
  double distance = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
};

struct TransferReport {
  double gamma = 0.0;
  double tol = 0.0;
  MetricKind metric_kind = MetricKind::psm;
  DistKind dist_kind = DistKind::tv;
  std::vector<TransferEntry> entries;
  /// max(lhs - rhs) over states; <= tol when the bound holds.
  double max_violation = 0.0;
  std::size_t violations = 0;

  bool passed() const { return violations == 0; }
};

/// Checks E[sum_t gamma^t TV(pi_tilde, pi*_Y)] <= (1+gamma)/(1-gamma) d*(x_y, y)
/// statewise, with the left side from discounted_policy_divergence.
/// `matching` gives a table row position per Y state.
TransferReport verify_transfer_bound(const TabularMdp& mdpY, const Policy& pi_star_Y, const Policy& pi_tilde,
                                     const PairwiseMetricTable& table, const std::vector<std::size_t>& matching,
                                     double tol = 1e-9);

struct ApproxBoundReport {
  double eps = 0.0;
  double tol = 0.0;
  /// min over entries of rhs - |d* - d_hat|.
  double min_slack = 0.0;
  double mean_gap = 0.0;
  std::size_t entries = 0;
  std::size_t violations = 0;

  bool passed() const { return violations == 0; }
};

/// |d*(x,y) - d_hat(x,y)| <= d((x,pi*),(x,pi_hat)) + d((y,pi_hat),(y,pi*)) entrywise,
/// every term from generalized_psm solved to `solve_tol`.
ApproxBoundReport verify_psm_approx_bound(const TabularMdp& mdpX, const TabularMdp& mdpY,
                                          const Policy& pi_star_X, const Policy& pi_star_Y,
                                          const Policy& pi_hat_X, const Policy& pi_hat_Y,
                                          double tol = 1e-9, double solve_tol = 1e-12);

struct CounterexampleReport {
  double r_x = 0.0;
  double r_y = 0.0;
  double gamma = 0.0;
  double bisim_x0_y0 = 0.0;
  double bisim_x0_y1 = 0.0;
  double pi_bisim_x0_y0 = 0.0;
  double pi_bisim_x0_y1 = 0.0;
  double psm_x0_y0 = 0.0;
  double psm_x0_y1 = 0.0;
  bool passed = false;
};

/// Cake MDPs with rewards r_x and r_y. Requires r_y > (1 + 1/gamma) r_x.
CounterexampleReport verify_bisim_counterexample(double r_x, double r_y, double gamma, double tol = 1e-9);

struct FuzzConfig {
  std::uint64_t seed = 0;
  std::size_t pairs = 200;
  std::size_t min_states = 2;
  std::size_t max_states = 8;
  std::size_t min_actions = 2;
  std::size_t max_actions = 3;
  std::vector<double> gammas{0.5, 0.9, 0.99};
  double terminal_probability = 0.2;
  std::size_t approx_mdps = 100;
  std::vector<double> approx_eps{0.4, 0.2, 0.1, 0.05};
  double tol = 1e-9;
  double solve_tol = 1e-12;
};

FuzzConfig fuzz_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FuzzConfig& config);

/// Random MDP; `stochastic` spreads each transition over a random support,
/// otherwise every transition is a point mass. Rewards are uniform in [0, 1).
TabularMdp random_mdp(std::mt19937_64& rng, std::size_t n_states, std::size_t n_actions, double gamma,
                      bool stochastic, double terminal_probability);

struct FuzzSummary {
  std::string check;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst = 0.0;
  /// Mean |d* - d_hat| per eps (approximation check only), in config order.
  std::vector<double> mean_gap_by_eps;
  bool gap_monotone = true;
  /// Replayable failing instances.
  nlohmann::json failing = nlohmann::json::array();

  bool passed() const { return failures == 0 && gap_monotone; }
};

/// Pairs of random MDPs sharing gamma and action count, alternating
/// deterministic and stochastic dynamics.
FuzzSummary fuzz_transfer_bound(const FuzzConfig& config);
/// Random MDP pairs with eps-suboptimal perturbations of the optimal policies.
/// When `eps_override` is non-empty it replaces config.approx_eps.
FuzzSummary fuzz_psm_approx(const FuzzConfig& config, const std::vector<double>& eps_override = {});

nlohmann::json to_json(const TransferReport& report);
nlohmann::json to_json(const ApproxBoundReport& report);
nlohmann::json to_json(const CounterexampleReport& report);
nlohmann::json to_json(const FuzzSummary& summary);

}  // namespace behavsim
