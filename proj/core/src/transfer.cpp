#include "behavsim/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "behavsim/envs/cake.hpp"
#include "behavsim/error.hpp"
#include "behavsim/io.hpp"

namespace behavsim {

std::vector<std::size_t> nearest_neighbor_match(const PairwiseMetricTable& table) {
  if (table.values.size() == 0) throw InvalidArgument("nearest_neighbor_match: empty table");
  std::vector<std::size_t> match(static_cast<std::size_t>(table.values.cols()));
  for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < table.values.rows(); ++i) {
      if (table.values(i, j) < table.values(best, j)) best = i;
    }
    match[static_cast<std::size_t>(j)] = static_cast<std::size_t>(best);
  }
  return match;
}

Policy transfer_policy(const Policy& piX, const std::vector<StateIndex>& matching) {
  if (matching.empty()) throw InvalidArgument("transfer_policy: empty matching");
  Eigen::MatrixXd probs(static_cast<Eigen::Index>(matching.size()), static_cast<Eigen::Index>(piX.n_actions()));
  for (std::size_t y = 0; y < matching.size(); ++y) {
    if (matching[y] >= piX.n_states()) {
      throw InvalidArgument("transfer_policy: state " + std::to_string(y) + " is matched outside X");
    }
    probs.row(static_cast<Eigen::Index>(y)) = piX.probs().row(static_cast<Eigen::Index>(matching[y]));
  }
  return Policy(std::move(probs));
}

TransferReport verify_transfer_bound(const TabularMdp& mdpY, const Policy& pi_star_Y, const Policy& pi_tilde,
                                     const PairwiseMetricTable& table, const std::vector<std::size_t>& matching,
                                     double tol) {
  const auto n = mdpY.n_states();
  if (table.dist_kind != DistKind::tv) throw InvalidArgument("verify_transfer_bound: needs a TV-based table");
  if (table.gamma != mdpY.gamma()) throw InvalidArgument("verify_transfer_bound: gamma mismatch");
  if (static_cast<std::size_t>(table.values.cols()) != n || matching.size() != n) {
    throw InvalidArgument("verify_transfer_bound: table columns and matching must cover every Y state");
  }
  const Eigen::VectorXd lhs = discounted_policy_divergence(mdpY, pi_tilde, pi_star_Y);
  const double g = mdpY.gamma();
  const double factor = (1.0 + g) / (1.0 - g);
  TransferReport report;
  report.gamma = g;
  report.tol = tol;
  report.metric_kind = table.metric_kind;
  report.dist_kind = table.dist_kind;
  report.max_violation = -std::numeric_limits<double>::infinity();
  for (StateIndex y = 0; y < n; ++y) {
    if (matching[y] >= static_cast<std::size_t>(table.values.rows())) {
      throw InvalidArgument("verify_transfer_bound: matching refers to a missing table row");
    }
    TransferEntry e;
    e.y = y;
    e.matched_x = table.rows[matching[y]];
    e.distance = table(matching[y], y);
    e.lhs = lhs[static_cast<Eigen::Index>(y)];
    e.rhs = factor * e.distance;
    e.slack = e.rhs - e.lhs;
    report.max_violation = std::max(report.max_violation, -e.slack);
    if (-e.slack > tol) ++report.violations;
    report.entries.push_back(e);
  }
  return report;
}

ApproxBoundReport verify_psm_approx_bound(const TabularMdp& mdpX, const TabularMdp& mdpY,
                                          const Policy& pi_star_X, const Policy& pi_star_Y,
                                          const Policy& pi_hat_X, const Policy& pi_hat_Y, double tol,
                                          double solve_tol) {
  FixedPointOptions opts;
  opts.tol = solve_tol;
  const auto d_star = generalized_psm(mdpX, pi_star_X, mdpY, pi_star_Y, DistKind::tv, opts);
  const auto d_hat = generalized_psm(mdpX, pi_hat_X, mdpY, pi_hat_Y, DistKind::tv, opts);
  const auto corr_x = generalized_psm(mdpX, pi_star_X, mdpX, pi_hat_X, DistKind::tv, opts);
  const auto corr_y = generalized_psm(mdpY, pi_hat_Y, mdpY, pi_star_Y, DistKind::tv, opts);
  ApproxBoundReport report;
  report.tol = tol;
  report.min_slack = std::numeric_limits<double>::infinity();
  double gap_sum = 0.0;
  for (Eigen::Index x = 0; x < d_star.values.rows(); ++x) {
    for (Eigen::Index y = 0; y < d_star.values.cols(); ++y) {
      const double gap = std::abs(d_star.values(x, y) - d_hat.values(x, y));
      const double rhs = corr_x.values(x, x) + corr_y.values(y, y);
      report.min_slack = std::min(report.min_slack, rhs - gap);
      if (gap > rhs + tol) ++report.violations;
      gap_sum += gap;
      ++report.entries;
    }
  }
  report.mean_gap = gap_sum / static_cast<double>(report.entries);
  return report;
}

CounterexampleReport verify_bisim_counterexample(double r_x, double r_y, double gamma, double tol) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("counterexample: gamma must lie in (0, 1)");
  if (!(r_x > 0.0) || !(r_y > (1.0 + 1.0 / gamma) * r_x)) {
    throw InvalidArgument("counterexample: requires r_x > 0 and r_y > (1 + 1/gamma) r_x");
  }
  const TabularMdp X = cake_mdp(r_x, gamma);
  const TabularMdp Y = cake_mdp(r_y, gamma);
  const Policy px = value_iteration(X).policy;
  const Policy py = value_iteration(Y).policy;
  FixedPointOptions opts;
  opts.tol = tol * 1e-3;
  const auto bisim = bisimulation(X, Y, opts);
  const auto pib = pi_bisimulation(X, px, Y, py, opts);
  const auto psm = psm_exact(X, px, Y, py, DistKind::tv, opts);
  CounterexampleReport r;
  r.r_x = r_x;
  r.r_y = r_y;
  r.gamma = gamma;
  r.bisim_x0_y0 = bisim(0, 0);
  r.bisim_x0_y1 = bisim(0, 1);
  r.pi_bisim_x0_y0 = pib(0, 0);
  r.pi_bisim_x0_y1 = pib(0, 1);
  r.psm_x0_y0 = psm(0, 0);
  r.psm_x0_y1 = psm(0, 1);
  r.passed = r.bisim_x0_y1 + tol < r.bisim_x0_y0 && r.pi_bisim_x0_y1 + tol < r.pi_bisim_x0_y0 &&
             std::abs(r.psm_x0_y0) <= tol;
  return r;
}

FuzzConfig fuzz_config_from_json(const nlohmann::json& j) {
  FuzzConfig c;
  if (!j.is_object()) throw InvalidArgument("fuzz config must be a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("seed", c.seed);
  get("pairs", c.pairs);
  get("min_states", c.min_states);
  get("max_states", c.max_states);
  get("min_actions", c.min_actions);
  get("max_actions", c.max_actions);
  get("gammas", c.gammas);
  get("terminal_probability", c.terminal_probability);
  get("approx_mdps", c.approx_mdps);
  get("approx_eps", c.approx_eps);
  get("tol", c.tol);
  get("solve_tol", c.solve_tol);
  if (c.min_states < 1 || c.max_states < c.min_states || c.min_actions < 1 || c.max_actions < c.min_actions) {
    throw InvalidArgument("fuzz config: inconsistent state/action ranges");
  }
  if (c.gammas.empty()) throw InvalidArgument("fuzz config: gammas must be non-empty");
  for (double g : c.gammas) {
    if (!(g >= 0.0 && g < 1.0)) throw InvalidArgument("fuzz config: gammas must lie in [0, 1)");
  }
  for (double e : c.approx_eps) {
    if (!(e >= 0.0 && e <= 1.0)) throw InvalidArgument("fuzz config: eps values must lie in [0, 1]");
  }
  return c;
}

nlohmann::json to_json(const FuzzConfig& c) {
  return {{"seed", c.seed},
          {"pairs", c.pairs},
          {"min_states", c.min_states},
          {"max_states", c.max_states},
          {"min_actions", c.min_actions},
          {"max_actions", c.max_actions},
          {"gammas", c.gammas},
          {"terminal_probability", c.terminal_probability},
          {"approx_mdps", c.approx_mdps},
          {"approx_eps", c.approx_eps},
          {"tol", c.tol},
          {"solve_tol", c.solve_tol}};
}

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

TabularMdp random_mdp(std::mt19937_64& rng, std::size_t n_states, std::size_t n_actions, double gamma,
                      bool stochastic, double terminal_probability) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(n_states);
  std::vector<bool> terminal(n_states, false);
  for (std::size_t s = 1; s < n_states; ++s) terminal[s] = unit(rng) < terminal_probability;
  Eigen::MatrixXd reward = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(n_actions));
  std::vector<Eigen::MatrixXd> transition(n_actions, Eigen::MatrixXd::Zero(n, n));
  std::vector<Eigen::Index> order(n_states);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      if (terminal[static_cast<std::size_t>(s)]) {
        transition[a](s, s) = 1.0;
        continue;
      }
      reward(s, static_cast<Eigen::Index>(a)) = unit(rng);
      if (!stochastic) {
        transition[a](s, static_cast<Eigen::Index>(uniform_index(rng, 0, n_states - 1))) = 1.0;
        continue;
      }
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      const std::size_t k = uniform_index(rng, 1, n_states);
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        std::swap(order[i], order[uniform_index(rng, i, n_states - 1)]);
        const double w = 0.05 + unit(rng);
        transition[a](s, order[i]) = w;
        total += w;
      }
      transition[a].row(s) /= total;
    }
  }
  return TabularMdp(std::move(reward), std::move(transition), gamma, std::move(terminal), {0});
}

namespace {

struct CasePair {
  TabularMdp x;
  TabularMdp y;
};

CasePair draw_pair(std::mt19937_64& rng, const FuzzConfig& c, std::size_t index) {
  const double gamma = c.gammas[uniform_index(rng, 0, c.gammas.size() - 1)];
  const std::size_t actions = uniform_index(rng, c.min_actions, c.max_actions);
  const bool stochastic = index % 2 == 1;
  const std::size_t nx = uniform_index(rng, c.min_states, c.max_states);
  const std::size_t ny = uniform_index(rng, c.min_states, c.max_states);
  TabularMdp x = random_mdp(rng, nx, actions, gamma, stochastic, c.terminal_probability);
  TabularMdp y = random_mdp(rng, ny, actions, gamma, stochastic, c.terminal_probability);
  return {std::move(x), std::move(y)};
}

}  // namespace

FuzzSummary fuzz_transfer_bound(const FuzzConfig& c) {
  std::mt19937_64 rng(c.seed);
  FuzzSummary summary;
  summary.check = "transfer_bound";
  summary.worst = -std::numeric_limits<double>::infinity();
  FixedPointOptions opts;
  opts.tol = c.solve_tol;
  for (std::size_t i = 0; i < c.pairs; ++i) {
    const CasePair pair = draw_pair(rng, c, i);
    const Policy px = value_iteration(pair.x).policy;
    const Policy py = value_iteration(pair.y).policy;
    const auto table = psm_exact(pair.x, px, pair.y, py, DistKind::tv, opts);
    const auto match = nearest_neighbor_match(table);
    std::vector<StateIndex> source(match.size());
    for (std::size_t y = 0; y < match.size(); ++y) source[y] = table.rows[match[y]];
    const Policy pi_tilde = transfer_policy(px, source);
    const TransferReport report = verify_transfer_bound(pair.y, py, pi_tilde, table, match, c.tol);
    ++summary.cases;
    summary.worst = std::max(summary.worst, report.max_violation);
    if (!report.passed()) {
      ++summary.failures;
      summary.failing.push_back({{"case", i}, {"x", mdp_to_json(pair.x)}, {"y", mdp_to_json(pair.y)},
                                 {"report", to_json(report)}});
    }
  }
  return summary;
}

FuzzSummary fuzz_psm_approx(const FuzzConfig& c, const std::vector<double>& eps_override) {
  const std::vector<double>& eps_list = eps_override.empty() ? c.approx_eps : eps_override;
  std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
  FuzzSummary summary;
  summary.check = "psm_approx_bound";
  summary.worst = -std::numeric_limits<double>::infinity();
  std::vector<double> gap_sum(eps_list.size(), 0.0);
  for (std::size_t i = 0; i < c.approx_mdps; ++i) {
    const CasePair pair = draw_pair(rng, c, i);
    const Policy px = value_iteration(pair.x).policy;
    const Policy py = value_iteration(pair.y).policy;
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
      const double eps = eps_list[k];
      ApproxBoundReport report = verify_psm_approx_bound(pair.x, pair.y, px, py, epsilon_suboptimal(px, eps),
                                                         epsilon_suboptimal(py, eps), c.tol, c.solve_tol);
      report.eps = eps;
      ++summary.cases;
      gap_sum[k] += report.mean_gap;
      summary.worst = std::max(summary.worst, -report.min_slack);
      if (!report.passed()) {
        ++summary.failures;
        summary.failing.push_back({{"case", i}, {"eps", eps}, {"x", mdp_to_json(pair.x)},
                                   {"y", mdp_to_json(pair.y)}, {"report", to_json(report)}});
      }
    }
  }
  for (double s : gap_sum) summary.mean_gap_by_eps.push_back(s / static_cast<double>(std::max<std::size_t>(1, c.approx_mdps)));
  // The mean gap may not grow as eps shrinks.
  std::vector<std::size_t> order(eps_list.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return eps_list[a] > eps_list[b]; });
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (summary.mean_gap_by_eps[order[k]] > summary.mean_gap_by_eps[order[k - 1]] + c.tol) {
      summary.gap_monotone = false;
    }
  }
  return summary;
}

nlohmann::json to_json(const TransferReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"y", e.y}, {"matched_x", e.matched_x}, {"distance", e.distance}, {"lhs", e.lhs},
                       {"rhs", e.rhs}, {"slack", e.slack}});
  }
  return {{"gamma", r.gamma},
          {"tol", r.tol},
          {"metric_kind", std::string(to_string(r.metric_kind))},
          {"dist_kind", std::string(to_string(r.dist_kind))},
          {"max_violation", r.max_violation},
          {"violations", r.violations},
          {"passed", r.passed()},
          {"entries", std::move(entries)}};
}

nlohmann::json to_json(const ApproxBoundReport& r) {
  return {{"eps", r.eps},         {"tol", r.tol},         {"min_slack", r.min_slack}, {"mean_gap", r.mean_gap},
          {"entries", r.entries}, {"violations", r.violations}, {"passed", r.passed()}};
}

nlohmann::json to_json(const CounterexampleReport& r) {
  return {{"r_x", r.r_x},
          {"r_y", r.r_y},
          {"gamma", r.gamma},
          {"bisimulation", {{"x0_y0", r.bisim_x0_y0}, {"x0_y1", r.bisim_x0_y1}}},
          {"pi_bisimulation", {{"x0_y0", r.pi_bisim_x0_y0}, {"x0_y1", r.pi_bisim_x0_y1}}},
          {"psm", {{"x0_y0", r.psm_x0_y0}, {"x0_y1", r.psm_x0_y1}}},
          {"passed", r.passed}};
}

nlohmann::json to_json(const FuzzSummary& s) {
  return {{"check", s.check},
          {"cases", s.cases},
          {"failures", s.failures},
          {"worst", s.worst},
          {"mean_gap_by_eps", s.mean_gap_by_eps},
          {"gap_monotone", s.gap_monotone},
          {"passed", s.passed()},
          {"failing", s.failing}};
}

}  // namespace behavsim
