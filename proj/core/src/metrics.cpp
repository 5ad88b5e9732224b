#include "behavsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "behavsim/error.hpp"
#include "behavsim/transport.hpp"

namespace behavsim {

std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::bisimulation: return "bisimulation";
    case MetricKind::pi_bisimulation: return "pi_bisimulation";
    case MetricKind::psm: return "psm";
    case MetricKind::generalized_psm: return "generalized_psm";
  }
  return "unknown";
}

std::string_view to_string(DistKind kind) {
  return kind == DistKind::tv ? "tv" : "l1_mean_action";
}

MetricKind parse_metric_kind(std::string_view name) {
  if (name == "bisimulation" || name == "bisim") return MetricKind::bisimulation;
  if (name == "pi_bisimulation" || name == "pi-bisim" || name == "pi_bisim") return MetricKind::pi_bisimulation;
  if (name == "psm") return MetricKind::psm;
  if (name == "generalized_psm" || name == "generalized-psm") return MetricKind::generalized_psm;
  throw InvalidArgument("unknown metric kind '" + std::string(name) + "'");
}

DistKind parse_dist_kind(std::string_view name) {
  if (name == "tv") return DistKind::tv;
  if (name == "l1_mean_action" || name == "l1") return DistKind::l1_mean_action;
  throw InvalidArgument("unknown dist kind '" + std::string(name) + "'");
}

double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw InvalidArgument("tv_distance: length mismatch");
  return 0.5 * (p - q).cwiseAbs().sum();
}

double l1_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw InvalidArgument("l1_distance: length mismatch");
  return (p - q).cwiseAbs().sum();
}

double action_distance(DistKind kind, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return kind == DistKind::tv ? tv_distance(p, q) : l1_distance(p, q);
}

std::size_t fixed_point_cap(double gamma, double tol, double scale) {
  if (!(tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (gamma <= 0.0) return 2;
  const double sweeps = std::log(tol * (1.0 - gamma) / std::max(1.0, scale)) / std::log(gamma);
  return static_cast<std::size_t>(std::ceil(std::max(0.0, sweeps))) + 64;
}

double gaussian_kernel(double d, double beta) {
  if (!(beta > 0.0)) throw InvalidArgument("gaussian_kernel: beta must be positive");
  if (d < 0.0) throw InvalidArgument("gaussian_kernel: distance must be non-negative");
  return std::exp(-d / beta);
}

Eigen::MatrixXd gaussian_kernel(const Eigen::MatrixXd& d, double beta) {
  return d.unaryExpr([beta](double x) { return gaussian_kernel(x, beta); });
}

namespace {

using Support = std::vector<std::pair<Eigen::Index, double>>;

Support support_of(const Eigen::MatrixXd& kernel, Eigen::Index s) {
  Support out;
  for (Eigen::Index t = 0; t < kernel.cols(); ++t) {
    if (kernel(s, t) > 0.0) out.emplace_back(t, kernel(s, t));
  }
  return out;
}

// One term of the max in the operator: an immediate cost plus gamma times the
// W1 distance between next-state distributions under one kernel pair.
struct Branch {
  Eigen::MatrixXd immediate;
  std::vector<Support> x_next;
  std::vector<Support> y_next;
};

Branch make_branch(Eigen::MatrixXd immediate, const Eigen::MatrixXd& kernelX,
                   const Eigen::MatrixXd& kernelY) {
  Branch b{std::move(immediate), {}, {}};
  for (Eigen::Index x = 0; x < kernelX.rows(); ++x) b.x_next.push_back(support_of(kernelX, x));
  for (Eigen::Index y = 0; y < kernelY.rows(); ++y) b.y_next.push_back(support_of(kernelY, y));
  return b;
}

class FixedPointSolver {
 public:
  FixedPointSolver(std::vector<Branch> branches, double gamma, bool symmetric)
      : branches_(std::move(branches)),
        gamma_(gamma),
        symmetric_(symmetric),
        nx_(branches_.front().immediate.rows()),
        ny_(branches_.front().immediate.cols()),
        solvers_(branches_.size() * static_cast<std::size_t>(nx_ * ny_)) {}

  PairwiseMetricTable run(const FixedPointOptions& options) {
    double scale = 0.0;
    for (const auto& b : branches_) scale = std::max(scale, b.immediate.maxCoeff());
    const std::size_t cap = fixed_point_cap(gamma_, options.tol, scale);

    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(nx_, ny_);
    if (options.init) {
      if (options.init->rows() != nx_ || options.init->cols() != ny_) {
        throw InvalidArgument("initial table has the wrong shape");
      }
      if (!options.init->allFinite() || options.init->minCoeff() < 0.0) {
        throw InvalidArgument("initial table must be finite and non-negative");
      }
      d = *options.init;
    }
    PairwiseMetricTable table;
    table.gamma = gamma_;
    table.tol = options.tol;
    double residual = std::numeric_limits<double>::infinity();
    for (std::size_t sweep = 1; sweep <= cap; ++sweep) {
      Eigen::MatrixXd next = apply(d);
      residual = (next - d).cwiseAbs().maxCoeff();
      table.residual_trace.push_back(residual);
      d = std::move(next);
      table.iterations = sweep;
      if (residual <= options.tol) {
        table.values = std::move(d);
        return table;
      }
    }
    throw ConvergenceError("metric fixed point did not converge", residual, cap);
  }

 private:
  Eigen::MatrixXd apply(const Eigen::MatrixXd& d) {
    Eigen::MatrixXd next(nx_, ny_);
    for (Eigen::Index x = 0; x < nx_; ++x) {
      for (Eigen::Index y = symmetric_ ? x : 0; y < ny_; ++y) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < branches_.size(); ++b) {
          best = std::max(best, branches_[b].immediate(x, y) + gamma_ * transport(b, x, y, d));
        }
        next(x, y) = best;
        if (symmetric_) next(y, x) = best;
      }
    }
    return next;
  }

  double transport(std::size_t b, Eigen::Index x, Eigen::Index y, const Eigen::MatrixXd& d) {
    if (gamma_ == 0.0) return 0.0;
    const Support& px = branches_[b].x_next[static_cast<std::size_t>(x)];
    const Support& py = branches_[b].y_next[static_cast<std::size_t>(y)];
    if (px.size() == 1 && py.size() == 1) return d(px[0].first, py[0].first);
    if (px.size() == 1 || py.size() == 1) {
      // A point mass on one side admits only one coupling.
      double w = 0.0;
      for (const auto& [i, pi] : px) {
        for (const auto& [j, qj] : py) w += pi * qj * d(i, j);
      }
      return w;
    }
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(px.size()), static_cast<Eigen::Index>(py.size()));
    for (std::size_t i = 0; i < px.size(); ++i) {
      for (std::size_t j = 0; j < py.size(); ++j) {
        cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d(px[i].first, py[j].first);
      }
    }
    auto& solver = solvers_[(b * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(x)) *
                                static_cast<std::size_t>(ny_) +
                            static_cast<std::size_t>(y)];
    if (!solver) {
      std::vector<double> supply;
      std::vector<double> demand;
      for (const auto& e : px) supply.push_back(e.second);
      for (const auto& e : py) demand.push_back(e.second);
      solver = std::make_unique<TransportSolver>(std::move(supply), std::move(demand));
    }
    return solver->solve(cost);
  }

  std::vector<Branch> branches_;
  double gamma_;
  bool symmetric_;
  Eigen::Index nx_;
  Eigen::Index ny_;
  std::vector<std::unique_ptr<TransportSolver>> solvers_;
};

void check_pair(const TabularMdp& mdpX, const TabularMdp& mdpY) {
  if (mdpX.gamma() != mdpY.gamma()) throw InvalidArgument("metric: the two MDPs have different gamma");
  if (mdpX.n_actions() != mdpY.n_actions()) {
    throw InvalidArgument("metric: the two MDPs have different action counts");
  }
}

std::vector<StateIndex> iota(std::size_t n) {
  std::vector<StateIndex> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

PairwiseMetricTable policy_metric(const TabularMdp& mdpX, const Policy& piX, const TabularMdp& mdpY,
                                  const Policy& piY, MetricKind kind, DistKind dist,
                                  const FixedPointOptions& options) {
  check_pair(mdpX, mdpY);
  check_policy(mdpX, piX);
  check_policy(mdpY, piY);
  const auto nx = static_cast<Eigen::Index>(mdpX.n_states());
  const auto ny = static_cast<Eigen::Index>(mdpY.n_states());
  Eigen::MatrixXd immediate(nx, ny);
  if (kind == MetricKind::pi_bisimulation) {
    const Eigen::VectorXd rx = policy_reward(mdpX, piX);
    const Eigen::VectorXd ry = policy_reward(mdpY, piY);
    for (Eigen::Index x = 0; x < nx; ++x) {
      for (Eigen::Index y = 0; y < ny; ++y) immediate(x, y) = std::abs(rx[x] - ry[y]);
    }
  } else {
    for (Eigen::Index x = 0; x < nx; ++x) {
      for (Eigen::Index y = 0; y < ny; ++y) {
        immediate(x, y) = action_distance(dist, piX.row(static_cast<StateIndex>(x)),
                                          piY.row(static_cast<StateIndex>(y)));
      }
    }
  }
  std::vector<Branch> branches;
  branches.push_back(
      make_branch(std::move(immediate), policy_transition(mdpX, piX), policy_transition(mdpY, piY)));
  const bool symmetric = &mdpX == &mdpY && piX == piY;
  FixedPointSolver solver(std::move(branches), mdpX.gamma(), symmetric);
  PairwiseMetricTable table = solver.run(options);
  table.rows = iota(mdpX.n_states());
  table.cols = iota(mdpY.n_states());
  table.metric_kind = kind;
  table.dist_kind = dist;
  return table;
}

}  // namespace

PairwiseMetricTable psm_exact(const TabularMdp& mdpX, const Policy& piX, const TabularMdp& mdpY,
                              const Policy& piY, DistKind dist, const FixedPointOptions& options) {
  return policy_metric(mdpX, piX, mdpY, piY, MetricKind::psm, dist, options);
}

PairwiseMetricTable pi_bisimulation(const TabularMdp& mdpX, const Policy& piX,
                                    const TabularMdp& mdpY, const Policy& piY,
                                    const FixedPointOptions& options) {
  return policy_metric(mdpX, piX, mdpY, piY, MetricKind::pi_bisimulation, DistKind::tv, options);
}

PairwiseMetricTable generalized_psm(const TabularMdp& mdpX, const Policy& pi1,
                                    const TabularMdp& mdpY, const Policy& pi2, DistKind dist,
                                    const FixedPointOptions& options) {
  return policy_metric(mdpX, pi1, mdpY, pi2, MetricKind::generalized_psm, dist, options);
}

PairwiseMetricTable bisimulation(const TabularMdp& mdpX, const TabularMdp& mdpY,
                                 const FixedPointOptions& options) {
  check_pair(mdpX, mdpY);
  const auto nx = static_cast<Eigen::Index>(mdpX.n_states());
  const auto ny = static_cast<Eigen::Index>(mdpY.n_states());
  std::vector<Branch> branches;
  for (ActionIndex a = 0; a < mdpX.n_actions(); ++a) {
    Eigen::MatrixXd immediate(nx, ny);
    for (Eigen::Index x = 0; x < nx; ++x) {
      for (Eigen::Index y = 0; y < ny; ++y) {
        immediate(x, y) = std::abs(mdpX.reward(static_cast<StateIndex>(x), a) -
                                   mdpY.reward(static_cast<StateIndex>(y), a));
      }
    }
    branches.push_back(make_branch(std::move(immediate), mdpX.transition(a), mdpY.transition(a)));
  }
  FixedPointSolver solver(std::move(branches), mdpX.gamma(), &mdpX == &mdpY);
  PairwiseMetricTable table = solver.run(options);
  table.rows = iota(mdpX.n_states());
  table.cols = iota(mdpY.n_states());
  table.metric_kind = MetricKind::bisimulation;
  table.dist_kind = DistKind::tv;
  return table;
}

PairwiseMetricTable psm_trajectory_dp(const Trajectory& trajX, const Trajectory& trajY,
                                      DistKind dist, double gamma,
                                      const FixedPointOptions& options) {
  if (trajX.size() == 0 || trajY.size() == 0) throw InvalidArgument("psm_trajectory_dp: empty trajectory");
  if (trajX.action_dists.size() != trajX.size() || trajY.action_dists.size() != trajY.size()) {
    throw InvalidArgument("psm_trajectory_dp: states and action distributions are misaligned");
  }
  if (trajX.action_dists.front().size() != trajY.action_dists.front().size()) {
    throw InvalidArgument("psm_trajectory_dp: action dimensions differ");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("psm_trajectory_dp: gamma must be in [0, 1)");
  const auto n = static_cast<Eigen::Index>(trajX.size());
  const auto m = static_cast<Eigen::Index>(trajY.size());
  Eigen::MatrixXd immediate(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      immediate(i, j) = action_distance(dist, trajX.action_dists[static_cast<std::size_t>(i)],
                                        trajY.action_dists[static_cast<std::size_t>(j)]);
    }
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, m);
  if (options.init) {
    if (options.init->rows() != n || options.init->cols() != m) {
      throw InvalidArgument("psm_trajectory_dp: initial table has the wrong shape");
    }
    d = *options.init;
  }
  const std::size_t cap = fixed_point_cap(gamma, options.tol, immediate.maxCoeff());
  PairwiseMetricTable table;
  table.rows = trajX.states;
  table.cols = trajY.states;
  table.metric_kind = MetricKind::psm;
  table.dist_kind = dist;
  table.gamma = gamma;
  table.tol = options.tol;
  double residual = std::numeric_limits<double>::infinity();
  for (std::size_t sweep = 1; sweep <= cap; ++sweep) {
    Eigen::MatrixXd next(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index ni = std::min(i + 1, n - 1);
      for (Eigen::Index j = 0; j < m; ++j) {
        next(i, j) = immediate(i, j) + gamma * d(ni, std::min(j + 1, m - 1));
      }
    }
    residual = (next - d).cwiseAbs().maxCoeff();
    table.residual_trace.push_back(residual);
    d = std::move(next);
    table.iterations = sweep;
    if (residual <= options.tol) {
      table.values = std::move(d);
      return table;
    }
  }
  throw ConvergenceError("trajectory PSM did not converge", residual, cap);
}

}  // namespace behavsim
