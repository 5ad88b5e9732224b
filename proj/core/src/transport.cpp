#include "behavsim/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "behavsim/error.hpp"

namespace behavsim {

namespace {

// Consecutive degenerate pivots tolerated before switching to Bland's rule.
constexpr std::size_t kDegenerateBeforeBland = 32;
constexpr std::size_t kPivotCap = 100000;

struct TreeWalk {
  // Parent node and the basis entry used to reach it, for every node of the
  // bipartite tree (rows 0..m-1, columns m..m+n-1).
  std::vector<long> parent;
  std::vector<long> via;
};

}  // namespace

TransportSolver::TransportSolver(std::vector<double> supply, std::vector<double> demand)
    : supply_(std::move(supply)), demand_(std::move(demand)) {
  if (supply_.empty() || demand_.empty()) throw InvalidArgument("transport: empty marginal");
  for (double s : supply_) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("transport: supplies must be positive");
  }
  for (double d : demand_) {
    if (!(d > 0.0) || !std::isfinite(d)) throw InvalidArgument("transport: demands must be positive");
  }
  const double total_supply = std::accumulate(supply_.begin(), supply_.end(), 0.0);
  const double total_demand = std::accumulate(demand_.begin(), demand_.end(), 0.0);
  for (double& d : demand_) d *= total_supply / total_demand;
  initial_basis();
}

void TransportSolver::initial_basis() {
  // North-west corner rule; ties advance the row so the basis always has
  // rows + cols - 1 cells (some possibly with zero flow).
  const auto m = supply_.size();
  const auto n = demand_.size();
  std::vector<double> left_supply = supply_;
  std::vector<double> left_demand = demand_;
  basis_.clear();
  flow_.clear();
  std::size_t i = 0;
  std::size_t j = 0;
  while (true) {
    const double x = std::max(0.0, std::min(left_supply[i], left_demand[j]));
    basis_.emplace_back(i, j);
    flow_.push_back(x);
    left_supply[i] -= x;
    left_demand[j] -= x;
    if (i == m - 1 && j == n - 1) break;
    if (i == m - 1) {
      ++j;
    } else if (j == n - 1) {
      ++i;
    } else if (left_supply[i] <= left_demand[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  // The last cell absorbs accumulated rounding so both marginals close.
  flow_.back() = std::max(0.0, flow_.back() + std::min(left_supply[m - 1], left_demand[n - 1]));
}

namespace {

TreeWalk walk_tree(const std::vector<std::pair<std::size_t, std::size_t>>& basis, std::size_t m,
                   std::size_t n, std::size_t root) {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency(m + n);
  for (std::size_t e = 0; e < basis.size(); ++e) {
    const auto [i, j] = basis[e];
    adjacency[i].emplace_back(m + j, e);
    adjacency[m + j].emplace_back(i, e);
  }
  TreeWalk walk{std::vector<long>(m + n, -2), std::vector<long>(m + n, -1)};
  std::vector<std::size_t> stack{root};
  walk.parent[root] = -1;
  while (!stack.empty()) {
    const auto node = stack.back();
    stack.pop_back();
    for (const auto& [next, edge] : adjacency[node]) {
      if (walk.parent[next] != -2) continue;
      walk.parent[next] = static_cast<long>(node);
      walk.via[next] = static_cast<long>(edge);
      stack.push_back(next);
    }
  }
  return walk;
}

}  // namespace

void TransportSolver::compute_potentials(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  const auto m = supply_.size();
  const auto n = demand_.size();
  const TreeWalk walk = walk_tree(basis_, m, n, 0);
  u_.assign(m, 0.0);
  w_.assign(n, 0.0);
  // Visit nodes in an order where parents precede children.
  std::vector<std::size_t> order;
  order.reserve(m + n);
  order.push_back(0);
  std::vector<std::vector<std::size_t>> children(m + n);
  for (std::size_t node = 0; node < m + n; ++node) {
    if (walk.parent[node] >= 0) children[static_cast<std::size_t>(walk.parent[node])].push_back(node);
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    for (auto c : children[order[k]]) order.push_back(c);
  }
  for (auto node : order) {
    if (walk.parent[node] < 0) continue;
    const auto [i, j] = basis_[static_cast<std::size_t>(walk.via[node])];
    if (node < m) {
      u_[i] = cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - w_[j];
    } else {
      w_[j] = cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - u_[i];
    }
  }
}

bool TransportSolver::pivot(const Eigen::Ref<const Eigen::MatrixXd>& cost, bool bland) {
  const auto m = supply_.size();
  const auto n = demand_.size();
  std::vector<char> basic(m * n, 0);
  for (const auto& [i, j] : basis_) basic[i * n + j] = 1;

  const double threshold = 1e-13 * (1.0 + cost.cwiseAbs().maxCoeff());
  long enter_i = -1;
  long enter_j = -1;
  double most_negative = -threshold;
  for (std::size_t i = 0; i < m && !(bland && enter_i >= 0); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (basic[i * n + j]) continue;
      const double reduced =
          cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - u_[i] - w_[j];
      if (reduced < most_negative) {
        most_negative = reduced;
        enter_i = static_cast<long>(i);
        enter_j = static_cast<long>(j);
        if (bland) break;
      }
    }
  }
  if (enter_i < 0) return false;

  // Cycle: entering cell plus the tree path from column enter_j back to row enter_i.
  const TreeWalk walk = walk_tree(basis_, m, n, static_cast<std::size_t>(enter_i));
  std::vector<std::size_t> path;  // basis entries, signs alternate starting with '-'
  for (auto node = m + static_cast<std::size_t>(enter_j); walk.parent[node] >= 0;
       node = static_cast<std::size_t>(walk.parent[node])) {
    path.push_back(static_cast<std::size_t>(walk.via[node]));
  }
  double theta = std::numeric_limits<double>::infinity();
  std::size_t leaving = path.front();
  for (std::size_t k = 0; k < path.size(); k += 2) {
    const double f = flow_[path[k]];
    if (f < theta || (f == theta && basis_[path[k]] < basis_[leaving])) {
      theta = f;
      leaving = path[k];
    }
  }
  for (std::size_t k = 0; k < path.size(); ++k) {
    flow_[path[k]] += (k % 2 == 0) ? -theta : theta;
  }
  basis_[leaving] = {static_cast<std::size_t>(enter_i), static_cast<std::size_t>(enter_j)};
  flow_[leaving] = theta;
  ++pivots_;
  return true;
}

double TransportSolver::solve(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  if (static_cast<std::size_t>(cost.rows()) != rows() || static_cast<std::size_t>(cost.cols()) != cols()) {
    throw InvalidArgument("transport: cost shape does not match the marginals");
  }
  std::size_t degenerate_run = 0;
  for (std::size_t iter = 0;; ++iter) {
    compute_potentials(cost);
    const std::vector<double> before = flow_;
    if (!pivot(cost, degenerate_run >= kDegenerateBeforeBland)) break;
    degenerate_run = (flow_ == before) ? degenerate_run + 1 : 0;
    if (iter > kPivotCap) throw ConvergenceError("transport simplex cycled", 0.0, iter);
  }
  double value = 0.0;
  for (std::size_t e = 0; e < basis_.size(); ++e) {
    const auto [i, j] = basis_[e];
    value += flow_[e] * cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return value;
}

Eigen::MatrixXd TransportSolver::coupling() const {
  Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows()),
                                               static_cast<Eigen::Index>(cols()));
  for (std::size_t e = 0; e < basis_.size(); ++e) {
    plan(static_cast<Eigen::Index>(basis_[e].first), static_cast<Eigen::Index>(basis_[e].second)) +=
        flow_[e];
  }
  return plan;
}

CouplingCertificate wasserstein1(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                                 const Eigen::VectorXd& q) {
  if (cost.rows() != p.size() || cost.cols() != q.size()) {
    throw InvalidArgument("wasserstein1: cost must be |p| x |q|");
  }
  if (!cost.allFinite() || (cost.size() > 0 && cost.minCoeff() < 0.0)) {
    throw InvalidArgument("wasserstein1: costs must be finite and non-negative");
  }
  if (!p.allFinite() || !q.allFinite() || (p.size() > 0 && p.minCoeff() < 0.0) ||
      (q.size() > 0 && q.minCoeff() < 0.0)) {
    throw InvalidArgument("wasserstein1: masses must be finite and non-negative");
  }
  std::vector<Eigen::Index> rows;
  std::vector<Eigen::Index> cols;
  std::vector<double> supply;
  std::vector<double> demand;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      rows.push_back(i);
      supply.push_back(p[i]);
    }
  }
  for (Eigen::Index j = 0; j < q.size(); ++j) {
    if (q[j] > 0.0) {
      cols.push_back(j);
      demand.push_back(q[j]);
    }
  }
  if (supply.empty() || demand.empty()) throw InvalidArgument("wasserstein1: zero-mass input");

  Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < cols.size(); ++b) {
      sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = cost(rows[a], cols[b]);
    }
  }
  TransportSolver solver(std::move(supply), std::move(demand));
  CouplingCertificate cert;
  cert.value = solver.solve(sub);

  cert.coupling = Eigen::MatrixXd::Zero(p.size(), q.size());
  const Eigen::MatrixXd plan = solver.coupling();
  cert.u = Eigen::VectorXd::Zero(p.size());
  cert.v = Eigen::VectorXd::Zero(q.size());
  std::vector<char> row_set(static_cast<std::size_t>(p.size()), 0);
  std::vector<char> col_set(static_cast<std::size_t>(q.size()), 0);
  for (std::size_t a = 0; a < rows.size(); ++a) {
    cert.u[rows[a]] = solver.row_potentials()[a];
    row_set[static_cast<std::size_t>(rows[a])] = 1;
    for (std::size_t b = 0; b < cols.size(); ++b) {
      cert.coupling(rows[a], cols[b]) = plan(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  for (std::size_t b = 0; b < cols.size(); ++b) {
    cert.v[cols[b]] = -solver.col_potentials()[b];
    col_set[static_cast<std::size_t>(cols[b])] = 1;
  }
  // Zero-mass columns: smallest v keeping u_i - v_j <= c_ij over supported rows.
  for (Eigen::Index j = 0; j < q.size(); ++j) {
    if (col_set[static_cast<std::size_t>(j)]) continue;
    double v = -std::numeric_limits<double>::infinity();
    for (auto i : rows) v = std::max(v, cert.u[i] - cost(i, j));
    cert.v[j] = v;
  }
  // Zero-mass rows: largest u keeping u_i - v_j <= c_ij over all columns.
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (row_set[static_cast<std::size_t>(i)]) continue;
    double u = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < q.size(); ++j) u = std::min(u, cert.v[j] + cost(i, j));
    cert.u[i] = u;
  }
  return cert;
}

}  // namespace behavsim
