#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <utility>
#include <vector>

namespace behavsim {

/// Exact optimum of the discrete transport problem together with its LP dual.
///
/// Dual convention: maximise sum_i p_i u_i - sum_j q_j v_j subject to
/// u_i - v_j <= cost_ij. At the optimum `value` equals both the primal cost
/// sum_ij coupling_ij cost_ij and the dual objective.
struct CouplingCertificate {
  double value = 0.0;
  Eigen::MatrixXd coupling;
  Eigen::VectorXd u;
  Eigen::VectorXd v;

  double primal_value(const Eigen::MatrixXd& cost) const { return coupling.cwiseProduct(cost).sum(); }
  double dual_value(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
    return p.dot(u) - q.dot(v);
  }
};

/// Transportation simplex on a spanning-tree basis for strictly positive
/// supplies and demands. The basis survives between calls to `solve`, so a
/// sequence of slowly changing cost matrices (the metric fixed-point sweeps)
/// usually re-optimises in zero or one pivot.
class TransportSolver {
 public:
  /// Both vectors must be strictly positive; `demand` is rescaled to the
  /// total mass of `supply` to absorb rounding in the inputs.
  TransportSolver(std::vector<double> supply, std::vector<double> demand);

  /// Optimal transport cost for `cost` (supply.size() x demand.size()).
  double solve(const Eigen::Ref<const Eigen::MatrixXd>& cost);

  std::size_t rows() const { return supply_.size(); }
  std::size_t cols() const { return demand_.size(); }

  /// Coupling and potentials of the last `solve`, in the convention
  /// u_i + w_j <= cost_ij (w = -v of CouplingCertificate).
  Eigen::MatrixXd coupling() const;
  const std::vector<double>& row_potentials() const { return u_; }
  const std::vector<double>& col_potentials() const { return w_; }
  std::size_t pivots() const { return pivots_; }

 private:
  void initial_basis();
  void compute_potentials(const Eigen::Ref<const Eigen::MatrixXd>& cost);
  bool pivot(const Eigen::Ref<const Eigen::MatrixXd>& cost, bool bland);

  std::vector<double> supply_;
  std::vector<double> demand_;
  // Basic cells (row, col) and their flows; always rows + cols - 1 entries.
  std::vector<std::pair<std::size_t, std::size_t>> basis_;
  std::vector<double> flow_;
  std::vector<double> u_;
  std::vector<double> w_;
  std::size_t pivots_ = 0;
};

/// W1 between p and q under the ground cost `cost` (|p| x |q|, finite, >= 0).
/// Zero-mass entries are allowed; their potentials are set to the tightest
/// feasible values. Throws InvalidArgument on shape mismatches, negative or
/// non-finite costs, and on vectors without positive mass.
CouplingCertificate wasserstein1(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                                 const Eigen::VectorXd& q);

}  // namespace behavsim
