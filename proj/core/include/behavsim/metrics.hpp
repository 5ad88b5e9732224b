#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "behavsim/mdp.hpp"

namespace behavsim {

enum class MetricKind { bisimulation, pi_bisimulation, psm, generalized_psm };
enum class DistKind { tv, l1_mean_action };

std::string_view to_string(MetricKind kind);
std::string_view to_string(DistKind kind);
/// Accepts the names produced by to_string plus the short forms "bisim" and
/// "pi-bisim". Throws InvalidArgument otherwise.
MetricKind parse_metric_kind(std::string_view name);
DistKind parse_dist_kind(std::string_view name);

/// Dense |X| x |Y| table of distances plus the settings that produced it.
struct PairwiseMetricTable {
  std::vector<StateIndex> rows;
  std::vector<StateIndex> cols;
  Eigen::MatrixXd values;
  MetricKind metric_kind = MetricKind::psm;
  DistKind dist_kind = DistKind::tv;
  double gamma = 0.0;
  double tol = 0.0;
  std::size_t iterations = 0;
  /// Sup-norm change of the table at each sweep.
  std::vector<double> residual_trace;

  double operator()(std::size_t i, std::size_t j) const {
    return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
};

/// Half the l1 distance. Throws on length mismatch.
double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
/// Plain l1 distance between two mean-action vectors.
double l1_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
double action_distance(DistKind kind, const Eigen::VectorXd& p, const Eigen::VectorXd& q);

struct FixedPointOptions {
  double tol = 1e-9;
  /// Starting table; all zeros when absent.
  std::optional<Eigen::MatrixXd> init;
};

/// Sweep cap used by every metric solver: the number of sweeps a contraction
/// with rate gamma needs to shrink an initial gap of `scale / (1 - gamma)`
/// below tol, plus 64.
std::size_t fixed_point_cap(double gamma, double tol, double scale = 1.0);

/// d(x,y) = Dist(piX(x), piY(y)) + gamma * W1(d)(P^piX(.|x), P^piY(.|y)).
/// The policies are taken as given; pass the optimal ones for the PSM proper.
PairwiseMetricTable psm_exact(const TabularMdp& mdpX, const Policy& piX, const TabularMdp& mdpY,
                              const Policy& piY, DistKind dist = DistKind::tv,
                              const FixedPointOptions& options = {});

/// d(x,y) = |R^piX(x) - R^piY(y)| + gamma * W1(d)(P^piX(.|x), P^piY(.|y)).
PairwiseMetricTable pi_bisimulation(const TabularMdp& mdpX, const Policy& piX,
                                    const TabularMdp& mdpY, const Policy& piY,
                                    const FixedPointOptions& options = {});

/// d(x,y) = max_a |R(x,a) - R(y,a)| + gamma * W1(d)(P(.|x,a), P(.|y,a)).
PairwiseMetricTable bisimulation(const TabularMdp& mdpX, const TabularMdp& mdpY,
                                 const FixedPointOptions& options = {});

/// Same recursion as psm_exact for arbitrary policy pairs; tagged generalized_psm.
PairwiseMetricTable generalized_psm(const TabularMdp& mdpX, const Policy& pi1,
                                    const TabularMdp& mdpY, const Policy& pi2,
                                    DistKind dist = DistKind::tv,
                                    const FixedPointOptions& options = {});

/// d(i,j) = Dist(a_i, a_j) + gamma * d(min(i+1, N-1), min(j+1, M-1)).
/// The last entry of each trajectory is absorbing.
PairwiseMetricTable psm_trajectory_dp(const Trajectory& trajX, const Trajectory& trajY,
                                      DistKind dist, double gamma,
                                      const FixedPointOptions& options = {});

/// exp(-d / beta). Throws InvalidArgument for beta <= 0 or d < 0.
double gaussian_kernel(double d, double beta);
/// gaussian_kernel applied entrywise.
Eigen::MatrixXd gaussian_kernel(const Eigen::MatrixXd& d, double beta);

}  // namespace behavsim
