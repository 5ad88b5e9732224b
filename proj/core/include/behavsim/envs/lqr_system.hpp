#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace behavsim {

/// s' = A s + B a, observed through o = [0.1 W_c; W_d] s.
struct LqrSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd W_c;
  Eigen::MatrixXd W_d;

  int n_s() const { return static_cast<int>(A.rows()); }
  int n_a() const { return static_cast<int>(B.cols()); }
  int n_d() const { return static_cast<int>(W_d.rows()); }
  int n_obs() const { return n_s() + n_d(); }
  /// (n_s + n_d) x n_s
  Eigen::MatrixXd observation_matrix() const;
};

inline constexpr double kLqrControlScale = 0.1;
inline constexpr double kLqrSpectralRadius = 0.8;

/// Haar-random matrix with orthonormal columns (rows >= cols) or rows (rows < cols).
Eigen::MatrixXd random_semi_orthogonal(int rows, int cols, std::mt19937_64& rng);

struct LqrSuite {
  std::vector<LqrSystem> train;
  std::vector<LqrSystem> test;
  /// Fixed evaluation batch, one initial state per column.
  Eigen::MatrixXd init_states;
};

/// Two training systems and `n_test` test systems sharing A, B, Q, R, W_c and
/// differing only in W_d. Throws InvalidArgument when n_d < n_s.
LqrSuite lqr_build(std::uint64_t seed, int n_d, int n_test = 10, int n_s = 20, int n_init = 100);

nlohmann::json to_json(const LqrSystem& system);
LqrSystem lqr_system_from_json(const nlohmann::json& j);

}  // namespace behavsim
