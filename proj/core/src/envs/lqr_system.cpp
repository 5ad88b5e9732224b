#include "behavsim/envs/lqr_system.hpp"

#include <nlohmann/json.hpp>

#include "behavsim/error.hpp"
#include "behavsim/io.hpp"

namespace behavsim {

Eigen::MatrixXd LqrSystem::observation_matrix() const {
  Eigen::MatrixXd o(n_obs(), n_s());
  o.topRows(n_s()) = kLqrControlScale * W_c;
  o.bottomRows(n_d()) = W_d;
  return o;
}

namespace {

Eigen::MatrixXd gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

}  // namespace

Eigen::MatrixXd random_semi_orthogonal(int rows, int cols, std::mt19937_64& rng) {
  if (rows < cols) return random_semi_orthogonal(cols, rows, rng).transpose();
  const Eigen::MatrixXd g = gaussian(rows, cols, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  // Sign fix on the diagonal of R makes the draw Haar distributed.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (int j = 0; j < cols; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

LqrSuite lqr_build(std::uint64_t seed, int n_d, int n_test, int n_s, int n_init) {
  if (n_s < 1) throw InvalidArgument("lqr_build: n_s must be positive");
  if (n_d < n_s) throw InvalidArgument("lqr_build: n_d must be at least n_s for a semi-orthogonal W_d");
  if (n_test < 1 || n_init < 1) throw InvalidArgument("lqr_build: need at least one test system and one initial state");
  std::mt19937_64 rng(seed);
  LqrSystem base;
  base.A = kLqrSpectralRadius * random_semi_orthogonal(n_s, n_s, rng);
  base.B = Eigen::MatrixXd::Identity(n_s, n_s);
  base.Q = Eigen::MatrixXd::Identity(n_s, n_s);
  base.R = Eigen::MatrixXd::Identity(n_s, n_s);
  base.W_c = random_semi_orthogonal(n_s, n_s, rng);
  LqrSuite suite;
  for (int i = 0; i < 2; ++i) {
    LqrSystem s = base;
    s.W_d = random_semi_orthogonal(n_d, n_s, rng);
    suite.train.push_back(std::move(s));
  }
  for (int i = 0; i < n_test; ++i) {
    LqrSystem s = base;
    s.W_d = random_semi_orthogonal(n_d, n_s, rng);
    suite.test.push_back(std::move(s));
  }
  suite.init_states = gaussian(n_s, n_init, rng);
  return suite;
}

nlohmann::json to_json(const LqrSystem& system) {
  return {{"A", matrix_to_json(system.A)},     {"B", matrix_to_json(system.B)},
          {"Q", matrix_to_json(system.Q)},     {"R", matrix_to_json(system.R)},
          {"W_c", matrix_to_json(system.W_c)}, {"W_d", matrix_to_json(system.W_d)}};
}

LqrSystem lqr_system_from_json(const nlohmann::json& j) {
  LqrSystem s;
  s.A = matrix_from_json(j.at("A"), "A");
  s.B = matrix_from_json(j.at("B"), "B");
  s.Q = matrix_from_json(j.at("Q"), "Q");
  s.R = matrix_from_json(j.at("R"), "R");
  s.W_c = matrix_from_json(j.at("W_c"), "W_c");
  s.W_d = matrix_from_json(j.at("W_d"), "W_d");
  const auto n = s.A.rows();
  if (s.A.cols() != n || s.B.rows() != n || s.Q.rows() != n || s.Q.cols() != n || s.R.rows() != s.B.cols() ||
      s.R.cols() != s.B.cols() || s.W_c.rows() != n || s.W_c.cols() != n || s.W_d.cols() != n) {
    throw InvalidArgument("LQR system: inconsistent matrix shapes");
  }
  return s;
}

}  // namespace behavsim
