#include "behavsim/envs/cake.hpp"

#include "behavsim/error.hpp"

namespace behavsim {

TabularMdp cake_mdp(double r, double gamma) {
  if (!(r > 0.0)) throw InvalidArgument("cake_mdp: r must be positive");
  Eigen::MatrixXd reward = Eigen::MatrixXd::Zero(3, 2);
  reward(0, 0) = r;
  reward(1, 1) = r;
  std::vector<Eigen::MatrixXd> transition(2, Eigen::MatrixXd::Zero(3, 3));
  transition[0](0, 1) = 1.0;
  transition[1](0, 2) = 1.0;
  transition[0](1, 2) = 1.0;
  transition[1](1, 2) = 1.0;
  transition[0](2, 2) = 1.0;
  transition[1](2, 2) = 1.0;
  return TabularMdp(std::move(reward), std::move(transition), gamma, {false, false, true}, {0}, "cake");
}

}  // namespace behavsim
