#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "behavsim/embed/losses.hpp"
#include "behavsim/embed/model.hpp"
#include "behavsim/envs/grid.hpp"
#include "behavsim/envs/jumping.hpp"

namespace behavsim {

enum class TrainMethod { imitation_only, pse, l2_psm, cme_pi_bisim, l2_pi_bisim };
enum class OptimizerKind { adam, sgd };

std::string_view to_string(TrainMethod method);
TrainMethod parse_train_method(std::string_view name);
std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

/// Uses a PSM table (pse, l2_psm) or a pi*-bisimulation table (the other two).
bool uses_psm(TrainMethod method);
/// Soft contrastive auxiliary loss (pse, cme_pi_bisim) rather than the l2 one.
bool uses_cme(TrainMethod method);

struct CmeConfig {
  double lambda = 1.0;  ///< inverse temperature
  double beta = 0.01;   ///< kernel scale
  double alpha = 10.0;  ///< auxiliary loss weight
  double learning_rate = 3e-3;
  double lr_decay = 0.999;  ///< per epoch
  int epochs = 2000;
  int batch_size = 256;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::vector<int> encoder_widths{256, 256};
  int embedding_dim = 64;
  /// Test-grid evaluation period in epochs; the last epoch is always evaluated.
  int eval_every = 200;
  std::uint64_t seed = 0;
};

/// Tuned defaults per arm (learning rate shared, lambda / alpha per arm).
CmeConfig default_cme_config(TrainMethod method);
nlohmann::json to_json(const CmeConfig& config);
/// Starts from `base` and overrides the keys present in `j`.
CmeConfig cme_config_from_json(const nlohmann::json& j, CmeConfig base = {});

/// Observation transform applied to training observations (identity by default).
using Augmentation = std::function<Observation(const Observation&)>;

struct TrainingTask {
  GridTask task;
  Trajectory trajectory;  ///< decision states of the optimal trajectory
  Eigen::MatrixXd inputs; ///< one downsampled observation per trajectory state
  std::vector<std::size_t> actions;
};

/// Everything train_jumping needs that does not depend on the seed.
struct JumpingDataset {
  GridSplit split;
  JumpingGeometry geometry;
  ObstacleColor color = ObstacleColor::white;
  std::vector<TrainingTask> tasks;
  /// Distance tables for ordered pairs (i, j), i != j, index i * n + j;
  /// rows follow task i's trajectory, columns task j's.
  std::vector<Eigen::MatrixXd> psm;
  std::vector<Eigen::MatrixXd> pi_bisim;
  /// Imitation samples: all trajectory states of all tasks, task-major.
  Eigen::MatrixXd all_inputs;
  std::vector<std::size_t> all_actions;

  std::size_t input_dim() const { return static_cast<std::size_t>(all_inputs.rows()); }
  const Eigen::MatrixXd& table(bool psm_table, std::size_t i, std::size_t j) const;
};

/// Renders, solves and tabulates the training tasks of `split`. The
/// pi*-bisimulation tables are only built when `with_pi_bisim` is set.
/// Colored obstacles give three-channel inputs and their own optimal behavior.
JumpingDataset build_jumping_dataset(const GridSplit& split, bool with_pi_bisim = true,
                                     const JumpingGeometry& geometry = {}, const Augmentation& augment = {},
                                     ObstacleColor color = ObstacleColor::white);

/// Downsampled network input for one observation.
Eigen::VectorXd observation_input(const Observation& obs);

struct ObjectiveValue {
  double total = 0.0;
  double imitation = 0.0;
  double aux = 0.0;
  std::vector<Layer> grads;
};

/// imitation(batch) + alpha * aux(zx, zy; distances). All inputs go through a
/// single forward pass. The auxiliary term is skipped for imitation_only and alpha = 0.
ObjectiveValue training_objective(const EmbeddingModel& model, TrainMethod method, const CmeConfig& config,
                                  const Eigen::MatrixXd& batch_inputs, const std::vector<std::size_t>& batch_actions,
                                  const Eigen::MatrixXd& inputs_x, const Eigen::MatrixXd& inputs_y,
                                  const Eigen::MatrixXd& distances);

struct LogRow {
  int epoch = 0;
  double train_loss = 0.0;
  double aux_loss = 0.0;
  std::optional<double> test_solve_pct;
};

struct TrainResult {
  EmbeddingModel model;
  std::vector<LogRow> log;
  /// Solved flag per grid index (all 286 tasks) for the final model.
  std::vector<bool> solved;
  double train_solve_pct = 0.0;
  double test_solve_pct = 0.0;
};

/// Imitation learning plus the method's auxiliary loss, one sampled pair of
/// training tasks per epoch. Throws DivergenceError on a non-finite loss.
TrainResult train_jumping(const JumpingDataset& data, const CmeConfig& config, TrainMethod method);
TrainResult train_jumping(const GridSplit& split, const CmeConfig& config, TrainMethod method);

/// Greedy rollouts of `model` on the given tasks; one flag per task.
std::vector<bool> solve_tasks(const EmbeddingModel& model, const std::vector<GridTask>& tasks,
                              const JumpingGeometry& geometry = {}, ObstacleColor color = ObstacleColor::white);
double solve_percentage(const std::vector<bool>& solved);

/// CSV with columns epoch,train_loss,aux_loss,test_solve_pct (blank between evaluations).
std::string metrics_log_csv(const std::vector<LogRow>& log);

/// First two principal components of the rows of `points`.
Eigen::MatrixXd pca2(const Eigen::MatrixXd& points);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  Eigen::VectorXd relative_errors;
};

/// Central differences with step h against the analytic gradient returned by
/// `f(x, &grad)`. Relative error |a - n| / max(|a|, |n|, 1e-12).
GradientCheckResult gradient_check(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-5);

}  // namespace behavsim
