#include "behavsim/embed/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "behavsim/error.hpp"
#include "behavsim/io.hpp"

namespace behavsim {

std::string_view to_string(TrainMethod method) {
  switch (method) {
    case TrainMethod::imitation_only: return "imitation_only";
    case TrainMethod::pse: return "pse";
    case TrainMethod::l2_psm: return "l2_psm";
    case TrainMethod::cme_pi_bisim: return "cme_pi_bisim";
    case TrainMethod::l2_pi_bisim: return "l2_pi_bisim";
  }
  return "imitation_only";
}

TrainMethod parse_train_method(std::string_view name) {
  for (auto m : {TrainMethod::imitation_only, TrainMethod::pse, TrainMethod::l2_psm, TrainMethod::cme_pi_bisim,
                 TrainMethod::l2_pi_bisim}) {
    if (name == to_string(m)) return m;
  }
  throw InvalidArgument("unknown training method '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

bool uses_psm(TrainMethod method) { return method == TrainMethod::pse || method == TrainMethod::l2_psm; }
bool uses_cme(TrainMethod method) { return method == TrainMethod::pse || method == TrainMethod::cme_pi_bisim; }

CmeConfig default_cme_config(TrainMethod method) {
  CmeConfig c;
  switch (method) {
    case TrainMethod::imitation_only: c.alpha = 0.0; break;
    case TrainMethod::pse: c.lambda = 1.0; c.alpha = 10.0; break;
    case TrainMethod::l2_psm: c.alpha = 0.1; break;
    case TrainMethod::cme_pi_bisim: c.lambda = 2.0; c.alpha = 0.1; break;
    case TrainMethod::l2_pi_bisim: c.alpha = 1e-6; break;
  }
  return c;
}

nlohmann::json to_json(const CmeConfig& c) {
  return {{"lambda", c.lambda},
          {"beta", c.beta},
          {"alpha", c.alpha},
          {"learning_rate", c.learning_rate},
          {"lr_decay", c.lr_decay},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optimizer", std::string(to_string(c.optimizer))},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"encoder_widths", c.encoder_widths},
          {"embedding_dim", c.embedding_dim},
          {"eval_every", c.eval_every},
          {"seed", c.seed}};
}

namespace {

void check_config(const CmeConfig& c) {
  if (!(c.lambda > 0.0) || !(c.beta > 0.0)) throw InvalidArgument("training: lambda and beta must be positive");
  if (!(c.alpha >= 0.0)) throw InvalidArgument("training: alpha must be non-negative");
  if (!(c.learning_rate > 0.0) || !(c.lr_decay > 0.0 && c.lr_decay <= 1.0)) {
    throw InvalidArgument("training: learning rate must be positive and decay in (0, 1]");
  }
  if (c.epochs < 1 || c.batch_size < 1 || c.eval_every < 1 || c.embedding_dim < 1) {
    throw InvalidArgument("training: epochs, batch size, eval period and embedding size must be positive");
  }
}

}  // namespace

CmeConfig cme_config_from_json(const nlohmann::json& j, CmeConfig c) {
  if (!j.is_object()) throw InvalidArgument("training config must be a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("lambda", c.lambda);
  get("beta", c.beta);
  get("alpha", c.alpha);
  get("learning_rate", c.learning_rate);
  get("lr_decay", c.lr_decay);
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  get("adam_beta1", c.adam_beta1);
  get("adam_beta2", c.adam_beta2);
  get("adam_eps", c.adam_eps);
  get("encoder_widths", c.encoder_widths);
  get("embedding_dim", c.embedding_dim);
  get("eval_every", c.eval_every);
  get("seed", c.seed);
  check_config(c);
  return c;
}

Eigen::VectorXd observation_input(const Observation& obs) { return downsample2x(obs); }

const Eigen::MatrixXd& JumpingDataset::table(bool psm_table, std::size_t i, std::size_t j) const {
  const auto& tables = psm_table ? psm : pi_bisim;
  const std::size_t n = tasks.size();
  if (i == j || i >= n || j >= n || tables.size() != n * n) {
    throw InvalidArgument(psm_table ? "missing PSM table" : "missing pi*-bisimulation table");
  }
  return tables[i * n + j];
}

JumpingDataset build_jumping_dataset(const GridSplit& split, bool with_pi_bisim, const JumpingGeometry& geometry,
                                     const Augmentation& augment, ObstacleColor color) {
  if (split.training.size() < 2) throw InvalidArgument("dataset: need at least two training tasks");
  JumpingDataset data;
  data.split = split;
  data.geometry = geometry;
  data.color = color;
  std::vector<Restriction> restricted;
  std::vector<std::vector<std::size_t>> positions;  // restricted index of each trajectory state
  for (const auto& t : split.training) {
    JumpingTask task(JumpingInstance{t.obstacle_position, t.floor_height, color, geometry});
    const JumpingSolution sol = jumping_optimal_policy(task);
    TrainingTask tt;
    tt.task = t;
    tt.trajectory = jumping_optimal_trajectory(task, sol);
    tt.inputs.resize(0, 0);
    for (std::size_t k = 0; k < tt.trajectory.size(); ++k) {
      const StateIndex s = tt.trajectory.states[k];
      Observation obs = task.render(s);
      if (augment) obs = augment(obs);
      const Eigen::VectorXd x = observation_input(obs);
      if (k == 0) tt.inputs.resize(x.size(), static_cast<Eigen::Index>(tt.trajectory.size()));
      tt.inputs.col(static_cast<Eigen::Index>(k)) = x;
      tt.actions.push_back(sol.policy.greedy_action(s));
    }
    if (with_pi_bisim) {
      Restriction r = restrict_to_policy_support(task.mdp(), sol.policy, {task.start_state()});
      std::vector<std::size_t> pos;
      for (StateIndex s : tt.trajectory.states) {
        const auto it = std::find(r.original.begin(), r.original.end(), s);
        pos.push_back(static_cast<std::size_t>(it - r.original.begin()));
      }
      restricted.push_back(std::move(r));
      positions.push_back(std::move(pos));
    }
    data.tasks.push_back(std::move(tt));
  }

  const std::size_t n = data.tasks.size();
  Eigen::Index total = 0;
  for (const auto& t : data.tasks) total += t.inputs.cols();
  data.all_inputs.resize(data.tasks.front().inputs.rows(), total);
  Eigen::Index col = 0;
  for (const auto& t : data.tasks) {
    data.all_inputs.middleCols(col, t.inputs.cols()) = t.inputs;
    col += t.inputs.cols();
    data.all_actions.insert(data.all_actions.end(), t.actions.begin(), t.actions.end());
  }

  data.psm.assign(n * n, Eigen::MatrixXd());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto table = psm_trajectory_dp(data.tasks[i].trajectory, data.tasks[j].trajectory, DistKind::tv,
                                           kJumpingGamma);
      data.psm[i * n + j] = table.values;
      data.psm[j * n + i] = table.values.transpose();
    }
  }
  if (with_pi_bisim) {
    data.pi_bisim.assign(n * n, Eigen::MatrixXd());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto full =
            pi_bisimulation(restricted[i].mdp, restricted[i].policy, restricted[j].mdp, restricted[j].policy);
        Eigen::MatrixXd sub(static_cast<Eigen::Index>(positions[i].size()),
                            static_cast<Eigen::Index>(positions[j].size()));
        for (std::size_t a = 0; a < positions[i].size(); ++a) {
          for (std::size_t b = 0; b < positions[j].size(); ++b) {
            sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = full(positions[i][a], positions[j][b]);
          }
        }
        data.pi_bisim[i * n + j] = sub;
        data.pi_bisim[j * n + i] = sub.transpose();
      }
    }
  }
  return data;
}

ObjectiveValue training_objective(const EmbeddingModel& model, TrainMethod method, const CmeConfig& config,
                                  const Eigen::MatrixXd& batch_inputs, const std::vector<std::size_t>& batch_actions,
                                  const Eigen::MatrixXd& inputs_x, const Eigen::MatrixXd& inputs_y,
                                  const Eigen::MatrixXd& distances) {
  const bool aux = method != TrainMethod::imitation_only && config.alpha != 0.0;
  const Eigen::Index nb = batch_inputs.cols();
  const Eigen::Index nx = aux ? inputs_x.cols() : 0;
  const Eigen::Index ny = aux ? inputs_y.cols() : 0;
  Eigen::MatrixXd inputs(batch_inputs.rows(), nb + nx + ny);
  inputs.leftCols(nb) = batch_inputs;
  if (aux) {
    inputs.middleCols(nb, nx) = inputs_x;
    inputs.rightCols(ny) = inputs_y;
  }
  const ForwardPass pass = model.forward(inputs);

  ObjectiveValue out;
  const LossWithGrad il = imitation_loss(pass.logits.leftCols(nb), batch_actions);
  out.imitation = il.value;
  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(pass.logits.rows(), inputs.cols());
  d_logits.leftCols(nb) = il.grad_a;
  Eigen::MatrixXd d_emb;
  if (aux) {
    const Eigen::MatrixXd zx = pass.embedding.middleCols(nb, nx);
    const Eigen::MatrixXd zy = pass.embedding.rightCols(ny);
    const LossWithGrad a = uses_cme(method) ? cme_total_loss(zx, zy, distances, config.beta, config.lambda)
                                            : l2_metric_loss(zx, zy, distances);
    out.aux = a.value;
    d_emb = Eigen::MatrixXd::Zero(pass.embedding.rows(), inputs.cols());
    d_emb.middleCols(nb, nx) = config.alpha * a.grad_a;
    d_emb.rightCols(ny) = config.alpha * a.grad_b;
  }
  out.total = out.imitation + (aux ? config.alpha * out.aux : 0.0);
  out.grads = model.backward(pass, d_emb, d_logits);
  return out;
}

namespace {

class Optimizer {
 public:
  Optimizer(const CmeConfig& c, const std::vector<Layer>& like)
      : c_(c), m_(zeros_like(like)), v_(zeros_like(like)) {}

  void step(std::vector<Layer>& params, const std::vector<Layer>& grads, int epoch) {
    const double lr = c_.learning_rate * std::pow(c_.lr_decay, epoch);
    if (c_.optimizer == OptimizerKind::sgd) {
      accumulate(params, grads, -lr);
      return;
    }
    ++t_;
    const double b1 = c_.adam_beta1;
    const double b2 = c_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, t_);
    const double c2 = 1.0 - std::pow(b2, t_);
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + c_.adam_eps);
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
      update(params[i].W, grads[i].W, m_[i].W, v_[i].W);
      update(params[i].b, grads[i].b, m_[i].b, v_[i].b);
    }
  }

 private:
  CmeConfig c_;
  std::vector<Layer> m_;
  std::vector<Layer> v_;
  int t_ = 0;
};

constexpr int kEvalChunk = 16;

}  // namespace

std::vector<bool> solve_tasks(const EmbeddingModel& model, const std::vector<GridTask>& tasks,
                              const JumpingGeometry& geometry, ObstacleColor color) {
  // Greedy actions for every floor state of a chunk of tasks in one forward pass,
  // then the closed-form dynamics replay each episode.
  const int columns = geometry.frame_width - geometry.agent_size;
  std::vector<bool> solved;
  solved.reserve(tasks.size());
  for (std::size_t start = 0; start < tasks.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(tasks.size(), start + kEvalChunk);
    Eigen::MatrixXd inputs;
    for (std::size_t t = start; t < stop; ++t) {
      const JumpingInstance inst{tasks[t].obstacle_position, tasks[t].floor_height, color, geometry};
      for (int x = 0; x < columns; ++x) {
        const Eigen::VectorXd in = observation_input(render_jumping(inst, JumpState{x, 0}));
        if (inputs.size() == 0) inputs.resize(in.size(), static_cast<Eigen::Index>((stop - start) * columns));
        inputs.col(static_cast<Eigen::Index>((t - start) * columns + x)) = in;
      }
    }
    const Eigen::MatrixXd logits = model.forward(inputs).logits;
    for (std::size_t t = start; t < stop; ++t) {
      const JumpingInstance inst{tasks[t].obstacle_position, tasks[t].floor_height, color, geometry};
      const auto base = static_cast<Eigen::Index>((t - start) * columns);
      solved.push_back(jumping_episode_solved(inst, [&](JumpState s) {
        Eigen::Index best = 0;
        logits.col(base + s.x).maxCoeff(&best);
        return static_cast<ActionIndex>(best);
      }));
    }
  }
  return solved;
}

double solve_percentage(const std::vector<bool>& solved) {
  if (solved.empty()) return 0.0;
  return 100.0 * static_cast<double>(std::count(solved.begin(), solved.end(), true)) /
         static_cast<double>(solved.size());
}

TrainResult train_jumping(const JumpingDataset& data, const CmeConfig& config, TrainMethod method) {
  check_config(config);
  const std::size_t n_tasks = data.tasks.size();
  const bool aux = method != TrainMethod::imitation_only && config.alpha != 0.0;
  if (aux) (void)data.table(uses_psm(method), 0, 1);

  ModelConfig mc;
  mc.input_dim = static_cast<int>(data.input_dim());
  mc.encoder_widths = config.encoder_widths;
  mc.embedding_dim = config.embedding_dim;
  mc.n_actions = 2;
  TrainResult result;
  result.model = EmbeddingModel(mc, config.seed);
  Optimizer opt(config, result.model.layers());

  // Independent streams so that the imitation batches do not depend on whether
  // task pairs are drawn.
  std::mt19937_64 batch_rng(config.seed * 2 + 1);
  std::mt19937_64 pair_rng(config.seed * 2 + 2);
  std::uniform_int_distribution<std::size_t> pick_sample(0, data.all_actions.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_task(0, n_tasks - 1);
  std::uniform_int_distribution<std::size_t> pick_other(0, n_tasks - 2);

  const auto batch = static_cast<Eigen::Index>(config.batch_size);
  Eigen::MatrixXd batch_inputs(data.all_inputs.rows(), batch);
  std::vector<std::size_t> batch_actions(static_cast<std::size_t>(batch));
  const Eigen::MatrixXd empty;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (Eigen::Index k = 0; k < batch; ++k) {
      const std::size_t s = pick_sample(batch_rng);
      batch_inputs.col(k) = data.all_inputs.col(static_cast<Eigen::Index>(s));
      batch_actions[static_cast<std::size_t>(k)] = data.all_actions[s];
    }
    ObjectiveValue obj;
    if (aux) {
      const std::size_t i = pick_task(pair_rng);
      std::size_t j = pick_other(pair_rng);
      if (j >= i) ++j;
      obj = training_objective(result.model, method, config, batch_inputs, batch_actions, data.tasks[i].inputs,
                               data.tasks[j].inputs, data.table(uses_psm(method), i, j));
    } else {
      obj = training_objective(result.model, method, config, batch_inputs, batch_actions, empty, empty, empty);
    }
    if (!std::isfinite(obj.total)) throw DivergenceError("training loss is not finite", epoch);
    opt.step(result.model.layers(), obj.grads, epoch);

    LogRow row{epoch, obj.total, obj.aux, std::nullopt};
    if ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs) {
      row.test_solve_pct = solve_percentage(solve_tasks(result.model, data.split.test, data.geometry, data.color));
    }
    result.log.push_back(row);
  }

  const std::vector<GridTask> grid = all_grid_tasks();
  result.solved = solve_tasks(result.model, grid, data.geometry, data.color);
  std::vector<bool> train_flags;
  std::vector<bool> test_flags;
  for (const auto& t : data.split.training) train_flags.push_back(result.solved[static_cast<std::size_t>(grid_index(t))]);
  for (const auto& t : data.split.test) test_flags.push_back(result.solved[static_cast<std::size_t>(grid_index(t))]);
  result.train_solve_pct = solve_percentage(train_flags);
  result.test_solve_pct = solve_percentage(test_flags);
  return result;
}

TrainResult train_jumping(const GridSplit& split, const CmeConfig& config, TrainMethod method) {
  const bool pi_bisim = method == TrainMethod::cme_pi_bisim || method == TrainMethod::l2_pi_bisim;
  return train_jumping(build_jumping_dataset(split, pi_bisim), config, method);
}

std::string metrics_log_csv(const std::vector<LogRow>& log) {
  std::ostringstream out;
  out << "epoch,train_loss,aux_loss,test_solve_pct\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.aux_loss) << ',';
    if (r.test_solve_pct) out << format_double(*r.test_solve_pct);
    out << '\n';
  }
  return out.str();
}

Eigen::MatrixXd pca2(const Eigen::MatrixXd& points) {
  if (points.rows() == 0) return Eigen::MatrixXd(0, 2);
  const Eigen::MatrixXd centered = points.rowwise() - points.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(points.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(d, 2);
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, d); ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - k);
    // Sign convention: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    basis.col(k) = v;
  }
  return centered * basis;
}

GradientCheckResult gradient_check(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& f,
                                   const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("gradient_check: step must be positive");
  Eigen::VectorXd analytic;
  const double f0 = f(x, &analytic);
  if (!std::isfinite(f0)) throw InvalidArgument("gradient_check: loss is not finite at the base point");
  if (analytic.size() != x.size()) throw InvalidArgument("gradient_check: gradient has the wrong length");
  GradientCheckResult r;
  r.relative_errors.resize(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe, nullptr);
    probe[i] = x[i] - h;
    const double down = f(probe, nullptr);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
    r.relative_errors[i] = std::abs(analytic[i] - numeric) / denom;
    if (r.relative_errors[i] > r.max_relative_error) {
      r.max_relative_error = r.relative_errors[i];
      r.worst_index = static_cast<std::size_t>(i);
    }
  }
  return r;
}

}  // namespace behavsim
