#include <cmath>
#include <iostream>
#include <sstream>

#include "behavsim/embed/train.hpp"
#include "behavsim/io.hpp"
#include "common.hpp"

namespace cli {

namespace {

using behavsim::format_double;

nlohmann::json split_defaults() { return {{"kind", "wide"}, {"seed", 0}, {"layouts", ""}}; }

void add_split_options(Command& cmd) {
  cmd.option<std::string>("--split", "/split/kind", "wide | narrow | random")
      ->check(CLI::IsMember({"wide", "narrow", "random"}));
  cmd.option<std::uint64_t>("--split-seed", "/split/seed", "Seed for random splits");
  cmd.option<std::string>("--layouts", "/split/layouts", "Layout JSON for the wide and narrow splits");
}

nlohmann::json tasks_json(const std::vector<behavsim::GridTask>& tasks) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : tasks) out.push_back({t.obstacle_position, t.floor_height});
  return out;
}

nlohmann::json split_json(const behavsim::GridSplit& split) {
  return {{"kind", std::string(behavsim::to_string(split.kind))},
          {"seed", split.seed},
          {"training", tasks_json(split.training)}};
}

behavsim::EmbeddingModel load_model(const std::string& path) {
  if (path.empty()) throw UsageError("--model is required");
  return behavsim::embedding_model_from_json(behavsim::read_json_file(path));
}

std::pair<double, double> split_rates(const std::vector<bool>& solved, const behavsim::GridSplit& split) {
  std::vector<bool> train;
  std::vector<bool> test;
  for (const auto& t : split.training) train.push_back(solved[static_cast<std::size_t>(behavsim::grid_index(t))]);
  for (const auto& t : split.test) test.push_back(solved[static_cast<std::size_t>(behavsim::grid_index(t))]);
  return {behavsim::solve_percentage(train), behavsim::solve_percentage(test)};
}

int run_train(const Command& cmd) {
  using namespace behavsim;
  const nlohmann::json cfg = cmd.resolve();
  const TrainMethod method = parse_train_method(get<std::string>(cfg, "/method"));
  const GridSplit split = resolve_split(cfg.at("split"));
  const int n_seeds = get<int>(cfg, "/seeds");
  const auto first_seed = get<std::uint64_t>(cfg, "/first_seed");
  if (n_seeds < 1) throw UsageError("--seeds must be positive");
  const CmeConfig base = cme_config_from_json(cfg.at("training"), default_cme_config(method));

  const bool pi_bisim = method == TrainMethod::cme_pi_bisim || method == TrainMethod::l2_pi_bisim;
  const ObstacleColor color = parse_obstacle_color(get<std::string>(cfg, "/color"));
  const JumpingDataset data = build_jumping_dataset(split, pi_bisim, JumpingGeometry{}, {}, color);
  std::vector<TrainResult> results(static_cast<std::size_t>(n_seeds));
  parallel_for(results.size(), [&](std::size_t i) {
    CmeConfig c = base;
    c.seed = first_seed + i;
    results[i] = train_jumping(data, c, method);
  });

  cmd.prepare_output(cfg);
  nlohmann::json per_seed = nlohmann::json::array();
  double mean_train = 0.0;
  double mean_test = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::uint64_t seed = first_seed + i;
    const auto dir = cmd.out_dir() / ("seed_" + std::to_string(seed));
    std::filesystem::create_directories(dir);
    write_json_file(dir / "model.json", to_json(r.model));
    write_text_file(dir / "metrics.csv", metrics_log_csv(r.log));
    write_solve_grid(dir / "solve_grid.pgm", r.solved, split.training);
    per_seed.push_back({{"seed", seed}, {"train_solve_pct", r.train_solve_pct}, {"test_solve_pct", r.test_solve_pct}});
    mean_train += r.train_solve_pct / static_cast<double>(results.size());
    mean_test += r.test_solve_pct / static_cast<double>(results.size());
    std::cout << "seed " << seed << ": train " << format_double(r.train_solve_pct) << "%, test "
              << format_double(r.test_solve_pct) << "%\n";
  }
  double var = 0.0;
  for (const auto& r : results) var += (r.test_solve_pct - mean_test) * (r.test_solve_pct - mean_test);
  const double std_test = results.size() > 1 ? std::sqrt(var / static_cast<double>(results.size() - 1)) : 0.0;
  write_json_file(cmd.out_dir() / "summary.json", {{"method", std::string(to_string(method))},
                                                   {"split", split_json(split)},
                                                   {"seeds", per_seed},
                                                   {"mean_train_solve_pct", mean_train},
                                                   {"mean_test_solve_pct", mean_test},
                                                   {"std_test_solve_pct", std_test}});
  std::cout << to_string(method) << " mean test solve " << format_double(mean_test) << "% over " << n_seeds
            << " seed(s)\n";
  return kExitOk;
}

int run_eval(const Command& cmd) {
  using namespace behavsim;
  const nlohmann::json cfg = cmd.resolve();
  const EmbeddingModel model = load_model(get<std::string>(cfg, "/model"));
  const GridSplit split = resolve_split(cfg.at("split"));
  const ObstacleColor color = parse_obstacle_color(get<std::string>(cfg, "/color"));
  const std::vector<bool> solved = solve_tasks(model, all_grid_tasks(), JumpingGeometry{}, color);
  const auto [train, test] = split_rates(solved, split);

  cmd.prepare_output(cfg);
  write_solve_grid(cmd.out_dir() / "solve_grid.pgm", solved, split.training);
  std::vector<int> flags(solved.begin(), solved.end());
  write_json_file(cmd.out_dir() / "eval.json", {{"split", split_json(split)},
                                                {"solved", flags},
                                                {"train_solve_pct", train},
                                                {"test_solve_pct", test},
                                                {"overall_solve_pct", solve_percentage(solved)}});
  std::cout << "train " << format_double(train) << "%, test " << format_double(test) << "%\n";
  return kExitOk;
}

int run_embed(const Command& cmd) {
  using namespace behavsim;
  const nlohmann::json cfg = cmd.resolve();
  const EmbeddingModel model = load_model(get<std::string>(cfg, "/model"));
  std::vector<GridTask> tasks;
  // Either [[pos, height], ...] from a config file or the flat list of repeated --task flags.
  const nlohmann::json& listed = cfg.at("tasks");
  std::vector<int> flat;
  for (const auto& t : listed) {
    if (t.is_array()) {
      if (t.size() != 2) throw UsageError("tasks entries must be [position, height]");
      flat.push_back(t[0].get<int>());
      flat.push_back(t[1].get<int>());
    } else {
      flat.push_back(t.get<int>());
    }
  }
  if (flat.size() % 2 != 0) throw UsageError("tasks must come as position/height pairs");
  for (std::size_t i = 0; i < flat.size(); i += 2) {
    tasks.push_back({flat[i], flat[i + 1]});
    (void)grid_index(tasks.back());
  }
  if (tasks.empty()) tasks = resolve_split(cfg.at("split")).training;
  const ObstacleColor color = parse_obstacle_color(get<std::string>(cfg, "/color"));

  std::ostringstream emb;
  std::ostringstream pca_csv;
  emb << "position,height,step,x,phase,action";
  for (int k = 0; k < model.config().embedding_dim; ++k) emb << ",e" << k;
  emb << '\n';
  std::vector<std::array<int, 3>> keys;
  Eigen::MatrixXd all;
  for (const auto& t : tasks) {
    const JumpingTask task(JumpingInstance{t.obstacle_position, t.floor_height, color});
    const JumpingSolution sol = jumping_optimal_policy(task);
    const Trajectory traj = jumping_optimal_trajectory(task, sol);
    Eigen::MatrixXd inputs;
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const Eigen::VectorXd in = observation_input(task.render(traj.states[k]));
      if (k == 0) inputs.resize(in.size(), static_cast<Eigen::Index>(traj.size()));
      inputs.col(static_cast<Eigen::Index>(k)) = in;
    }
    const Eigen::MatrixXd z = model.forward(inputs).embedding;
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const JumpState s = *task.decode(traj.states[k]);
      emb << t.obstacle_position << ',' << t.floor_height << ',' << k << ',' << s.x << ',' << s.phase << ','
          << sol.policy.greedy_action(traj.states[k]);
      for (Eigen::Index d = 0; d < z.rows(); ++d) emb << ',' << format_double(z(d, static_cast<Eigen::Index>(k)));
      emb << '\n';
      keys.push_back({t.obstacle_position, t.floor_height, static_cast<int>(k)});
    }
    Eigen::MatrixXd grown(z.rows(), all.cols() + z.cols());
    if (all.cols() > 0) grown.leftCols(all.cols()) = all;
    grown.rightCols(z.cols()) = z;
    all = std::move(grown);
  }
  const Eigen::MatrixXd pcs = pca2(all.transpose());
  pca_csv << "position,height,step,pc1,pc2\n";
  for (std::size_t i = 0; i < keys.size(); ++i) {
    pca_csv << keys[i][0] << ',' << keys[i][1] << ',' << keys[i][2] << ','
            << format_double(pcs(static_cast<Eigen::Index>(i), 0)) << ','
            << format_double(pcs(static_cast<Eigen::Index>(i), 1)) << '\n';
  }

  cmd.prepare_output(cfg);
  write_text_file(cmd.out_dir() / "embeddings.csv", emb.str());
  write_text_file(cmd.out_dir() / "pca.csv", pca_csv.str());
  std::cout << "dumped " << keys.size() << " embeddings from " << tasks.size() << " task(s)\n";
  return kExitOk;
}

}  // namespace

void register_jumping(CLI::App& app, std::vector<Runner>& runners) {
  using namespace behavsim;
  auto train = std::make_shared<Command>(app, "train-jumping", "Train policies on the jumping task and score the grid",
                                         nlohmann::json::object());
  train->set_defaults([](const nlohmann::json& overrides) {
    const std::string name =
        overrides.contains("method") && overrides["method"].is_string() ? overrides["method"].get<std::string>() : "pse";
    nlohmann::json training = to_json(default_cme_config(parse_train_method(name)));
    training.erase("seed");  // per-run seeds come from first_seed
    return nlohmann::json{{"method", name},
                          {"split", split_defaults()},
                          {"seeds", 1},
                          {"first_seed", 0},
                          {"color", "white"},
                          {"training", training}};
  });
  train->option<std::string>("--method", "/method", "imitation_only | pse | l2_psm | cme_pi_bisim | l2_pi_bisim")
      ->check(CLI::IsMember({"imitation_only", "pse", "l2_psm", "cme_pi_bisim", "l2_pi_bisim"}));
  add_split_options(*train);
  train->option<int>("--seeds", "/seeds", "Number of training seeds");
  train->option<std::uint64_t>("--first-seed", "/first_seed", "First seed");
  train->option<std::string>("--color", "/color", "Obstacle color of every task")
      ->check(CLI::IsMember({"white", "red", "green"}));
  train->option<int>("--epochs", "/training/epochs", "Training epochs");
  train->option<double>("--alpha", "/training/alpha", "Auxiliary loss weight");
  train->option<double>("--lambda", "/training/lambda", "Inverse temperature");
  train->option<double>("--beta", "/training/beta", "Kernel scale");
  train->option<double>("--lr", "/training/learning_rate", "Learning rate");
  train->option<int>("--batch-size", "/training/batch_size", "Imitation batch size");
  train->option<int>("--eval-every", "/training/eval_every", "Test evaluation period in epochs");
  train->option<std::string>("--optimizer", "/training/optimizer", "adam | sgd")->check(CLI::IsMember({"adam", "sgd"}));
  runners.push_back({&train->app(), [train] { return run_train(*train); }});

  auto eval = std::make_shared<Command>(app, "eval-grid", "Score a trained model on all 286 tasks",
                                        nlohmann::json{{"model", ""}, {"split", split_defaults()}, {"color", "white"}});
  eval->option<std::string>("--model", "/model", "Model JSON written by train-jumping");
  add_split_options(*eval);
  eval->option<std::string>("--color", "/color", "Obstacle color")->check(CLI::IsMember({"white", "red", "green"}));
  runners.push_back({&eval->app(), [eval] { return run_eval(*eval); }});

  auto embed = std::make_shared<Command>(
      app, "embed-dump", "Dump embeddings of optimal trajectories and their 2-D PCA",
      nlohmann::json{{"model", ""}, {"split", split_defaults()}, {"tasks", nlohmann::json::array()}, {"color", "white"}});
  embed->option<std::string>("--model", "/model", "Model JSON written by train-jumping");
  add_split_options(*embed);
  embed->option<std::vector<int>>("--task", "/tasks", "Task as POSITION HEIGHT (repeatable; default: training tasks)")
      ->expected(2)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  embed->option<std::string>("--color", "/color", "Obstacle color")->check(CLI::IsMember({"white", "red", "green"}));
  runners.push_back({&embed->app(), [embed] { return run_embed(*embed); }});
}

}  // namespace cli
