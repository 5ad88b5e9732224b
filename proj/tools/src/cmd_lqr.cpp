#include <iostream>

#include "behavsim/io.hpp"
#include "behavsim/lqr.hpp"
#include "common.hpp"

namespace cli {

namespace {

using behavsim::format_double;

int run_lqr(const Command& cmd) {
  using namespace behavsim;
  const nlohmann::json cfg = cmd.resolve();
  std::vector<LqrMethod> methods;
  for (const auto& name : get<std::vector<std::string>>(cfg, "/methods")) methods.push_back(parse_lqr_method(name));
  if (methods.empty()) throw UsageError("--methods must name at least one method");
  const auto n_ds = get<std::vector<int>>(cfg, "/nd");
  if (n_ds.empty()) throw UsageError("--nd must list at least one distractor dimension");
  const int n_seeds = get<int>(cfg, "/seeds");
  const auto first_seed = get<std::uint64_t>(cfg, "/first_seed");
  const int n_test = get<int>(cfg, "/n_test");
  const int n_init = get<int>(cfg, "/n_init");
  if (n_seeds < 1) throw UsageError("--seeds must be positive");
  for (int n_d : n_ds) {
    if (n_d < 20) throw UsageError("n_d = " + std::to_string(n_d) + " is below the state dimension 20");
  }
  const LqrTrainConfig train = lqr_train_config_from_json(cfg.at("training"));
  const bool save = get<bool>(cfg, "/save_policies");

  struct Job {
    int n_d;
    std::uint64_t seed;
    std::vector<LqrRunRecord> records;
    double analytic_error = 0.0;
    double oracle_cost = 0.0;
  };
  std::vector<Job> jobs;
  for (int n_d : n_ds) {
    for (int i = 0; i < n_seeds; ++i) jobs.push_back({n_d, first_seed + static_cast<std::uint64_t>(i), {}, 0.0, 0.0});
  }
  parallel_for(jobs.size(), [&](std::size_t i) {
    Job& job = jobs[i];
    job.records = run_lqr_experiment(methods, {job.n_d}, {job.seed}, train, n_test, n_init);
    const LqrSuite suite = lqr_build(job.seed, job.n_d, n_test, 20, n_init);
    const LqrSystem& sys = suite.train.front();
    job.oracle_cost = lqr_oracle_cost(sys, suite.init_states, train.horizon);
    const Eigen::MatrixXd k_star = generalizing_policy(sys, dare_solve(sys).P);
    job.analytic_error =
        evaluate_generalization(k_star, suite.test, suite.init_states, job.oracle_cost, train.horizon).mean_error;
  });

  cmd.prepare_output(cfg);
  std::vector<LqrRunRecord> records;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& job : jobs) {
    nlohmann::json errors = nlohmann::json::object();
    for (const auto& r : job.records) {
      errors[std::string(to_string(r.method))] = {{"train_error", r.train_error}, {"test_error", r.test_error}};
      if (save) {
        const auto dir = cmd.out_dir() / "policies";
        std::filesystem::create_directories(dir);
        write_json_file(dir / (std::string(to_string(r.method)) + "_nd" + std::to_string(r.n_d) + "_seed" +
                               std::to_string(r.seed) + ".json"),
                        to_json(r.policy));
      }
      records.push_back(r);
    }
    runs.push_back({{"n_d", job.n_d},
                    {"seed", job.seed},
                    {"oracle_cost", job.oracle_cost},
                    {"analytic_error", job.analytic_error},
                    {"methods", errors}});
  }
  write_text_file(cmd.out_dir() / "results.csv", lqr_results_csv(records));
  write_text_file(cmd.out_dir() / "runs.csv", lqr_runs_csv(records));
  write_json_file(cmd.out_dir() / "summary.json", {{"runs", runs}});
  std::cout << lqr_results_csv(records);
  return kExitOk;
}

}  // namespace

void register_lqr(CLI::App& app, std::vector<Runner>& runners) {
  nlohmann::json training = behavsim::to_json(behavsim::LqrTrainConfig{});
  training.erase("seed");  // each run is seeded with its experiment seed
  auto cmd = std::make_shared<Command>(app, "lqr", "LQR generalization with distractor observations",
                                       nlohmann::json{{"methods", {"psm_aggregation", "overparam"}},
                                                      {"nd", {500}},
                                                      {"seeds", 20},
                                                      {"first_seed", 0},
                                                      {"n_test", 10},
                                                      {"n_init", 100},
                                                      {"save_policies", false},
                                                      {"training", training}});
  cmd->option<std::vector<std::string>>("--methods", "/methods", "overparam, l1_sparse, psm_aggregation (or psm)")
      ->delimiter(',');
  cmd->option<std::vector<int>>("--nd", "/nd", "Distractor dimensions")->delimiter(',');
  cmd->option<int>("--seeds", "/seeds", "Number of seeds");
  cmd->option<std::uint64_t>("--first-seed", "/first_seed", "First seed");
  cmd->option<int>("--n-test", "/n_test", "Test systems per seed");
  cmd->option<int>("--steps", "/training/steps", "Gradient steps");
  cmd->option<double>("--lr", "/training/learning_rate", "Learning rate");
  cmd->option<double>("--l1-weight", "/training/l1_weight", "l1 penalty weight");
  cmd->option<double>("--aggregation-weight", "/training/aggregation_weight", "Aggregation loss weight");
  cmd->toggle("--save-policies", "/save_policies", "Write every trained policy as JSON");
  runners.push_back({&cmd->app(), [cmd] { return run_lqr(*cmd); }});
}

}  // namespace cli
