#include <fstream>
#include <iostream>

#include "behavsim/io.hpp"
#include "behavsim/metrics.hpp"
#include "common.hpp"

namespace cli {

namespace {

behavsim::Policy load_policy(const std::string& path, const behavsim::TabularMdp& mdp) {
  if (path.empty()) return behavsim::value_iteration(mdp).policy;
  return behavsim::policy_from_json(behavsim::read_json_file(path));
}

int run_metric(const Command& cmd) {
  using namespace behavsim;
  const nlohmann::json cfg = cmd.resolve();
  const MetricKind kind = parse_metric_kind(get<std::string>(cfg, "/kind"));
  if (kind == MetricKind::generalized_psm) throw UsageError("metric: kind must be psm, pi-bisim or bisim");
  const DistKind dist = parse_dist_kind(get<std::string>(cfg, "/dist"));
  const auto x_path = get<std::string>(cfg, "/x");
  const auto y_path = get<std::string>(cfg, "/y");
  if (x_path.empty() || y_path.empty()) throw UsageError("metric needs --x and --y MDP files");
  const TabularMdp mdpX = mdp_from_json(read_json_file(x_path));
  const TabularMdp mdpY = mdp_from_json(read_json_file(y_path));
  FixedPointOptions opts;
  opts.tol = get<double>(cfg, "/tol");

  PairwiseMetricTable table;
  nlohmann::json policies = nlohmann::json::object();
  if (kind == MetricKind::bisimulation) {
    table = bisimulation(mdpX, mdpY, opts);
  } else {
    const Policy piX = load_policy(get<std::string>(cfg, "/policy_x"), mdpX);
    const Policy piY = load_policy(get<std::string>(cfg, "/policy_y"), mdpY);
    policies = {{"x", policy_to_json(piX)}, {"y", policy_to_json(piY)}};
    table = kind == MetricKind::psm ? psm_exact(mdpX, piX, mdpY, piY, dist, opts)
                                    : pi_bisimulation(mdpX, piX, mdpY, piY, opts);
  }

  cmd.prepare_output(cfg);
  std::ofstream csv(cmd.out_dir() / "table.csv", std::ios::binary);
  write_table_csv(csv, table);
  if (!csv) throw std::runtime_error("cannot write " + (cmd.out_dir() / "table.csv").string());
  nlohmann::json meta = table_to_json(table);
  meta["policies"] = policies;
  write_json_file(cmd.out_dir() / "table.json", meta);
  std::cout << to_string(table.metric_kind) << " table " << table.values.rows() << "x" << table.values.cols() << " after "
            << table.iterations << " iterations -> " << (cmd.out_dir() / "table.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

void register_metric(CLI::App& app, std::vector<Runner>& runners) {
  auto cmd = std::make_shared<Command>(app, "metric", "Pairwise state metric between two tabular MDPs",
                                       nlohmann::json{{"kind", "psm"},
                                                      {"dist", "tv"},
                                                      {"x", ""},
                                                      {"y", ""},
                                                      {"policy_x", ""},
                                                      {"policy_y", ""},
                                                      {"tol", 1e-9}});
  cmd->option<std::string>("--kind", "/kind", "psm | pi-bisim | bisim")
      ->check(CLI::IsMember({"psm", "pi_bisim", "pi-bisim", "bisim", "bisimulation"}));
  cmd->option<std::string>("--dist", "/dist", "Action distance for psm: tv | l1")->check(CLI::IsMember({"tv", "l1"}));
  cmd->option<std::string>("--x", "/x", "MDP JSON for the row states");
  cmd->option<std::string>("--y", "/y", "MDP JSON for the column states");
  cmd->option<std::string>("--policy-x", "/policy_x", "Policy JSON for x (default: optimal)");
  cmd->option<std::string>("--policy-y", "/policy_y", "Policy JSON for y (default: optimal)");
  cmd->option<double>("--tol", "/tol", "Fixed-point tolerance");
  runners.push_back({&cmd->app(), [cmd] { return run_metric(*cmd); }});
}

}  // namespace cli
