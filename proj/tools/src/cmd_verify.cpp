#include <iostream>

#include "behavsim/io.hpp"
#include "behavsim/transfer.hpp"
#include "common.hpp"

namespace cli {

namespace {

int run_verify(const Command& cmd) {
  using namespace behavsim;
  nlohmann::json cfg = cmd.resolve();
  const auto check = get<std::string>(cfg, "/check");
  if (check != "all" && check != "transfer" && check != "psm-approx" && check != "counterexample") {
    throw UsageError("verify: unknown check '" + check + "'");
  }
  // The corpus file is folded into the effective config.
  const auto corpus_path = get<std::string>(cfg, "/corpus");
  FuzzConfig corpus = fuzz_config_from_json(cfg.at("fuzz"));
  if (!corpus_path.empty()) {
    corpus = fuzz_config_from_json(read_json_file(corpus_path));
    cfg["fuzz"] = to_json(corpus);
  }
  const auto eps = get<std::vector<double>>(cfg, "/eps");

  nlohmann::json report = nlohmann::json::object();
  bool passed = true;
  if (check == "all" || check == "transfer") {
    const FuzzSummary s = fuzz_transfer_bound(corpus);
    passed = passed && s.passed();
    report["transfer"] = to_json(s);
    std::cout << "transfer bound: " << s.cases << " cases, " << s.failures << " violations\n";
  }
  if (check == "all" || check == "psm-approx") {
    const FuzzSummary s = fuzz_psm_approx(corpus, eps);
    passed = passed && s.passed();
    report["psm_approx"] = to_json(s);
    std::cout << "psm approximation bound: " << s.cases << " cases, " << s.failures << " violations, gap "
              << (s.gap_monotone ? "monotone" : "NOT monotone") << "\n";
  }
  if (check == "all" || check == "counterexample") {
    const CounterexampleReport r = verify_bisim_counterexample(get<double>(cfg, "/rx"), get<double>(cfg, "/ry"),
                                                               get<double>(cfg, "/gamma"));
    passed = passed && r.passed;
    report["counterexample"] = to_json(r);
    std::cout << "counterexample: bisim " << r.bisim_x0_y0 << " vs " << r.bisim_x0_y1 << ", pi-bisim "
              << r.pi_bisim_x0_y0 << " vs " << r.pi_bisim_x0_y1 << ", psm " << r.psm_x0_y0 << " vs "
              << r.psm_x0_y1 << (r.passed ? "" : " (ordering NOT reproduced)") << "\n";
  }
  report["passed"] = passed;
  cmd.prepare_output(cfg);
  write_json_file(cmd.out_dir() / "report.json", report);
  return passed ? kExitOk : kExitFailure;
}

}  // namespace

void register_verify(CLI::App& app, std::vector<Runner>& runners) {
  auto cmd = std::make_shared<Command>(app, "verify", "Fuzz the transfer and approximation bounds",
                                       nlohmann::json{{"check", "all"},
                                                      {"corpus", ""},
                                                      {"fuzz", behavsim::to_json(behavsim::FuzzConfig{})},
                                                      {"eps", std::vector<double>{}},
                                                      {"rx", 1.0},
                                                      {"ry", 3.0},
                                                      {"gamma", 0.9}});
  cmd->option<std::string>("--check", "/check", "all | transfer | psm-approx | counterexample")
      ->check(CLI::IsMember({"all", "transfer", "psm-approx", "counterexample"}));
  cmd->option<std::string>("--corpus", "/corpus", "Fuzzing corpus JSON (default: built-in corpus)");
  cmd->option<std::uint64_t>("--seed", "/fuzz/seed", "Corpus seed");
  cmd->option<std::vector<double>>("--eps", "/eps", "Suboptimality levels for psm-approx");
  cmd->option<double>("--rx", "/rx", "Counterexample reward in X");
  cmd->option<double>("--ry", "/ry", "Counterexample reward in Y");
  cmd->option<double>("--gamma", "/gamma", "Counterexample discount");
  runners.push_back({&cmd->app(), [cmd] { return run_verify(*cmd); }});
}

}  // namespace cli
