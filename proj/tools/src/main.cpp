#include <iostream>

#include "behavsim/error.hpp"
#include "common.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Behavioral similarity metrics, embeddings and generalization experiments"};
  app.require_subcommand(1);
  std::vector<cli::Runner> runners;
  cli::register_metric(app, runners);
  cli::register_verify(app, runners);
  cli::register_render(app, runners);
  cli::register_jumping(app, runners);
  cli::register_lqr(app, runners);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  }

  try {
    for (const auto& r : runners) {
      if (r.app->parsed()) return r.run();
    }
  } catch (const cli::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  } catch (const behavsim::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return cli::kExitFailure;
  }
  return cli::kExitUsage;
}
