#pragma once

#include <cstddef>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "behavsim/envs/grid.hpp"

namespace cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Bad flags or config contents; reported with exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A subcommand's parameters: defaults, an optional JSON config file and flag
/// overrides, resolved in that order (flags win).
class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& help, nlohmann::json defaults);

  CLI::App& app() { return *app_; }

  /// Defaults that depend on other settings (e.g. per-method hyperparameters);
  /// receives the user's overrides, file and flags combined.
  void set_defaults(std::function<nlohmann::json(const nlohmann::json& overrides)> fn) { defaults_fn_ = std::move(fn); }

  /// Flag bound to the config entry at JSON pointer `key`.
  template <class T>
  CLI::Option* option(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    overlays_.push_back([opt, value, key](nlohmann::json& j) {
      if (opt->count() > 0) j[nlohmann::json::json_pointer(key)] = *value;
    });
    return opt;
  }
  CLI::Option* toggle(const std::string& flag, const std::string& key, const std::string& help);

  /// Defaults, then the config file, then flags. Unknown config keys are rejected.
  nlohmann::json resolve() const;
  std::filesystem::path out_dir() const { return out_dir_; }

  /// Creates the output directory and writes config.json.
  void prepare_output(const nlohmann::json& effective) const;

 private:
  CLI::App* app_;
  nlohmann::json defaults_;
  std::function<nlohmann::json(const nlohmann::json&)> defaults_fn_;
  std::string config_path_;
  std::string out_dir_ = "out";
  std::vector<std::function<void(nlohmann::json&)>> overlays_;
};

/// Reads `key` from the resolved config, turning type errors into UsageError.
template <class T>
T get(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(nlohmann::json::json_pointer(key)).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config field '" + key + "': " + e.what());
  }
}

/// Worker cap from BEHAVSIM_THREADS (default: hardware concurrency).
std::size_t thread_count();

/// Runs fn(i) for i in [0, n) on up to thread_count() threads. Results must be
/// written to per-index slots; the lowest-index exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// 26 x 11 image, one pixel per task: column = obstacle position, row 0 = the
/// highest floor. Solved 255, unsolved 0, training tasks 128.
void write_solve_grid(const std::filesystem::path& path, const std::vector<bool>& solved,
                      const std::vector<behavsim::GridTask>& training);

/// Split from a config block {"kind", "seed", "layouts"}.
behavsim::GridSplit resolve_split(const nlohmann::json& block);

struct Runner {
  CLI::App* app;
  std::function<int()> run;
};

void register_metric(CLI::App& app, std::vector<Runner>& runners);
void register_verify(CLI::App& app, std::vector<Runner>& runners);
void register_render(CLI::App& app, std::vector<Runner>& runners);
void register_jumping(CLI::App& app, std::vector<Runner>& runners);
void register_lqr(CLI::App& app, std::vector<Runner>& runners);

}  // namespace cli
