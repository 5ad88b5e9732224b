#include "common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

#include "behavsim/envs/jumping.hpp"
#include "behavsim/envs/observation.hpp"
#include "behavsim/io.hpp"

namespace cli {

namespace {

void merge_checked(nlohmann::json& base, const nlohmann::json& patch, const std::string& path) {
  if (!base.is_object() || !patch.is_object()) {
    base = patch;
    return;
  }
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path + "/" + key;
    if (!base.contains(key)) throw UsageError("unknown config field '" + where + "'");
    merge_checked(base[key], value, where);
  }
}

}  // namespace

Command::Command(CLI::App& parent, const std::string& name, const std::string& help, nlohmann::json defaults)
    : app_(parent.add_subcommand(name, help)), defaults_(std::move(defaults)) {
  app_->add_option("--config", config_path_, "JSON config file; flags override its values");
  app_->add_option("--out", out_dir_, "Output directory")->capture_default_str();
}

CLI::Option* Command::toggle(const std::string& flag, const std::string& key, const std::string& help) {
  auto value = std::make_shared<bool>(false);
  CLI::Option* opt = app_->add_flag(flag, *value, help);
  overlays_.push_back([opt, value, key](nlohmann::json& j) {
    if (opt->count() > 0) j[nlohmann::json::json_pointer(key)] = *value;
  });
  return opt;
}

nlohmann::json Command::resolve() const {
  nlohmann::json overrides = nlohmann::json::object();
  if (!config_path_.empty()) {
    try {
      overrides = behavsim::read_json_file(config_path_);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (!overrides.is_object()) throw UsageError(config_path_ + ": config must be a JSON object");
  }
  for (const auto& apply : overlays_) apply(overrides);
  nlohmann::json j = defaults_fn_ ? defaults_fn_(overrides) : defaults_;
  merge_checked(j, overrides, "");
  return j;
}

void Command::prepare_output(const nlohmann::json& effective) const {
  std::filesystem::create_directories(out_dir_);
  behavsim::write_json_file(std::filesystem::path(out_dir_) / "config.json", effective);
}

std::size_t thread_count() {
  if (const char* env = std::getenv("BEHAVSIM_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw UsageError("BEHAVSIM_THREADS must be a positive integer");
    return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(n, thread_count());
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void write_solve_grid(const std::filesystem::path& path, const std::vector<bool>& solved,
                      const std::vector<behavsim::GridTask>& training) {
  using namespace behavsim;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(kNumObstaclePositions * kNumFloorHeights), 0);
  auto put = [&](const GridTask& t, std::uint8_t v) {
    const int row = kNumFloorHeights - 1 - (t.floor_height - kMinFloorHeight);
    const int col = t.obstacle_position - kMinObstaclePosition;
    pixels[static_cast<std::size_t>(row * kNumObstaclePositions + col)] = v;
  };
  for (const auto& t : all_grid_tasks()) put(t, solved[static_cast<std::size_t>(grid_index(t))] ? 255 : 0);
  for (const auto& t : training) put(t, 128);
  write_pgm(path, kNumObstaclePositions, kNumFloorHeights, pixels);
}

behavsim::GridSplit resolve_split(const nlohmann::json& block) {
  const auto kind = behavsim::parse_split_kind(get<std::string>(block, "/kind"));
  const auto layouts = get<std::string>(block, "/layouts");
  if (kind != behavsim::SplitKind::random && !layouts.empty()) {
    return behavsim::grid_split_from_layout(behavsim::read_json_file(layouts), kind);
  }
  return behavsim::grid_split(kind, get<std::uint64_t>(block, "/seed"));
}

}  // namespace cli
