#include "behavsim/envs/grid.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "behavsim/envs/jumping.hpp"
#include "behavsim/error.hpp"

namespace behavsim {

namespace {

std::vector<GridTask> lattice(const std::vector<int>& positions, const std::vector<int>& heights) {
  std::vector<GridTask> out;
  for (int p : positions) {
    for (int h : heights) out.push_back({p, h});
  }
  return out;
}

std::vector<GridTask> wide_layout() { return lattice({20, 25, 30, 35, 40, 45}, {10, 15, 20}); }
std::vector<GridTask> narrow_layout() { return lattice({20, 21, 22, 23, 24, 25}, {10, 11, 12}); }

bool on_grid(const GridTask& t) {
  return t.obstacle_position >= kMinObstaclePosition &&
         t.obstacle_position < kMinObstaclePosition + kNumObstaclePositions &&
         t.floor_height >= kMinFloorHeight && t.floor_height < kMinFloorHeight + kNumFloorHeights;
}

}  // namespace

std::string_view to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::wide: return "wide";
    case SplitKind::narrow: return "narrow";
    case SplitKind::random: return "random";
  }
  return "wide";
}

SplitKind parse_split_kind(std::string_view name) {
  if (name == "wide") return SplitKind::wide;
  if (name == "narrow") return SplitKind::narrow;
  if (name == "random") return SplitKind::random;
  throw InvalidArgument("unknown split kind '" + std::string(name) + "'");
}

int grid_index(const GridTask& task) {
  if (!on_grid(task)) throw InvalidArgument("task outside the 26 x 11 grid");
  return (task.obstacle_position - kMinObstaclePosition) * kNumFloorHeights +
         (task.floor_height - kMinFloorHeight);
}

GridTask grid_task(int index) {
  if (index < 0 || index >= kNumJumpingTasks) throw InvalidArgument("grid index out of range");
  return {kMinObstaclePosition + index / kNumFloorHeights, kMinFloorHeight + index % kNumFloorHeights};
}

std::vector<GridTask> all_grid_tasks() {
  std::vector<GridTask> out;
  for (int i = 0; i < kNumJumpingTasks; ++i) out.push_back(grid_task(i));
  return out;
}

GridSplit split_from_training(SplitKind kind, std::vector<GridTask> training, std::uint64_t seed) {
  std::vector<char> used(kNumJumpingTasks, 0);
  for (const auto& t : training) {
    const int i = grid_index(t);
    if (used[static_cast<std::size_t>(i)]) throw InvalidArgument("duplicate training task");
    used[static_cast<std::size_t>(i)] = 1;
  }
  std::sort(training.begin(), training.end());
  GridSplit split{kind, seed, std::move(training), {}};
  for (int i = 0; i < kNumJumpingTasks; ++i) {
    if (!used[static_cast<std::size_t>(i)]) split.test.push_back(grid_task(i));
  }
  return split;
}

GridSplit grid_split(SplitKind kind, std::uint64_t seed) {
  switch (kind) {
    case SplitKind::wide: return split_from_training(kind, wide_layout());
    case SplitKind::narrow: return split_from_training(kind, narrow_layout());
    case SplitKind::random: {
      // Partial Fisher-Yates on the raw engine output keeps the draw independent
      // of the standard library's distribution implementations.
      std::mt19937_64 rng(seed);
      std::vector<int> idx(kNumJumpingTasks);
      std::iota(idx.begin(), idx.end(), 0);
      std::vector<GridTask> training;
      for (int i = 0; i < kTrainingTasks; ++i) {
        const auto span = static_cast<std::uint64_t>(kNumJumpingTasks - i);
        const auto j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng() % span);
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
        training.push_back(grid_task(idx[static_cast<std::size_t>(i)]));
      }
      return split_from_training(kind, std::move(training), seed);
    }
  }
  throw InvalidArgument("unknown split kind");
}

nlohmann::json grid_layouts_json() {
  auto encode = [](const std::vector<GridTask>& tasks) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : tasks) arr.push_back({t.obstacle_position, t.floor_height});
    return arr;
  };
  return {{"wide", encode(wide_layout())}, {"narrow", encode(narrow_layout())}};
}

GridSplit grid_split_from_layout(const nlohmann::json& layouts, SplitKind kind) {
  const std::string key(to_string(kind));
  if (!layouts.is_object() || !layouts.contains(key) || !layouts.at(key).is_array()) {
    throw InvalidArgument("layout asset has no array '" + key + "'");
  }
  std::vector<GridTask> training;
  for (const auto& cell : layouts.at(key)) {
    if (!cell.is_array() || cell.size() != 2 || !cell[0].is_number_integer() || !cell[1].is_number_integer()) {
      throw InvalidArgument("layout '" + key + "': each entry must be [position, height]");
    }
    training.push_back({cell[0].get<int>(), cell[1].get<int>()});
  }
  if (training.size() != static_cast<std::size_t>(kTrainingTasks)) {
    throw InvalidArgument("layout '" + key + "' must list exactly 18 tasks");
  }
  return split_from_training(kind, std::move(training));
}

}  // namespace behavsim
