#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace behavsim {

enum class SplitKind { wide, narrow, random };

std::string_view to_string(SplitKind kind);
SplitKind parse_split_kind(std::string_view name);

/// One cell of the 26 x 11 task grid.
struct GridTask {
  int obstacle_position = 0;
  int floor_height = 0;
  bool operator==(const GridTask&) const = default;
  auto operator<=>(const GridTask&) const = default;
};

/// Position-major index in [0, 286).
int grid_index(const GridTask& task);
GridTask grid_task(int index);
std::vector<GridTask> all_grid_tasks();

inline constexpr int kTrainingTasks = 18;

struct GridSplit {
  SplitKind kind = SplitKind::wide;
  std::uint64_t seed = 0;
  /// Both sorted by grid index.
  std::vector<GridTask> training;
  std::vector<GridTask> test;
};

/// Fixed wide / narrow layouts, or 18 tasks drawn without replacement from `seed`.
GridSplit grid_split(SplitKind kind, std::uint64_t seed = 0);

/// Builds a split from an explicit training list (duplicates and off-grid cells rejected).
GridSplit split_from_training(SplitKind kind, std::vector<GridTask> training, std::uint64_t seed = 0);

/// Layout asset: {"wide": [[pos, height], ...], "narrow": [...]}.
nlohmann::json grid_layouts_json();
/// Reads a layout asset; throws InvalidArgument on malformed input.
GridSplit grid_split_from_layout(const nlohmann::json& layouts, SplitKind kind);

}  // namespace behavsim
