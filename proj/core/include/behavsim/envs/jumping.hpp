#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "behavsim/envs/observation.hpp"
#include "behavsim/mdp.hpp"

namespace behavsim {

enum class ObstacleColor { white, red, green };

std::string_view to_string(ObstacleColor color);
ObstacleColor parse_obstacle_color(std::string_view name);

/// Pixel geometry shared by every task of the grid. Heights are measured
/// upwards from the bottom row of the frame.
struct JumpingGeometry {
  int frame_height = 60;
  int frame_width = 60;
  int agent_size = 5;
  int obstacle_size = 9;
  int jump_height = 15;
  int agent_start = 0;
};

inline constexpr int kMinObstaclePosition = 20;
inline constexpr int kNumObstaclePositions = 26;
inline constexpr int kMinFloorHeight = 10;
inline constexpr int kNumFloorHeights = 11;
inline constexpr int kNumJumpingTasks = kNumObstaclePositions * kNumFloorHeights;

inline constexpr ActionIndex kActionRight = 0;
inline constexpr ActionIndex kActionJump = 1;

inline constexpr double kJumpingGamma = 0.99;
inline constexpr double kGoalBonus = 100.0;

struct JumpingInstance {
  int obstacle_position = kMinObstaclePosition;
  int floor_height = kMinFloorHeight;
  ObstacleColor color = ObstacleColor::white;
  JumpingGeometry geometry{};
};

/// Agent column and jump phase; phase 0 is on the floor, phases 1 .. 2J-1
/// follow the arc whose height offset is min(phase, 2J - phase).
struct JumpState {
  int x = 0;
  int phase = 0;
  bool operator==(const JumpState&) const = default;
};

enum class StepKind { running, goal, crash };

struct StepOutcome {
  StepKind kind = StepKind::running;
  JumpState next{};
  double reward = 0.0;
};

/// Height offset of the agent above the floor at `phase`.
int arc_offset(const JumpingGeometry& g, int phase);
bool collides(const JumpingInstance& inst, JumpState s);

/// Closed-form dynamics: the agent moves one column right per step; `jump`
/// starts the arc when on the floor and is ignored in the air. Reaching the
/// right edge ends the episode with +1 and the goal bonus, a collision ends it
/// with 0 (green obstacles: the collision earns +1 and the bonus, the edge
/// only +1).
StepOutcome jumping_step(const JumpingInstance& inst, JumpState s, ActionIndex action);

/// Tabular form of one instance with a renderer for every state.
class JumpingTask {
 public:
  explicit JumpingTask(JumpingInstance instance);

  const JumpingInstance& instance() const { return instance_; }
  const TabularMdp& mdp() const { return mdp_; }

  StateIndex encode(JumpState s) const;
  /// Empty for the two terminal states.
  std::optional<JumpState> decode(StateIndex s) const;
  StateIndex start_state() const { return encode({instance_.geometry.agent_start, 0}); }
  StateIndex goal_state() const { return goal_; }
  StateIndex crash_state() const { return crash_; }

  /// Grayscale for white obstacles, RGB otherwise. The goal state shows the
  /// agent at the right edge, the crash state shows no agent. Descending arc
  /// phases draw the agent at a lower intensity so every state renders uniquely.
  Observation render(StateIndex s) const;

 private:
  JumpingInstance instance_;
  int columns_ = 0;
  int phases_ = 0;
  StateIndex goal_ = 0;
  StateIndex crash_ = 0;
  TabularMdp mdp_;
};

Observation render_jumping(const JumpingInstance& inst, std::optional<JumpState> agent);

JumpingTask jumping_build(const JumpingInstance& instance);
/// Copy of the instance with the obstacle recolored.
JumpingTask jumping_colored(JumpingInstance instance, ObstacleColor color);

struct JumpingSolution {
  Policy policy;
  /// Floor column where the optimal agent jumps; empty when it never jumps.
  std::optional<int> jump_column;
  /// Optimal actions along the trajectory from the start state.
  std::vector<ActionIndex> actions;
};

/// Best single-jump plan by brute force over every jump column (and the
/// no-jump plan), with the full policy from value iteration, which must agree
/// along the optimal trajectory. Throws InvalidArgument when no plan reaches a
/// rewarded terminal.
JumpingSolution jumping_optimal_policy(const JumpingTask& task);

/// Decision states of the optimal trajectory from the start state.
Trajectory jumping_optimal_trajectory(const JumpingTask& task, const JumpingSolution& solution);

/// Plays one episode with `choose` consulted on floor states only; returns
/// true when the episode earns the goal bonus.
template <class Chooser>
bool jumping_episode_solved(const JumpingInstance& inst, Chooser&& choose) {
  JumpState s{inst.geometry.agent_start, 0};
  for (;;) {
    const ActionIndex a = s.phase == 0 ? choose(s) : kActionRight;
    const StepOutcome out = jumping_step(inst, s, a);
    if (out.kind != StepKind::running) return out.reward > 1.0;
    s = out.next;
  }
}

}  // namespace behavsim
