#include "behavsim/envs/jumping.hpp"

#include <cmath>
#include <string>

#include "behavsim/error.hpp"

namespace behavsim {

namespace {

constexpr double kAgentValue = 1.0;
constexpr double kAgentDescendingValue = 0.75;
constexpr double kObstacleValue = 0.5;
constexpr double kFloorValue = 0.25;

void validate(const JumpingInstance& inst) {
  const auto& g = inst.geometry;
  if (g.frame_height <= 0 || g.frame_width <= 0 || g.agent_size <= 0 || g.obstacle_size <= 0 ||
      g.jump_height <= 0) {
    throw InvalidArgument("jumping: geometry sizes must be positive");
  }
  if (g.agent_start < 0 || g.agent_start + g.agent_size >= g.frame_width) {
    throw InvalidArgument("jumping: agent start outside the frame");
  }
  if (inst.obstacle_position < 0 || inst.obstacle_position + g.obstacle_size > g.frame_width) {
    throw InvalidArgument("jumping: obstacle outside the frame");
  }
  if (inst.obstacle_position + g.obstacle_size > g.frame_width - g.agent_size) {
    throw InvalidArgument("jumping: obstacle overlaps the goal columns");
  }
  if (inst.floor_height < 1 ||
      inst.floor_height + g.jump_height + g.agent_size > g.frame_height ||
      inst.floor_height + g.obstacle_size > g.frame_height) {
    throw InvalidArgument("jumping: floor height leaves no room for the jump arc");
  }
}

}  // namespace

std::string_view to_string(ObstacleColor color) {
  switch (color) {
    case ObstacleColor::white: return "white";
    case ObstacleColor::red: return "red";
    case ObstacleColor::green: return "green";
  }
  return "white";
}

ObstacleColor parse_obstacle_color(std::string_view name) {
  if (name == "white") return ObstacleColor::white;
  if (name == "red") return ObstacleColor::red;
  if (name == "green") return ObstacleColor::green;
  throw InvalidArgument("unknown obstacle color '" + std::string(name) + "'");
}

int arc_offset(const JumpingGeometry& g, int phase) {
  return phase == 0 ? 0 : std::min(phase, 2 * g.jump_height - phase);
}

bool collides(const JumpingInstance& inst, JumpState s) {
  const auto& g = inst.geometry;
  const bool overlap_x =
      s.x + g.agent_size - 1 >= inst.obstacle_position && s.x <= inst.obstacle_position + g.obstacle_size - 1;
  return overlap_x && arc_offset(g, s.phase) < g.obstacle_size;
}

StepOutcome jumping_step(const JumpingInstance& inst, JumpState s, ActionIndex action) {
  const auto& g = inst.geometry;
  JumpState next{s.x + 1, 0};
  if (s.phase > 0) {
    next.phase = (s.phase + 1) % (2 * g.jump_height);
  } else if (action == kActionJump) {
    next.phase = 1;
  }
  const bool green = inst.color == ObstacleColor::green;
  if (collides(inst, next)) {
    return {StepKind::crash, next, green ? 1.0 + kGoalBonus : 0.0};
  }
  if (next.x >= g.frame_width - g.agent_size) {
    return {StepKind::goal, next, green ? 1.0 : 1.0 + kGoalBonus};
  }
  return {StepKind::running, next, 1.0};
}

Observation render_jumping(const JumpingInstance& inst, std::optional<JumpState> agent) {
  const auto& g = inst.geometry;
  const int channels = inst.color == ObstacleColor::white ? 1 : 3;
  Observation obs(g.frame_height, g.frame_width, channels);
  auto fill = [&](int top, int bottom, int left, int right, std::array<double, 3> rgb) {
    for (int r = std::max(0, top); r < std::min(g.frame_height, bottom); ++r) {
      for (int c = std::max(0, left); c < std::min(g.frame_width, right); ++c) {
        for (int ch = 0; ch < channels; ++ch) obs.at(r, c, ch) = rgb[static_cast<std::size_t>(ch)];
      }
    }
  };
  const int floor_row = g.frame_height - inst.floor_height;
  fill(floor_row, floor_row + 1, 0, g.frame_width, {kFloorValue, kFloorValue, kFloorValue});

  std::array<double, 3> obstacle{kObstacleValue, kObstacleValue, kObstacleValue};
  if (inst.color == ObstacleColor::red) obstacle = {1.0, 0.0, 0.0};
  if (inst.color == ObstacleColor::green) obstacle = {0.0, 1.0, 0.0};
  fill(floor_row - g.obstacle_size, floor_row, inst.obstacle_position,
       inst.obstacle_position + g.obstacle_size, obstacle);

  if (agent) {
    const double v = agent->phase > g.jump_height ? kAgentDescendingValue : kAgentValue;
    const int bottom = floor_row - arc_offset(g, agent->phase);
    fill(bottom - g.agent_size, bottom, agent->x, agent->x + g.agent_size, {v, v, v});
  }
  return obs;
}

namespace {

TabularMdp build_mdp(const JumpingInstance& inst, int columns, int phases) {
  const auto nonterminal = static_cast<std::size_t>(columns * phases);
  const std::size_t n = nonterminal + 2;
  const auto goal = static_cast<Eigen::Index>(nonterminal);
  const auto crash = goal + 1;
  Eigen::MatrixXd reward = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 2);
  std::vector<Eigen::MatrixXd> transition(2, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                                   static_cast<Eigen::Index>(n)));
  for (int x = 0; x < columns; ++x) {
    for (int k = 0; k < phases; ++k) {
      const Eigen::Index s = x * phases + k;
      for (ActionIndex a = 0; a < 2; ++a) {
        const StepOutcome out = jumping_step(inst, {x, k}, a);
        Eigen::Index next = goal;
        if (out.kind == StepKind::crash) next = crash;
        if (out.kind == StepKind::running) next = out.next.x * phases + out.next.phase;
        transition[a](s, next) = 1.0;
        reward(s, static_cast<Eigen::Index>(a)) = out.reward;
      }
    }
  }
  for (auto t : {goal, crash}) {
    transition[0](t, t) = 1.0;
    transition[1](t, t) = 1.0;
  }
  std::vector<bool> terminal(n, false);
  terminal[static_cast<std::size_t>(goal)] = true;
  terminal[static_cast<std::size_t>(crash)] = true;
  const auto start = static_cast<StateIndex>(inst.geometry.agent_start * phases);
  return TabularMdp(std::move(reward), std::move(transition), kJumpingGamma, std::move(terminal), {start},
                    "jumping_p" + std::to_string(inst.obstacle_position) + "_h" +
                        std::to_string(inst.floor_height) + "_" + std::string(to_string(inst.color)));
}

}  // namespace

JumpingTask::JumpingTask(JumpingInstance instance)
    : instance_((validate(instance), instance)),
      columns_(instance.geometry.frame_width - instance.geometry.agent_size),
      phases_(2 * instance.geometry.jump_height),
      goal_(static_cast<StateIndex>(columns_ * phases_)),
      crash_(goal_ + 1),
      mdp_(build_mdp(instance_, columns_, phases_)) {}

StateIndex JumpingTask::encode(JumpState s) const {
  if (s.x < 0 || s.x >= columns_ || s.phase < 0 || s.phase >= phases_) {
    throw InvalidArgument("jumping: state outside the grid");
  }
  return static_cast<StateIndex>(s.x * phases_ + s.phase);
}

std::optional<JumpState> JumpingTask::decode(StateIndex s) const {
  if (s >= goal_) return std::nullopt;
  const int i = static_cast<int>(s);
  return JumpState{i / phases_, i % phases_};
}

Observation JumpingTask::render(StateIndex s) const {
  if (s == goal_) return render_jumping(instance_, JumpState{columns_, 0});
  if (s == crash_) return render_jumping(instance_, std::nullopt);
  return render_jumping(instance_, decode(s));
}

JumpingTask jumping_build(const JumpingInstance& instance) { return JumpingTask(instance); }

JumpingTask jumping_colored(JumpingInstance instance, ObstacleColor color) {
  instance.color = color;
  return JumpingTask(instance);
}

namespace {

struct Plan {
  double discounted_return = 0.0;
  bool bonus = false;
  std::vector<ActionIndex> actions;
};

Plan play(const JumpingInstance& inst, std::optional<int> jump_column, double gamma) {
  Plan plan;
  JumpState s{inst.geometry.agent_start, 0};
  double discount = 1.0;
  for (;;) {
    const ActionIndex a = (s.phase == 0 && jump_column && s.x == *jump_column) ? kActionJump : kActionRight;
    plan.actions.push_back(a);
    const StepOutcome out = jumping_step(inst, s, a);
    plan.discounted_return += discount * out.reward;
    discount *= gamma;
    if (out.kind != StepKind::running) {
      plan.bonus = out.reward > 1.0;
      return plan;
    }
    s = out.next;
  }
}

}  // namespace

JumpingSolution jumping_optimal_policy(const JumpingTask& task) {
  const auto& inst = task.instance();
  const auto& g = inst.geometry;
  const double gamma = task.mdp().gamma();
  const int last_column = g.frame_width - g.agent_size - 1;

  // The no-jump plan is tried first; a jump column must strictly improve on it.
  std::optional<int> best_column;
  Plan best = play(inst, std::nullopt, gamma);
  for (int c = g.agent_start; c <= last_column; ++c) {
    Plan p = play(inst, c, gamma);
    if (p.discounted_return > best.discounted_return + 1e-9 * std::max(1.0, std::abs(best.discounted_return))) {
      best = std::move(p);
      best_column = c;
    }
  }
  if (!best.bonus) {
    throw InvalidArgument("jumping: no single-jump plan clears the obstacle at column " +
                          std::to_string(inst.obstacle_position) + " (tried columns " +
                          std::to_string(g.agent_start) + ".." + std::to_string(last_column) + ")");
  }

  ValueIterationResult vi = value_iteration(task.mdp());
  JumpState s{g.agent_start, 0};
  for (ActionIndex a : best.actions) {
    if (vi.policy.greedy_action(task.encode(s)) != a) {
      throw std::logic_error("jumping: value iteration disagrees with the brute-force plan at column " +
                             std::to_string(s.x));
    }
    const StepOutcome out = jumping_step(inst, s, a);
    if (out.kind != StepKind::running) break;
    s = out.next;
  }
  return {std::move(vi.policy), best_column, std::move(best.actions)};
}

Trajectory jumping_optimal_trajectory(const JumpingTask& task, const JumpingSolution& solution) {
  const auto& g = task.instance().geometry;
  const auto max_steps = static_cast<std::size_t>(g.frame_width + 2 * g.jump_height);
  return decision_states(task.mdp(), rollout(task.mdp(), solution.policy, task.start_state(), max_steps, 0));
}

}  // namespace behavsim
