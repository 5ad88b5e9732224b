#include <cstdio>
#include <iostream>

#include "behavsim/envs/grid.hpp"
#include "behavsim/envs/jumping.hpp"
#include "behavsim/io.hpp"
#include "common.hpp"

namespace cli {

namespace {

std::string frame_name(std::size_t k, int channels) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03zu.%s", k, channels == 1 ? "pgm" : "ppm");
  return buf;
}

int run_render(const Command& cmd) {
  using namespace behavsim;
  const nlohmann::json cfg = cmd.resolve();
  JumpingInstance inst;
  inst.obstacle_position = get<int>(cfg, "/position");
  inst.floor_height = get<int>(cfg, "/height");
  inst.color = parse_obstacle_color(get<std::string>(cfg, "/color"));
  const bool trajectory = get<bool>(cfg, "/trajectory");
  (void)grid_index(GridTask{inst.obstacle_position, inst.floor_height});  // rejects off-grid tasks

  std::vector<Observation> frames;
  if (trajectory) {
    const JumpingTask task(inst);
    const JumpingSolution sol = jumping_optimal_policy(task);
    Trajectory t = rollout(task.mdp(), sol.policy, task.start_state(),
                           static_cast<std::size_t>(2 * inst.geometry.frame_width), 0);
    for (StateIndex s : t.states) frames.push_back(task.render(s));
  } else {
    const JumpState s{get<int>(cfg, "/x"), get<int>(cfg, "/phase")};
    const auto& g = inst.geometry;
    if (s.x < 0 || s.x > g.frame_width - g.agent_size || s.phase < 0 || s.phase >= 2 * g.jump_height) {
      throw UsageError("render: agent column or jump phase out of range");
    }
    if (collides(inst, s)) throw UsageError("render: the agent overlaps the obstacle at that state");
    frames.push_back(render_jumping(inst, s));
  }

  cmd.prepare_output(cfg);
  for (std::size_t k = 0; k < frames.size(); ++k) write_pnm(cmd.out_dir() / frame_name(k, frames[k].channels), frames[k]);
  std::cout << "wrote " << frames.size() << " frame(s) to " << cmd.out_dir().string() << "\n";
  return kExitOk;
}

}  // namespace

void register_render(CLI::App& app, std::vector<Runner>& runners) {
  auto cmd = std::make_shared<Command>(app, "render", "Render jumping-task observations as PGM/PPM",
                                       nlohmann::json{{"position", behavsim::kMinObstaclePosition},
                                                      {"height", behavsim::kMinFloorHeight},
                                                      {"color", "white"},
                                                      {"x", 0},
                                                      {"phase", 0},
                                                      {"trajectory", false}});
  cmd->option<int>("--position", "/position", "Obstacle column");
  cmd->option<int>("--height", "/height", "Floor height");
  cmd->option<std::string>("--color", "/color", "white | red | green")->check(CLI::IsMember({"white", "red", "green"}));
  cmd->option<int>("--x", "/x", "Agent column");
  cmd->option<int>("--phase", "/phase", "Jump phase (0 = on the floor)");
  cmd->toggle("--trajectory", "/trajectory", "Render every frame of the optimal episode");
  runners.push_back({&cmd->app(), [cmd] { return run_render(*cmd); }});
}

}  // namespace cli
