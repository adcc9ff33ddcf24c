#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "pexplore/grid_world.hpp"
#include "pexplore/point_env.hpp"

namespace pexplore {

struct EnvConfig {
  std::string env_name = "FourRooms";
  int grid_size = 5;             // Empty only; the other grids have fixed sizes
  int max_episode_steps = 0;     // 0 selects the per-environment default
  std::uint64_t env_seed = 0;    // layout seed for the lava tasks
  double step_size = 0.0;        // 0 selects the per-environment default

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

inline bool is_grid_env(const std::string& name) {
  return name == "FourRooms" || name == "LavaCrossing" || name == "LavaGap" || name == "Empty";
}

inline bool is_point_env(const std::string& name) {
  return name == "PointReach" || name == "PointUMaze";
}

inline int default_horizon(const std::string& name) {
  if (is_grid_env(name)) return 100;
  if (name == "PointReach") return 50;
  if (name == "PointUMaze") return 300;
  throw std::invalid_argument("unknown environment " + name);
}

inline double default_step_size(const std::string& name) {
  if (name == "PointReach") return 0.05;
  if (name == "PointUMaze") return 0.1;
  return 0.0;
}

inline GridWorld make_grid_world(const EnvConfig& cfg) {
  const int horizon = cfg.max_episode_steps > 0 ? cfg.max_episode_steps : default_horizon(cfg.env_name);
  if (cfg.env_name == "FourRooms") return GridWorld(layouts::four_rooms(), horizon);
  if (cfg.env_name == "LavaCrossing" || cfg.env_name == "LavaGap") {
    return GridWorld(generate_layout(cfg.env_name, cfg.env_seed), horizon);
  }
  if (cfg.env_name == "Empty") {
    if (cfg.grid_size < 5) throw std::invalid_argument("grid_size must be >= 5");
    return GridWorld(layouts::walled_room(cfg.grid_size), horizon);
  }
  throw std::invalid_argument("not a grid environment: " + cfg.env_name);
}

inline PointEnv make_point_env(const EnvConfig& cfg) {
  const int horizon = cfg.max_episode_steps > 0 ? cfg.max_episode_steps : default_horizon(cfg.env_name);
  const double step = cfg.step_size > 0.0 ? cfg.step_size : default_step_size(cfg.env_name);
  if (cfg.env_name == "PointReach") return PointEnv(layouts::point_reach(step, horizon));
  if (cfg.env_name == "PointUMaze") return PointEnv(layouts::point_umaze(step, horizon));
  throw std::invalid_argument("not a continuous environment: " + cfg.env_name);
}

}  // namespace pexplore
