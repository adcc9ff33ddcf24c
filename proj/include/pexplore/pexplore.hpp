#pragma once

// Goal exploration with switchable post-exploration.

#include "pexplore/ddpg.hpp"
#include "pexplore/driver.hpp"
#include "pexplore/envs.hpp"
#include "pexplore/goal_space.hpp"
#include "pexplore/grid_world.hpp"
#include "pexplore/memory.hpp"
#include "pexplore/metrics.hpp"
#include "pexplore/mlp.hpp"
#include "pexplore/point_env.hpp"
#include "pexplore/rng.hpp"
#include "pexplore/runner.hpp"
#include "pexplore/tabular_agent.hpp"
#include "pexplore/text.hpp"
