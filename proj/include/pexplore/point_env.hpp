#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pexplore/grid_world.hpp"
#include "pexplore/rng.hpp"

namespace pexplore {

struct ContState {
  std::vector<double> coords;

  friend bool operator==(const ContState&, const ContState&) = default;
};

using ContAction = std::vector<double>;

// Axis-aligned solid block; the open interior is excluded from the free space.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  bool contains(const std::vector<double>& p) const {
    for (std::size_t d = 0; d < lo.size(); ++d) {
      if (!(p[d] > lo[d] && p[d] < hi[d])) return false;
    }
    return true;
  }

  // Does the segment a->b pass through the open box? Slab clipping.
  bool intersects_segment(const std::vector<double>& a, const std::vector<double>& b) const {
    double t0 = 0.0;
    double t1 = 1.0;
    for (std::size_t d = 0; d < lo.size(); ++d) {
      const double delta = b[d] - a[d];
      if (delta == 0.0) {
        if (!(a[d] > lo[d] && a[d] < hi[d])) return false;
        continue;
      }
      double ta = (lo[d] - a[d]) / delta;
      double tb = (hi[d] - a[d]) / delta;
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 >= t1) return false;
    }
    return true;
  }
};

struct PointSpec {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<double> start;
  std::vector<Box> obstacles;
  double step_size = 0.05;
  double action_bound = 1.0;
  int max_episode_steps = 50;
};

namespace layouts {

// Free 3-D workspace, analog of a robot-arm reach task.
inline PointSpec point_reach(double step_size = 0.05, int max_episode_steps = 50) {
  return PointSpec{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}, {0.0, 0.0, 0.0}, {}, step_size, 1.0,
                   max_episode_steps};
}

// U-shaped corridor in [-0.5, 2.5]^2. The interior block spans the left two
// thirds of the middle band, so the top arm is only reachable around the bend
// at x in [1.5, 2.5]. The block extends past the left bound so that a point
// clamped onto that bound cannot slide along its edge.
inline PointSpec point_umaze(double step_size = 0.1, int max_episode_steps = 300) {
  return PointSpec{{-0.5, -0.5},
                   {2.5, 2.5},
                   {0.0, 0.0},
                   {Box{{-1.0, 0.5}, {1.5, 1.5}}},
                   step_size,
                   1.0,
                   max_episode_steps};
}

}  // namespace layouts

// Kinematic point: s' = clip(s + step_size * a, bounds). A move whose path
// crosses an obstacle is cancelled and the point stays where it was.
class PointEnv {
 public:
  using state_type = ContState;
  using action_type = ContAction;

  explicit PointEnv(PointSpec spec) : spec_(std::move(spec)) {
    const std::size_t d = spec_.lo.size();
    if (d == 0 || spec_.hi.size() != d || spec_.start.size() != d) {
      throw std::invalid_argument("PointSpec dimension mismatch");
    }
    if (spec_.max_episode_steps < 1) throw std::invalid_argument("max_episode_steps must be >= 1");
    if (!(spec_.action_bound > 0.0)) throw std::invalid_argument("action bound must be > 0");
    if (!(spec_.step_size > 0.0)) throw std::invalid_argument("step_size must be > 0");
    for (std::size_t i = 0; i < d; ++i) {
      if (!(spec_.lo[i] < spec_.hi[i])) throw std::invalid_argument("empty bounds");
    }
    state_.coords = spec_.start;
  }

  const PointSpec& spec() const { return spec_; }
  std::size_t dims() const { return spec_.lo.size(); }
  double action_bound() const { return spec_.action_bound; }
  int max_episode_steps() const { return spec_.max_episode_steps; }
  int steps_taken() const { return steps_; }
  bool terminated() const { return terminated_; }
  const ContState& state() const { return state_; }

  ContState reset() {
    state_.coords = spec_.start;
    steps_ = 0;
    terminated_ = false;
    return state_;
  }

  StepResult<ContState> step(const ContAction& action) {
    if (terminated_) throw std::logic_error("step called on a terminated episode");
    if (action.size() != dims()) throw std::invalid_argument("action arity mismatch");
    std::vector<double> next(dims());
    for (std::size_t d = 0; d < dims(); ++d) {
      if (!std::isfinite(action[d])) throw std::invalid_argument("non-finite action");
      const double a = std::clamp(action[d], -spec_.action_bound, spec_.action_bound);
      next[d] = std::clamp(state_.coords[d] + spec_.step_size * a, spec_.lo[d], spec_.hi[d]);
    }
    const bool blocked = std::any_of(spec_.obstacles.begin(), spec_.obstacles.end(),
                                     [&](const Box& b) {
                                       return b.intersects_segment(state_.coords, next);
                                     });
    if (!blocked) state_.coords = std::move(next);
    ++steps_;
    terminated_ = steps_ >= spec_.max_episode_steps;
    return {state_, terminated_, false};
  }

  ContAction random_action(Rng& rng) const {
    ContAction a(dims());
    for (auto& v : a) v = uniform_real(rng, -spec_.action_bound, spec_.action_bound);
    return a;
  }

  bool is_free(const std::vector<double>& p) const {
    return std::none_of(spec_.obstacles.begin(), spec_.obstacles.end(),
                        [&](const Box& b) { return b.contains(p); });
  }

 private:
  PointSpec spec_;
  ContState state_;
  int steps_ = 0;
  bool terminated_ = false;
};

}  // namespace pexplore
