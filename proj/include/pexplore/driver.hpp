#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pexplore/goal_space.hpp"
#include "pexplore/memory.hpp"
#include "pexplore/metrics.hpp"
#include "pexplore/rng.hpp"

namespace pexplore {

// How long to post-explore after reaching the goal: a fraction of the
// goal-reaching length (rounded) or a fixed number of steps.
struct PostExploreLength {
  enum class Mode { Proportional, Fixed } mode = Mode::Proportional;
  double proportion = 0.5;
  int steps = 0;

  static PostExploreLength proportional(double p) { return {Mode::Proportional, p, 0}; }
  static PostExploreLength fixed(int n) { return {Mode::Fixed, 0.0, n}; }

  int for_goal_length(std::size_t l) const {
    if (mode == Mode::Fixed) return steps;
    return static_cast<int>(std::lround(proportion * static_cast<double>(l)));
  }
};

struct DriverConfig {
  bool post_exploration = true;
  PostExploreLength pe_length;
  std::uint64_t total_step_budget = 200'000;
  std::uint64_t eval_every = 5'000;
  bool evaluate_success = true;
  SuccessCriterion success_criterion = SuccessCriterion::AnyPoint;
  std::size_t memory_capacity = 10'000;

  void validate() const {
    if (pe_length.mode == PostExploreLength::Mode::Proportional &&
        !(pe_length.proportion >= 0.0 && pe_length.proportion <= 1.0)) {
      throw std::invalid_argument("p_pe must lie in [0, 1]");
    }
    if (pe_length.steps < 0) throw std::invalid_argument("n_pe must be >= 0");
    if (eval_every == 0) throw std::invalid_argument("eval_every must be >= 1");
    if (memory_capacity == 0) throw std::invalid_argument("memory capacity must be >= 1");
  }
};

// Append `steps` uniformly random actions to the trajectory, stopping early if
// the environment terminates. Transitions land in the post-exploration phase.
template <class Env, class Action>
void post_explore(Env& env, Trajectory<typename Env::state_type, Action>& traj, int steps, Rng& rng) {
  auto s = traj.transitions.empty() ? env.state() : traj.transitions.back().next_state;
  for (int i = 0; i < steps && !env.terminated(); ++i) {
    auto a = env.random_action(rng);
    auto r = env.step(a);
    traj.transitions.push_back({s, std::move(a), r.next_state, r.terminated});
    s = r.next_state;
  }
}

// The goal-exploration loop: sample a goal by novelty, pursue it with the
// agent's exploratory policy, optionally post-explore with random actions once
// it is reached, then grow the goal space, store the episode and train.
//
// Randomness comes from per-episode named streams, so switching post-exploration
// on or off never changes the draws of the goal-reaching phase of any episode.
template <class Env, class Agent>
class Driver {
 public:
  using state_type = typename Env::state_type;
  using action_type = typename Env::action_type;
  using spec_type = typename Agent::spec_type;
  using trajectory_type = Trajectory<state_type, action_type>;
  using memory_type = EpisodeMemory<state_type, action_type>;
  using EpisodeObserver = std::function<void(const trajectory_type&)>;

  Driver(DriverConfig cfg, Env env, spec_type spec, double temperature, Agent agent, SeedTree seeds)
      : cfg_(cfg),
        env_(std::move(env)),
        eval_env_(env_),
        goals_(spec, temperature),
        agent_(std::move(agent)),
        memory_(cfg.memory_capacity),
        visits_(spec.num_keys()),
        seeds_(seeds) {
    cfg_.validate();
  }

  const DriverConfig& config() const { return cfg_; }
  void set_post_exploration(bool on) { cfg_.post_exploration = on; }
  const GoalSpace<spec_type>& goal_space() const { return goals_; }
  const Agent& agent() const { return agent_; }
  Agent& agent() { return agent_; }
  const memory_type& memory() const { return memory_; }
  const VisitationGrid& visits() const { return visits_; }
  const Env& env() const { return env_; }
  std::uint64_t total_steps() const { return total_steps_; }
  std::uint64_t episodes() const { return episodes_; }
  bool initialized() const { return initialized_; }

  // Build the goal space from one random-policy episode. Its steps count
  // toward the training budget.
  std::size_t initialize() {
    if (initialized_) return 0;
    Rng rng = seeds_.stream("init");
    const auto visited = goals_.initialize(env_, rng);
    for (const auto& s : visited) visits_.add(goals_.spec().key_of(s));
    total_steps_ += visited.size() - 1;
    initialized_ = true;
    return visited.size() - 1;
  }

  trajectory_type run_episode() {
    if (!initialized_) initialize();
    Rng goal_rng = seeds_.stream("goal", episodes_);
    return run_episode(goals_.sample_goal(goal_rng));
  }

  // One episode toward the given goal.
  trajectory_type run_episode(const Goal<state_type>& goal) {
    if (!initialized_) initialize();
    const std::uint64_t k = episodes_++;
    Rng policy_rng = seeds_.stream("policy", k);
    Rng post_rng = seeds_.stream("post", k);
    Rng learn_rng = seeds_.stream("learn", k);

    const auto& spec = goals_.spec();
    trajectory_type traj;
    traj.goal = goal;
    state_type s = env_.reset();
    std::vector<state_type> visited{s};

    traj.goal_reached = spec.is_reached(traj.goal, s);
    while (!traj.goal_reached && !env_.terminated()) {
      auto a = agent_.act(s, traj.goal, policy_rng);
      auto r = env_.step(a);
      traj.transitions.push_back({s, std::move(a), r.next_state, r.terminated});
      s = r.next_state;
      visited.push_back(s);
      traj.goal_reached = spec.is_reached(traj.goal, s);
    }
    traj.goal_phase_length = traj.transitions.size();

    if (traj.goal_reached && cfg_.post_exploration && !env_.terminated()) {
      post_explore(env_, traj, cfg_.pe_length.for_goal_length(traj.goal_phase_length), post_rng);
      for (std::size_t i = traj.goal_phase_length; i < traj.transitions.size(); ++i) {
        visited.push_back(traj.transitions[i].next_state);
      }
    }

    goals_.observe(std::span<const state_type>(visited));
    for (const auto& v : visited) visits_.add(spec.key_of(v));
    total_steps_ += traj.length();

    memory_.store(traj);
    agent_.learn(traj, memory_, learn_rng);
    return traj;
  }

  MetricsRecord measure(std::uint64_t checkpoint) const {
    MetricsRecord r;
    r.checkpoint = checkpoint;
    r.total_steps = total_steps_;
    r.entropy = visits_.entropy();
    r.n_goals_known = goals_.size();
    r.episodes = episodes_;
    if (cfg_.evaluate_success) {
      Rng rng = seeds_.stream("eval", checkpoint);
      const auto targets = eval_targets();
      r.success_rate = evaluate(agent_, eval_env_, goals_.spec(),
                                std::span<const Goal<state_type>>(targets),
                                eval_env_.max_episode_steps(), rng, cfg_.success_criterion);
    }
    return r;
  }

  // Run episodes until the budget is spent. After each episode that crosses
  // one or more multiples of eval_every a single record is emitted, tagged with
  // the largest multiple crossed; the last record is always tagged with the
  // budget itself.
  std::vector<MetricsRecord> train(const EpisodeObserver& on_episode = {}) {
    std::vector<MetricsRecord> records;
    if (!initialized_) initialize();
    std::uint64_t next = cfg_.eval_every;
    while (total_steps_ < cfg_.total_step_budget) {
      auto traj = run_episode();
      if (on_episode) on_episode(traj);
      if (total_steps_ >= cfg_.total_step_budget) {
        records.push_back(measure(cfg_.total_step_budget));
      } else if (total_steps_ >= next) {
        const std::uint64_t checkpoint = total_steps_ / cfg_.eval_every * cfg_.eval_every;
        records.push_back(measure(checkpoint));
        next = checkpoint + cfg_.eval_every;
      }
    }
    if (records.empty()) records.push_back(measure(cfg_.total_step_budget));
    return records;
  }

 private:
  auto eval_targets() const {
    if constexpr (std::is_same_v<spec_type, CellGoals>) {
      return grid_targets(eval_env_, goals_.spec());
    } else {
      return bin_targets(goals_);
    }
  }

  DriverConfig cfg_;
  Env env_;
  Env eval_env_;
  GoalSpace<spec_type> goals_;
  Agent agent_;
  memory_type memory_;
  VisitationGrid visits_;
  SeedTree seeds_;
  std::uint64_t total_steps_ = 0;
  std::uint64_t episodes_ = 0;
  bool initialized_ = false;
};

}  // namespace pexplore
