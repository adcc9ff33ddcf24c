#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "pexplore/goal_space.hpp"
#include "pexplore/grid_world.hpp"
#include "pexplore/memory.hpp"
#include "pexplore/rng.hpp"

namespace pexplore {

using ActionValues = std::array<double, kGridActions>;

// Goal-conditioned action values Q(s, a | g). One dense slab of rows per goal,
// allocated on first write; unseen entries read as 0.
class QTable {
 public:
  QTable(std::size_t num_states, double alpha, double gamma)
      : num_states_(num_states), alpha_(alpha), gamma_(gamma) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  }

  double alpha() const { return alpha_; }
  double gamma() const { return gamma_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_goals() const { return slabs_.size(); }

  const ActionValues& row(GoalKey goal, GoalKey state) const {
    static constexpr ActionValues kZero{};
    auto it = slabs_.find(goal);
    return it == slabs_.end() ? kZero : it->second[static_cast<std::size_t>(state)];
  }

  ActionValues& mutable_row(GoalKey goal, GoalKey state) {
    auto& slab = slabs_[goal];
    if (slab.empty()) slab.resize(num_states_, ActionValues{});
    return slab[static_cast<std::size_t>(state)];
  }

  double value(GoalKey goal, GoalKey state, int action) const {
    return row(goal, state)[static_cast<std::size_t>(action)];
  }

  // Q(s,a|g) += alpha * (r + gamma * max_a' Q(s',a'|g) - Q(s,a|g)); no bootstrap
  // from terminal next states.
  void update(GoalKey goal, GoalKey state, int action, double reward, GoalKey next_state,
              bool terminal) {
    if (!std::isfinite(reward)) throw std::invalid_argument("QTable::update: non-finite reward");
    if (action < 0 || action >= kGridActions) throw std::invalid_argument("invalid action");
    double target = reward;
    if (!terminal) {
      const auto& next = row(goal, next_state);
      target += gamma_ * *std::max_element(next.begin(), next.end());
    }
    double& q = mutable_row(goal, state)[static_cast<std::size_t>(action)];
    q += alpha_ * (target - q);
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [goal, slab] : slabs_) {
      for (std::size_t s = 0; s < slab.size(); ++s) {
        for (int a = 0; a < kGridActions; ++a) fn(goal, static_cast<GoalKey>(s), a, slab[s][a]);
      }
    }
  }

  // `goal_key,state_key,action,value` for every nonzero entry, goals ascending.
  void dump(std::ostream& os) const {
    std::vector<GoalKey> goals;
    goals.reserve(slabs_.size());
    for (const auto& kv : slabs_) goals.push_back(kv.first);
    std::sort(goals.begin(), goals.end());
    os << "goal_key,state_key,action,value\n";
    for (GoalKey g : goals) {
      const auto& slab = slabs_.at(g);
      for (std::size_t s = 0; s < slab.size(); ++s) {
        for (int a = 0; a < kGridActions; ++a) {
          if (slab[s][a] != 0.0) os << g << ',' << s << ',' << a << ',' << format_double(slab[s][a]) << '\n';
        }
      }
    }
  }

  friend bool operator==(const QTable& a, const QTable& b) {
    return a.num_states_ == b.num_states_ && a.alpha_ == b.alpha_ && a.gamma_ == b.gamma_ &&
           a.slabs_ == b.slabs_;
  }

 private:
  std::size_t num_states_;
  double alpha_;
  double gamma_;
  std::unordered_map<GoalKey, std::vector<ActionValues>> slabs_;
};

// argmax with uniform random tie-breaking.
inline int argmax_random_ties(const ActionValues& q, Rng& rng) {
  const double best = *std::max_element(q.begin(), q.end());
  int ties[kGridActions];
  int n = 0;
  for (int a = 0; a < kGridActions; ++a) {
    if (q[static_cast<std::size_t>(a)] == best) ties[n++] = a;
  }
  return n == 1 ? ties[0] : ties[uniform_index(rng, static_cast<std::uint64_t>(n))];
}

inline int epsilon_greedy(const ActionValues& q, double epsilon, Rng& rng) {
  if (epsilon > 0.0 && bernoulli(rng, epsilon)) {
    return static_cast<int>(uniform_index(rng, kGridActions));
  }
  return argmax_random_ties(q, rng);
}

struct RolloutResult {
  bool success = false;
  int steps = 0;
};

// Greedy (epsilon = 0) rollout from reset toward the goal. Never writes to the
// table.
inline RolloutResult greedy_rollout(const QTable& table, GridWorld env, const CellGoals& spec,
                                    const Goal<GridState>& goal, int max_steps, Rng& rng) {
  GridState s = env.reset();
  RolloutResult r;
  if (spec.is_reached(goal, s)) return {true, 0};
  while (r.steps < max_steps && !env.terminated()) {
    const int a = argmax_random_ties(table.row(goal.key, spec.key_of(s)), rng);
    s = env.step(a).next_state;
    ++r.steps;
    if (spec.is_reached(goal, s)) {
      r.success = true;
      break;
    }
  }
  return r;
}

// Tabular Q-learning agent trained from hindsight-relabelled episodes.
class TabularAgent {
 public:
  using state_type = GridState;
  using action_type = int;
  using spec_type = CellGoals;
  using memory_type = EpisodeMemory<GridState, int>;

  TabularAgent(const CellGoals& spec, double alpha, double gamma, double epsilon)
      : spec_(spec), table_(spec.num_keys(), alpha, gamma), epsilon_(epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  }

  const QTable& table() const { return table_; }
  QTable& table() { return table_; }
  double epsilon() const { return epsilon_; }

  int act(const GridState& s, const Goal<GridState>& g, Rng& rng) const {
    return epsilon_greedy(table_.row(g.key, spec_.key_of(s)), epsilon_, rng);
  }

  int greedy_act(const GridState& s, const Goal<GridState>& g, Rng& rng) const {
    return argmax_random_ties(table_.row(g.key, spec_.key_of(s)), rng);
  }

  template <class Sample>
  void update(const Sample& x) {
    table_.update(x.goal.key, spec_.key_of(x.state), x.action, x.reward,
                  spec_.key_of(x.next_state), x.terminal);
  }

  // One pass over the episode's relabelled samples, group by group in order.
  void learn(const Trajectory<GridState, int>& traj, const memory_type&, Rng& rng) {
    if (traj.length() == 0) return;
    for (const auto& group : relabel_tabular(traj, spec_, rng)) {
      for (const auto& x : group.samples) update(x);
    }
  }

 private:
  CellGoals spec_;
  QTable table_;
  double epsilon_;
};

}  // namespace pexplore
