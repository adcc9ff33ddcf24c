#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "pexplore/goal_space.hpp"
#include "pexplore/rng.hpp"
#include "pexplore/text.hpp"

namespace pexplore {

enum class Phase { GoalReaching, PostExploration };

template <class State, class Action>
struct Transition {
  State state;
  Action action;
  State next_state;
  bool env_terminal = false;  // lava or horizon

  friend bool operator==(const Transition&, const Transition&) = default;
};

// One episode. Transitions [0, goal_phase_length) pursue the goal; the rest,
// present only when the goal was reached, are post-exploration.
template <class State, class Action>
struct Trajectory {
  using transition_type = Transition<State, Action>;

  Goal<State> goal;
  std::vector<transition_type> transitions;
  bool goal_reached = false;
  std::size_t goal_phase_length = 0;

  std::size_t length() const { return transitions.size(); }
  std::size_t post_length() const { return transitions.size() - goal_phase_length; }

  Phase phase(std::size_t i) const {
    return i < goal_phase_length ? Phase::GoalReaching : Phase::PostExploration;
  }

  // Index of the transition whose next state reached the goal. Empty when the
  // goal was never reached or was already satisfied at reset.
  std::optional<std::size_t> reached_index() const {
    if (!goal_reached || goal_phase_length == 0) return std::nullopt;
    return goal_phase_length - 1;
  }

  bool valid() const {
    if (goal_phase_length > transitions.size()) return false;
    return goal_reached || post_length() == 0;
  }
};

template <class State, class Action>
struct RelabeledSample {
  State state;
  Action action;
  double reward = 0.0;
  State next_state;
  Goal<State> goal;
  bool terminal = false;
  bool relabeled = false;
};

template <class State, class Action>
struct RelabeledGroup {
  Goal<State> goal;
  // Transition whose next state supplied the hindsight goal; empty for the
  // episode's own goal.
  std::optional<std::size_t> source;
  std::vector<RelabeledSample<State, Action>> samples;
};

namespace detail {

template <class Spec, class State, class Action>
RelabeledSample<State, Action> make_sample(const Spec& spec, const Transition<State, Action>& t,
                                           const Goal<State>& goal, bool relabeled) {
  const bool hit = spec.is_reached(goal, t.next_state);
  return {t.state, t.action, hit ? 1.0 : 0.0, t.next_state, goal, hit || t.env_terminal,
          relabeled};
}

}  // namespace detail

// Hindsight relabelling for the tabular agent. Half the trajectory's
// transitions (rounded down) supply hindsight goals from their next states;
// every post-exploration next state is always used, even past that budget, and
// the rest of the budget is drawn without replacement from the goal-reaching
// part. Each hindsight goal yields the transitions up to its first attainment.
template <class Spec, class State, class Action>
std::vector<RelabeledGroup<State, Action>> relabel_tabular(const Trajectory<State, Action>& traj,
                                                           const Spec& spec, Rng& rng) {
  const std::size_t n = traj.length();
  if (n == 0) throw std::invalid_argument("relabel_tabular: empty trajectory");

  std::vector<RelabeledGroup<State, Action>> groups;

  {
    RelabeledGroup<State, Action> own{traj.goal, std::nullopt, {}};
    const std::size_t end = traj.goal_reached ? traj.goal_phase_length : n;
    own.samples.reserve(end);
    for (std::size_t t = 0; t < end; ++t) {
      own.samples.push_back(detail::make_sample(spec, traj.transitions[t], traj.goal, false));
    }
    if (!own.samples.empty()) groups.push_back(std::move(own));
  }

  const std::size_t budget = n / 2;
  const std::size_t n_pre = traj.goal_reached ? traj.goal_phase_length : n;
  std::vector<std::size_t> selected;
  for (std::size_t t = n_pre; t < n; ++t) selected.push_back(t);
  const std::size_t extra = budget > selected.size() ? budget - selected.size() : 0;
  if (extra > 0) {
    std::vector<std::size_t> pre(n_pre);
    for (std::size_t i = 0; i < n_pre; ++i) pre[i] = i;
    for (std::size_t i = 0; i < extra; ++i) {
      const std::size_t j = i + uniform_index(rng, n_pre - i);
      std::swap(pre[i], pre[j]);
      selected.push_back(pre[i]);
    }
  }
  std::sort(selected.begin(), selected.end());

  for (std::size_t j : selected) {
    RelabeledGroup<State, Action> group{spec.goal_for(traj.transitions[j].next_state), j, {}};
    for (std::size_t t = 0; t <= j; ++t) {
      group.samples.push_back(detail::make_sample(spec, traj.transitions[t], group.goal, true));
      if (group.samples.back().reward > 0.0) break;
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

struct TransitionRef {
  std::size_t episode = 0;
  std::size_t step = 0;

  friend bool operator==(const TransitionRef&, const TransitionRef&) = default;
};

// Bounded FIFO of episodes.
template <class State, class Action>
class EpisodeMemory {
 public:
  using trajectory_type = Trajectory<State, Action>;

  explicit EpisodeMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("memory capacity must be >= 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return episodes_.size(); }
  bool empty() const { return episodes_.empty(); }
  std::size_t total_transitions() const { return total_; }
  const trajectory_type& episode(std::size_t i) const { return episodes_.at(i); }
  const trajectory_type& operator[](std::size_t i) const { return episodes_[i]; }

  void store(trajectory_type traj) {
    total_ += traj.length();
    episodes_.push_back(std::move(traj));
    if (episodes_.size() > capacity_) {
      total_ -= episodes_.front().length();
      episodes_.pop_front();
    }
    cumulative_.clear();
  }

  // Uniform over all stored (episode, step) pairs.
  std::vector<TransitionRef> sample_batch(std::size_t batch_size, Rng& rng) const {
    if (total_ == 0) throw std::logic_error("sample_batch on an empty memory");
    if (cumulative_.empty()) {
      cumulative_.reserve(episodes_.size());
      std::size_t acc = 0;
      for (const auto& e : episodes_) cumulative_.push_back(acc += e.length());
    }
    std::vector<TransitionRef> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t flat = uniform_index(rng, total_);
      const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), flat);
      const auto ep = static_cast<std::size_t>(it - cumulative_.begin());
      const std::size_t before = ep == 0 ? 0 : cumulative_[ep - 1];
      batch.push_back({ep, flat - before});
    }
    return batch;
  }

  // `episode,step,phase,s,a,s',goal`, one row per stored transition.
  void write_log(std::ostream& os, std::size_t first_episode_id = 0) const {
    os << "episode,step,phase,s,a,s',goal\n";
    for (std::size_t e = 0; e < episodes_.size(); ++e) {
      const auto& traj = episodes_[e];
      for (std::size_t t = 0; t < traj.length(); ++t) {
        const auto& tr = traj.transitions[t];
        os << first_episode_id + e << ',' << t << ','
           << (traj.phase(t) == Phase::GoalReaching ? "goal" : "post") << ',' << to_text(tr.state)
           << ',' << to_text(tr.action) << ',' << to_text(tr.next_state) << ','
           << to_text(traj.goal.target) << '\n';
      }
    }
  }

 private:
  std::size_t capacity_;
  std::deque<trajectory_type> episodes_;
  std::size_t total_ = 0;
  mutable std::vector<std::size_t> cumulative_;
};

// HER `future` strategy: each sample is relabelled with probability k/(k+1)
// to the next state of a uniformly chosen step at or after it in the same
// episode.
template <class Spec, class State, class Action>
std::vector<RelabeledSample<State, Action>> relabel_future(
    const std::vector<TransitionRef>& batch, const EpisodeMemory<State, Action>& memory,
    const Spec& spec, double k, Rng& rng) {
  if (!(k >= 0.0)) throw std::invalid_argument("relabel_future: k must be >= 0");
  const double p_relabel = k / (k + 1.0);
  std::vector<RelabeledSample<State, Action>> out;
  out.reserve(batch.size());
  for (const auto& ref : batch) {
    const auto& traj = memory.episode(ref.episode);
    const auto& tr = traj.transitions.at(ref.step);
    if (p_relabel > 0.0 && bernoulli(rng, p_relabel)) {
      const std::size_t future = ref.step + uniform_index(rng, traj.length() - ref.step);
      out.push_back(detail::make_sample(
          spec, tr, spec.goal_for(traj.transitions[future].next_state), true));
    } else {
      out.push_back(detail::make_sample(spec, tr, traj.goal, false));
    }
  }
  return out;
}

}  // namespace pexplore
