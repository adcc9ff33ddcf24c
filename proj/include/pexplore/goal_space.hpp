#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pexplore/grid_world.hpp"
#include "pexplore/point_env.hpp"
#include "pexplore/rng.hpp"

namespace pexplore {

// Flat index of a goal: a grid cell (y * width + x) or a row-major bin index.
using GoalKey = std::int64_t;

template <class State>
struct Goal {
  GoalKey key = 0;
  State target{};
  double reach_tolerance = 0.0;
};

// Goals are cells of a gridworld. Reaching means standing on the cell.
class CellGoals {
 public:
  using state_type = GridState;

  CellGoals(int width, int height) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw std::invalid_argument("CellGoals: empty grid");
  }
  explicit CellGoals(const GridWorld& env) : CellGoals(env.width(), env.height()) {}

  std::size_t num_keys() const { return static_cast<std::size_t>(width_ * height_); }
  int width() const { return width_; }
  int height() const { return height_; }

  GoalKey key_of(const GridState& s) const {
    if (s.x < 0 || s.y < 0 || s.x >= width_ || s.y >= height_) {
      throw std::out_of_range("grid state outside the goal space");
    }
    return static_cast<GoalKey>(s.y) * width_ + s.x;
  }
  bool in_bounds(const GridState& s) const {
    return s.x >= 0 && s.y >= 0 && s.x < width_ && s.y < height_;
  }

  GridState state_of(GoalKey key) const {
    return {static_cast<int>(key % width_), static_cast<int>(key / width_)};
  }

  Goal<GridState> goal_at(GoalKey key, Rng&) const { return {key, state_of(key), 0.0}; }
  Goal<GridState> goal_for(const GridState& s) const { return {key_of(s), s, 0.0}; }
  Goal<GridState> goal_center(GoalKey key) const { return {key, state_of(key), 0.0}; }

  bool is_reached(const Goal<GridState>& goal, const GridState& s) const {
    return s == goal.target;
  }

  std::string key_string(GoalKey key) const {
    const GridState s = state_of(key);
    return std::to_string(s.x) + ":" + std::to_string(s.y);
  }

 private:
  int width_;
  int height_;
};

// Continuous goal space discretised into n_bins per dimension. A goal is a
// bin; its target is a point drawn uniformly inside it. Reaching a goal means
// entering its bin.
class BinGoals {
 public:
  using state_type = ContState;

  BinGoals(std::vector<double> lo, std::vector<double> hi, int n_bins)
      : lo_(std::move(lo)), hi_(std::move(hi)), n_bins_(n_bins) {
    if (lo_.empty() || lo_.size() != hi_.size()) throw std::invalid_argument("BinGoals: bad bounds");
    if (n_bins_ < 1) throw std::invalid_argument("BinGoals: n_bins must be >= 1");
    for (std::size_t d = 0; d < lo_.size(); ++d) {
      if (!(lo_[d] < hi_[d])) throw std::invalid_argument("BinGoals: empty bounds");
    }
    num_keys_ = 1;
    for (std::size_t d = 0; d < lo_.size(); ++d) num_keys_ *= static_cast<std::size_t>(n_bins_);
    double diag2 = 0.0;
    for (std::size_t d = 0; d < lo_.size(); ++d) {
      const double w = width(d);
      diag2 += w * w;
    }
    reach_tolerance_ = 0.5 * std::sqrt(diag2);
  }
  BinGoals(const PointEnv& env, int n_bins) : BinGoals(env.spec().lo, env.spec().hi, n_bins) {}

  std::size_t dims() const { return lo_.size(); }
  int n_bins() const { return n_bins_; }
  std::size_t num_keys() const { return num_keys_; }
  double width(std::size_t d) const { return (hi_[d] - lo_[d]) / n_bins_; }
  double reach_tolerance() const { return reach_tolerance_; }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }

  bool in_bounds(const ContState& s) const {
    if (s.coords.size() != dims()) return false;
    for (std::size_t d = 0; d < dims(); ++d) {
      if (!(s.coords[d] >= lo_[d] && s.coords[d] <= hi_[d])) return false;
    }
    return true;
  }

  // floor((x - lo) / (hi - lo) * n_bins), clamped to [0, n_bins).
  int bin_index(std::size_t d, double x) const {
    const double t = (x - lo_[d]) / (hi_[d] - lo_[d]) * n_bins_;
    if (!(t >= 0.0)) return 0;  // also catches NaN
    return std::min(static_cast<int>(std::floor(t)), n_bins_ - 1);
  }

  std::vector<int> bin_indices(const ContState& s) const {
    check_dims(s);
    std::vector<int> idx(dims());
    for (std::size_t d = 0; d < dims(); ++d) idx[d] = bin_index(d, s.coords[d]);
    return idx;
  }

  GoalKey flatten(const std::vector<int>& idx) const {
    GoalKey key = 0;
    for (int i : idx) key = key * n_bins_ + i;
    return key;
  }

  std::vector<int> unflatten(GoalKey key) const {
    std::vector<int> idx(dims());
    for (std::size_t d = dims(); d-- > 0;) {
      idx[d] = static_cast<int>(key % n_bins_);
      key /= n_bins_;
    }
    return idx;
  }

  GoalKey key_of(const ContState& s) const {
    check_dims(s);
    GoalKey key = 0;
    for (std::size_t d = 0; d < dims(); ++d) key = key * n_bins_ + bin_index(d, s.coords[d]);
    return key;
  }

  Goal<ContState> goal_at(GoalKey key, Rng& rng) const {
    const auto idx = unflatten(key);
    ContState target{std::vector<double>(dims())};
    for (std::size_t d = 0; d < dims(); ++d) {
      const double a = lo_[d] + idx[d] * width(d);
      // Keep the draw inside the half-open bin even under rounding.
      double x = uniform_real(rng, a, a + width(d));
      if (bin_index(d, x) != idx[d]) x = a + 0.5 * width(d);
      target.coords[d] = x;
    }
    return {key, std::move(target), reach_tolerance_};
  }

  Goal<ContState> goal_center(GoalKey key) const {
    const auto idx = unflatten(key);
    ContState target{std::vector<double>(dims())};
    for (std::size_t d = 0; d < dims(); ++d) target.coords[d] = lo_[d] + (idx[d] + 0.5) * width(d);
    return {key, std::move(target), reach_tolerance_};
  }

  Goal<ContState> goal_for(const ContState& s) const { return {key_of(s), s, reach_tolerance_}; }

  bool is_reached(const Goal<ContState>& goal, const ContState& s) const {
    if (goal.target.coords.size() != s.coords.size()) {
      throw std::invalid_argument("is_reached: dimensionality mismatch");
    }
    return key_of(s) == goal.key;
  }

  std::string key_string(GoalKey key) const {
    std::string out;
    for (int i : unflatten(key)) {
      if (!out.empty()) out += ':';
      out += std::to_string(i);
    }
    return out;
  }

 private:
  void check_dims(const ContState& s) const {
    if (s.coords.size() != dims()) throw std::invalid_argument("state dimensionality mismatch");
  }

  std::vector<double> lo_;
  std::vector<double> hi_;
  int n_bins_;
  std::size_t num_keys_ = 0;
  double reach_tolerance_ = 0.0;
};

// Count-based novelty weights p(g) = n(g)^-tau / sum_g' n(g')^-tau, evaluated in
// log space relative to the least visited goal so large tau cannot overflow.
inline std::vector<double> novelty_probabilities(std::span<const std::uint64_t> counts,
                                                 double temperature) {
  if (counts.empty()) throw std::invalid_argument("novelty_probabilities: no goals");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  const std::uint64_t n_min = *std::min_element(counts.begin(), counts.end());
  if (n_min == 0) throw std::invalid_argument("visit counts must be >= 1");
  const double log_min = std::log(static_cast<double>(n_min));
  std::vector<double> p(counts.size());
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    p[i] = std::exp(-temperature * (std::log(static_cast<double>(counts[i])) - log_min));
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

// Visited goals with their visit counts, in first-visit order.
template <class Spec>
class GoalSpace {
 public:
  using state_type = typename Spec::state_type;
  using goal_type = Goal<state_type>;

  GoalSpace(Spec spec, double temperature) : spec_(std::move(spec)), temperature_(temperature) {
    if (!(temperature_ >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  }

  const Spec& spec() const { return spec_; }
  double temperature() const { return temperature_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  const std::vector<GoalKey>& keys() const { return keys_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  // Number of observed states that lay outside the bounds and were clamped.
  std::uint64_t clamped_observations() const { return clamped_; }

  std::uint64_t count(GoalKey key) const {
    auto it = index_.find(key);
    return it == index_.end() ? 0 : counts_[it->second];
  }

  void observe(const state_type& s) {
    if (!spec_.in_bounds(s)) {
      if constexpr (std::is_same_v<Spec, CellGoals>) {
        throw std::out_of_range("grid state outside the goal space");
      } else {
        ++clamped_;
      }
    }
    const GoalKey key = spec_.key_of(s);
    auto [it, inserted] = index_.try_emplace(key, keys_.size());
    if (inserted) {
      keys_.push_back(key);
      counts_.push_back(1);
    } else {
      ++counts_[it->second];
    }
  }

  void observe(std::span<const state_type> states) {
    for (const auto& s : states) observe(s);
  }

  std::vector<double> probabilities() const { return novelty_probabilities(counts_, temperature_); }

  // Inverse-CDF draw over keys in first-visit order.
  goal_type sample_goal(Rng& rng) const {
    if (keys_.empty()) throw std::logic_error("sample_goal on an empty goal space");
    const auto p = probabilities();
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t pick = keys_.size() - 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    return spec_.goal_at(keys_[pick], rng);
  }

  // One random-policy episode from reset; every visited state (reset state
  // included) is counted. Returns the visited states.
  template <class Env>
  std::vector<state_type> initialize(Env& env, Rng& rng) {
    std::vector<state_type> visited{env.reset()};
    while (!env.terminated()) visited.push_back(env.step(env.random_action(rng)).next_state);
    observe(std::span<const state_type>(visited));
    return visited;
  }

  // Rows of `goal_key,count`.
  void export_csv(std::ostream& os) const {
    os << "goal_key,count\n";
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      os << spec_.key_string(keys_[i]) << ',' << counts_[i] << '\n';
    }
  }

 private:
  Spec spec_;
  double temperature_;
  std::vector<GoalKey> keys_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<GoalKey, std::size_t> index_;
  std::uint64_t clamped_ = 0;
};

}  // namespace pexplore
