#include <gtest/gtest.h>

#include "pexplore/ddpg.hpp"
#include "pexplore/driver.hpp"
#include "pexplore/envs.hpp"
#include "pexplore/tabular_agent.hpp"
#include "test_util.hpp"

using namespace pexplore;
using pexplore::testutil::CountingEnv;

namespace {

// Always moves right; never learns.
struct RightwardGridAgent {
  using state_type = GridState;
  using action_type = int;
  using spec_type = CellGoals;
  int act(const GridState&, const Goal<GridState>&, Rng&) const { return 3; }
  int greedy_act(const GridState&, const Goal<GridState>&, Rng&) const { return 3; }
  void learn(const Trajectory<GridState, int>&, const EpisodeMemory<GridState, int>&, Rng&) {}
};

struct RightwardPointAgent {
  using state_type = ContState;
  using action_type = ContAction;
  using spec_type = BinGoals;
  std::size_t dim = 3;
  ContAction act(const ContState&, const Goal<ContState>&, Rng&) const {
    ContAction a(dim, 0.0);
    a[0] = 1.0;
    return a;
  }
  ContAction greedy_act(const ContState& s, const Goal<ContState>& g, Rng& rng) const { return act(s, g, rng); }
  void learn(const Trajectory<ContState, ContAction>&, const EpisodeMemory<ContState, ContAction>&, Rng&) {}
};

DriverConfig grid_config(bool pe) {
  DriverConfig cfg;
  cfg.post_exploration = pe;
  cfg.pe_length = PostExploreLength::proportional(0.5);
  cfg.evaluate_success = false;
  return cfg;
}

Driver<GridWorld, RightwardGridAgent> corridor_driver(int size, int horizon, bool pe) {
  GridWorld env(layouts::walled_room(size), horizon);
  return {grid_config(pe), env, CellGoals(env), 0.0, RightwardGridAgent{}, SeedTree(1)};
}

}  // namespace

TEST(Driver, SwitchOffHasNoPostPhase) {
  auto d = corridor_driver(10, 100, false);
  const auto t = d.run_episode(CellGoals(10, 10).goal_for({8, 1}));
  EXPECT_TRUE(t.goal_reached);
  EXPECT_EQ(t.length(), 7u);
  EXPECT_EQ(t.post_length(), 0u);
}

TEST(Driver, ProportionalPostExploration) {
  auto d = corridor_driver(11, 100, true);
  const auto t = d.run_episode(CellGoals(11, 11).goal_for({9, 1}));
  EXPECT_TRUE(t.goal_reached);
  EXPECT_EQ(t.goal_phase_length, 8u);
  EXPECT_EQ(t.post_length(), 4u);
  for (std::size_t i = 8; i < t.length(); ++i) EXPECT_EQ(t.phase(i), Phase::PostExploration);
}

TEST(Driver, MissedGoalHasNoPostPhase) {
  auto d = corridor_driver(11, 5, true);
  const auto t = d.run_episode(CellGoals(11, 11).goal_for({9, 9}));
  EXPECT_FALSE(t.goal_reached);
  EXPECT_EQ(t.length(), 5u);
  EXPECT_EQ(t.post_length(), 0u);
}

TEST(Driver, PostPhaseTruncatedByHorizon) {
  auto d = corridor_driver(11, 10, true);
  const auto t = d.run_episode(CellGoals(11, 11).goal_for({9, 1}));
  EXPECT_EQ(t.goal_phase_length, 8u);
  EXPECT_EQ(t.post_length(), 2u);
}

TEST(Driver, GoalAtResetGivesNoTabularPostSteps) {
  auto d = corridor_driver(11, 100, true);
  const auto t = d.run_episode(CellGoals(11, 11).goal_for({1, 1}));
  EXPECT_TRUE(t.goal_reached);
  EXPECT_EQ(t.length(), 0u);
}

TEST(PostExplore, ZeroStepsLeavesTrajectoryUnchanged) {
  GridWorld env(layouts::walled_room(6), 100);
  env.reset();
  Trajectory<GridState, int> t;
  Rng rng(1);
  post_explore(env, t, 0, rng);
  EXPECT_EQ(t.length(), 0u);
  EXPECT_EQ(env.steps_taken(), 0);
}

TEST(PostExplore, FixedStepsOnPointReach) {
  PointEnv env(layouts::point_reach());
  BinGoals spec(env, 20);
  DriverConfig cfg;
  cfg.pe_length = PostExploreLength::fixed(30);
  cfg.evaluate_success = false;
  Driver<PointEnv, RightwardPointAgent> d(cfg, env, spec, 0.0, RightwardPointAgent{}, SeedTree(2));
  const auto goal = spec.goal_center(spec.flatten({13, 10, 10}));
  const auto t = d.run_episode(goal);
  EXPECT_TRUE(t.goal_reached);
  EXPECT_EQ(t.goal_phase_length, 3u);
  EXPECT_EQ(t.post_length(), 30u);
}

TEST(PostExplore, NewCellsEnterGoalSpace) {
  auto d = corridor_driver(11, 100, true);
  d.initialize();
  const auto before = d.goal_space().keys();
  const auto t = d.run_episode(CellGoals(11, 11).goal_for({9, 1}));
  const auto& gs = d.goal_space();
  for (std::size_t i = t.goal_phase_length; i < t.length(); ++i) {
    const GoalKey k = gs.spec().key_of(t.transitions[i].next_state);
    EXPECT_GT(gs.count(k), 0u);
  }
  EXPECT_GE(gs.size(), before.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(gs.keys()[i], before[i]);
}

TEST(DriverConfig, Validation) {
  DriverConfig cfg;
  cfg.pe_length = PostExploreLength::proportional(1.5);
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.pe_length = PostExploreLength::fixed(-1);
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.pe_length = PostExploreLength::fixed(3);
  cfg.eval_every = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_EQ(PostExploreLength::proportional(0.5).for_goal_length(7), 4);  // round half away from zero
  EXPECT_EQ(PostExploreLength::proportional(0.5).for_goal_length(8), 4);
}

namespace {

using CountedGrid = CountingEnv<GridWorld>;

Driver<CountedGrid, TabularAgent> tabular_driver(bool pe, std::uint64_t seed, std::uint64_t budget,
                                                bool evaluate = false) {
  CountedGrid env(GridWorld(layouts::four_rooms(), 100));
  const CellGoals spec(env);
  DriverConfig cfg = grid_config(pe);
  cfg.total_step_budget = budget;
  cfg.eval_every = 1000;
  cfg.evaluate_success = evaluate;
  return {cfg, env, spec, 0.0, TabularAgent(spec, 0.1, 0.99, 0.1), SeedTree(seed)};
}

}  // namespace

TEST(Train, StepAccountingIsExact) {
  for (bool pe : {true, false}) {
    auto d = tabular_driver(pe, 3, 20'000, true);
    d.initialize();
    std::uint64_t sum = d.total_steps();
    std::size_t goal_space_size = d.goal_space().size();
    const auto records = d.train([&](const auto& t) {
      sum += t.length();
      EXPECT_TRUE(t.valid());
      EXPECT_GE(d.goal_space().size(), goal_space_size);
      goal_space_size = d.goal_space().size();
    });
    EXPECT_EQ(d.total_steps(), sum);
    EXPECT_EQ(d.env().step_calls(), d.total_steps());
    EXPECT_GE(d.total_steps(), 20'000u);
    EXPECT_EQ(records.back().total_steps, d.total_steps());
    // Each episode and the initial one start with a counted reset state.
    EXPECT_EQ(d.visits().total(), d.total_steps() + d.episodes() + 1);
  }
}

TEST(Train, PostPhaseExistsExactlyWhenAllowed) {
  for (bool pe : {true, false}) {
    auto d = tabular_driver(pe, 4, 10'000);
    d.train([&](const auto& t) {
      const bool alive = t.goal_phase_length == 0 || !t.transitions[t.goal_phase_length - 1].env_terminal;
      const bool wants = pe && t.goal_reached && alive &&
                         PostExploreLength::proportional(0.5).for_goal_length(t.goal_phase_length) > 0;
      EXPECT_EQ(t.post_length() > 0, wants);
    });
  }
}

TEST(Train, MetricStreamIsIncreasingAndEndsAtBudget) {
  auto d = tabular_driver(true, 5, 12'345);
  const auto records = d.train();
  ASSERT_FALSE(records.empty());
  for (std::size_t i = 1; i < records.size(); ++i) {
    EXPECT_GT(records[i].total_steps, records[i - 1].total_steps);
    EXPECT_GT(records[i].checkpoint, records[i - 1].checkpoint);
    EXPECT_EQ(records[i - 1].checkpoint % 1000, 0u);
    EXPECT_GE(records[i - 1].total_steps, records[i - 1].checkpoint);
  }
  EXPECT_EQ(records.back().checkpoint, 12'345u);
  EXPECT_TRUE(std::isnan(records.back().success_rate));
}

TEST(Train, IdenticalSeedsGiveIdenticalStreams) {
  auto a = tabular_driver(true, 6, 8'000, true);
  auto b = tabular_driver(true, 6, 8'000, true);
  EXPECT_EQ(a.train(), b.train());
  EXPECT_EQ(a.agent().table(), b.agent().table());
  auto c = tabular_driver(true, 7, 8'000, true);
  c.train();
  EXPECT_FALSE(a.agent().table() == c.agent().table());
}

TEST(Train, EvaluationConsumesNoBudget) {
  auto with_eval = tabular_driver(true, 8, 6'000, true);
  auto without = tabular_driver(true, 8, 6'000, false);
  const auto r1 = with_eval.train();
  const auto r2 = without.train();
  ASSERT_EQ(r1.size(), r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    EXPECT_EQ(r1[i].total_steps, r2[i].total_steps);
    EXPECT_EQ(r1[i].entropy, r2[i].entropy);
    EXPECT_FALSE(std::isnan(r1[i].success_rate));
  }
  EXPECT_EQ(with_eval.env().step_calls(), with_eval.total_steps());
  EXPECT_EQ(with_eval.agent().table(), without.agent().table());
}

TEST(Train, SwitchOnlyChangesThePostBranch) {
  for (std::uint64_t seed : {1u, 2u}) {
    auto on = tabular_driver(true, seed, 1'000'000);
    auto off = tabular_driver(false, seed, 1'000'000);
    on.initialize();
    off.initialize();
    // Identical until the first episode with a post phase changes the learner.
    for (int k = 0; k < 50; ++k) {
      const auto a = on.run_episode();
      const auto b = off.run_episode();
      ASSERT_EQ(a.goal.key, b.goal.key);
      ASSERT_EQ(a.goal_phase_length, b.goal_phase_length);
      for (std::size_t i = 0; i < a.goal_phase_length; ++i) ASSERT_EQ(a.transitions[i], b.transitions[i]);
      if (a.post_length() > 0) break;
    }
  }
}

TEST(Train, DdpgDriverRunsAndAccountsSteps) {
  using CountedPoint = CountingEnv<PointEnv>;
  CountedPoint env(PointEnv(layouts::point_umaze()));
  const BinGoals spec(env, 30);
  DdpgConfig dc;
  dc.updates_per_episode = 5;
  Rng init(1);
  DriverConfig cfg;
  cfg.pe_length = PostExploreLength::fixed(50);
  cfg.total_step_budget = 3'000;
  cfg.eval_every = 1'000;
  Driver<CountedPoint, DdpgAgent> d(cfg, env, spec, 0.01, DdpgAgent(spec, 2, dc, init), SeedTree(1));
  const auto records = d.train();
  EXPECT_EQ(d.env().step_calls(), d.total_steps());
  EXPECT_EQ(records.back().total_steps, d.total_steps());
  for (const auto& r : records) {
    EXPECT_GE(r.success_rate, 0.0);
    EXPECT_LE(r.success_rate, 1.0);
  }
  EXPECT_TRUE(d.agent().actor().all_finite());
  EXPECT_TRUE(d.agent().critic().all_finite());
}
