#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pexplore/driver.hpp"
#include "pexplore/envs.hpp"
#include "pexplore/metrics.hpp"
#include "pexplore/tabular_agent.hpp"
#include "test_util.hpp"

using namespace pexplore;

namespace {

std::string read_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// 4x3 layout with every cell kind.
GridLayout small_layout() {
  const std::string rows = "#.~." "...#" "#...";
  GridLayout g{4, 3, {}, {1, 0}};
  for (char c : rows) g.cells.push_back(c == '#' ? Cell::Wall : c == '~' ? Cell::Lava : Cell::Free);
  return g;
}

}  // namespace

TEST(Entropy, SingleBinIsZero) {
  const std::vector<std::uint64_t> c{0, 0, 17, 0};
  EXPECT_EQ(entropy(c), 0.0);
}

TEST(Entropy, UniformIsLogN) {
  const std::vector<std::uint64_t> c(16, 5);
  EXPECT_NEAR(entropy(c), std::log(16.0), 1e-12);
}

TEST(Entropy, ThreeToOne) {
  const std::vector<std::uint64_t> c{3, 1};
  EXPECT_NEAR(entropy(c), -0.75 * std::log(0.75) - 0.25 * std::log(0.25), 1e-15);
  EXPECT_NEAR(entropy(c), 0.5623, 1e-4);
}

TEST(Entropy, AllZeroThrows) {
  const std::vector<std::uint64_t> c(4, 0);
  EXPECT_THROW(entropy(c), std::invalid_argument);
  EXPECT_THROW(VisitationGrid(3).entropy(), std::invalid_argument);
}

TEST(Entropy, BoundsOnRandomCounts) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::uint64_t> c(1 + uniform_index(rng, 50));
    for (auto& v : c) v = bernoulli(rng, 0.3) ? 0 : uniform_index(rng, 1000);
    c[0] += 1;
    const double h = entropy(c);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(c.size())) + 1e-12);
  }
  for (std::size_t n : {1u, 2u, 7u, 100u, 400u}) {
    const std::vector<std::uint64_t> u(n, 3);
    EXPECT_NEAR(entropy(u), std::log(static_cast<double>(n)), 1e-12);
  }
}

TEST(VisitationGrid, CountsAndCsvRoundTrip) {
  VisitationGrid g(5);
  for (GoalKey k : {0, 3, 3, 4}) g.add(k);
  EXPECT_EQ(g.total(), 4u);
  EXPECT_EQ(g.nonzero(), 3u);
  EXPECT_EQ(g.at(3), 2u);
  std::stringstream ss;
  g.write_csv(ss);
  EXPECT_EQ(ss.str(), "key,count\n0,1\n1,0\n2,0\n3,2\n4,1\n");
  const auto back = VisitationGrid::read_csv(ss);
  EXPECT_TRUE(std::equal(back.counts().begin(), back.counts().end(), g.counts().begin(), g.counts().end()));
  EXPECT_THROW(g.add(5), std::out_of_range);
}

TEST(MetricsCsv, RoundTrip) {
  std::vector<MetricsRecord> rs{{5000, 5003, 0.25, 1.5, 17, 80}, {10000, 10010, std::nan(""), 2.0 / 3.0, 30, 150}};
  std::stringstream ss;
  write_metrics_csv(ss, rs);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "# pexplore-metrics v1");
  EXPECT_EQ(read_metrics_csv(ss), rs);
  std::stringstream bad("1,2,3\n");
  EXPECT_THROW(read_metrics_csv(bad), std::runtime_error);
}

TEST(Evaluate, StartOnlyTargetAlwaysSucceeds) {
  GridWorld env(layouts::four_rooms(), 100);
  const CellGoals spec(env);
  const TabularAgent agent(spec, 0.1, 0.99, 0.3);
  const std::vector<Goal<GridState>> targets{spec.goal_for(env.layout().start)};
  Rng rng(1);
  EXPECT_EQ(evaluate(agent, env, spec, std::span<const Goal<GridState>>(targets), 100, rng), 1.0);
  EXPECT_EQ(evaluate(agent, env, spec, std::span<const Goal<GridState>>(targets), 0, rng, SuccessCriterion::AtEnd), 1.0);
}

TEST(Evaluate, EmptyTargetSetThrows) {
  GridWorld env(layouts::walled_room(5), 100);
  const CellGoals spec(env);
  const TabularAgent agent(spec, 0.1, 0.99, 0.0);
  Rng rng(2);
  EXPECT_THROW(evaluate(agent, env, spec, std::span<const Goal<GridState>>(), 100, rng), std::invalid_argument);
}

TEST(Evaluate, ValueIterationOracleScoresOne) {
  GridWorld env(layouts::walled_room(5), 100);
  const CellGoals spec(env);
  TabularAgent agent(spec, 0.1, 0.99, 0.0);
  agent.table() = testutil::value_iteration_table(env.layout(), 0.99);
  const auto targets = grid_targets(env, spec);
  Rng rng(3);
  EXPECT_EQ(evaluate(agent, env, spec, std::span<const Goal<GridState>>(targets), 100, rng), 1.0);
  EXPECT_EQ(evaluate(agent, env, spec, std::span<const Goal<GridState>>(targets), 100, rng, SuccessCriterion::AtEnd), 1.0);
}

TEST(Evaluate, UntrainedAgentNearRandomWalkFloor) {
  GridWorld env(layouts::four_rooms(), 100);
  const CellGoals spec(env);
  const TabularAgent agent(spec, 0.1, 0.99, 0.0);
  const auto targets = grid_targets(env, spec);
  double expected = 0.0;
  for (const auto& g : targets) {
    expected += testutil::random_walk_hit_probability(env.layout(), env.layout().start, g.target, 100);
  }
  expected /= static_cast<double>(targets.size());
  Rng rng(4);
  double mean = 0.0;
  const int reps = 20;
  for (int i = 0; i < reps; ++i) {
    mean += evaluate(agent, env, spec, std::span<const Goal<GridState>>(targets), 100, rng);
  }
  mean /= reps;
  // Variance of a mean of 260 * reps Bernoulli draws is at most 1/(4 * 260 * reps).
  EXPECT_NEAR(mean, expected, 4.0 * std::sqrt(0.25 / (260.0 * reps)));
}

TEST(Evaluate, IsPureAndOracleNeverWorse) {
  GridWorld env(layouts::walled_room(6), 100);
  const CellGoals spec(env);
  DriverConfig cfg;
  cfg.total_step_budget = 3000;
  cfg.eval_every = 1000;
  Driver<GridWorld, TabularAgent> d(cfg, env, spec, 0.0, TabularAgent(spec, 0.1, 0.99, 0.1), SeedTree(5));
  d.train();
  const QTable before = d.agent().table();
  const auto counts_before = d.goal_space().counts();
  const auto targets = grid_targets(env, spec);
  Rng rng(6);
  const double trained = evaluate(d.agent(), env, spec, std::span<const Goal<GridState>>(targets), 100, rng);
  d.measure(99);
  EXPECT_EQ(d.agent().table(), before);
  EXPECT_EQ(d.goal_space().counts(), counts_before);
  TabularAgent oracle(spec, 0.1, 0.99, 0.0);
  oracle.table() = testutil::value_iteration_table(env.layout(), 0.99);
  EXPECT_GE(evaluate(oracle, env, spec, std::span<const Goal<GridState>>(targets), 100, rng), trained);
}

TEST(Evaluate, BinTargetsAreVisitedBinCentres) {
  GoalSpace<BinGoals> gs(BinGoals({0.0, 0.0}, {1.0, 1.0}, 4), 0.0);
  gs.observe(ContState{{0.1, 0.9}});
  gs.observe(ContState{{0.6, 0.3}});
  const auto t = bin_targets(gs);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].target.coords, (std::vector<double>{0.125, 0.875}));
  EXPECT_EQ(t[1].target.coords, (std::vector<double>{0.625, 0.375}));
}

TEST(Heatmap, GoldenSmallGrid) {
  const GridLayout layout = small_layout();
  VisitationGrid v(12);
  const std::uint64_t counts[12] = {0, 5, 0, 1, 0, 12, 3, 0, 0, 0, 40, 7};
  for (GoalKey k = 0; k < 12; ++k) {
    for (std::uint64_t i = 0; i < counts[k]; ++i) v.add(k);
  }
  EXPECT_EQ(render_pgm(heatmap_image(layout, v), 2), read_binary(std::string(PEXPLORE_GOLDEN_DIR) + "/small_heatmap.pgm"));
}

TEST(Heatmap, AllZeroIsUniformBackground) {
  const GridLayout layout = layouts::walled_room(5);
  const std::string pgm = render_pgm(heatmap_image(layout, VisitationGrid(25)), 1);
  const std::string header = "P5\n5 5\n255\n";
  ASSERT_EQ(pgm.substr(0, header.size()), header);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      const auto px = static_cast<unsigned char>(pgm[header.size() + static_cast<std::size_t>(y * 5 + x)]);
      EXPECT_EQ(px, layout.at(x, y) == Cell::Wall ? 0 : 64);
    }
  }
}

TEST(Heatmap, OneCellDifferenceChangesImage) {
  const GridLayout layout = layouts::walled_room(5);
  VisitationGrid a(25), b(25);
  a.add(6);
  a.add(7);
  b.add(6);
  b.add(8);
  EXPECT_NE(render_pgm(heatmap_image(layout, a)), render_pgm(heatmap_image(layout, b)));
}

TEST(Heatmap, PointEnvProjectionMarksObstacle) {
  const PointEnv env(layouts::point_umaze());
  const BinGoals spec(env, 3);  // bins of width 1: the middle-left bins lie inside the block
  VisitationGrid v(spec.num_keys());
  v.add(spec.key_of(ContState{{0.0, 0.0}}));
  const auto img = heatmap_image(env, spec, v);
  EXPECT_EQ(img.width, 3);
  EXPECT_EQ(img.height, 3);
  EXPECT_EQ(img.kinds[1 * 3 + 0], PixelKind::Wall);
  EXPECT_EQ(img.kinds[1 * 3 + 1], PixelKind::Wall);
  EXPECT_EQ(img.kinds[1 * 3 + 2], PixelKind::Open);
  EXPECT_EQ(img.counts[2 * 3 + 0], 1u);  // bottom-left pixel
}

TEST(Heatmap, UnwritablePathThrows) {
  const GridLayout layout = layouts::walled_room(5);
  EXPECT_THROW(write_pgm("/nonexistent-dir/x/coverage.pgm", heatmap_image(layout, VisitationGrid(25))),
               std::runtime_error);
  EXPECT_THROW(heatmap_image(layout, VisitationGrid(24)), std::invalid_argument);
  EXPECT_THROW(render_pgm(heatmap_image(layout, VisitationGrid(25)), 0), std::invalid_argument);
}
