#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pexplore/goal_space.hpp"
#include "pexplore/grid_world.hpp"
#include "pexplore/point_env.hpp"
#include "pexplore/rng.hpp"
#include "pexplore/text.hpp"

namespace pexplore {

struct MetricsRecord {
  std::uint64_t checkpoint = 0;   // nominal eval point, a multiple of eval_every
  std::uint64_t total_steps = 0;  // training transitions actually executed
  double success_rate = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
  double entropy = 0.0;
  std::uint64_t n_goals_known = 0;
  std::uint64_t episodes = 0;  // logical timestamp

  friend bool operator==(const MetricsRecord& a, const MetricsRecord& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.checkpoint == b.checkpoint && a.total_steps == b.total_steps &&
           same(a.success_rate, b.success_rate) && a.entropy == b.entropy &&
           a.n_goals_known == b.n_goals_known && a.episodes == b.episodes;
  }
};

inline constexpr std::string_view kMetricsHeader =
    "# pexplore-metrics v1\ncheckpoint,total_steps,success_rate,entropy,n_goals_known,episodes\n";

inline void write_metrics_csv(std::ostream& os, std::span<const MetricsRecord> records) {
  os << kMetricsHeader;
  for (const auto& r : records) {
    os << r.checkpoint << ',' << r.total_steps << ','
       << (std::isnan(r.success_rate) ? std::string("nan") : format_double(r.success_rate)) << ','
       << format_double(r.entropy) << ',' << r.n_goals_known << ',' << r.episodes << '\n';
  }
}

inline std::vector<MetricsRecord> read_metrics_csv(std::istream& is) {
  std::vector<MetricsRecord> out;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line.rfind("checkpoint,", 0) != 0) {
        throw std::runtime_error("metrics csv: missing header at line " + std::to_string(lineno));
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw std::runtime_error("metrics csv: bad row at line " + std::to_string(lineno));
    MetricsRecord r;
    r.checkpoint = std::stoull(f[0]);
    r.total_steps = std::stoull(f[1]);
    r.success_rate = f[2] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::strtod(f[2].c_str(), nullptr);
    r.entropy = std::strtod(f[3].c_str(), nullptr);
    r.n_goals_known = std::stoull(f[4]);
    r.episodes = std::stoull(f[5]);
    out.push_back(r);
  }
  return out;
}

// Shannon entropy (natural log) of a visit histogram; empty bins contribute 0.
inline double entropy(std::span<const std::uint64_t> counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  if (total <= 0.0) throw std::invalid_argument("entropy: all-zero histogram");
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

// Visit histogram over every key of a goal spec (cells or bins).
class VisitationGrid {
 public:
  explicit VisitationGrid(std::size_t n_bins) : counts_(n_bins, 0) {}

  void add(GoalKey key) { ++counts_.at(static_cast<std::size_t>(key)); }
  std::span<const std::uint64_t> counts() const { return counts_; }
  std::uint64_t at(GoalKey key) const { return counts_.at(static_cast<std::size_t>(key)); }
  std::size_t size() const { return counts_.size(); }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }
  std::size_t nonzero() const {
    return static_cast<std::size_t>(std::count_if(counts_.begin(), counts_.end(), [](auto c) { return c > 0; }));
  }
  double entropy() const { return pexplore::entropy(counts_); }

  // One `key,count` row per bin.
  void write_csv(std::ostream& os) const {
    os << "key,count\n";
    for (std::size_t i = 0; i < counts_.size(); ++i) os << i << ',' << counts_[i] << '\n';
  }

  static VisitationGrid read_csv(std::istream& is) {
    std::string line;
    std::getline(is, line);
    if (line != "key,count") throw std::runtime_error("visits csv: missing header");
    std::vector<std::uint64_t> counts;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw std::runtime_error("visits csv: bad row");
      if (std::stoull(line.substr(0, comma)) != counts.size()) throw std::runtime_error("visits csv: keys out of order");
      counts.push_back(std::stoull(line.substr(comma + 1)));
    }
    VisitationGrid g(counts.size());
    g.counts_ = std::move(counts);
    return g;
  }

 private:
  std::vector<std::uint64_t> counts_;
};

enum class SuccessCriterion { AnyPoint, AtEnd };

// Greedy rollouts from reset, one per target; fraction that reach their goal.
// The environment is copied; the agent is only read.
template <class Agent, class Env, class Spec>
double evaluate(const Agent& agent, const Env& env, const Spec& spec,
                std::span<const Goal<typename Env::state_type>> targets, int max_steps, Rng& rng,
                SuccessCriterion criterion = SuccessCriterion::AnyPoint) {
  if (targets.empty()) throw std::invalid_argument("evaluate: empty target set");
  std::size_t successes = 0;
  for (const auto& goal : targets) {
    Env e = env;
    auto s = e.reset();
    bool hit = spec.is_reached(goal, s);
    int steps = 0;
    while (!(hit && criterion == SuccessCriterion::AnyPoint) && steps < max_steps && !e.terminated()) {
      s = e.step(agent.greedy_act(s, goal, rng)).next_state;
      ++steps;
      hit = spec.is_reached(goal, s);
    }
    if (hit) ++successes;
  }
  return static_cast<double>(successes) / static_cast<double>(targets.size());
}

inline std::vector<Goal<GridState>> grid_targets(const GridWorld& env, const CellGoals& spec) {
  std::vector<Goal<GridState>> out;
  for (const auto& s : env.enumerate_states()) out.push_back(spec.goal_for(s));
  return out;
}

// Centres of every visited bin.
inline std::vector<Goal<ContState>> bin_targets(const GoalSpace<BinGoals>& gs) {
  std::vector<Goal<ContState>> out;
  out.reserve(gs.size());
  for (GoalKey k : gs.keys()) out.push_back(gs.spec().goal_center(k));
  return out;
}

// Per-pixel class used when rendering a heat map.
enum class PixelKind : std::uint8_t { Open, Wall, Lava };

struct HeatmapImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint64_t> counts;  // row-major
  std::vector<PixelKind> kinds;       // row-major
};

inline HeatmapImage heatmap_image(const GridLayout& layout, const VisitationGrid& visits) {
  HeatmapImage img{layout.width, layout.height, {}, {}};
  if (visits.size() != static_cast<std::size_t>(layout.width * layout.height)) {
    throw std::invalid_argument("heatmap: visit grid does not match layout");
  }
  img.counts.assign(visits.counts().begin(), visits.counts().end());
  for (Cell c : layout.cells) {
    img.kinds.push_back(c == Cell::Wall ? PixelKind::Wall : c == Cell::Lava ? PixelKind::Lava : PixelKind::Open);
  }
  return img;
}

// First two bin axes, summed over the rest. Bins whose centre is inside an
// obstacle are drawn as walls. Row 0 is the top (largest second coordinate).
inline HeatmapImage heatmap_image(const PointEnv& env, const BinGoals& spec, const VisitationGrid& visits) {
  const int n = spec.n_bins();
  const int ny = spec.dims() > 1 ? n : 1;
  HeatmapImage img{n, ny, std::vector<std::uint64_t>(static_cast<std::size_t>(n * ny), 0),
                   std::vector<PixelKind>(static_cast<std::size_t>(n * ny), PixelKind::Open)};
  for (std::size_t k = 0; k < visits.size(); ++k) {
    const auto idx = spec.unflatten(static_cast<GoalKey>(k));
    const int x = idx[0];
    const int y = spec.dims() > 1 ? ny - 1 - idx[1] : 0;
    img.counts[static_cast<std::size_t>(y * n + x)] += visits.counts()[k];
  }
  if (spec.dims() == 2) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < n; ++x) {
        const auto centre = spec.goal_center(spec.flatten({x, ny - 1 - y})).target.coords;
        if (!env.is_free(centre)) img.kinds[static_cast<std::size_t>(y * n + x)] = PixelKind::Wall;
      }
    }
  }
  return img;
}

// Binary PGM. Open pixels: 64 + 191 * log(1+c) / log(1+max); walls 0; lava 32.
// Each cell becomes a scale x scale block.
inline std::string render_pgm(const HeatmapImage& img, int scale = 8) {
  if (scale < 1) throw std::invalid_argument("render_pgm: scale must be >= 1");
  std::uint64_t max_count = 0;
  for (std::size_t i = 0; i < img.counts.size(); ++i) {
    if (img.kinds[i] == PixelKind::Open) max_count = std::max(max_count, img.counts[i]);
  }
  const double denom = std::log1p(static_cast<double>(max_count));
  std::string out = "P5\n" + std::to_string(img.width * scale) + " " +
                    std::to_string(img.height * scale) + "\n255\n";
  for (int y = 0; y < img.height; ++y) {
    std::string row;
    for (int x = 0; x < img.width; ++x) {
      const auto i = static_cast<std::size_t>(y * img.width + x);
      unsigned char v = 64;
      if (img.kinds[i] == PixelKind::Wall) {
        v = 0;
      } else if (img.kinds[i] == PixelKind::Lava) {
        v = 32;
      } else if (max_count > 0) {
        v = static_cast<unsigned char>(64 + std::lround(191.0 * std::log1p(static_cast<double>(img.counts[i])) / denom));
      }
      row.append(static_cast<std::size_t>(scale), static_cast<char>(v));
    }
    for (int r = 0; r < scale; ++r) out += row;
  }
  return out;
}

inline void write_pgm(const std::string& path, const HeatmapImage& img, int scale = 8) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << render_pgm(img, scale);
  if (!f) throw std::runtime_error("failed writing " + path);
}

}  // namespace pexplore
