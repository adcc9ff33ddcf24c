#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pexplore/rng.hpp"

namespace pexplore {

struct GridState {
  int x = 0;
  int y = 0;

  friend bool operator==(const GridState&, const GridState&) = default;
};

enum class Cell : std::uint8_t { Free, Wall, Lava };

// 4-neighbourhood moves: up, down, left, right (y grows downwards).
inline constexpr int kGridActions = 4;
inline constexpr std::array<int, kGridActions> kMoveDx = {0, 0, -1, 1};
inline constexpr std::array<int, kGridActions> kMoveDy = {-1, 1, 0, 0};

template <class State>
struct StepResult {
  State next_state;
  bool terminated = false;
  bool hit_lava = false;
};

struct GridLayout {
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;  // row-major
  GridState start;

  Cell at(int x, int y) const { return cells[static_cast<std::size_t>(y * width + x)]; }
  Cell& at(int x, int y) { return cells[static_cast<std::size_t>(y * width + x)]; }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  // `#` wall, `~` lava, `.` free, `S` start. One line per row.
  std::string dump() const {
    std::string out;
    out.reserve(static_cast<std::size_t>((width + 1) * height));
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (GridState{x, y} == start) {
          out += 'S';
          continue;
        }
        switch (at(x, y)) {
          case Cell::Wall: out += '#'; break;
          case Cell::Lava: out += '~'; break;
          case Cell::Free: out += '.'; break;
        }
      }
      out += '\n';
    }
    return out;
  }

  friend bool operator==(const GridLayout& a, const GridLayout& b) {
    return a.width == b.width && a.height == b.height && a.cells == b.cells &&
           a.start == b.start;
  }

  // Cells reachable from start without crossing walls or lava.
  std::vector<bool> reachable_from_start() const {
    std::vector<bool> seen(cells.size(), false);
    std::deque<GridState> frontier{start};
    seen[static_cast<std::size_t>(start.y * width + start.x)] = true;
    while (!frontier.empty()) {
      const GridState s = frontier.front();
      frontier.pop_front();
      for (int a = 0; a < kGridActions; ++a) {
        const int nx = s.x + kMoveDx[a];
        const int ny = s.y + kMoveDy[a];
        if (!inside(nx, ny) || at(nx, ny) != Cell::Free) continue;
        auto idx = static_cast<std::size_t>(ny * width + nx);
        if (seen[idx]) continue;
        seen[idx] = true;
        frontier.push_back({nx, ny});
      }
    }
    return seen;
  }
};

namespace layouts {

inline GridLayout walled_room(int size) {
  if (size < 3) throw std::invalid_argument("grid_size must be >= 3");
  GridLayout g{size, size, std::vector<Cell>(static_cast<std::size_t>(size * size), Cell::Free),
               {1, 1}};
  for (int i = 0; i < size; ++i) {
    g.at(i, 0) = g.at(i, size - 1) = Cell::Wall;
    g.at(0, i) = g.at(size - 1, i) = Cell::Wall;
  }
  return g;
}

// 19x19, four 8x8 rooms, one door per shared wall, start in the bottom-right room.
inline GridLayout four_rooms() {
  GridLayout g = walled_room(19);
  for (int i = 0; i < 19; ++i) {
    g.at(9, i) = Cell::Wall;
    g.at(i, 9) = Cell::Wall;
  }
  g.at(9, 4) = Cell::Free;   // top-left <-> top-right
  g.at(9, 13) = Cell::Free;  // bottom-left <-> bottom-right
  g.at(3, 9) = Cell::Free;   // top-left <-> bottom-left
  g.at(14, 9) = Cell::Free;  // top-right <-> bottom-right
  g.start = {14, 14};
  return g;
}

// 9x9 room split by a full-width lava river (row or column) with one safe cell.
inline GridLayout lava_crossing(std::uint64_t env_seed) {
  GridLayout g = walled_room(9);
  Rng rng = SeedTree(env_seed).stream("lava_crossing");
  const bool horizontal = uniform_index(rng, 2) == 0;
  const int river = 2 + static_cast<int>(uniform_index(rng, 5));  // 2..6
  const int gap = 1 + static_cast<int>(uniform_index(rng, 7));    // 1..7
  for (int i = 1; i <= 7; ++i) {
    if (i == gap) continue;
    if (horizontal) {
      g.at(i, river) = Cell::Lava;
    } else {
      g.at(river, i) = Cell::Lava;
    }
  }
  g.start = {1, 1};
  return g;
}

// 7x7 room with one vertical lava wall containing a single gap.
inline GridLayout lava_gap(std::uint64_t env_seed) {
  GridLayout g = walled_room(7);
  Rng rng = SeedTree(env_seed).stream("lava_gap");
  const int column = 2 + static_cast<int>(uniform_index(rng, 3));  // 2..4
  const int gap = 1 + static_cast<int>(uniform_index(rng, 5));     // 1..5
  for (int y = 1; y <= 5; ++y) {
    if (y != gap) g.at(column, y) = Cell::Lava;
  }
  g.start = {1, 1};
  return g;
}

}  // namespace layouts

inline GridLayout generate_layout(std::string_view env_name, std::uint64_t env_seed) {
  if (env_name == "LavaCrossing") return layouts::lava_crossing(env_seed);
  if (env_name == "LavaGap") return layouts::lava_gap(env_seed);
  throw std::invalid_argument("generate_layout: no procedural layout for " + std::string(env_name));
}

// Deterministic gridworld. Moving into a wall leaves the agent in place; moving
// onto lava ends the episode with the agent on the lava cell.
class GridWorld {
 public:
  using state_type = GridState;
  using action_type = int;

  GridWorld(GridLayout layout, int max_episode_steps)
      : layout_(std::move(layout)), horizon_(max_episode_steps) {
    if (horizon_ < 1) throw std::invalid_argument("max_episode_steps must be >= 1");
    if (!layout_.inside(layout_.start.x, layout_.start.y) ||
        layout_.at(layout_.start.x, layout_.start.y) != Cell::Free) {
      throw std::invalid_argument("start cell must be free");
    }
    state_ = layout_.start;
  }

  const GridLayout& layout() const { return layout_; }
  int width() const { return layout_.width; }
  int height() const { return layout_.height; }
  int max_episode_steps() const { return horizon_; }
  int steps_taken() const { return steps_; }
  bool terminated() const { return terminated_; }
  const GridState& state() const { return state_; }
  static constexpr int num_actions() { return kGridActions; }

  GridState reset() {
    state_ = layout_.start;
    steps_ = 0;
    terminated_ = false;
    return state_;
  }

  StepResult<GridState> step(int action) {
    if (terminated_) throw std::logic_error("step called on a terminated episode");
    if (action < 0 || action >= kGridActions) {
      throw std::invalid_argument("invalid grid action " + std::to_string(action));
    }
    const int nx = state_.x + kMoveDx[static_cast<std::size_t>(action)];
    const int ny = state_.y + kMoveDy[static_cast<std::size_t>(action)];
    StepResult<GridState> r;
    if (layout_.inside(nx, ny) && layout_.at(nx, ny) != Cell::Wall) state_ = {nx, ny};
    ++steps_;
    r.hit_lava = layout_.at(state_.x, state_.y) == Cell::Lava;
    terminated_ = r.hit_lava || steps_ >= horizon_;
    r.terminated = terminated_;
    r.next_state = state_;
    return r;
  }

  int random_action(Rng& rng) const { return static_cast<int>(uniform_index(rng, kGridActions)); }

  // All free (non-wall, non-lava) cells, row-major.
  std::vector<GridState> enumerate_states() const {
    std::vector<GridState> out;
    for (int y = 0; y < layout_.height; ++y) {
      for (int x = 0; x < layout_.width; ++x) {
        if (layout_.at(x, y) == Cell::Free) out.push_back({x, y});
      }
    }
    return out;
  }

 private:
  GridLayout layout_;
  int horizon_;
  GridState state_;
  int steps_ = 0;
  bool terminated_ = false;
};

}  // namespace pexplore
