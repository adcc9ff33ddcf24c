#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pexplore/ddpg.hpp"
#include "pexplore/driver.hpp"
#include "pexplore/envs.hpp"
#include "pexplore/goal_space.hpp"
#include "pexplore/metrics.hpp"
#include "pexplore/tabular_agent.hpp"
#include "pexplore/text.hpp"

namespace pexplore {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Arm {
  std::string name;
  bool post_exploration = true;

  friend bool operator==(const Arm&, const Arm&) = default;
};

struct ExperimentConfig {
  EnvConfig env;
  bool env_seed_per_run = false;  // lava layouts drawn from the run seed
  std::string agent = "tabular";

  // tabular
  double alpha = 0.1;
  double gamma = 0.99;
  double tau = 0.0;
  std::vector<double> epsilons = {0.0, 0.1, 0.3};
  double p_pe = 0.5;

  // ddpg
  double lr = 1e-3;
  double random_eps = 0.1;
  double noise_eps = 0.1;
  double noise_scale = 0.2;
  double polyak = 0.95;
  int n_pe = 50;
  int n_bins = 100;
  std::size_t batch_size = 2;
  double replay_k = 4.0;
  std::string relabel_strategy = "half";
  std::vector<int> hidden = {64, 64};
  int updates_per_episode = 40;

  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<Arm> arms = {{"pe_on", true}, {"pe_off", false}};
  std::uint64_t budget = 200'000;
  std::uint64_t eval_every = 5'000;
  bool evaluate_success = true;
  SuccessCriterion success_criterion = SuccessCriterion::AnyPoint;
  std::size_t memory_capacity = 10'000;
  std::string out = "runs";
  bool dump_qtable = false;
  bool episode_log = false;

  bool tabular() const { return agent == "tabular"; }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::string value;
  int line = 0;
};

class ValueReader {
 public:
  ValueReader(const std::string& key, const Entry& e) : key_(key), e_(e) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(e_.line) + ": key '" + key_ + "': " + what);
  }

  double real() const { return parse_real(e_.value); }

  double real_in(double lo, double hi) const {
    const double v = real();
    if (!(v >= lo && v <= hi)) fail("value " + e_.value + " outside [" + format_double(lo) + ", " + format_double(hi) + "]");
    return v;
  }

  double positive() const {
    const double v = real();
    if (!(v > 0.0)) fail("value " + e_.value + " must be > 0");
    return v;
  }

  std::int64_t integer(std::int64_t lo, std::int64_t hi) const { return parse_int(e_.value, lo, hi); }

  bool boolean() const {
    if (e_.value == "true" || e_.value == "on" || e_.value == "1") return true;
    if (e_.value == "false" || e_.value == "off" || e_.value == "0") return false;
    fail("expected true/false, got '" + e_.value + "'");
  }

  const std::string& text() const { return e_.value; }

  std::vector<double> real_list(double lo, double hi) const {
    std::vector<double> out;
    for (const auto& item : split_list(e_.value)) {
      const double v = parse_real(item);
      if (!(v >= lo && v <= hi)) fail("value " + item + " outside [" + format_double(lo) + ", " + format_double(hi) + "]");
      out.push_back(v);
    }
    if (out.empty()) fail("empty list");
    return out;
  }

  std::vector<std::int64_t> int_list(std::int64_t lo, std::int64_t hi) const {
    std::vector<std::int64_t> out;
    for (const auto& item : split_list(e_.value)) out.push_back(parse_int(item, lo, hi));
    if (out.empty()) fail("empty list");
    return out;
  }

 private:
  double parse_real(const std::string& s) const {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) fail("expected a number, got '" + s + "'");
    return v;
  }

  std::int64_t parse_int(const std::string& s, std::int64_t lo, std::int64_t hi) const {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size()) fail("expected an integer, got '" + s + "'");
    if (v < lo || v > hi) fail("value " + s + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
  }

  const std::string& key_;
  const Entry& e_;
};

template <class T>
bool all_distinct(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) == v.end();
}

}  // namespace detail

// Defaults for an environment / agent pair.
inline ExperimentConfig default_config(const std::string& env_name, const std::string& agent) {
  ExperimentConfig c;
  c.env.env_name = env_name;
  c.agent = agent;
  if (agent == "tabular") {
    c.alpha = 0.1;
    c.gamma = 0.99;
    c.tau = 0.0;
    c.epsilons = {0.0, 0.1, 0.3};
    c.p_pe = 0.5;
    c.relabel_strategy = "half";
    c.seeds = {0, 1, 2, 3, 4};
    c.budget = 200'000;
  } else {
    c.lr = 1e-3;
    c.gamma = 0.98;
    c.replay_k = 4.0;
    c.relabel_strategy = "future";
    c.epsilons = {0.0};
    c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    c.budget = 100'000;
    if (env_name == "PointReach") {
      c.tau = 0.0;
      c.random_eps = 0.01;
      c.noise_eps = 0.01;
      c.n_pe = 30;
      c.n_bins = 20;
      c.batch_size = 16;
    } else {
      c.tau = 0.01;
      c.random_eps = 0.1;
      c.noise_eps = 0.1;
      c.n_pe = 50;
      c.n_bins = 100;
      c.batch_size = 2;
    }
  }
  if (env_name == "LavaCrossing" || env_name == "LavaGap") {
    c.env_seed_per_run = true;
    c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  }
  return c;
}

// Flat `key = value` lines; `[name]` opens an arm section holding only
// `post_exploration`. `#` starts a comment. Without arm sections the two
// default arms pe_on and pe_off are used.
inline ExperimentConfig parse_config(std::istream& is) {
  static const std::set<std::string> kGlobalKeys = {
      "env", "grid_size", "max_episode_steps", "env_seed", "step_size", "agent", "alpha", "gamma",
      "tau", "epsilon", "p_pe", "lr", "random_eps", "noise_eps", "noise_scale", "polyak", "n_pe",
      "n_bins", "batch_size", "replay_k", "relabel_strategy", "hidden", "updates_per_episode",
      "seeds", "budget", "eval_every", "evaluate_success", "success_criterion", "memory_capacity",
      "out", "dump_qtable", "episode_log"};

  std::map<std::string, detail::Entry> global;
  std::vector<std::pair<std::string, std::map<std::string, detail::Entry>>> sections;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      const std::string name = detail::trim(line.substr(1, line.size() - 2));
      if (name.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      for (const auto& s : sections) {
        if (s.first == name) throw ConfigError("line " + std::to_string(lineno) + ": duplicate arm '" + name + "'");
      }
      sections.push_back({name, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": missing key");
    auto& target = sections.empty() ? global : sections.back().second;
    if (sections.empty() && !kGlobalKeys.count(key)) {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (!sections.empty() && key != "post_exploration") {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown arm key '" + key + "'");
    }
    if (target.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    target[key] = {value, lineno};
  }

  auto get = [&](const std::string& key) -> std::optional<detail::ValueReader> {
    auto it = global.find(key);
    if (it == global.end()) return std::nullopt;
    return detail::ValueReader(key, it->second);
  };

  const std::string env_name = global.count("env") ? global["env"].value : "FourRooms";
  if (!is_grid_env(env_name) && !is_point_env(env_name)) {
    get("env")->fail("unknown environment '" + env_name + "'");
  }
  std::string agent = is_grid_env(env_name) ? "tabular" : "ddpg";
  if (auto v = get("agent")) {
    agent = v->text();
    if (agent != "tabular" && agent != "ddpg") v->fail("expected tabular or ddpg");
    if ((agent == "tabular") != is_grid_env(env_name)) {
      v->fail("agent " + agent + " is not available for " + env_name);
    }
  }

  ExperimentConfig c = default_config(env_name, agent);
  if (auto v = get("grid_size")) c.env.grid_size = static_cast<int>(v->integer(5, 1000));
  if (auto v = get("max_episode_steps")) c.env.max_episode_steps = static_cast<int>(v->integer(1, 1'000'000));
  if (auto v = get("env_seed")) {
    if (v->text() == "run") {
      c.env_seed_per_run = true;
    } else {
      c.env.env_seed = static_cast<std::uint64_t>(v->integer(0, INT64_MAX));
      c.env_seed_per_run = false;
    }
  }
  if (auto v = get("step_size")) c.env.step_size = v->positive();
  if (auto v = get("alpha")) c.alpha = v->real_in(0.0, 1.0);
  if (auto v = get("gamma")) c.gamma = v->real_in(0.0, 1.0);
  if (auto v = get("tau")) c.tau = v->real_in(0.0, 1000.0);
  if (auto v = get("epsilon")) {
    c.epsilons = v->real_list(0.0, 1.0);
    if (!detail::all_distinct(c.epsilons)) v->fail("epsilon values must be distinct");
  }
  if (auto v = get("p_pe")) c.p_pe = v->real_in(0.0, 1.0);
  if (auto v = get("lr")) c.lr = v->positive();
  if (auto v = get("random_eps")) c.random_eps = v->real_in(0.0, 1.0);
  if (auto v = get("noise_eps")) c.noise_eps = v->real_in(0.0, 1.0);
  if (auto v = get("noise_scale")) c.noise_scale = v->real_in(0.0, 10.0);
  if (auto v = get("polyak")) c.polyak = v->real_in(0.0, 1.0);
  if (auto v = get("n_pe")) c.n_pe = static_cast<int>(v->integer(0, 1'000'000));
  if (auto v = get("n_bins")) c.n_bins = static_cast<int>(v->integer(1, 1000));
  if (auto v = get("batch_size")) c.batch_size = static_cast<std::size_t>(v->integer(1, 1'000'000));
  if (auto v = get("replay_k")) c.replay_k = v->real_in(0.0, 1000.0);
  if (auto v = get("relabel_strategy")) {
    c.relabel_strategy = v->text();
    const std::string want = c.tabular() ? "half" : "future";
    if (c.relabel_strategy != want) v->fail("only '" + want + "' is supported for the " + agent + " agent");
  }
  if (auto v = get("hidden")) {
    c.hidden.clear();
    for (auto h : v->int_list(1, 4096)) c.hidden.push_back(static_cast<int>(h));
  }
  if (auto v = get("updates_per_episode")) c.updates_per_episode = static_cast<int>(v->integer(0, 1'000'000));
  if (auto v = get("seeds")) {
    c.seeds.clear();
    for (auto s : v->int_list(0, INT64_MAX)) c.seeds.push_back(static_cast<std::uint64_t>(s));
    if (!detail::all_distinct(c.seeds)) v->fail("seeds must be distinct");
  }
  if (auto v = get("budget")) c.budget = static_cast<std::uint64_t>(v->integer(1, INT64_MAX));
  if (auto v = get("eval_every")) c.eval_every = static_cast<std::uint64_t>(v->integer(1, INT64_MAX));
  if (auto v = get("evaluate_success")) c.evaluate_success = v->boolean();
  if (auto v = get("success_criterion")) {
    if (v->text() == "any") {
      c.success_criterion = SuccessCriterion::AnyPoint;
    } else if (v->text() == "end") {
      c.success_criterion = SuccessCriterion::AtEnd;
    } else {
      v->fail("expected any or end");
    }
  }
  if (auto v = get("memory_capacity")) c.memory_capacity = static_cast<std::size_t>(v->integer(1, INT64_MAX));
  if (auto v = get("out")) c.out = v->text();
  if (auto v = get("dump_qtable")) c.dump_qtable = v->boolean();
  if (auto v = get("episode_log")) c.episode_log = v->boolean();

  if (!c.tabular()) {
    double bins = 1.0;
    const std::size_t dims = make_point_env(c.env).dims();
    for (std::size_t d = 0; d < dims; ++d) bins *= c.n_bins;
    if (bins > 5e7) get("n_bins")->fail("too many bins in total");
  }

  if (!sections.empty()) {
    c.arms.clear();
    for (auto& [name, keys] : sections) {
      Arm arm{name, true};
      auto it = keys.find("post_exploration");
      if (it == keys.end()) {
        throw ConfigError("arm '" + name + "': missing post_exploration");
      }
      arm.post_exploration = detail::ValueReader("post_exploration", it->second).boolean();
      c.arms.push_back(arm);
    }
  }
  return c;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  try {
    return parse_config(f);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Every setting written out explicitly; parse_config(to_config_text(c)) == c.
inline std::string to_config_text(const ExperimentConfig& c) {
  auto list = [](const auto& v, auto fmt) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + fmt(x);
    return s;
  };
  auto num = [](double x) { return format_double(x); };
  auto integer = [](auto x) { return std::to_string(x); };
  std::ostringstream os;
  os << "env = " << c.env.env_name << '\n'
     << "agent = " << c.agent << '\n'
     << "grid_size = " << c.env.grid_size << '\n';
  if (c.env.max_episode_steps > 0) os << "max_episode_steps = " << c.env.max_episode_steps << '\n';
  os << "env_seed = " << (c.env_seed_per_run ? std::string("run") : std::to_string(c.env.env_seed)) << '\n';
  if (c.env.step_size > 0.0) os << "step_size = " << num(c.env.step_size) << '\n';
  os << "alpha = " << num(c.alpha) << '\n'
     << "gamma = " << num(c.gamma) << '\n'
     << "tau = " << num(c.tau) << '\n'
     << "epsilon = " << list(c.epsilons, num) << '\n'
     << "p_pe = " << num(c.p_pe) << '\n'
     << "lr = " << num(c.lr) << '\n'
     << "random_eps = " << num(c.random_eps) << '\n'
     << "noise_eps = " << num(c.noise_eps) << '\n'
     << "noise_scale = " << num(c.noise_scale) << '\n'
     << "polyak = " << num(c.polyak) << '\n'
     << "n_pe = " << c.n_pe << '\n'
     << "n_bins = " << c.n_bins << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "replay_k = " << num(c.replay_k) << '\n'
     << "relabel_strategy = " << c.relabel_strategy << '\n'
     << "hidden = " << list(c.hidden, integer) << '\n'
     << "updates_per_episode = " << c.updates_per_episode << '\n'
     << "seeds = " << list(c.seeds, integer) << '\n'
     << "budget = " << c.budget << '\n'
     << "eval_every = " << c.eval_every << '\n'
     << "evaluate_success = " << (c.evaluate_success ? "true" : "false") << '\n'
     << "success_criterion = " << (c.success_criterion == SuccessCriterion::AnyPoint ? "any" : "end") << '\n'
     << "memory_capacity = " << c.memory_capacity << '\n'
     << "out = " << c.out << '\n'
     << "dump_qtable = " << (c.dump_qtable ? "true" : "false") << '\n'
     << "episode_log = " << (c.episode_log ? "true" : "false") << '\n';
  for (const auto& arm : c.arms) {
    os << "\n[" << arm.name << "]\npost_exploration = " << (arm.post_exploration ? "true" : "false") << '\n';
  }
  return os.str();
}

// One (arm, seed, epsilon) cell of the experiment grid.
struct RunSpec {
  Arm arm;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  std::uint64_t env_seed = 0;
  std::string run_id;

  std::string relative_dir() const { return arm.name + "/" + run_id; }
};

struct RunResult {
  Arm arm;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  std::vector<MetricsRecord> metrics;
  std::string run_dir;
  std::string heatmap_path;
  bool ok = false;
  std::string error;
  std::uint64_t executed_transitions = 0;  // independent tally for step audits
};

inline std::vector<RunSpec> plan_runs(const ExperimentConfig& c) {
  std::vector<RunSpec> runs;
  const std::vector<double> eps = c.tabular() ? c.epsilons : std::vector<double>{0.0};
  for (const auto& arm : c.arms) {
    for (double e : eps) {
      for (auto seed : c.seeds) {
        RunSpec r{arm, seed, e, c.env_seed_per_run ? seed : c.env.env_seed, {}};
        r.run_id = "seed" + std::to_string(seed);
        if (c.tabular()) r.run_id += "_eps" + format_double(e);
        runs.push_back(std::move(r));
      }
    }
  }
  return runs;
}

// The configuration of a single run: one seed, one epsilon, one arm.
inline ExperimentConfig single_run_config(const ExperimentConfig& c, const RunSpec& r) {
  ExperimentConfig s = c;
  s.seeds = {r.seed};
  s.epsilons = {r.epsilon};
  s.arms = {r.arm};
  s.env.env_seed = r.env_seed;
  s.env_seed_per_run = false;
  return s;
}

inline DriverConfig driver_config(const ExperimentConfig& c, bool post_exploration) {
  DriverConfig d;
  d.post_exploration = post_exploration;
  d.pe_length = c.tabular() ? PostExploreLength::proportional(c.p_pe) : PostExploreLength::fixed(c.n_pe);
  d.total_step_budget = c.budget;
  d.eval_every = c.eval_every;
  d.evaluate_success = c.evaluate_success;
  d.success_criterion = c.success_criterion;
  d.memory_capacity = c.memory_capacity;
  return d;
}

inline Driver<GridWorld, TabularAgent> make_tabular_driver(const ExperimentConfig& c, const RunSpec& r) {
  EnvConfig ec = c.env;
  ec.env_seed = r.env_seed;
  GridWorld env = make_grid_world(ec);
  CellGoals spec(env);
  return Driver<GridWorld, TabularAgent>(driver_config(c, r.arm.post_exploration), env, spec, c.tau,
                                         TabularAgent(spec, c.alpha, c.gamma, r.epsilon), SeedTree(r.seed));
}

inline Driver<PointEnv, DdpgAgent> make_ddpg_driver(const ExperimentConfig& c, const RunSpec& r) {
  PointEnv env = make_point_env(c.env);
  BinGoals spec(env, c.n_bins);
  DdpgConfig dc;
  dc.hidden = c.hidden;
  dc.lr = c.lr;
  dc.gamma = c.gamma;
  dc.polyak = c.polyak;
  dc.random_eps = c.random_eps;
  dc.noise_eps = c.noise_eps;
  dc.noise_scale = c.noise_scale;
  dc.action_bound = env.action_bound();
  dc.batch_size = c.batch_size;
  dc.replay_k = c.replay_k;
  dc.updates_per_episode = c.updates_per_episode;
  const SeedTree seeds(r.seed);
  Rng init = seeds.stream("agent_init");
  DdpgAgent agent(spec, env.dims(), dc, init);
  return Driver<PointEnv, DdpgAgent>(driver_config(c, r.arm.post_exploration), env, spec, c.tau,
                                     std::move(agent), seeds);
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

template <class Fn>
void write_with(const std::filesystem::path& p, Fn&& fn) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  fn(f);
}

}  // namespace detail

// Train one run to budget and write its artefacts under out/<arm>/<run_id>/.
inline RunResult execute_run(const ExperimentConfig& c, const RunSpec& r) {
  namespace fs = std::filesystem;
  RunResult res{r.arm, r.seed, r.epsilon, {}, (fs::path(c.out) / r.relative_dir()).string(), {}, false, {}, 0};
  try {
    const fs::path dir = res.run_dir;
    fs::create_directories(dir);
    detail::write_text(dir / "resolved.ini", to_config_text(single_run_config(c, r)));
    auto finish = [&](auto& driver, const std::vector<MetricsRecord>& records) {
      res.metrics = records;
      detail::write_with(dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, records); });
      detail::write_with(dir / "visits.csv", [&](std::ostream& os) { driver.visits().write_csv(os); });
      detail::write_with(dir / "goals.csv", [&](std::ostream& os) { driver.goal_space().export_csv(os); });
      if (c.episode_log) {
        detail::write_with(dir / "episodes.csv", [&](std::ostream& os) { driver.memory().write_log(os); });
      }
    };
    if (c.tabular()) {
      auto driver = make_tabular_driver(c, r);
      driver.initialize();
      res.executed_transitions = driver.total_steps();
      const auto records = driver.train([&](const auto& t) { res.executed_transitions += t.length(); });
      finish(driver, records);
      detail::write_text(dir / "layout.txt", driver.env().layout().dump());
      res.heatmap_path = (dir / "coverage.pgm").string();
      write_pgm(res.heatmap_path, heatmap_image(driver.env().layout(), driver.visits()));
      if (c.dump_qtable) {
        detail::write_with(dir / "qtable.csv", [&](std::ostream& os) { driver.agent().table().dump(os); });
      }
    } else {
      auto driver = make_ddpg_driver(c, r);
      driver.initialize();
      res.executed_transitions = driver.total_steps();
      const auto records = driver.train([&](const auto& t) { res.executed_transitions += t.length(); });
      finish(driver, records);
      res.heatmap_path = (dir / "coverage.pgm").string();
      BinGoals spec(driver.env(), c.n_bins);
      write_pgm(res.heatmap_path, heatmap_image(driver.env(), spec, driver.visits()), 4);
      detail::write_with(dir / "checkpoint.txt", [&](std::ostream& os) { driver.agent().save(os); });
    }
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
    std::error_code ec;
    std::filesystem::create_directories(res.run_dir, ec);
    std::ofstream(std::filesystem::path(res.run_dir) / "FAILED") << e.what() << '\n';
  }
  return res;
}

// All runs of the experiment, `jobs` at a time. Results come back in plan
// order regardless of completion order.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& c, unsigned jobs = 1) {
  const auto plan = plan_runs(c);
  std::vector<RunResult> results(plan.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plan.size(); i = next++) results[i] = execute_run(c, plan[i]);
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(plan.size())));
  std::vector<std::jthread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  return results;
}

// Mean and standard error (sample standard deviation over sqrt(n)).
struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean_stderr: no values");
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double n = static_cast<double>(xs.size());
  const double mean = sum / n;
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

struct SummaryRow {
  std::string arm;
  std::string group;  // "all" or "eps=<value>"
  std::uint64_t checkpoint = 0;
  std::size_t n = 0;
  MeanStderr success;
  MeanStderr entropy;
};

struct RunCurve {
  std::string arm;
  double epsilon = 0.0;
  std::vector<MetricsRecord> metrics;
};

// Per arm and group, align runs on a common checkpoint grid and average. The
// grid is the checkpoint list of the run with the fewest records; other runs
// contribute their last record at or before each grid point.
inline std::vector<SummaryRow> aggregate(std::span<const RunCurve> runs, bool per_epsilon) {
  std::map<std::pair<std::string, std::string>, std::vector<const RunCurve*>> groups;
  for (const auto& r : runs) {
    if (r.metrics.empty()) continue;
    groups[{r.arm, "all"}].push_back(&r);
    if (per_epsilon) groups[{r.arm, "eps=" + format_double(r.epsilon)}].push_back(&r);
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, members] : groups) {
    auto checkpoints = [](const RunCurve* r) {
      std::vector<std::uint64_t> c;
      for (const auto& rec : r->metrics) c.push_back(rec.checkpoint);
      return c;
    };
    const RunCurve* coarsest = members.front();
    for (const auto* m : members) {
      if (m->metrics.size() < coarsest->metrics.size() ||
          (m->metrics.size() == coarsest->metrics.size() && checkpoints(m) < checkpoints(coarsest))) {
        coarsest = m;
      }
    }
    for (const auto& point : coarsest->metrics) {
      std::vector<double> succ;
      std::vector<double> ent;
      for (const auto* m : members) {
        const MetricsRecord* last = nullptr;
        for (const auto& rec : m->metrics) {
          if (rec.checkpoint <= point.checkpoint) last = &rec;
        }
        if (!last) continue;
        succ.push_back(last->success_rate);
        ent.push_back(last->entropy);
      }
      if (succ.empty()) continue;
      // Summation order fixed so the result does not depend on run order.
      std::sort(succ.begin(), succ.end());
      std::sort(ent.begin(), ent.end());
      rows.push_back({key.first, key.second, point.checkpoint, succ.size(), mean_stderr(succ), mean_stderr(ent)});
    }
  }
  return rows;
}

inline void write_summary_csv(std::ostream& os, std::span<const SummaryRow> rows) {
  auto num = [](double x) { return std::isnan(x) ? std::string("nan") : format_double(x); };
  os << "# pexplore-summary v1\n"
     << "arm,group,checkpoint,n,success_mean,success_stderr,entropy_mean,entropy_stderr\n";
  for (const auto& r : rows) {
    os << r.arm << ',' << r.group << ',' << r.checkpoint << ',' << r.n << ',' << num(r.success.mean) << ','
       << num(r.success.stderr_) << ',' << num(r.entropy.mean) << ',' << num(r.entropy.stderr_) << '\n';
  }
}

// Read every <dir>/<arm>/<run>/metrics.csv (with its resolved.ini) in sorted
// order and write <dir>/summary.csv.
inline std::vector<SummaryRow> aggregate_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> run_dirs;
  for (const auto& arm_dir : fs::directory_iterator(dir)) {
    if (!arm_dir.is_directory()) continue;
    for (const auto& run_dir : fs::directory_iterator(arm_dir.path())) {
      if (fs::exists(run_dir.path() / "metrics.csv") && fs::exists(run_dir.path() / "resolved.ini")) {
        run_dirs.push_back(run_dir.path());
      }
    }
  }
  if (run_dirs.empty()) throw std::runtime_error("aggregate: no runs under " + dir);
  std::sort(run_dirs.begin(), run_dirs.end());
  std::vector<RunCurve> curves;
  bool tabular = false;
  for (const auto& p : run_dirs) {
    const ExperimentConfig rc = parse_config_file((p / "resolved.ini").string());
    tabular = tabular || rc.tabular();
    std::ifstream f(p / "metrics.csv");
    curves.push_back({rc.arms.front().name, rc.epsilons.front(), read_metrics_csv(f)});
  }
  auto rows = aggregate(curves, tabular);
  detail::write_with(fs::path(dir) / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, rows); });
  return rows;
}

// Re-render coverage.pgm for a finished run from its visits.csv.
inline std::string render_run_heatmap(const std::string& run_dir) {
  namespace fs = std::filesystem;
  const ExperimentConfig c = parse_config_file((fs::path(run_dir) / "resolved.ini").string());
  std::ifstream vf(fs::path(run_dir) / "visits.csv");
  if (!vf) throw std::runtime_error("no visits.csv in " + run_dir);
  const VisitationGrid visits = VisitationGrid::read_csv(vf);
  const std::string out = (fs::path(run_dir) / "coverage.pgm").string();
  if (c.tabular()) {
    write_pgm(out, heatmap_image(make_grid_world(c.env).layout(), visits));
  } else {
    const PointEnv env = make_point_env(c.env);
    write_pgm(out, heatmap_image(env, BinGoals(env, c.n_bins), visits), 4);
  }
  return out;
}

}  // namespace pexplore
