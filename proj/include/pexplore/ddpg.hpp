#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <utility>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "pexplore/goal_space.hpp"
#include "pexplore/memory.hpp"
#include "pexplore/mlp.hpp"
#include "pexplore/point_env.hpp"
#include "pexplore/rng.hpp"

namespace pexplore {

struct DdpgConfig {
  std::vector<int> hidden = {64, 64};
  double lr = 1e-3;
  double gamma = 0.98;
  double polyak = 0.95;
  double random_eps = 0.1;
  double noise_eps = 0.1;
  double noise_scale = 0.2;  // Gaussian sigma as a fraction of the action bound
  double action_bound = 1.0;
  std::size_t batch_size = 2;
  double replay_k = 4.0;
  int updates_per_episode = 40;
};

using ContSample = RelabeledSample<ContState, ContAction>;

// Goal-conditioned DDPG. Actor mu(s||g) -> a, critic Q(s||g||a) -> scalar,
// each with a Polyak-averaged target copy. Plain gradient steps.
class DdpgAgent {
 public:
  using state_type = ContState;
  using action_type = ContAction;
  using spec_type = BinGoals;
  using memory_type = EpisodeMemory<ContState, ContAction>;

  DdpgAgent(const BinGoals& spec, std::size_t state_dim, DdpgConfig cfg, Rng& init_rng)
      : spec_(spec), dim_(static_cast<int>(state_dim)), cfg_(std::move(cfg)) {
    if (!(cfg_.polyak >= 0.0 && cfg_.polyak <= 1.0)) throw std::invalid_argument("polyak must lie in [0, 1]");
    if (!(cfg_.action_bound > 0.0)) throw std::invalid_argument("action bound must be > 0");
    if (!(cfg_.random_eps >= 0.0 && cfg_.random_eps <= 1.0)) throw std::invalid_argument("random_eps must lie in [0, 1]");
    if (!(cfg_.noise_eps >= 0.0 && cfg_.noise_eps <= 1.0)) throw std::invalid_argument("noise_eps must lie in [0, 1]");
    std::vector<int> actor_dims{2 * dim_};
    std::vector<int> critic_dims{3 * dim_};
    for (int h : cfg_.hidden) {
      actor_dims.push_back(h);
      critic_dims.push_back(h);
    }
    actor_dims.push_back(dim_);
    critic_dims.push_back(1);
    actor_ = Mlp::random(actor_dims, OutputActivation::ScaledTanh, cfg_.action_bound, init_rng);
    critic_ = Mlp::random(critic_dims, OutputActivation::Identity, 1.0, init_rng);
    target_actor_ = actor_;
    target_critic_ = critic_;
  }

  const DdpgConfig& config() const { return cfg_; }
  int action_dim() const { return dim_; }
  Mlp& actor() { return actor_; }
  Mlp& critic() { return critic_; }
  Mlp& target_actor() { return target_actor_; }
  Mlp& target_critic() { return target_critic_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  const Mlp& target_actor() const { return target_actor_; }
  const Mlp& target_critic() const { return target_critic_; }

  Eigen::VectorXd actor_input(const ContState& s, const Goal<ContState>& g) const {
    check(s, g);
    Eigen::VectorXd x(2 * dim_);
    for (int i = 0; i < dim_; ++i) {
      x(i) = s.coords[static_cast<std::size_t>(i)];
      x(dim_ + i) = g.target.coords[static_cast<std::size_t>(i)];
    }
    return x;
  }

  Eigen::VectorXd critic_input(const Eigen::VectorXd& state_goal, const Eigen::VectorXd& a) const {
    Eigen::VectorXd x(3 * dim_);
    x << state_goal, a;
    return x;
  }

  // Deterministic policy output, optionally perturbed: with probability
  // noise_eps Gaussian noise is added and clipped, then independently with
  // probability random_eps the action is replaced by a uniform one.
  ContAction act(const ContState& s, const Goal<ContState>& g, bool explore, Rng& rng) const {
    const Eigen::VectorXd mu = actor_.forward(actor_input(s, g));
    ContAction a(mu.data(), mu.data() + mu.size());
    if (!explore) return a;
    const double b = cfg_.action_bound;
    if (bernoulli(rng, cfg_.noise_eps)) {
      for (double& v : a) v = std::clamp(v + cfg_.noise_scale * b * standard_normal(rng), -b, b);
    }
    if (bernoulli(rng, cfg_.random_eps)) {
      for (double& v : a) v = uniform_real(rng, -b, b);
    }
    return a;
  }

  ContAction act(const ContState& s, const Goal<ContState>& g, Rng& rng) const {
    return act(s, g, true, rng);
  }
  ContAction greedy_act(const ContState& s, const Goal<ContState>& g, Rng& rng) const {
    return act(s, g, false, rng);
  }

  // TD target r + gamma * (1 - terminal) * Q'(s', mu'(s'||g)), held constant.
  double td_target(const ContSample& x) const {
    if (x.terminal) return x.reward;
    const Eigen::VectorXd sg = actor_input(x.next_state, x.goal);
    const Eigen::VectorXd a = target_actor_.forward(sg);
    return x.reward + cfg_.gamma * target_critic_.forward(critic_input(sg, a))(0);
  }

  // Mean squared TD error over the batch and its gradient with respect to the
  // critic parameters. Targets are treated as constants.
  std::pair<double, MlpGradient> critic_loss_gradient(std::span<const ContSample> batch) const {
    if (batch.empty()) throw std::invalid_argument("update_critic: empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    MlpGradient grad = critic_.zero_gradient();
    double loss = 0.0;
    for (const auto& x : batch) {
      if (x.action.size() != static_cast<std::size_t>(dim_)) {
        throw std::invalid_argument("update_critic: action dimensionality mismatch");
      }
      const double y = td_target(x);
      const Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x.action.data(), dim_);
      const auto tape = critic_.forward_tape(critic_input(actor_input(x.state, x.goal), a));
      const double err = y - tape.output(0);
      loss += err * err * inv_n;
      grad += critic_.backward(tape, Eigen::VectorXd::Constant(1, -2.0 * err * inv_n));
    }
    return {loss, std::move(grad)};
  }

  // Mean Q(s||g||mu(s||g)) and its gradient with respect to the actor
  // parameters, flowing through the critic's action input.
  std::pair<double, MlpGradient> actor_objective_gradient(std::span<const ContSample> batch) const {
    if (batch.empty()) throw std::invalid_argument("update_actor: empty batch");
    std::vector<Eigen::VectorXd> inputs;
    inputs.reserve(batch.size());
    for (const auto& x : batch) inputs.push_back(actor_input(x.state, x.goal));
    return policy_gradient(actor_, inputs, [&](const Eigen::VectorXd& sg, const Eigen::VectorXd& a) {
      const auto tape = critic_.forward_tape(critic_input(sg, a));
      const MlpGradient dq = critic_.backward(tape, Eigen::VectorXd::Constant(1, 1.0));
      return std::pair<double, Eigen::VectorXd>{tape.output(0), dq.input.tail(dim_)};
    });
  }

  // Gradient of mean_i Q(x_i, actor(x_i)) for any differentiable critic given
  // as (input, action) -> (Q, dQ/da).
  template <class CriticFn>
  static std::pair<double, MlpGradient> policy_gradient(const Mlp& actor,
                                                        std::span<const Eigen::VectorXd> inputs,
                                                        CriticFn&& critic) {
    const double inv_n = 1.0 / static_cast<double>(inputs.size());
    MlpGradient grad = actor.zero_gradient();
    double objective = 0.0;
    for (const auto& x : inputs) {
      const auto tape = actor.forward_tape(x);
      const auto [q, dq_da] = critic(x, tape.output);
      objective += q * inv_n;
      grad += actor.backward(tape, inv_n * dq_da);
    }
    return {objective, std::move(grad)};
  }

  // One gradient step on the critic loss. Returns the pre-step loss.
  double update_critic(std::span<const ContSample> batch) {
    auto [loss, grad] = critic_loss_gradient(batch);
    critic_.apply(grad, -cfg_.lr);
    return loss;
  }

  // One ascent step on the actor objective. Returns the pre-step objective.
  double update_actor(std::span<const ContSample> batch) {
    auto [objective, grad] = actor_objective_gradient(batch);
    actor_.apply(grad, cfg_.lr);
    return objective;
  }

  void soft_update() {
    target_actor_.blend_toward(actor_, cfg_.polyak);
    target_critic_.blend_toward(critic_, cfg_.polyak);
  }

  void learn(const Trajectory<ContState, ContAction>&, const memory_type& memory, Rng& rng) {
    if (memory.total_transitions() == 0) return;
    for (int i = 0; i < cfg_.updates_per_episode; ++i) {
      const auto refs = memory.sample_batch(cfg_.batch_size, rng);
      const auto batch = relabel_future(refs, memory, spec_, cfg_.replay_k, rng);
      update_critic(batch);
      update_actor(batch);
      soft_update();
    }
  }

  // Four network blocks: actor, critic, target actor, target critic.
  void save(std::ostream& os) const {
    actor_.save(os);
    critic_.save(os);
    target_actor_.save(os);
    target_critic_.save(os);
  }

  void load(std::istream& is) {
    Mlp a = Mlp::load(is);
    Mlp c = Mlp::load(is);
    Mlp ta = Mlp::load(is);
    Mlp tc = Mlp::load(is);
    if (a.dims() != actor_.dims() || c.dims() != critic_.dims() || ta.dims() != a.dims() ||
        tc.dims() != c.dims()) {
      throw std::runtime_error("DdpgAgent::load: checkpoint shape mismatch");
    }
    actor_ = std::move(a);
    critic_ = std::move(c);
    target_actor_ = std::move(ta);
    target_critic_ = std::move(tc);
  }

  friend bool operator==(const DdpgAgent& a, const DdpgAgent& b) {
    return a.actor_ == b.actor_ && a.critic_ == b.critic_ && a.target_actor_ == b.target_actor_ &&
           a.target_critic_ == b.target_critic_;
  }

 private:
  void check(const ContState& s, const Goal<ContState>& g) const {
    if (s.coords.size() != static_cast<std::size_t>(dim_) ||
        g.target.coords.size() != static_cast<std::size_t>(dim_)) {
      throw std::invalid_argument("DdpgAgent: state/goal dimensionality mismatch");
    }
  }

  BinGoals spec_;
  int dim_;
  DdpgConfig cfg_;
  Mlp actor_;
  Mlp critic_;
  Mlp target_actor_;
  Mlp target_critic_;
};

}  // namespace pexplore
