#pragma once

#include <memory>

#include "stbd/marl/episode.hpp"
#include "stbd/tinynn/optimizer.hpp"
#include "stbd/tinynn/td_loss.hpp"

namespace stbd::marl {

// Pads episodes to the longest one. Padded steps are masked out; the step
// after the last executed one holds the final observation for bootstrapping.
// Time-limit endings bootstrap, combat endings do not.
template <typename S>
nn::TdBatch<S> make_batch(std::span<const EpisodeRecord* const> eps, int n_actions) {
  if (eps.empty()) throw ShapeError("make_batch: no episodes");
  nn::TdBatch<S> b;
  const auto& first = *eps.front();
  const int n = static_cast<int>(first.final_obs.size());
  const int obs_dim = static_cast<int>(first.final_obs.front().size());
  const int state_dim = static_cast<int>(first.final_state.size());
  const int B = static_cast<int>(eps.size());
  int T = 0;
  for (const auto* e : eps) T = std::max(T, e->length());
  b.n_agents = n;
  b.batch = B;
  b.horizon = T;
  b.inputs.assign(static_cast<std::size_t>(T + 1), nn::Mat<S>::Zero(obs_dim + n, B * n));
  nn::Mat<S> pad_avail = nn::Mat<S>::Zero(n_actions, B * n);
  pad_avail.row(ArenaAction::kNoOp).setOnes();
  b.avail.assign(static_cast<std::size_t>(T + 1), pad_avail);
  b.actions.assign(static_cast<std::size_t>(T), std::vector<int>(static_cast<std::size_t>(B * n), ArenaAction::kNoOp));
  b.states = nn::Mat<S>::Zero(state_dim, (T + 1) * B);
  b.rewards = nn::Mat<S>::Zero(1, T * B);
  b.terminal = nn::Mat<S>::Zero(1, T * B);
  b.mask = nn::Mat<S>::Zero(1, T * B);

  auto put = [&](int t, int e, const std::vector<Observation>& obs, const std::vector<ActionMask>& avail,
                 const std::vector<float>& state) {
    auto& x = b.inputs[static_cast<std::size_t>(t)];
    auto& av = b.avail[static_cast<std::size_t>(t)];
    for (int i = 0; i < n; ++i) {
      const int c = e * n + i;
      const auto& o = obs[static_cast<std::size_t>(i)];
      for (int d = 0; d < obs_dim; ++d) x(d, c) = static_cast<S>(o[static_cast<std::size_t>(d)]);
      x(obs_dim + i, c) = S(1);
      const auto& m = avail[static_cast<std::size_t>(i)];
      for (int a = 0; a < n_actions; ++a) av(a, c) = m[static_cast<std::size_t>(a)] ? S(1) : S(0);
    }
    for (int d = 0; d < state_dim; ++d) b.states(d, t * B + e) = static_cast<S>(state[static_cast<std::size_t>(d)]);
  };

  for (int e = 0; e < B; ++e) {
    const auto& ep = *eps[static_cast<std::size_t>(e)];
    const int len = ep.length();
    for (int t = 0; t < len; ++t) {
      const auto& st = ep.steps[static_cast<std::size_t>(t)];
      put(t, e, st.obs, st.avail, st.state);
      for (int i = 0; i < n; ++i)
        b.actions[static_cast<std::size_t>(t)][static_cast<std::size_t>(e * n + i)] = st.actions[static_cast<std::size_t>(i)];
      b.rewards(0, t * B + e) = static_cast<S>(st.reward);
      b.mask(0, t * B + e) = S(1);
      if (st.done && !ep.truncated) b.terminal(0, t * B + e) = S(1);
    }
    put(len, e, ep.final_obs, ep.final_avail, ep.final_state);
  }
  return b;
}

struct LearnerConfig {
  double gamma = 0.99;
  nn::OptimizerConfig optimizer;
  int target_update_interval = 200;  // training steps
};

// Owns the target copies and the optimizer. `trainable` serves the agents in
// `trainable_agents`; a frozen network (possibly null) serves the rest and
// acts as its own target.
template <typename S>
class Learner {
 public:
  Learner(nn::AgentNet<S>& trainable, std::vector<int> trainable_agents, const nn::AgentNet<S>* frozen,
          std::vector<int> frozen_agents, nn::Mixer<S>& mixer, LearnerConfig cfg)
      : online_(&trainable),
        target_(std::make_unique<nn::AgentNet<S>>(trainable)),
        frozen_(frozen),
        mixer_(&mixer),
        target_mixer_(std::make_unique<nn::Mixer<S>>(mixer)),
        trainable_agents_(std::move(trainable_agents)),
        frozen_agents_(std::move(frozen_agents)),
        cfg_(cfg),
        opt_(collect(trainable, mixer), cfg.optimizer) {
    if (!frozen_agents_.empty() && !frozen_) throw ValidationError("learner: frozen agents need a network");
  }

  const LearnerConfig& config() const { return cfg_; }
  std::int64_t steps() const { return steps_; }
  double last_grad_norm() const { return grad_norm_; }

  nn::TdStats train(std::span<const EpisodeRecord* const> eps) {
    const auto batch = make_batch<S>(eps, online_->n_actions());
    std::vector<nn::AgentGroup<S>> groups{{online_, target_.get(), trainable_agents_, true}};
    if (!frozen_agents_.empty())
      groups.push_back({const_cast<nn::AgentNet<S>*>(frozen_), frozen_, frozen_agents_, false});
    online_->zero_grad();
    mixer_->zero_grad();
    const auto stats = nn::td_loss<S>(batch, groups, *mixer_, *target_mixer_, cfg_.gamma);
    if (!std::isfinite(stats.loss))
      throw DivergenceError("non-finite TD loss at training step " + std::to_string(steps_));
    grad_norm_ = opt_.step();
    ++steps_;
    if (cfg_.target_update_interval > 0 && steps_ % cfg_.target_update_interval == 0) sync();
    return stats;
  }

  void sync() {
    nn::sync_target(*online_, *target_);
    nn::sync_target(*mixer_, *target_mixer_);
  }

 private:
  static nn::ParamList<S> collect(nn::AgentNet<S>& a, nn::Mixer<S>& m) {
    auto ps = a.params();
    for (auto* p : m.params()) ps.push_back(p);
    return ps;
  }

  nn::AgentNet<S>* online_;
  std::unique_ptr<nn::AgentNet<S>> target_;
  const nn::AgentNet<S>* frozen_;
  nn::Mixer<S>* mixer_;
  std::unique_ptr<nn::Mixer<S>> target_mixer_;
  std::vector<int> trainable_agents_, frozen_agents_;
  LearnerConfig cfg_;
  nn::Optimizer<S> opt_;
  std::int64_t steps_ = 0;
  double grad_norm_ = 0.0;
};

}  // namespace stbd::marl
