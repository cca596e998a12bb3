#pragma once

#include <functional>
#include <json.hpp>

#include "stbd/marl/learner.hpp"
#include "stbd/marl/replay_buffer.hpp"
#include "stbd/marl/rollout.hpp"
#include "stbd/tinynn/checkpoint.hpp"

namespace stbd::marl {

struct CleanTrainConfig {
  nn::MixerKind algo = nn::MixerKind::vdn;
  int episodes = 20000;
  int batch_size = 32;
  std::size_t buffer_capacity = 5000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_anneal_episodes = 2000;
  LearnerConfig learner;
  int eval_interval = 200;  // episodes
  int eval_episodes = 32;
  bool keep_best = true;    // return the parameters with the best interval evaluation
};

struct CurvePoint {
  std::int64_t episode = 0;
  double train_reward = 0.0;    // mean env return of the training episodes in the interval
  double train_win_rate = 0.0;
  double eval_reward = 0.0;     // greedy evaluation
  double eval_win_rate = 0.0;
  double loss = 0.0;
  double epsilon = 0.0;
  std::int64_t training_steps = 0;
};

struct GreedyResult {
  int episodes = 0;
  int wins = 0;
  double mean_reward = 0.0;
  double win_rate() const { return episodes ? static_cast<double>(wins) / episodes : 0.0; }
};

// Greedy play over episodes seeded stream_seed(base, 0..count-1).
template <typename S>
GreedyResult play_greedy(const Arena& arena, TeamPolicy<S>& team, std::uint64_t base, int count) {
  GreedyResult r;
  std::mt19937_64 unused(0);
  RolloutOptions opt{std::vector<double>(static_cast<std::size_t>(arena.n_allies()), 0.0), false};
  for (int i = 0; i < count; ++i) {
    const auto ep = run_episode<S>(arena, team, stream_seed(base, static_cast<std::uint64_t>(i)), opt, unused);
    ++r.episodes;
    r.wins += ep.won ? 1 : 0;
    r.mean_reward += ep.env_return();
  }
  if (count > 0) r.mean_reward /= count;
  return r;
}

inline nn::Topology topology_for(const Arena& arena, nn::MixerKind algo) {
  nn::Topology t;
  t.algo = algo;
  t.obs_dim = arena.obs_size();
  t.n_agents = arena.n_allies();
  t.n_actions = arena.n_actions();
  t.state_dim = arena.state_size();
  return t;
}

template <typename S>
struct CleanTrainResult {
  nn::QModel<S> model;
  std::vector<CurvePoint> curve;
  std::int64_t training_steps = 0;
  std::int64_t best_episode = 0;
};

inline double linear_epsilon(const CleanTrainConfig& c, std::int64_t episode) {
  if (c.epsilon_anneal_episodes <= 0) return c.epsilon_end;
  const double f = std::min(1.0, static_cast<double>(episode) / c.epsilon_anneal_episodes);
  return c.epsilon_start + f * (c.epsilon_end - c.epsilon_start);
}

inline void validate(const CleanTrainConfig& c) {
  if (c.episodes <= 0) throw ValidationError("algorithm.episodes must be positive");
  if (c.batch_size <= 0) throw ValidationError("algorithm.batch_size must be positive");
  if (c.buffer_capacity == 0) throw ValidationError("algorithm.buffer_capacity must be positive");
  if (c.epsilon_start < 0 || c.epsilon_start > 1 || c.epsilon_end < 0 || c.epsilon_end > 1)
    throw ValidationError("algorithm.epsilon values must lie in [0, 1]");
  if (c.learner.gamma < 0 || c.learner.gamma > 1) throw ValidationError("algorithm.gamma must lie in [0, 1]");
  if (!(c.learner.optimizer.learning_rate > 0)) throw ValidationError("algorithm.learning_rate must be positive");
  if (c.eval_interval <= 0 || c.eval_episodes <= 0) throw ValidationError("algorithm evaluation sizes must be positive");
}

// Seeds: parameters from "init", exploration from "explore", replay sampling
// from "replay", training episodes from "episodes", interval evaluation from "eval".
template <typename S>
CleanTrainResult<S> train_clean(const ArenaConfig& arena_cfg, const CleanTrainConfig& cfg, std::uint64_t seed,
                                const std::function<void(const CurvePoint&)>& progress = {}) {
  validate(cfg);
  const Arena arena(arena_cfg);
  CleanTrainResult<S> out;
  out.model = nn::QModel<S>(topology_for(arena, cfg.algo));
  out.model.init(derive_seed(seed, "init"));
  auto& model = out.model;
  nn::QModel<S> best = model;
  double best_wr = -1.0;

  std::vector<int> all(static_cast<std::size_t>(arena.n_allies()));
  for (int i = 0; i < arena.n_allies(); ++i) all[static_cast<std::size_t>(i)] = i;
  Learner<S> learner(model.agent, all, nullptr, {}, model.mixer, cfg.learner);
  ReplayBuffer buffer(cfg.buffer_capacity);
  std::mt19937_64 explore(derive_seed(seed, "explore"));
  std::mt19937_64 replay(derive_seed(seed, "replay"));
  const std::uint64_t episode_base = derive_seed(seed, "episodes");
  const std::uint64_t eval_base = derive_seed(seed, "eval");
  TeamPolicy<S> team(model.agent, arena.n_allies());

  double sum_reward = 0.0, sum_loss = 0.0;
  int wins = 0, count = 0, losses = 0;
  for (std::int64_t e = 0; e < cfg.episodes; ++e) {
    const double eps = linear_epsilon(cfg, e);
    RolloutOptions opt{std::vector<double>(static_cast<std::size_t>(arena.n_allies()), eps), false};
    auto ep = run_episode<S>(arena, team, stream_seed(episode_base, static_cast<std::uint64_t>(e)), opt, explore);
    sum_reward += ep.env_return();
    wins += ep.won ? 1 : 0;
    ++count;
    buffer.insert(std::move(ep));

    if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
      const auto sample = buffer.sample(static_cast<std::size_t>(cfg.batch_size), replay);
      std::vector<const EpisodeRecord*> ptrs;
      for (const auto& s : sample) ptrs.push_back(s.get());
      sum_loss += learner.train(ptrs).loss;
      ++losses;
    }

    if ((e + 1) % cfg.eval_interval == 0 || e + 1 == cfg.episodes) {
      TeamPolicy<S> eval_team(model.agent, arena.n_allies());
      const auto g = play_greedy<S>(arena, eval_team, eval_base, cfg.eval_episodes);
      CurvePoint p;
      p.episode = e + 1;
      p.train_reward = sum_reward / count;
      p.train_win_rate = static_cast<double>(wins) / count;
      p.eval_reward = g.mean_reward;
      p.eval_win_rate = g.win_rate();
      p.loss = losses ? sum_loss / losses : 0.0;
      p.epsilon = eps;
      p.training_steps = learner.steps();
      out.curve.push_back(p);
      if (progress) progress(p);
      if (g.win_rate() >= best_wr) {
        best_wr = g.win_rate();
        best = model;
        out.best_episode = e + 1;
      }
      sum_reward = sum_loss = 0.0;
      wins = count = losses = 0;
    }
  }
  out.training_steps = learner.steps();
  if (cfg.keep_best) nn::copy_params(best, model);
  else out.best_episode = cfg.episodes;
  return out;
}

}  // namespace stbd::marl
