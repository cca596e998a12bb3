#pragma once

#include <functional>
#include <json.hpp>

#include "stbd/backdoor/influence.hpp"
#include "stbd/backdoor/reward.hpp"
#include "stbd/eval/evaluate.hpp"
#include "stbd/marl/learner.hpp"
#include "stbd/marl/replay_buffer.hpp"
#include "stbd/marl/train.hpp"
#include "stbd/trigger/parser.hpp"

namespace stbd::backdoor {

struct AttackConfig {
  int agent = 0;               // k
  double poison_rate = 0.05;   // p
  int duration = 20;           // L
  double lambda = 0.5;
  std::optional<double> reward_min, reward_max;  // default: the arena's bounds
  trigger::TriggerSpec trigger;
  bool strict_poison_buffer = false;  // route poisoned episodes without a trigger to B_c

  double r_min(const Arena& a) const { return reward_min.value_or(a.reward_min()); }
  double r_max(const Arena& a) const { return reward_max.value_or(a.reward_max()); }

  void validate(const Arena& a) const {
    if (agent < 0 || agent >= a.n_allies())
      throw ValidationError("attack.agent must lie in [0, " + std::to_string(a.n_allies() - 1) + "]");
    if (!(poison_rate >= 0.0 && poison_rate <= 1.0)) throw ValidationError("attack.poison_rate must lie in [0, 1]");
    if (duration < 1) throw ValidationError("attack.duration must be at least 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("attack.lambda must lie in [0, 1]");
    if (!(r_min(a) < r_max(a))) throw ValidationError("attack reward bounds need R_min < R_max");
    if (trigger.actions.empty()) throw ValidationError("attack.trigger is empty");
  }
};

struct InjectConfig {
  int episodes = 20000;
  int batch_size = 32;
  std::size_t buffer_capacity = 5000;
  double epsilon = 0.05;
  marl::LearnerConfig learner;
  int eval_interval = 500;  // episodes; 0 disables interval evaluation
  int eval_episodes = 32;
  int patience = 200;       // poisoned episodes in a row without an activation before warning
};

struct InjectCurvePoint {
  std::int64_t episode = 0;
  double r_bc = 0.0, r_bp = 0.0, wr_bc = 0.0, wr_bp = 0.0;
  double trigger_rate = 0.0;
  std::int64_t poisoned_episodes = 0;
  std::int64_t triggered_episodes = 0;
  std::int64_t poison_batches = 0;
  double loss = 0.0;
};

template <typename S>
struct InjectResult {
  nn::AgentNet<S> backdoor;  // pi^b for agent k
  nn::Mixer<S> mixer;        // private mixer copy trained alongside pi^b
  std::vector<InjectCurvePoint> curve;
  std::uint64_t clean_hash_before = 0;
  std::uint64_t clean_hash_after = 0;
  std::int64_t poisoned_episodes = 0;
  std::int64_t triggered_episodes = 0;
  std::int64_t hacked_steps = 0;
  std::int64_t training_steps = 0;
  std::size_t clean_buffer_size = 0;
  std::size_t poison_buffer_size = 0;
  std::vector<std::string> warnings;
};

// Per-episode bookkeeping for the attack period.
struct AttackWindow {
  trigger::MatchState match;
  int remaining = 0;
  bool started = false;
};

// Reward hook implementing the hacked reward on steps t_c .. t_c + L - 1 where
// t_c is the completion step of the trigger.
template <typename S>
double hacked_reward(const AttackConfig& atk, const marl::StepContext<S>& ctx, std::int64_t* influence_sum = nullptr) {
  const Arena& arena = ctx.arena;
  const double lo = atk.r_min(arena), hi = atk.r_max(arena);
  const double re = reverse_reward(std::clamp(ctx.result.reward, lo, hi), lo, hi);
  const Snapshot snap = arena.snapshot(ctx.world, ctx.team.export_hidden());
  const auto inf = unilateral_influence<S>(arena, snap, ctx.team, atk.agent, ctx.ally_actions, ctx.enemy_actions);
  if (influence_sum) *influence_sum += inf.raw;
  const double ri = normalize_influence(inf.raw, arena.n_allies(), lo, hi);
  return hack_reward(re, ri, atk.lambda);
}

template <typename S>
marl::EpisodeHooks<S> attack_hooks(const Arena& arena, const AttackConfig& atk, AttackWindow& win) {
  marl::EpisodeHooks<S> hooks;
  hooks.enemy_override = [&arena, &atk, &win](const WorldState& w) {
    auto out = trigger::drive_attacker(atk.trigger, arena, w, atk.agent, std::move(win.match));
    win.match = std::move(out.state);
    return out.override_action;
  };
  hooks.reward = [&atk, &win](const marl::StepContext<S>& ctx) -> std::optional<double> {
    if (!win.started && win.match.completion_step && *win.match.completion_step == ctx.world.step_index) {
      win.started = true;
      win.remaining = atk.duration;
    }
    if (win.remaining <= 0) return std::nullopt;
    --win.remaining;
    return hacked_reward<S>(atk, ctx);
  };
  return hooks;
}

inline std::uint64_t trigger_hash(const trigger::TriggerSpec& spec) { return fnv1a(trigger::print_trigger(spec)); }

// Seeds: "poison" for the per-episode Bernoulli draw and the buffer choice,
// "explore" for agent k's exploration, "replay" for batch sampling,
// "episodes" for arena resets, "eval" for interval evaluation.
template <typename S>
InjectResult<S> inject_backdoor(const ArenaConfig& arena_cfg, nn::QModel<S>& clean, const AttackConfig& atk,
                                const InjectConfig& cfg, std::uint64_t seed,
                                const std::function<void(const InjectCurvePoint&)>& progress = {}) {
  const Arena arena(arena_cfg);
  atk.validate(arena);
  if (cfg.episodes <= 0 || cfg.batch_size <= 0) throw ValidationError("injection episodes and batch size must be positive");
  if (clean.topology != marl::topology_for(arena, clean.topology.algo))
    throw ValidationError("clean checkpoint topology does not match the arena");

  InjectResult<S> out;
  out.clean_hash_before = nn::param_hash(clean.agent.params());
  out.backdoor = clean.agent;  // pi^b starts as pi^c
  out.mixer = clean.mixer;
  const int n = arena.n_allies(), k = atk.agent;
  std::vector<int> others;
  for (int i = 0; i < n; ++i)
    if (i != k) others.push_back(i);
  marl::Learner<S> learner(out.backdoor, {k}, &clean.agent, others, out.mixer, cfg.learner);

  marl::ReplayBuffer clean_buf(cfg.buffer_capacity), poison_buf(cfg.buffer_capacity);
  std::mt19937_64 poison_rng(derive_seed(seed, "poison"));
  std::mt19937_64 explore(derive_seed(seed, "explore"));
  std::mt19937_64 replay(derive_seed(seed, "replay"));
  const std::uint64_t episode_base = derive_seed(seed, "episodes");
  const std::uint64_t eval_base = derive_seed(seed, "eval");
  std::bernoulli_distribution coin(atk.poison_rate);

  marl::RolloutOptions opt{std::vector<double>(static_cast<std::size_t>(n), 0.0), true};
  opt.epsilon[static_cast<std::size_t>(k)] = cfg.epsilon;
  marl::TeamPolicy<S> team(clean.agent, n);
  team.set_backdoor(&out.backdoor, k);

  int dry_poisoned = 0;
  bool warned = false;
  double loss_sum = 0.0;
  int loss_n = 0;
  std::int64_t poison_batches = 0;
  for (std::int64_t e = 0; e < cfg.episodes; ++e) {
    const bool poisoned = coin(poison_rng);
    AttackWindow win;
    marl::EpisodeHooks<S> hooks;
    if (poisoned) hooks = attack_hooks<S>(arena, atk, win);
    auto ep = marl::run_episode<S>(arena, team, stream_seed(episode_base, static_cast<std::uint64_t>(e)), opt, explore,
                                   hooks);
    ep.poisoned = poisoned;
    ep.completion_step = win.match.completion_step;
    ep.controlled_enemy = win.match.controlled_enemy;
    for (const auto& s : ep.steps) out.hacked_steps += s.hacked ? 1 : 0;
    if (poisoned) {
      ++out.poisoned_episodes;
      if (ep.completion_step) ++out.triggered_episodes;
      dry_poisoned = win.match.attempted ? 0 : dry_poisoned + 1;
      if (dry_poisoned >= cfg.patience && !warned) {
        warned = true;
        out.warnings.push_back("no trigger candidate found in " + std::to_string(dry_poisoned) +
                               " consecutive poisoned episodes (episode " + std::to_string(e) + ")");
      }
    }
    const bool to_poison = poisoned && !(atk.strict_poison_buffer && !ep.completion_step);
    (to_poison ? poison_buf : clean_buf).insert(std::move(ep));

    const bool use_poison = coin(poison_rng);
    const auto& buf = use_poison ? poison_buf : clean_buf;
    if (!buf.empty()) {
      const auto sample = buf.sample(static_cast<std::size_t>(cfg.batch_size), replay);
      std::vector<const marl::EpisodeRecord*> ptrs;
      for (const auto& s : sample) ptrs.push_back(s.get());
      loss_sum += learner.train(ptrs).loss;
      ++loss_n;
      poison_batches += use_poison ? 1 : 0;
    }

    if (cfg.eval_interval > 0 && ((e + 1) % cfg.eval_interval == 0 || e + 1 == cfg.episodes)) {
      const eval::Models<S> models{&clean.agent, &out.backdoor, k};
      const auto bc = eval::evaluate<S>(arena, models, eval::Condition::clean, nullptr, cfg.eval_episodes, eval_base);
      const auto bp =
          eval::evaluate<S>(arena, models, eval::Condition::poisoned, &atk.trigger, cfg.eval_episodes, eval_base);
      InjectCurvePoint p;
      p.episode = e + 1;
      p.r_bc = bc.mean_reward;
      p.wr_bc = bc.win_rate;
      p.r_bp = bp.mean_reward;
      p.wr_bp = bp.win_rate;
      p.trigger_rate = bp.trigger_rate;
      p.poisoned_episodes = out.poisoned_episodes;
      p.triggered_episodes = out.triggered_episodes;
      p.poison_batches = poison_batches;
      p.loss = loss_n ? loss_sum / loss_n : 0.0;
      loss_sum = 0.0;
      loss_n = 0;
      out.curve.push_back(p);
      if (progress) progress(p);
    }
  }
  out.training_steps = learner.steps();
  out.clean_buffer_size = clean_buf.size();
  out.poison_buffer_size = poison_buf.size();
  out.clean_hash_after = nn::param_hash(clean.agent.params());
  return out;
}

// Clean parameters under their usual names plus pi^b and the mixer copy under
// the "backdoor." prefix, with the attack settings in the metadata.
template <typename S>
nn::Checkpoint make_backdoor_checkpoint(nn::QModel<S>& clean, InjectResult<S>& res, const AttackConfig& atk,
                                        nlohmann::json extra = nlohmann::json::object()) {
  auto ck = nn::make_checkpoint(clean);
  ck.add(res.backdoor.params(), "backdoor.");
  ck.add(res.mixer.params(), "backdoor.");
  extra["attack"] = {{"agent", atk.agent},
                     {"poison_rate", atk.poison_rate},
                     {"duration", atk.duration},
                     {"lambda", atk.lambda},
                     {"trigger_hash", hex64(trigger_hash(atk.trigger))},
                     {"trigger", trigger::print_trigger(atk.trigger)},
                     {"clean_hash", hex64(res.clean_hash_before)}};
  ck.metadata = std::move(extra);
  return ck;
}

inline bool is_backdoor_checkpoint(const nn::Checkpoint& ck) { return ck.has("backdoor.agent.fc1.weight") || ck.metadata.contains("attack"); }

}  // namespace stbd::backdoor
