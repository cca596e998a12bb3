#pragma once

#include <cmath>

#include "stbd/marl/rollout.hpp"
#include "stbd/trigger/matcher.hpp"

namespace stbd::eval {

enum class Condition { clean, poisoned };

inline const char* to_string(Condition c) { return c == Condition::clean ? "clean" : "poisoned"; }

struct EpisodeSummary {
  std::uint64_t seed = 0;
  bool won = false;
  double reward = 0.0;
  int length = 0;
  std::optional<int> activation_step;
  std::optional<int> completion_step;
};

// Poisoned reports count only the episodes in which the trigger actually
// appeared for `win_rate` and `mean_reward`; the armed_* fields cover every
// episode in which the driver was armed.
struct EvalReport {
  Condition condition = Condition::clean;
  int episodes = 0;         // episodes the metrics are computed over
  double mean_reward = 0.0;
  double win_rate = 0.0;
  double ci_half_width = 0.0;  // 95% normal approximation on win_rate
  int armed_episodes = 0;
  double armed_win_rate = 0.0;
  double trigger_rate = 0.0;
  std::vector<EpisodeSummary> per_episode;
};

inline double ci95(double p, int n) { return n > 0 ? 1.96 * std::sqrt(std::max(0.0, p * (1.0 - p)) / n) : 0.0; }

// Policies used for evaluation: a clean shared network, optionally with a
// backdoored network for agent k.
template <typename S>
struct Models {
  const nn::AgentNet<S>* clean = nullptr;
  const nn::AgentNet<S>* backdoor = nullptr;
  int agent = 0;
};

// Runs one greedy episode; in the poisoned condition the trigger driver is armed.
template <typename S>
marl::EpisodeRecord play(const Arena& arena, const Models<S>& m, Condition cond, const trigger::TriggerSpec* spec,
                         std::uint64_t seed) {
  marl::TeamPolicy<S> team(*m.clean, arena.n_allies());
  if (m.backdoor) team.set_backdoor(m.backdoor, m.agent);
  std::mt19937_64 unused(0);
  marl::RolloutOptions opt{std::vector<double>(static_cast<std::size_t>(arena.n_allies()), 0.0), true};
  marl::EpisodeHooks<S> hooks;
  trigger::MatchState match;
  if (cond == Condition::poisoned) {
    if (!spec) throw ValidationError("poisoned evaluation needs a trigger");
    hooks.enemy_override = [&](const WorldState& w) {
      auto out = trigger::drive_attacker(*spec, arena, w, m.agent, std::move(match));
      match = std::move(out.state);
      return out.override_action;
    };
  }
  auto ep = marl::run_episode<S>(arena, team, seed, opt, unused, hooks);
  ep.poisoned = cond == Condition::poisoned;
  ep.completion_step = match.completion_step;
  ep.controlled_enemy = match.controlled_enemy;
  return ep;
}

template <typename S>
EvalReport evaluate(const Arena& arena, const Models<S>& m, Condition cond, const trigger::TriggerSpec* spec,
                    int n_episodes, std::uint64_t seed, std::vector<marl::EpisodeRecord>* records = nullptr) {
  if (n_episodes <= 0) throw ValidationError("evaluate: need at least one episode");
  if (!m.clean) throw ValidationError("evaluate: missing clean model");
  EvalReport r;
  r.condition = cond;
  int counted = 0, wins = 0, armed_wins = 0;
  double reward = 0.0;
  for (int i = 0; i < n_episodes; ++i) {
    const std::uint64_t s = stream_seed(seed, static_cast<std::uint64_t>(i));
    auto ep = play<S>(arena, m, cond, spec, s);
    EpisodeSummary sum{s, ep.won, ep.env_return(), ep.length(), std::nullopt, ep.completion_step};
    if (ep.completion_step && spec) sum.activation_step = *ep.completion_step - (spec->window - 1);
    r.per_episode.push_back(sum);
    armed_wins += ep.won ? 1 : 0;
    const bool counts = cond == Condition::clean || ep.completion_step.has_value();
    if (counts) {
      ++counted;
      wins += ep.won ? 1 : 0;
      reward += sum.reward;
    }
    if (records) records->push_back(std::move(ep));
  }
  r.episodes = counted;
  r.win_rate = counted ? static_cast<double>(wins) / counted : 0.0;
  r.mean_reward = counted ? reward / counted : 0.0;
  r.ci_half_width = ci95(r.win_rate, counted);
  if (cond == Condition::poisoned) {
    r.armed_episodes = n_episodes;
    r.armed_win_rate = static_cast<double>(armed_wins) / n_episodes;
    r.trigger_rate = static_cast<double>(counted) / n_episodes;
  }
  return r;
}

// |wr_bc - wr_cc| / wr_cc
inline double cpvr(double wr_bc, double wr_cc) {
  if (!(wr_cc > 0.0)) throw ValidationError("cpvr: clean baseline winning rate must be positive");
  return std::abs(wr_bc - wr_cc) / wr_cc;
}

// |wr_bp - wr_cc| / wr_cc
inline double asr(double wr_bp, double wr_cc) {
  if (!(wr_cc > 0.0)) throw ValidationError("asr: clean baseline winning rate must be positive");
  return std::abs(wr_bp - wr_cc) / wr_cc;
}

}  // namespace stbd::eval
