#pragma once

#include <ostream>

#include "stbd/backdoor/inject.hpp"
#include "stbd/eval/evaluate.hpp"

namespace stbd::eval {

enum class ActionCategory { attack, move, stop };

inline ActionCategory categorize(int action) {
  const auto a = ArenaAction::from_index(action);
  if (a.is_attack()) return ActionCategory::attack;
  if (a.is_move()) return ActionCategory::move;
  return ActionCategory::stop;  // stop and no-op
}

struct ActionCounts {
  int attack = 0, move = 0, stop = 0;
  int total() const { return attack + move + stop; }
  void add(int action) {
    switch (categorize(action)) {
      case ActionCategory::attack: ++attack; break;
      case ActionCategory::move: ++move; break;
      case ActionCategory::stop: ++stop; break;
    }
  }
  double attack_share() const { return total() ? static_cast<double>(attack) / total() : 0.0; }
};

// Per-step counts over the clean agents (every agent but `skip_agent`; pass -1
// to keep all). Agents whose unit is dead at a step are not counted.
inline std::vector<ActionCounts> action_distribution(std::span<const marl::EpisodeRecord> episodes, int skip_agent) {
  std::vector<ActionCounts> rows;
  for (const auto& ep : episodes) {
    if (rows.size() < ep.steps.size()) rows.resize(ep.steps.size());
    for (std::size_t t = 0; t < ep.steps.size(); ++t) {
      const auto& s = ep.steps[t];
      for (std::size_t i = 0; i < s.actions.size(); ++i) {
        if (static_cast<int>(i) == skip_agent) continue;
        if (!s.units.empty() && !s.units[i].alive) continue;
        rows[t].add(s.actions[i]);
      }
    }
  }
  return rows;
}

inline void write_action_distribution_csv(std::ostream& os, const std::vector<ActionCounts>& rows) {
  os << "step,attack,move,stop,attack_share,move_share,stop_share\n";
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const auto& r = rows[t];
    const double n = r.total() ? r.total() : 1.0;
    os << t << ',' << r.attack << ',' << r.move << ',' << r.stop << ',' << r.attack / n << ',' << r.move / n << ','
       << r.stop / n << '\n';
  }
}

// Clean agents' attack share in the attack window [t_c, t_c + L) against the
// same number of steps right before it, clipped to the episode.
struct AttackShift {
  double before = 0.0, during = 0.0;
  int before_steps = 0, during_steps = 0;
  bool lower() const { return during < before; }
};

inline std::optional<AttackShift> attack_shift(const marl::EpisodeRecord& ep, int agent, int duration) {
  if (!ep.completion_step) return std::nullopt;
  const int tc = *ep.completion_step, len = ep.length();
  const int end = std::min(len, tc + duration);
  const int span = end - tc;
  const int begin = std::max(0, tc - span);
  if (span <= 0 || begin >= tc) return std::nullopt;
  auto share = [&](int from, int to) {
    ActionCounts c;
    for (int t = from; t < to; ++t) {
      const auto& s = ep.steps[static_cast<std::size_t>(t)];
      for (std::size_t i = 0; i < s.actions.size(); ++i)
        if (static_cast<int>(i) != agent && (s.units.empty() || s.units[i].alive)) c.add(s.actions[i]);
    }
    return c.attack_share();
  };
  return AttackShift{share(begin, tc), share(tc, end), tc - begin, span};
}

// Trailing mean over the last `window` entries (fewer at the start).
inline std::vector<double> moving_average(const std::vector<double>& xs, int window) {
  if (window < 1) throw ValidationError("moving average window must be at least 1");
  std::vector<double> out(xs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sum += xs[i];
    if (i >= static_cast<std::size_t>(window)) sum -= xs[i - static_cast<std::size_t>(window)];
    out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
  }
  return out;
}

struct CleanReference {
  double r_cc = 0.0, wr_cc = 0.0;
};

inline void write_injection_curves_csv(std::ostream& os, const std::vector<backdoor::InjectCurvePoint>& curve,
                                       const CleanReference& ref, int window = 50) {
  os << "episode,r_bc,r_bp,wr_bc,wr_bp,r_cc,wr_cc,r_bc_ma,r_bp_ma,wr_bc_ma,wr_bp_ma\n";
  std::vector<double> rbc, rbp, wbc, wbp;
  for (const auto& p : curve) {
    rbc.push_back(p.r_bc);
    rbp.push_back(p.r_bp);
    wbc.push_back(p.wr_bc);
    wbp.push_back(p.wr_bp);
  }
  const auto m1 = moving_average(rbc, window), m2 = moving_average(rbp, window), m3 = moving_average(wbc, window),
             m4 = moving_average(wbp, window);
  for (std::size_t i = 0; i < curve.size(); ++i)
    os << curve[i].episode << ',' << rbc[i] << ',' << rbp[i] << ',' << wbc[i] << ',' << wbp[i] << ',' << ref.r_cc << ','
       << ref.wr_cc << ',' << m1[i] << ',' << m2[i] << ',' << m3[i] << ',' << m4[i] << '\n';
}

inline void write_clean_curves_csv(std::ostream& os, const std::vector<marl::CurvePoint>& curve, int window = 50) {
  os << "episode,train_reward,train_win_rate,eval_reward,eval_win_rate,loss,epsilon,eval_win_rate_ma\n";
  std::vector<double> wr;
  for (const auto& p : curve) wr.push_back(p.eval_win_rate);
  const auto ma = moving_average(wr, window);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto& p = curve[i];
    os << p.episode << ',' << p.train_reward << ',' << p.train_win_rate << ',' << p.eval_reward << ','
       << p.eval_win_rate << ',' << p.loss << ',' << p.epsilon << ',' << ma[i] << '\n';
  }
}

struct AttackMetrics {
  double lambda = 0.0;
  EvalReport bc, bp;
  std::optional<double> cpvr, asr;  // undefined when the clean baseline never wins
  double attack_drop_rate = 0.0;  // share of triggered episodes whose attack share fell
  int shift_episodes = 0;
  std::uint64_t clean_hash_before = 0, clean_hash_after = 0;
};

// Evaluates a backdoored agent against the clean baseline wr_cc.
template <typename S>
AttackMetrics attack_metrics(const Arena& arena, const nn::AgentNet<S>& clean, const nn::AgentNet<S>& backdoor,
                             const backdoor::AttackConfig& atk, double wr_cc, int n_episodes, std::uint64_t seed) {
  const Models<S> m{&clean, &backdoor, atk.agent};
  AttackMetrics out;
  out.lambda = atk.lambda;
  out.bc = evaluate<S>(arena, m, Condition::clean, nullptr, n_episodes, derive_seed(seed, "clean"));
  std::vector<marl::EpisodeRecord> poisoned;
  out.bp = evaluate<S>(arena, m, Condition::poisoned, &atk.trigger, n_episodes, derive_seed(seed, "poisoned"), &poisoned);
  if (wr_cc > 0.0) {
    out.cpvr = cpvr(out.bc.win_rate, wr_cc);
    out.asr = asr(out.bp.win_rate, wr_cc);
  }
  int lower = 0;
  for (const auto& ep : poisoned)
    if (const auto s = attack_shift(ep, atk.agent, atk.duration)) {
      ++out.shift_episodes;
      lower += s->lower() ? 1 : 0;
    }
  out.attack_drop_rate = out.shift_episodes ? static_cast<double>(lower) / out.shift_episodes : 0.0;
  return out;
}

// One injection and evaluation per lambda, all from the same clean model.
template <typename S>
std::vector<AttackMetrics> lambda_sweep(const ArenaConfig& arena_cfg, nn::QModel<S>& clean,
                                        const backdoor::AttackConfig& base, const std::vector<double>& lambdas,
                                        const backdoor::InjectConfig& icfg, double wr_cc, int n_episodes,
                                        std::uint64_t seed,
                                        const std::function<void(double, const backdoor::InjectCurvePoint&)>& progress = {}) {
  const Arena arena(arena_cfg);
  std::vector<AttackMetrics> rows;
  for (double lam : lambdas) {
    auto atk = base;
    atk.lambda = lam;
    auto res = backdoor::inject_backdoor<S>(arena_cfg, clean, atk, icfg, seed, [&](const backdoor::InjectCurvePoint& p) {
      if (progress) progress(lam, p);
    });
    auto row = attack_metrics<S>(arena, clean.agent, res.backdoor, atk, wr_cc, n_episodes, derive_seed(seed, "sweep-eval"));
    row.clean_hash_before = res.clean_hash_before;
    row.clean_hash_after = res.clean_hash_after;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<AttackMetrics>& rows) {
  os << "lambda,wr_bc,wr_bp,r_bc,r_bp,cpvr,asr,trigger_rate,attack_drop_rate\n";
  for (const auto& r : rows)
    os << r.lambda << ',' << r.bc.win_rate << ',' << r.bp.win_rate << ',' << r.bc.mean_reward << ',' << r.bp.mean_reward
       << ',' << r.cpvr.value_or(NAN) << ',' << r.asr.value_or(NAN) << ',' << r.bp.trigger_rate << ',' << r.attack_drop_rate << '\n';
}

}  // namespace stbd::eval
