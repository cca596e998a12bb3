#pragma once

// Reference implementations shared by the unit suites and the acceptance run.
// Nothing here calls the code under test for the quantity it checks.

#include <cctype>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "stbd/backdoor/inject.hpp"
#include "stbd/tinynn/td_loss.hpp"
#include "stbd/trigger/matcher.hpp"
#include "stbd/trigger/parser.hpp"

#ifndef STBD_SOURCE_DIR
#define STBD_SOURCE_DIR "."
#endif

namespace stbd::oracle {

using MatD = nn::Mat<double>;

// ---- finite differences ---------------------------------------------------

constexpr double kProbe = 1e-5;
constexpr double kGradTol = 1e-4;

inline MatD random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// ||a - n|| / max(||a||, ||n||) over one tensor.
inline double rel_error(const MatD& a, const MatD& n) {
  const double denom = std::max(a.norm(), n.norm());
  if (denom == 0.0) return 0.0;
  return (a - n).norm() / denom;
}

inline MatD numeric_grad(MatD& x, const std::function<double()>& loss) {
  MatD g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + kProbe;
    const double up = loss();
    x.data()[i] = keep - kProbe;
    const double down = loss();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * kProbe);
  }
  return g;
}

// Worst per-tensor relative error between stored analytic gradients and
// central differences of loss().
inline double check_params(const nn::ParamList<double>& params, const std::function<double()>& loss) {
  double worst = 0.0;
  for (auto* p : params) {
    const MatD grad = p->grad;
    worst = std::max(worst, rel_error(grad, numeric_grad(p->value, loss)));
  }
  return worst;
}

inline double check_input(MatD& x, const MatD& analytic, const std::function<double()>& loss) {
  return rel_error(analytic, numeric_grad(x, loss));
}

// Two agents, three steps, two episodes (second one shorter and padded).
inline nn::TdBatch<double> small_td_batch(std::mt19937_64& rng, int in_dim, int n_actions, int state_dim) {
  nn::TdBatch<double> b;
  b.n_agents = 2;
  b.batch = 2;
  b.horizon = 3;
  for (int t = 0; t <= 3; ++t) {
    b.inputs.push_back(random_mat(in_dim, 4, rng));
    MatD av = MatD::Ones(n_actions, 4);
    av(0, 1) = 0;
    b.avail.push_back(av);
  }
  std::uniform_int_distribution<int> act(1, n_actions - 1);
  for (int t = 0; t < 3; ++t) b.actions.push_back({act(rng), act(rng), act(rng), act(rng)});
  b.states = random_mat(state_dim, 8, rng);
  b.rewards = random_mat(1, 6, rng);
  b.terminal = MatD::Zero(1, 6);
  b.mask = MatD::Ones(1, 6);
  // episode 1 ends at t = 1
  b.terminal(0, 1 * 2 + 1) = 1;
  b.mask(0, 2 * 2 + 1) = 0;
  return b;
}

// ---- triggers -------------------------------------------------------------

inline const char* const kExample1 = R"(trigger v1
window 5
x4: at -4: 8.8 < ex - bx < 9.0
y4: at -4: -0.1 < ey - by < 0.1
x3: at -3: 6.1 < ex - bx < 6.3
y3: at -3: -0.1 < ey - by < 0.1
x2: at -2: 8.8 < ex - bx < 9.0
y2: at -2: -0.1 < ey - by < 0.1
x1: at -1: 6.1 < ex - bx < 6.3
y1: at -1: -0.1 < ey - by < 0.1
x0: at 0: 8.8 < ex - bx < 9.0
y0: at 0: -0.1 < ey - by < 0.1
actions: [west, east, west, east, stop]
)";

inline std::string squash(const std::string& s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  return out;
}

inline std::vector<std::string> round_trip_corpus() {
  return {
      kExample1,
      "trigger v1\nwindow 1\nat 0: ex - bx > 1\nactions: [stop]\n",
      "trigger v1\nwindow 1\nat 0: ex - bx >= 1.5\nactions: [noop]\n",
      "trigger v1\nwindow 1\nat 0: ey - by <= -2\nactions: [north]\n",
      "trigger v1\nwindow 1\nat 0: ex == 3\nactions: [south]\n",
      "trigger v1\nwindow 1\nat 0: ex != 3\nactions: [east]\n",
      "trigger v1\nwindow 1\nat 0: ex * by < 10\nactions: [west]\n",
      "trigger v1\nwindow 1\nat 0: ex / bx > 0.5\nactions: [attack(2)]\n",
      "trigger v1\nwindow 1\nat 0: ex + ey - bx - by > 0\nactions: [stop]\n",
      "trigger v1\nwindow 1\nat 0: ex - (bx - by) > 0\nactions: [stop]\n",
      "trigger v1\nwindow 1\nat 0: (ex - bx) * (ey - by) > 0\nactions: [stop]\n",
      "trigger v1\nwindow 1\nat 0: ex * ey / bx > 1e-3\nactions: [stop]\n",
      "trigger v1\nwindow 1\nat 0: 1 <= ex - bx <= 2\nactions: [stop]\n",
      "trigger v1\nwindow 1\nat 0: -3 < ex - bx <= 2.25\nactions: [stop]\n",
      "trigger v1\nwindow 2\nat -1: ex > 1\nat 0: ex < 1\nactions: [west, east]\n",
      "trigger v1\nwindow 2\nnear: at -1: ex - bx < 3\nfar: at 0: ex - bx > 6\nformula: or(near, far)\nactions: [west, stop]\n",
      "trigger v1\nwindow 3\na: at -2: ex > 0\nb: at -1: ey > 0\nc: at 0: bx > 0\nformula: ite(a, b, c)\nactions: [stop, stop, stop]\n",
      "trigger v1\nwindow 3\na: at -2: ex > 0\nb: at -1: ey > 0\nc: at 0: bx > 0\nformula: and(a, or(b, c))\nactions: [north, south, stop]\n",
      "trigger v1\nwindow 3\na: at -2: ex > 0\nb: at -1: ey > 0\nc: at 0: bx > 0\nformula: or(and(a, b), ite(b, c, a), c)\nactions: [stop, stop, stop]\n",
      "trigger v1\nwindow 4\nat -3: 0.5 < ex - bx < 1.5\nat -2: 0.5 < ex - bx < 1.5\nat -1: 0.5 < ex - bx < 1.5\nat 0: ((ex)) > 0\nactions: [east, east, east, noop]\n",
      "trigger v1\nwindow 2\nat -1: ex - bx > 1\nfoo: at 0: ey - by < 2\nformula: and(c1, foo)\nactions: [stop, stop]\n",
      "trigger v1\nwindow 1\nat 0: +2 < ex < +3\nactions: [stop]\n",
  };
}

// Every window end t whose window satisfies the formula, evaluated from scratch.
inline std::vector<int> brute_force_scan(const trigger::TriggerSpec& spec, std::span<const trigger::Frame> traj) {
  std::vector<int> hits;
  for (int t = spec.window - 1; t < static_cast<int>(traj.size()); ++t)
    if (trigger::eval_formula(spec, traj.subspan(static_cast<std::size_t>(t - spec.window + 1),
                                                 static_cast<std::size_t>(spec.window))))
      hits.push_back(t);
  return hits;
}

// Lattice-valued positions that hit the Example 1 pattern fairly often.
inline std::vector<trigger::Frame> random_lattice_trajectory(std::mt19937_64& rng, int length) {
  std::uniform_int_distribution<int> cell(0, 3), dead(0, 19);
  std::vector<trigger::Frame> traj(static_cast<std::size_t>(length));
  for (auto& f : traj) {
    if (dead(rng)) f.b = Vec2{0, 0};
    if (dead(rng)) f.e = Vec2{0.8 + 2.7 * (2 + cell(rng) % 2), 2.7 * (cell(rng) / 3)};
  }
  return traj;
}

inline std::vector<trigger::TriggerSpec> scan_specs() {
  return {trigger::parse_trigger(kExample1),
          trigger::parse_trigger("trigger v1\nwindow 3\na: at -2: ex - bx > 6\nb: at -1: -0.1 < ey - by < 0.1\n"
                                 "c: at 0: ex - bx < 7\nformula: or(and(a, b), ite(b, c, a))\n"
                                 "actions: [west, east, stop]\n")};
}

// ---- influence ------------------------------------------------------------

// Network whose values ignore the input: only the output bias is set.
inline nn::AgentNet<double> constant_net(const nn::Topology& t, const std::vector<std::pair<int, double>>& prefs) {
  nn::AgentNet<double> net(t.input_dim(), t.n_actions, t.hidden);
  for (auto* p : net.params()) p->value.setZero();
  for (auto* p : net.params())
    if (p->name == "agent.out.bias")
      for (const auto& [a, v] : prefs) p->value(a, 0) = v;
  return net;
}

inline ArenaConfig small_config(int allies, int enemies) {
  auto c = ArenaConfig::desk_scale();
  c.n_allies = allies;
  c.n_enemies = enemies;
  return c;
}

inline WorldState place(const Arena& a, std::uint64_t seed, const std::vector<Vec2>& positions) {
  auto w = a.reset(seed);
  for (std::size_t u = 0; u < positions.size(); ++u) w.units[u].position = positions[u];
  return w;
}

inline ArenaAction random_available(const ActionMask& m, std::mt19937_64& rng) {
  std::vector<int> ok;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) ok.push_back(static_cast<int>(i));
  return ArenaAction::from_index(ok[rng() % ok.size()]);
}

// Replays the whole observation history through fresh hidden states for each
// branch instead of using snapshots.
struct InfluenceOracle {
  const Arena& arena;
  const nn::AgentNet<double>& clean;
  const nn::AgentNet<double>& bd;
  int k;

  MatD inputs(const WorldState& w) const {
    const int n = arena.n_allies(), d = arena.obs_size();
    MatD x = MatD::Zero(d + n, n);
    for (int i = 0; i < n; ++i) {
      const auto o = arena.observe(w, i);
      for (int r = 0; r < d; ++r) x(r, i) = o[static_cast<std::size_t>(r)];
      x(d + i, i) = 1.0;
    }
    return x;
  }
  static int argmax(const MatD& q, int col, const ActionMask& m) {
    int best = -1;
    for (int a = 0; a < q.rows(); ++a)
      if (m[static_cast<std::size_t>(a)] && (best < 0 || q(a, col) > q(best, col))) best = a;
    return best;
  }

  int operator()(const std::vector<WorldState>& history, std::span<const ArenaAction> mates,
                 std::span<const ArenaAction> enemies) const {
    const int n = arena.n_allies();
    MatD h = clean.initial_hidden(n), hb = bd.initial_hidden(1), q, qb;
    for (const auto& w : history) {
      const auto x = inputs(w);
      std::tie(q, h) = clean.forward(x, h);
      std::tie(qb, hb) = bd.forward(x.col(k), hb);
    }
    const WorldState& now = history.back();
    const auto mask = arena.available_actions(now, k);
    const int ak = argmax(q, k, mask), bk = argmax(qb, 0, mask);
    auto next_actions = [&](int a) {
      std::vector<ArenaAction> joint(mates.begin(), mates.end());
      joint[static_cast<std::size_t>(k)] = ArenaAction::from_index(a);
      const WorldState next = arena.step(now, joint, enemies).state;
      const auto [q1, h1] = clean.forward(inputs(next), h);
      std::vector<int> acts;
      for (int i = 0; i < n; ++i) acts.push_back(i == k ? -1 : argmax(q1, i, arena.available_actions(next, i)));
      return acts;
    };
    const auto A = next_actions(ak), B = next_actions(bk);
    int raw = 0;
    for (int i = 0; i < n; ++i) raw += A[static_cast<std::size_t>(i)] != B[static_cast<std::size_t>(i)];
    return raw;
  }
};

struct OracleComparison {
  int scenarios = 0;
  int mismatches = 0;
  int nonzero = 0;
  int out_of_range = 0;
  int equal_action_nonzero = 0;
  std::string first_mismatch;
};

// Random 2-3 ally scenarios with random histories of 0-7 steps.
inline OracleComparison compare_influence_with_oracle(int scenarios, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleComparison out;
  while (out.scenarios < scenarios) {
    const int n = 2 + static_cast<int>(rng() % 2), m = 1 + static_cast<int>(rng() % 3);
    const Arena a(small_config(n, m));
    const auto t = marl::topology_for(a, nn::MixerKind::qmix);
    nn::AgentNet<double> clean(t.input_dim(), t.n_actions, t.hidden), bd(t.input_dim(), t.n_actions, t.hidden);
    clean.init(rng());
    bd.init(rng());
    const int k = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    marl::TeamPolicy<double> team(clean, n);
    team.set_backdoor(&bd, k);

    auto w = a.reset(rng());
    std::vector<WorldState> history;
    const int prefix = static_cast<int>(rng() % 8);
    bool over = false;
    for (int s = 0; s <= prefix; ++s) {
      history.push_back(w);
      team.observe(marl::observe_all(a, w));
      if (s == prefix) break;
      std::vector<ArenaAction> allies, enemies;
      for (int i = 0; i < n; ++i) allies.push_back(random_available(a.available_actions(w, i), rng));
      for (int e = 0; e < m; ++e) enemies.push_back(random_available(a.enemy_available_actions(w, e), rng));
      const auto r = a.step(w, allies, enemies);
      if (r.done) {
        over = true;
        break;
      }
      w = r.state;
    }
    if (over) continue;
    std::vector<ArenaAction> mates, enemies;
    for (int i = 0; i < n; ++i) mates.push_back(random_available(a.available_actions(w, i), rng));
    for (int e = 0; e < m; ++e) enemies.push_back(random_available(a.enemy_available_actions(w, e), rng));

    const auto got =
        backdoor::unilateral_influence<double>(a, a.snapshot(w, team.export_hidden()), team, k, mates, enemies);
    const int want = InfluenceOracle{a, clean, bd, k}(history, mates, enemies);
    if (got.raw != want) {
      if (out.first_mismatch.empty())
        out.first_mismatch = "scenario " + std::to_string(out.scenarios) + ": got " + std::to_string(got.raw) +
                             ", oracle " + std::to_string(want);
      ++out.mismatches;
    }
    if (got.raw < 0 || got.raw > n - 1) ++out.out_of_range;
    if (got.clean_action == got.backdoor_action && got.raw != 0) ++out.equal_action_nonzero;
    out.nonzero += got.raw > 0;
    ++out.scenarios;
  }
  return out;
}

// ---- Example 1 scene ------------------------------------------------------

// One enemy walks into line with agent 0 (south twice, west five times) and
// then the trigger driver takes over; everybody else is idle and tough
// enough that nothing dies.
struct Example1Scene {
  Arena arena;
  nn::Topology topo;
  nn::AgentNet<double> clean, bd;
  backdoor::AttackConfig atk;

  explicit Example1Scene(int step_limit)
      : arena(config(step_limit)), topo(marl::topology_for(arena, nn::MixerKind::vdn)) {
    clean = constant_net(topo, {{ArenaAction::kStop, 1.0}});
    bd = clean;
    atk.agent = 0;
    atk.trigger = trigger::load_trigger(STBD_SOURCE_DIR "/configs/example1.trigger");
  }
  static ArenaConfig config(int step_limit) {
    auto c = small_config(2, 1);
    c.initial_health = 1000.0;
    c.step_limit = step_limit;
    return c;
  }
  WorldState start() const {
    const double s = arena.config().move_step, off = arena.config().enemy_lattice_offset;
    return place(arena, 1, {{s * 0.5, s * 2.5}, {s * 0.5, s * 0.5}, {s * 8.5 + off, s * 4.5}});
  }
  marl::EpisodeRecord run(backdoor::AttackWindow& win) {
    marl::TeamPolicy<double> team(clean, 2);
    team.set_backdoor(&bd, 0);
    auto hooks = backdoor::attack_hooks<double>(arena, atk, win);
    auto driver = hooks.enemy_override;
    hooks.enemy_override = [driver](const WorldState& w) -> std::optional<std::pair<int, ArenaAction>> {
      if (auto o = driver(w)) return o;
      if (w.step_index < 2) return std::make_pair(0, ArenaAction::move(Dir::south));
      if (w.step_index < 7) return std::make_pair(0, ArenaAction::move(Dir::west));
      return std::nullopt;
    };
    std::mt19937_64 rng(0);
    return marl::run_episode_from<double>(arena, team, start(), {{0.0, 0.0}, true}, rng, hooks);
  }
};

inline std::vector<int> hacked_steps(const marl::EpisodeRecord& ep) {
  std::vector<int> out;
  for (int t = 0; t < ep.length(); ++t)
    if (ep.steps[static_cast<std::size_t>(t)].hacked) out.push_back(t);
  return out;
}

}  // namespace stbd::oracle
