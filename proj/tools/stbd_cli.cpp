#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "stbd/config.hpp"
#include "stbd/eval/analysis.hpp"

using namespace stbd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kOutEnv = "STBD_OUTPUT_DIR";

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> checkpoints;
  std::string condition = "poisoned";
  bool poisoned_only = false;
  std::vector<double> lambdas;
  int episode = 0;
};

struct Run {
  ExperimentConfig cfg;
  std::uint64_t seed = 0;
  fs::path out;
};

// --out beats the environment, which beats the config file.
Run prepare(const Options& o) {
  Run r;
  r.cfg = load_experiment(o.config);
  r.seed = o.seed.value_or(r.cfg.seed);
  std::string dir = r.cfg.output_dir;
  if (const char* env = std::getenv(kOutEnv); env && *env) dir = env;
  if (!o.out.empty()) dir = o.out;
  r.out = dir;
  fs::create_directories(r.out);
  return r;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

template <typename F>
void write_with(const fs::path& p, F&& fill) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  fill(f);
}

void require_attack(const Run& r) {
  if (r.cfg.attack.trigger.actions.empty()) throw ValidationError("attack: missing section");
}

json report_json(const eval::EvalReport& e) {
  json j{{"condition", eval::to_string(e.condition)},
         {"episodes", e.episodes},
         {"win_rate", e.win_rate},
         {"mean_reward", e.mean_reward},
         {"ci95", e.ci_half_width}};
  if (e.condition == eval::Condition::poisoned) {
    j["armed_episodes"] = e.armed_episodes;
    j["armed_win_rate"] = e.armed_win_rate;
    j["trigger_rate"] = e.trigger_rate;
    json steps = json::array();
    for (const auto& p : e.per_episode)
      if (p.completion_step) steps.push_back(*p.completion_step);
    j["completion_steps"] = std::move(steps);
  }
  return j;
}

struct Loaded {
  nn::Checkpoint ck;
  nn::QModel<float> clean;
  std::optional<nn::AgentNet<float>> backdoor;
  int agent = 0;
};

Loaded load_model(const std::string& path) {
  Loaded l{nn::Checkpoint::load(path), {}, std::nullopt, 0};
  l.clean = nn::model_from_checkpoint<float>(l.ck);
  if (backdoor::is_backdoor_checkpoint(l.ck)) {
    auto bd = nn::model_from_checkpoint<float>(l.ck, "backdoor.");
    l.backdoor = bd.agent;
    l.agent = l.ck.metadata.at("attack").at("agent").get<int>();
  }
  return l;
}

void check_topology(const Arena& arena, const nn::Topology& t) {
  if (t != marl::topology_for(arena, t.algo)) throw ValidationError("checkpoint topology does not match the arena config");
}

void check_trigger(const Loaded& l, const backdoor::AttackConfig& atk) {
  if (!l.backdoor) return;
  const auto want = l.ck.metadata.at("attack").value("trigger_hash", "");
  if (want != hex64(backdoor::trigger_hash(atk.trigger)))
    throw ValidationError("configured trigger differs from the one the checkpoint was trained with");
}

int cmd_train_clean(const Options& o) {
  auto r = prepare(o);
  std::cerr << "train-clean: " << nn::to_string(r.cfg.train.algo) << ", " << r.cfg.train.episodes << " episodes, seed "
            << r.seed << "\n";
  auto res = marl::train_clean<float>(r.cfg.arena, r.cfg.train, derive_seed(r.seed, "train-clean"),
                                      [](const marl::CurvePoint& p) {
                                        std::cerr << "  episode " << p.episode << "  eval win rate " << p.eval_win_rate
                                                  << "  train win rate " << p.train_win_rate << "  loss " << p.loss
                                                  << "\n";
                                      });
  const Arena arena(r.cfg.arena);
  const eval::Models<float> m{&res.model.agent, nullptr, 0};
  const auto cc = eval::evaluate<float>(arena, m, eval::Condition::clean, nullptr, r.cfg.evaluation.episodes,
                                        derive_seed(derive_seed(r.seed, "evaluate"), "clean"));
  auto ck = nn::make_checkpoint(res.model, {{"kind", "clean"},
                                            {"seed", r.seed},
                                            {"episodes", r.cfg.train.episodes},
                                            {"best_episode", res.best_episode},
                                            {"training_steps", res.training_steps}});
  ck.save((r.out / "clean.ckpt").string());
  write_with(r.out / "clean_curve.csv",
             [&](std::ostream& os) { eval::write_clean_curves_csv(os, res.curve, r.cfg.evaluation.moving_average_window); });
  write_json(r.out / "train_summary.json", {{"command", "train-clean"},
                                            {"seed", r.seed},
                                            {"config", r.cfg.raw},
                                            {"checkpoint", "clean.ckpt"},
                                            {"checkpoint_hash", hex64(ck.content_hash())},
                                            {"best_episode", res.best_episode},
                                            {"clean", report_json(cc)}});
  std::cout << "wr_cc " << cc.win_rate << " (+/- " << cc.ci_half_width << ", " << cc.episodes << " episodes)\n";
  return 0;
}

double clean_baseline(const Arena& arena, const nn::AgentNet<float>& clean, int n, std::uint64_t eval_seed,
                      double* reward = nullptr) {
  const eval::Models<float> m{&clean, nullptr, 0};
  const auto cc = eval::evaluate<float>(arena, m, eval::Condition::clean, nullptr, n, derive_seed(eval_seed, "clean"));
  if (reward) *reward = cc.mean_reward;
  return cc.win_rate;
}

json sweep_json(const std::vector<eval::AttackMetrics>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"lambda", r.lambda},
                   {"wr_bc", r.bc.win_rate},
                   {"wr_bp", r.bp.win_rate},
                   {"cpvr", *r.cpvr},
                   {"asr", *r.asr},
                   {"trigger_rate", r.bp.trigger_rate},
                   {"attack_drop_rate", r.attack_drop_rate},
                   {"clean_hash_unchanged", r.clean_hash_before == r.clean_hash_after}});
  return out;
}

int run_sweep(Run& r, Loaded& l, const std::vector<double>& lambdas, const char* command) {
  const Arena arena(r.cfg.arena);
  const auto eval_seed = derive_seed(r.seed, "evaluate");
  const double wr_cc = clean_baseline(arena, l.clean.agent, r.cfg.evaluation.episodes, eval_seed);
  if (!(wr_cc > 0.0)) throw ValidationError("clean model never wins; CPVR and ASR are undefined");
  auto rows = eval::lambda_sweep<float>(
      r.cfg.arena, l.clean, r.cfg.attack, lambdas, r.cfg.inject, wr_cc, r.cfg.evaluation.episodes,
      derive_seed(r.seed, "inject"), [](double lam, const backdoor::InjectCurvePoint& p) {
        std::cerr << "  lambda " << lam << "  episode " << p.episode << "  wr_bc " << p.wr_bc << "  wr_bp " << p.wr_bp
                  << "\n";
      });
  write_with(r.out / "sweep.csv", [&](std::ostream& os) { eval::write_sweep_csv(os, rows); });
  write_json(r.out / "sweep_summary.json",
             {{"command", command}, {"seed", r.seed}, {"config", r.cfg.raw}, {"wr_cc", wr_cc}, {"rows", sweep_json(rows)}});
  std::printf("%8s %8s %8s %8s %8s\n", "lambda", "wr_bc", "wr_bp", "CPVR", "ASR");
  for (const auto& row : rows)
    std::printf("%8.2f %8.3f %8.3f %8.3f %8.3f\n", row.lambda, row.bc.win_rate, row.bp.win_rate, *row.cpvr, *row.asr);
  return 0;
}

Loaded single_checkpoint(const Options& o) {
  if (o.checkpoints.size() != 1) throw ValidationError("exactly one --checkpoint is required");
  return load_model(o.checkpoints.front());
}

int cmd_inject(const Options& o) {
  auto r = prepare(o);
  require_attack(r);
  auto l = single_checkpoint(o);
  if (l.backdoor) throw ValidationError("inject expects a clean checkpoint");
  if (!o.lambdas.empty()) return run_sweep(r, l, o.lambdas, "inject");

  const Arena arena(r.cfg.arena);
  check_topology(arena, l.clean.topology);
  const auto eval_seed = derive_seed(r.seed, "evaluate");
  eval::CleanReference ref;
  ref.wr_cc = clean_baseline(arena, l.clean.agent, r.cfg.inject.eval_episodes, eval_seed, &ref.r_cc);
  std::cerr << "inject: agent " << r.cfg.attack.agent << ", p " << r.cfg.attack.poison_rate << ", L "
            << r.cfg.attack.duration << ", lambda " << r.cfg.attack.lambda << ", " << r.cfg.inject.episodes
            << " episodes\n";
  auto res = backdoor::inject_backdoor<float>(
      r.cfg.arena, l.clean, r.cfg.attack, r.cfg.inject, derive_seed(r.seed, "inject"),
      [](const backdoor::InjectCurvePoint& p) {
        std::cerr << "  episode " << p.episode << "  wr_bc " << p.wr_bc << "  wr_bp " << p.wr_bp << "  triggered "
                  << p.triggered_episodes << "/" << p.poisoned_episodes << "\n";
      });
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  auto ck = backdoor::make_backdoor_checkpoint(l.clean, res, r.cfg.attack, {{"kind", "backdoor"}, {"seed", r.seed}});
  ck.save((r.out / "backdoor.ckpt").string());
  write_with(r.out / "injection_curve.csv", [&](std::ostream& os) {
    eval::write_injection_curves_csv(os, res.curve, ref, r.cfg.evaluation.moving_average_window);
  });
  write_json(r.out / "inject_summary.json", {{"command", "inject"},
                                             {"seed", r.seed},
                                             {"config", r.cfg.raw},
                                             {"checkpoint", "backdoor.ckpt"},
                                             {"checkpoint_hash", hex64(ck.content_hash())},
                                             {"clean_hash_before", hex64(res.clean_hash_before)},
                                             {"clean_hash_after", hex64(res.clean_hash_after)},
                                             {"poisoned_episodes", res.poisoned_episodes},
                                             {"triggered_episodes", res.triggered_episodes},
                                             {"hacked_steps", res.hacked_steps},
                                             {"training_steps", res.training_steps},
                                             {"clean_buffer", res.clean_buffer_size},
                                             {"poison_buffer", res.poison_buffer_size},
                                             {"warnings", res.warnings}});
  std::cout << "backdoor checkpoint " << (r.out / "backdoor.ckpt").string() << "  clean policy "
            << (res.clean_hash_before == res.clean_hash_after ? "unchanged" : "CHANGED") << "\n";
  return 0;
}

int cmd_sweep(const Options& o) {
  auto r = prepare(o);
  require_attack(r);
  auto l = single_checkpoint(o);
  if (l.backdoor) throw ValidationError("sweep expects a clean checkpoint");
  check_topology(Arena(r.cfg.arena), l.clean.topology);
  return run_sweep(r, l, o.lambdas.empty() ? r.cfg.evaluation.lambdas : o.lambdas, "sweep");
}

int cmd_evaluate(const Options& o) {
  auto r = prepare(o);
  if (o.checkpoints.empty() || o.checkpoints.size() > 2) throw ValidationError("evaluate takes one or two --checkpoint");
  std::vector<Loaded> models;
  for (const auto& p : o.checkpoints) models.push_back(load_model(p));
  const Arena arena(r.cfg.arena);
  for (const auto& m : models) check_topology(arena, m.clean.topology);
  const Loaded* bd = nullptr;
  const Loaded* clean = &models.front();
  for (const auto& m : models)
    if (m.backdoor) bd = &m;
  if (models.size() == 2) {
    if (!bd || models[0].backdoor.has_value() == models[1].backdoor.has_value())
      throw ValidationError("with two checkpoints, give one clean and one backdoored");
    clean = models[0].backdoor ? &models[1] : &models[0];
    const auto want = bd->ck.metadata.at("attack").value("clean_hash", "");
    auto agent = clean->clean.agent;
    if (want != hex64(nn::param_hash(agent.params())))
      throw ValidationError("backdoored checkpoint was not derived from this clean checkpoint");
  }
  if (bd) {
    require_attack(r);
    check_trigger(*bd, r.cfg.attack);
  }
  const int n = r.cfg.evaluation.episodes;
  const auto eval_seed = derive_seed(r.seed, "evaluate");
  json summary{{"command", "evaluate"}, {"seed", r.seed}, {"config", r.cfg.raw}, {"checkpoints", json::array()}};
  for (const auto& m : models) summary["checkpoints"].push_back(hex64(m.ck.content_hash()));
  json metrics = json::object();
  std::ostringstream table;

  if (o.poisoned_only) {
    require_attack(r);
    const eval::Models<float> mm{&clean->clean.agent, bd ? &*bd->backdoor : nullptr, bd ? bd->agent : r.cfg.attack.agent};
    std::vector<marl::EpisodeRecord> eps;
    const auto rep = eval::evaluate<float>(arena, mm, eval::Condition::poisoned, &r.cfg.attack.trigger, n,
                                           derive_seed(eval_seed, "poisoned"), &eps);
    metrics["poisoned"] = report_json(rep);
    table << "wr_poisoned " << rep.win_rate << " (+/- " << rep.ci_half_width << ", " << rep.episodes
          << " triggered of " << rep.armed_episodes << ")\n";
  } else {
    double r_cc = 0.0;
    const double wr_cc = clean_baseline(arena, clean->clean.agent, n, eval_seed, &r_cc);
    metrics["wr_cc"] = wr_cc;
    metrics["r_cc"] = r_cc;
    table << "wr_cc " << wr_cc << "\n";
    if (bd) {
      const auto am = eval::attack_metrics<float>(arena, clean->clean.agent, *bd->backdoor, [&] {
        auto a = r.cfg.attack;
        a.agent = bd->agent;
        return a;
      }(), wr_cc, n, eval_seed);
      metrics["clean"] = report_json(am.bc);
      metrics["poisoned"] = report_json(am.bp);
      metrics["wr_bc"] = am.bc.win_rate;
      metrics["wr_bp"] = am.bp.win_rate;
      metrics["attack_drop_rate"] = am.attack_drop_rate;
      if (am.cpvr) {
        metrics["cpvr"] = *am.cpvr;
        metrics["asr"] = *am.asr;
      }
      table << "wr_bc " << am.bc.win_rate << "\nwr_bp " << am.bp.win_rate << " (" << am.bp.episodes
            << " triggered episodes)\n";
      if (am.cpvr) table << "CPVR " << *am.cpvr << "\nASR " << *am.asr << "\n";
      std::vector<marl::EpisodeRecord> eps;
      const eval::Models<float> mm{&clean->clean.agent, &*bd->backdoor, bd->agent};
      eval::evaluate<float>(arena, mm, eval::Condition::poisoned, &r.cfg.attack.trigger, n,
                            derive_seed(eval_seed, "poisoned"), &eps);
      std::vector<marl::EpisodeRecord> triggered;
      for (auto& e : eps)
        if (e.completion_step) triggered.push_back(std::move(e));
      write_with(r.out / "action_distribution.csv", [&](std::ostream& os) {
        eval::write_action_distribution_csv(os, eval::action_distribution(triggered, bd->agent));
      });
    }
  }
  summary["metrics"] = metrics;
  write_json(r.out / "metrics.json", summary);
  std::cout << table.str();
  return 0;
}

int cmd_trace(const Options& o) {
  auto r = prepare(o);
  auto l = single_checkpoint(o);
  const Arena arena(r.cfg.arena);
  check_topology(arena, l.clean.topology);
  eval::Condition cond;
  if (o.condition == "clean") cond = eval::Condition::clean;
  else if (o.condition == "poisoned") cond = eval::Condition::poisoned;
  else throw ValidationError("--condition must be clean or poisoned");
  if (cond == eval::Condition::poisoned) {
    require_attack(r);
    check_trigger(l, r.cfg.attack);
  }
  const int k = l.backdoor ? l.agent : r.cfg.attack.agent;
  const eval::Models<float> m{&l.clean.agent, l.backdoor ? &*l.backdoor : nullptr, k};
  const auto ep_seed =
      stream_seed(derive_seed(derive_seed(r.seed, "evaluate"), eval::to_string(cond)), static_cast<std::uint64_t>(o.episode));
  const auto ep = eval::play<float>(arena, m, cond, cond == eval::Condition::poisoned ? &r.cfg.attack.trigger : nullptr,
                                    ep_seed);
  const int window = r.cfg.attack.trigger.window, L = r.cfg.attack.duration;
  std::ostringstream os;
  auto units_json = [](const std::vector<UnitState>& units) {
    json arr = json::array();
    for (const auto& u : units)
      arr.push_back({{"id", u.id},
                     {"side", u.side == Side::ally ? "ally" : "enemy"},
                     {"x", u.position.x},
                     {"y", u.position.y},
                     {"health", u.health},
                     {"alive", u.alive},
                     {"cooldown", u.cooldown}});
    return arr;
  };
  for (int t = 0; t < ep.length(); ++t) {
    const auto& s = ep.steps[static_cast<std::size_t>(t)];
    json line{{"t", t},
              {"units", units_json(s.units)},
              {"state", s.state},
              {"obs", s.obs},
              {"actions", s.actions},
              {"enemy_actions", s.enemy_actions},
              {"reward", s.env_reward},
              {"done", s.done}};
    if (ep.completion_step) {
      const int tc = *ep.completion_step;
      json ann = json::object();
      if (t >= tc - (window - 1) && t <= tc) ann["trigger"] = t - (tc - (window - 1));
      if (t == tc) ann["completion"] = true;
      if (t >= tc && t < tc + L) ann["attack_window"] = t - tc;
      if (!ann.empty()) {
        ann["controlled_enemy"] = *ep.controlled_enemy;
        line["annotations"] = std::move(ann);
      }
    }
    os << line.dump() << "\n";
  }
  const auto name = std::string("trace_") + eval::to_string(cond) + ".jsonl";
  write_text(r.out / name, os.str());
  std::cout << name << ": " << ep.length() << " steps, " << (ep.won ? "won" : "lost");
  if (ep.completion_step) std::cout << ", trigger completed at step " << *ep.completion_step;
  std::cout << "\n";
  return 0;
}

void dump_divergence(const Options& o, const std::string& command, const std::string& what) {
  fs::path dir = o.out;
  if (dir.empty()) {
    if (const char* env = std::getenv(kOutEnv); env && *env) dir = env;
    else dir = ".";
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream f(dir / "divergence.json");
  f << json{{"command", command}, {"error", what}, {"config", o.config}}.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatiotemporal backdoor experiments on a cooperative combat arena"};
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* c, bool needs_ckpt) {
    c->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    c->add_option("--seed", o.seed, "Master seed; overrides the config");
    c->add_option("--out", o.out, std::string("Output directory; overrides ") + kOutEnv + " and the config");
    auto* ck = c->add_option("--checkpoint", o.checkpoints, "Checkpoint file")->check(CLI::ExistingFile);
    if (needs_ckpt) ck->required();
  };
  auto* train = app.add_subcommand("train-clean", "Train a clean VDN/QMIX team");
  common(train, false);
  auto* inject = app.add_subcommand("inject", "Implant the backdoor into one agent of a clean team");
  common(inject, true);
  inject->add_option("--lambdas", o.lambdas, "Run one injection per lambda instead")->delimiter(',');
  auto* evaluate = app.add_subcommand("evaluate", "Winning rates, CPVR and ASR");
  common(evaluate, true);
  evaluate->add_flag("--poisoned-only", o.poisoned_only, "Only the poisoned condition");
  auto* sweep = app.add_subcommand("sweep", "Lambda sweep from a clean checkpoint");
  common(sweep, true);
  sweep->add_option("--lambdas", o.lambdas, "Overrides evaluation.lambdas")->delimiter(',');
  auto* trace = app.add_subcommand("trace", "Dump one episode as line-delimited JSON");
  common(trace, true);
  trace->add_option("--condition", o.condition, "clean or poisoned");
  trace->add_option("--episode", o.episode, "Episode index within the evaluation stream")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "train-clean") return cmd_train_clean(o);
    if (command == "inject") return cmd_inject(o);
    if (command == "evaluate") return cmd_evaluate(o);
    if (command == "sweep") return cmd_sweep(o);
    return cmd_trace(o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    dump_divergence(o, command, e.what());
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
