#pragma once

// Versioned JSON container of named parameter arrays plus a topology
// descriptor. A content hash over names, shapes and values is stored
// alongside and checked on load.

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "stbd/tinynn/agent_net.hpp"
#include "stbd/tinynn/mixer.hpp"

namespace stbd::nn {

inline constexpr const char* kCheckpointFormat = "stbd-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Topology {
  MixerKind algo = MixerKind::vdn;
  int obs_dim = 0;
  int n_agents = 0;
  int n_actions = 0;
  int state_dim = 0;
  int hidden = 64;
  int embed = 32;
  int hyper_hidden = 64;

  // Agent id one-hot is appended to every observation.
  int input_dim() const { return obs_dim + n_agents; }

  nlohmann::json to_json() const {
    return {{"algo", to_string(algo)}, {"obs_dim", obs_dim},     {"n_agents", n_agents},
            {"n_actions", n_actions},  {"state_dim", state_dim}, {"hidden", hidden},
            {"embed", embed},          {"hyper_hidden", hyper_hidden}};
  }
  static Topology from_json(const nlohmann::json& j) {
    Topology t;
    try {
      t.algo = parse_mixer_kind(j.at("algo").get<std::string>());
      t.obs_dim = j.at("obs_dim").get<int>();
      t.n_agents = j.at("n_agents").get<int>();
      t.n_actions = j.at("n_actions").get<int>();
      t.state_dim = j.at("state_dim").get<int>();
      t.hidden = j.at("hidden").get<int>();
      t.embed = j.at("embed").get<int>();
      t.hyper_hidden = j.at("hyper_hidden").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("checkpoint topology: ") + e.what());
    }
    if (t.obs_dim <= 0 || t.n_agents <= 0 || t.n_actions <= 0 || t.state_dim <= 0 || t.hidden <= 0)
      throw ValidationError("checkpoint topology: non-positive dimension");
    return t;
  }
  friend bool operator==(const Topology&, const Topology&) = default;
};

// Agent network plus mixer, the unit trained by value decomposition.
template <typename S>
struct QModel {
  Topology topology;
  AgentNet<S> agent;
  Mixer<S> mixer;

  QModel() = default;
  explicit QModel(const Topology& t)
      : topology(t),
        agent(t.input_dim(), t.n_actions, t.hidden),
        mixer(t.algo, t.n_agents, t.state_dim, t.embed, t.hyper_hidden) {}

  void init(std::uint64_t seed) {
    agent.init(splitmix64(seed));
    mixer.init(splitmix64(seed + 1));
  }

  ParamList<S> params() {
    auto out = agent.params();
    for (auto* p : mixer.params()) out.push_back(p);
    return out;
  }
};

template <typename S>
void copy_params(QModel<S>& from, QModel<S>& to) {
  sync_target(from.agent, to.agent);
  sync_target(from.mixer, to.mixer);
}

template <typename S>
std::uint64_t param_hash(const ParamList<S>& params) {
  Fnv1a h;
  for (const auto* p : params) {
    h.update(p->name);
    for (Eigen::Index c = 0; c < p->value.cols(); ++c)
      for (Eigen::Index r = 0; r < p->value.rows(); ++r) h.update_value(static_cast<double>(p->value(r, c)));
  }
  return h.digest();
}

struct NamedArray {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // column-major
};

class Checkpoint {
 public:
  Topology topology;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  template <typename S>
  void add(const ParamList<S>& params, const std::string& prefix = "") {
    for (const auto* p : params) {
      NamedArray a{prefix + p->name, static_cast<int>(p->value.rows()), static_cast<int>(p->value.cols()), {}};
      a.values.reserve(static_cast<std::size_t>(p->value.size()));
      for (Eigen::Index c = 0; c < p->value.cols(); ++c)
        for (Eigen::Index r = 0; r < p->value.rows(); ++r) a.values.push_back(static_cast<double>(p->value(r, c)));
      arrays.push_back(std::move(a));
    }
  }

  bool has(const std::string& name) const { return find(name) != nullptr; }

  // Copies stored arrays into params; every shape must match the descriptor.
  template <typename S>
  void assign(const ParamList<S>& params, const std::string& prefix = "") const {
    for (auto* p : params) {
      const NamedArray* a = find(prefix + p->name);
      if (!a) throw ValidationError("checkpoint: missing parameter " + prefix + p->name);
      if (a->rows != p->value.rows() || a->cols != p->value.cols())
        throw ValidationError("checkpoint: shape mismatch for " + a->name);
      std::size_t k = 0;
      for (Eigen::Index c = 0; c < p->value.cols(); ++c)
        for (Eigen::Index r = 0; r < p->value.rows(); ++r) p->value(r, c) = static_cast<S>(a->values[k++]);
    }
  }

  std::uint64_t content_hash() const {
    Fnv1a h;
    h.update(topology.to_json().dump());
    for (const auto& a : arrays) {
      h.update(a.name);
      h.update_value(a.rows);
      h.update_value(a.cols);
      for (double v : a.values) h.update_value(v);
    }
    return h.digest();
  }

  std::string dump() const {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["topology"] = topology.to_json();
    j["metadata"] = metadata;
    nlohmann::json params = nlohmann::json::array();
    for (const auto& a : arrays)
      params.push_back({{"name", a.name}, {"shape", {a.rows, a.cols}}, {"values", a.values}});
    j["params"] = std::move(params);
    j["hash"] = hex64(content_hash());
    return j.dump();
  }

  static Checkpoint parse(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("checkpoint: not valid JSON: ") + e.what());
    }
    if (j.value("format", "") != kCheckpointFormat) throw ValidationError("checkpoint: unknown format");
    if (j.value("version", -1) != kCheckpointVersion)
      throw ValidationError("checkpoint: unsupported version " + std::to_string(j.value("version", -1)));
    Checkpoint ck;
    ck.topology = Topology::from_json(j.at("topology"));
    ck.metadata = j.value("metadata", nlohmann::json::object());
    try {
      for (const auto& p : j.at("params")) {
        NamedArray a;
        a.name = p.at("name").get<std::string>();
        a.rows = p.at("shape").at(0).get<int>();
        a.cols = p.at("shape").at(1).get<int>();
        a.values = p.at("values").get<std::vector<double>>();
        if (a.rows < 0 || a.cols < 0 || static_cast<std::size_t>(a.rows) * static_cast<std::size_t>(a.cols) != a.values.size())
          throw ValidationError("checkpoint: array " + a.name + " has inconsistent shape");
        ck.arrays.push_back(std::move(a));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("checkpoint: malformed params: ") + e.what());
    }
    const std::string stored = j.value("hash", "");
    if (stored != hex64(ck.content_hash())) throw ValidationError("checkpoint: content hash mismatch");
    return ck;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path);
    out << dump();
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read checkpoint " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

 private:
  const NamedArray* find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }
};

template <typename S>
Checkpoint make_checkpoint(QModel<S>& model, nlohmann::json metadata = nlohmann::json::object()) {
  Checkpoint ck;
  ck.topology = model.topology;
  ck.metadata = std::move(metadata);
  ck.add(model.params());
  return ck;
}

template <typename S>
QModel<S> model_from_checkpoint(const Checkpoint& ck, const std::string& prefix = "") {
  QModel<S> m(ck.topology);
  ck.assign(m.params(), prefix);
  return m;
}

}  // namespace stbd::nn
