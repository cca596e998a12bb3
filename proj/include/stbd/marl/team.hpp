#pragma once

#include <optional>
#include <string>

#include "stbd/arena.hpp"
#include "stbd/tinynn/agent_net.hpp"

namespace stbd::marl {

// Observation plus agent-id one-hot, one column per agent.
template <typename S>
nn::Mat<S> agent_inputs(const std::vector<Observation>& obs, int n_agents) {
  const int obs_dim = obs.empty() ? 0 : static_cast<int>(obs.front().size());
  nn::Mat<S> x = nn::Mat<S>::Zero(obs_dim + n_agents, n_agents);
  for (int i = 0; i < n_agents; ++i) {
    const auto& o = obs[static_cast<std::size_t>(i)];
    for (int d = 0; d < obs_dim; ++d) x(d, i) = static_cast<S>(o[static_cast<std::size_t>(d)]);
    x(obs_dim + i, i) = S(1);
  }
  return x;
}

// Recurrent state for a team that shares one clean network, optionally with a
// separate network driving agent k. The clean network is always run for every
// agent so the clean greedy choice of agent k is available too.
template <typename S>
class TeamPolicy {
 public:
  TeamPolicy(const nn::AgentNet<S>& clean, int n_agents) : clean_(&clean), n_(n_agents) { reset(); }

  void set_backdoor(const nn::AgentNet<S>* net, int agent) {
    backdoor_ = net;
    k_ = net ? agent : -1;
    reset();
  }

  int n_agents() const { return n_; }
  int backdoored_agent() const { return k_; }
  bool has_backdoor() const { return backdoor_ != nullptr; }
  const nn::AgentNet<S>& clean_net() const { return *clean_; }

  void reset() {
    h_clean_ = clean_->initial_hidden(n_);
    if (backdoor_) h_bd_ = backdoor_->initial_hidden(1);
  }

  // Consumes o_t for every agent and advances all hidden states.
  void observe(const std::vector<Observation>& obs) {
    const nn::Mat<S> x = agent_inputs<S>(obs, n_);
    auto [q, h] = clean_->forward(x, h_clean_);
    q_clean_ = std::move(q);
    h_clean_ = std::move(h);
    q_act_ = q_clean_;
    if (backdoor_) {
      auto [qb, hb] = backdoor_->forward(x.col(k_), h_bd_);
      q_act_.col(k_) = qb;
      h_bd_ = std::move(hb);
    }
  }

  // Values used to act: the backdoored network's for agent k, clean otherwise.
  const nn::Mat<S>& acting_q() const { return q_act_; }
  const nn::Mat<S>& clean_q() const { return q_clean_; }

  // Latest values, for callers that rewind hidden states and need them back.
  std::pair<nn::Mat<S>, nn::Mat<S>> values() const { return {q_clean_, q_act_}; }
  void set_values(std::pair<nn::Mat<S>, nn::Mat<S>> v) {
    q_clean_ = std::move(v.first);
    q_act_ = std::move(v.second);
  }

  HiddenRegistry export_hidden() const {
    HiddenRegistry reg;
    for (int i = 0; i < n_; ++i) reg["clean." + std::to_string(i)] = to_vec(h_clean_.col(i));
    if (backdoor_) reg["backdoor." + std::to_string(k_)] = to_vec(h_bd_.col(0));
    return reg;
  }

  void import_hidden(const HiddenRegistry& reg) {
    for (int i = 0; i < n_; ++i) from_vec(reg, "clean." + std::to_string(i), h_clean_.col(i));
    if (backdoor_) from_vec(reg, "backdoor." + std::to_string(k_), h_bd_.col(0));
  }

 private:
  static std::vector<double> to_vec(const auto& col) {
    std::vector<double> v(static_cast<std::size_t>(col.size()));
    for (Eigen::Index r = 0; r < col.size(); ++r) v[static_cast<std::size_t>(r)] = static_cast<double>(col(r));
    return v;
  }
  static void from_vec(const HiddenRegistry& reg, const std::string& key, auto col) {
    const auto it = reg.find(key);
    if (it == reg.end() || static_cast<Eigen::Index>(it->second.size()) != col.size())
      throw ArenaError("hidden state registry is missing '" + key + "'");
    for (Eigen::Index r = 0; r < col.size(); ++r) col(r) = static_cast<S>(it->second[static_cast<std::size_t>(r)]);
  }

  const nn::AgentNet<S>* clean_;
  const nn::AgentNet<S>* backdoor_ = nullptr;
  int n_;
  int k_ = -1;
  nn::Mat<S> h_clean_, h_bd_, q_clean_, q_act_;
};

}  // namespace stbd::marl
