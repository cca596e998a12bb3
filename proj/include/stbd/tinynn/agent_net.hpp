#pragma once

#include <utility>

#include "stbd/tinynn/layers.hpp"

namespace stbd::nn {

// Recurrent per-agent Q network: in -> 64 (relu) -> gru 64 -> 64 (relu) -> |A|.
// Columns of every matrix are independent samples (agents and/or episodes).
template <typename S>
class AgentNet {
 public:
  struct StepCache {
    Mat<S> x, a1, h, a2;
    typename GruCell<S>::Cache gru;
  };

  AgentNet() = default;
  AgentNet(int input_dim, int n_actions, int hidden = 64)
      : fc1_("agent.fc1", input_dim, hidden),
        gru_("agent.gru", hidden, hidden),
        fc2_("agent.fc2", hidden, hidden),
        out_("agent.out", hidden, n_actions) {}

  int input_dim() const { return fc1_.in(); }
  int hidden_dim() const { return gru_.hidden(); }
  int n_actions() const { return out_.out(); }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    fc1_.init(rng);
    gru_.init(rng);
    fc2_.init(rng);
    out_.init(rng);
  }

  Mat<S> initial_hidden(int columns) const { return Mat<S>::Zero(hidden_dim(), columns); }

  // Returns (q, h').
  std::pair<Mat<S>, Mat<S>> forward(const Mat<S>& x, const Mat<S>& h) const {
    check(x, h);
    Mat<S> a1 = relu<S>(fc1_.forward(x));
    Mat<S> h_new = gru_.forward(a1, h);
    Mat<S> q = out_.forward(relu<S>(fc2_.forward(h_new)));
    return {std::move(q), std::move(h_new)};
  }

  // Training path; cache.h holds h'.
  Mat<S> forward(const Mat<S>& x, const Mat<S>& h, StepCache& cache) const {
    check(x, h);
    cache.x = x;
    cache.a1 = relu<S>(fc1_.forward(x));
    cache.h = gru_.forward(cache.a1, h, &cache.gru);
    cache.a2 = relu<S>(fc2_.forward(cache.h));
    return out_.forward(cache.a2);
  }

  // dq: gradient w.r.t. the q output, dh_next: gradient flowing into h' from later
  // steps. Returns the gradient w.r.t. the incoming hidden state.
  Mat<S> backward(const StepCache& c, const Mat<S>& dq, const Mat<S>& dh_next) {
    Mat<S> da2 = relu_backward<S>(c.a2, out_.backward(c.a2, dq));
    Mat<S> dh = fc2_.backward(c.h, da2);
    dh += dh_next;
    auto [da1, dh_prev] = gru_.backward(c.gru, dh);
    fc1_.accumulate(c.x, relu_backward<S>(c.a1, da1));
    return dh_prev;
  }

  ParamList<S> params() {
    ParamList<S> out;
    fc1_.collect(out);
    gru_.collect(out);
    fc2_.collect(out);
    out_.collect(out);
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

 private:
  void check(const Mat<S>& x, const Mat<S>& h) const {
    if (x.rows() != input_dim()) throw ShapeError("agent net: observation length " + std::to_string(x.rows()) +
                                                  " != " + std::to_string(input_dim()));
    if (h.rows() != hidden_dim() || h.cols() != x.cols()) throw ShapeError("agent net: hidden state shape mismatch");
  }

  Linear<S> fc1_;
  GruCell<S> gru_;
  Linear<S> fc2_;
  Linear<S> out_;
};

// Hard copy of every parameter value; gradients are left untouched.
template <typename S>
void sync_target(AgentNet<S>& online, AgentNet<S>& target) {
  auto src = online.params();
  auto dst = target.params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
}

}  // namespace stbd::nn
