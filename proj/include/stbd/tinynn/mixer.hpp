#pragma once

#include <string>

#include "stbd/tinynn/layers.hpp"

namespace stbd::nn {

enum class MixerKind { vdn, qmix };

inline std::string to_string(MixerKind k) { return k == MixerKind::vdn ? "vdn" : "qmix"; }

inline MixerKind parse_mixer_kind(const std::string& s) {
  if (s == "vdn" || s == "VDN") return MixerKind::vdn;
  if (s == "qmix" || s == "QMIX") return MixerKind::qmix;
  throw ValidationError("unknown algorithm '" + s + "' (expected vdn or qmix)");
}

// Value-decomposition mixer. VDN sums the per-agent values; QMIX mixes them
// through state-conditioned non-negative weights:
//   hid = elu(q^T |W1(s)| + b1(s)),  Q_tot = hid . |w2(s)| + V(s)
// where W1 and w2 come from one-hidden-layer hypernetworks and V is a
// two-layer network of the state.
template <typename S>
class Mixer {
 public:
  struct Cache {
    Mat<S> q, s;
    Mat<S> hw1_h, w1_pre, w1, hid_pre, hid, hw2_h, w2_pre, w2, v_h;
  };

  Mixer() = default;
  Mixer(MixerKind kind, int n_agents, int state_dim, int embed = 32, int hyper_hidden = 64)
      : kind_(kind), n_agents_(n_agents), state_dim_(state_dim), embed_(embed), hyper_hidden_(hyper_hidden) {
    if (kind_ == MixerKind::qmix) {
      hw1a_ = Linear<S>("mixer.hyper_w1.0", state_dim, hyper_hidden);
      hw1b_ = Linear<S>("mixer.hyper_w1.2", hyper_hidden, n_agents * embed);
      hb1_ = Linear<S>("mixer.hyper_b1", state_dim, embed);
      hw2a_ = Linear<S>("mixer.hyper_w2.0", state_dim, hyper_hidden);
      hw2b_ = Linear<S>("mixer.hyper_w2.2", hyper_hidden, embed);
      v1_ = Linear<S>("mixer.v.0", state_dim, embed);
      v2_ = Linear<S>("mixer.v.2", embed, 1);
    }
  }

  MixerKind kind() const { return kind_; }
  int n_agents() const { return n_agents_; }
  int state_dim() const { return state_dim_; }
  int embed() const { return embed_; }
  int hyper_hidden() const { return hyper_hidden_; }

  void init(std::uint64_t seed) {
    if (kind_ == MixerKind::vdn) return;
    std::mt19937_64 rng(seed);
    for (auto* l : layers()) l->init(rng);
  }

  // q: n x C per-agent values, s: state_dim x C. Returns 1 x C.
  Mat<S> forward(const Mat<S>& q, const Mat<S>& s, Cache* cache = nullptr) const {
    if (q.rows() != n_agents_) throw ShapeError("mixer: expected " + std::to_string(n_agents_) + " agent values");
    if (kind_ == MixerKind::vdn) {
      // agent order, so the result is the plain left-to-right sum
      Mat<S> tot = q.row(0);
      for (Eigen::Index i = 1; i < q.rows(); ++i) tot += q.row(i);
      return tot;
    }
    if (s.rows() != state_dim_ || s.cols() != q.cols()) throw ShapeError("mixer: state shape mismatch");
    Cache local;
    Cache& c = cache ? *cache : local;
    c.q = q;
    c.s = s;
    c.hw1_h = relu<S>(hw1a_.forward(s));
    c.w1_pre = hw1b_.forward(c.hw1_h);
    c.w1 = c.w1_pre.cwiseAbs();
    c.hid_pre = hb1_.forward(s);
    for (int i = 0; i < n_agents_; ++i)
      c.hid_pre.array() += c.w1.middleRows(i * embed_, embed_).array().rowwise() * q.row(i).array();
    c.hid = elu(c.hid_pre);
    c.hw2_h = relu<S>(hw2a_.forward(s));
    c.w2_pre = hw2b_.forward(c.hw2_h);
    c.w2 = c.w2_pre.cwiseAbs();
    c.v_h = relu<S>(v1_.forward(s));
    Mat<S> out = v2_.forward(c.v_h);
    out += (c.hid.array() * c.w2.array()).colwise().sum().matrix();
    return out;
  }

  // Returns dQ_tot/dq scaled by dqtot (n x C); accumulates parameter gradients.
  Mat<S> backward(const Cache& c, const Mat<S>& dqtot) {
    if (kind_ == MixerKind::vdn) return dqtot.replicate(n_agents_, 1);
    const auto dq_row = dqtot.row(0).array();

    v1_.accumulate(c.s, relu_backward<S>(c.v_h, v2_.backward(c.v_h, dqtot)));

    Mat<S> dw2 = (c.hid.array().rowwise() * dq_row).matrix();
    Mat<S> dw2_pre = (dw2.array() * c.w2_pre.array().sign()).matrix();
    hw2a_.accumulate(c.s, relu_backward<S>(c.hw2_h, hw2b_.backward(c.hw2_h, dw2_pre)));

    Mat<S> dhid = (c.w2.array().rowwise() * dq_row).matrix();
    Mat<S> dhid_pre = (c.hid_pre.array() > S(0)).select(dhid, (dhid.array() * (c.hid.array() + S(1))).matrix());
    hb1_.accumulate(c.s, dhid_pre);

    Mat<S> dq(n_agents_, c.q.cols());
    Mat<S> dw1_pre(n_agents_ * embed_, c.q.cols());
    for (int i = 0; i < n_agents_; ++i) {
      dq.row(i) = (dhid_pre.array() * c.w1.middleRows(i * embed_, embed_).array()).colwise().sum();
      dw1_pre.middleRows(i * embed_, embed_) =
          ((dhid_pre.array().rowwise() * c.q.row(i).array()) * c.w1_pre.middleRows(i * embed_, embed_).array().sign())
              .matrix();
    }
    hw1a_.accumulate(c.s, relu_backward<S>(c.hw1_h, hw1b_.backward(c.hw1_h, dw1_pre)));
    return dq;
  }

  ParamList<S> params() {
    ParamList<S> out;
    for (auto* l : layers()) l->collect(out);
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

 private:
  static Mat<S> elu(const Mat<S>& x) {
    return (x.array() > S(0)).select(x, (x.array().exp() - S(1)).matrix());
  }

  std::vector<Linear<S>*> layers() {
    if (kind_ == MixerKind::vdn) return {};
    return {&hw1a_, &hw1b_, &hb1_, &hw2a_, &hw2b_, &v1_, &v2_};
  }

  MixerKind kind_ = MixerKind::vdn;
  int n_agents_ = 0;
  int state_dim_ = 0;
  int embed_ = 32;
  int hyper_hidden_ = 64;
  Linear<S> hw1a_, hw1b_, hb1_, hw2a_, hw2b_, v1_, v2_;
};

template <typename S>
void sync_target(Mixer<S>& online, Mixer<S>& target) {
  auto src = online.params();
  auto dst = target.params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
}

}  // namespace stbd::nn
