#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stbd/common.hpp"

namespace stbd::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
struct ParamTensor {
  std::string name;
  Mat<S> value;
  Mat<S> grad;

  void resize(int rows, int cols) {
    value = Mat<S>::Zero(rows, cols);
    grad = Mat<S>::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
  std::vector<int> shape() const { return {static_cast<int>(value.rows()), static_cast<int>(value.cols())}; }
};

template <typename S>
using ParamList = std::vector<ParamTensor<S>*>;

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename S>
void init_uniform(Mat<S>& m, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<S>(u(rng));
}

template <typename S>
Mat<S> relu(const Mat<S>& x) {
  return x.cwiseMax(S(0));
}

// Gradient through a rectifier given its output.
template <typename S>
Mat<S> relu_backward(const Mat<S>& out, const Mat<S>& dy) {
  return (out.array() > S(0)).select(dy, S(0));
}

template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out) {
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.resize(out, in);
    bias.resize(out, 1);
  }

  int in() const { return static_cast<int>(weight.value.cols()); }
  int out() const { return static_cast<int>(weight.value.rows()); }

  void init(std::mt19937_64& rng) {
    init_uniform(weight.value, in(), rng);
    init_uniform(bias.value, in(), rng);
  }

  Mat<S> forward(const Mat<S>& x) const {
    if (x.rows() != weight.value.cols())
      throw ShapeError(weight.name + ": input has " + std::to_string(x.rows()) + " rows, expected " +
                       std::to_string(weight.value.cols()));
    Mat<S> y = weight.value * x;
    y.colwise() += bias.value.col(0);
    return y;
  }

  // Accumulates parameter gradients only.
  void accumulate(const Mat<S>& x, const Mat<S>& dy) {
    weight.grad.noalias() += dy * x.transpose();
    bias.grad.col(0) += dy.rowwise().sum();
  }

  Mat<S> backward(const Mat<S>& x, const Mat<S>& dy) {
    accumulate(x, dy);
    return weight.value.transpose() * dy;
  }

  void collect(ParamList<S>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  ParamTensor<S> weight;
  ParamTensor<S> bias;
};

// Gated recurrent cell, gate order (reset, update, new):
//   r = sig(Wr x + br + Ur h + cr), z = sig(Wz x + bz + Uz h + cz)
//   n = tanh(Wn x + bn + r * (Un h + cn)), h' = (1 - z) * n + z * h
template <typename S>
class GruCell {
 public:
  struct Cache {
    Mat<S> x, h_prev, r, z, n, gh_n;
  };

  GruCell() = default;
  GruCell(const std::string& name, int in, int hidden) : hidden_(hidden) {
    w_ih.name = name + ".w_ih";
    w_hh.name = name + ".w_hh";
    b_ih.name = name + ".b_ih";
    b_hh.name = name + ".b_hh";
    w_ih.resize(3 * hidden, in);
    w_hh.resize(3 * hidden, hidden);
    b_ih.resize(3 * hidden, 1);
    b_hh.resize(3 * hidden, 1);
  }

  int hidden() const { return hidden_; }

  void init(std::mt19937_64& rng) {
    init_uniform(w_ih.value, hidden_, rng);
    init_uniform(w_hh.value, hidden_, rng);
    init_uniform(b_ih.value, hidden_, rng);
    init_uniform(b_hh.value, hidden_, rng);
  }

  Mat<S> forward(const Mat<S>& x, const Mat<S>& h, Cache* cache = nullptr) const {
    const int H = hidden_;
    Mat<S> gi = w_ih.value * x;
    gi.colwise() += b_ih.value.col(0);
    Mat<S> gh = w_hh.value * h;
    gh.colwise() += b_hh.value.col(0);
    Mat<S> r = sigmoid(gi.topRows(H) + gh.topRows(H));
    Mat<S> z = sigmoid(gi.middleRows(H, H) + gh.middleRows(H, H));
    Mat<S> gh_n = gh.bottomRows(H);
    Mat<S> n = (gi.bottomRows(H).array() + r.array() * gh_n.array()).tanh().matrix();
    Mat<S> h_new = ((S(1) - z.array()) * n.array() + z.array() * h.array()).matrix();
    if (cache) {
      cache->x = x;
      cache->h_prev = h;
      cache->r = std::move(r);
      cache->z = std::move(z);
      cache->n = std::move(n);
      cache->gh_n = std::move(gh_n);
    }
    return h_new;
  }

  // Returns (dx, dh_prev); accumulates parameter gradients.
  std::pair<Mat<S>, Mat<S>> backward(const Cache& c, const Mat<S>& dh) {
    const int H = hidden_;
    const auto z = c.z.array();
    const auto n = c.n.array();
    const auto r = c.r.array();
    Mat<S> dh_prev = (dh.array() * z).matrix();
    Mat<S> dn_pre = (dh.array() * (S(1) - z) * (S(1) - n * n)).matrix();
    Mat<S> dz_pre = (dh.array() * (c.h_prev.array() - n) * z * (S(1) - z)).matrix();
    Mat<S> dr_pre = (dn_pre.array() * c.gh_n.array() * r * (S(1) - r)).matrix();

    Mat<S> dgi(3 * H, dh.cols());
    dgi.topRows(H) = dr_pre;
    dgi.middleRows(H, H) = dz_pre;
    dgi.bottomRows(H) = dn_pre;
    Mat<S> dgh = dgi;
    dgh.bottomRows(H) = (dn_pre.array() * r).matrix();

    w_ih.grad.noalias() += dgi * c.x.transpose();
    b_ih.grad.col(0) += dgi.rowwise().sum();
    w_hh.grad.noalias() += dgh * c.h_prev.transpose();
    b_hh.grad.col(0) += dgh.rowwise().sum();
    dh_prev.noalias() += w_hh.value.transpose() * dgh;
    Mat<S> dx = w_ih.value.transpose() * dgi;
    return {std::move(dx), std::move(dh_prev)};
  }

  void collect(ParamList<S>& out) {
    out.push_back(&w_ih);
    out.push_back(&w_hh);
    out.push_back(&b_ih);
    out.push_back(&b_hh);
  }

  ParamTensor<S> w_ih, w_hh, b_ih, b_hh;

 private:
  static Mat<S> sigmoid(const Mat<S>& x) { return (S(1) / (S(1) + (-x.array()).exp())).matrix(); }
  int hidden_ = 0;
};

}  // namespace stbd::nn
