#pragma once

#include <limits>
#include <span>
#include <vector>

#include "stbd/tinynn/agent_net.hpp"
#include "stbd/tinynn/mixer.hpp"

namespace stbd::nn {

// A padded batch of episodes laid out for the unrolled TD loss.
// Step t of episode b for agent i lives in column b * n_agents + i of the
// per-step matrices; global quantities use column t * batch + b.
template <typename S>
struct TdBatch {
  int n_agents = 0;
  int batch = 0;
  int horizon = 0;                       // longest episode length T
  std::vector<Mat<S>> inputs;            // T + 1 entries, input_dim x (batch * n)
  std::vector<Mat<S>> avail;             // T + 1 entries, n_actions x (batch * n), 0/1
  std::vector<std::vector<int>> actions; // T entries of batch * n
  Mat<S> states;                         // state_dim x ((T + 1) * batch)
  Mat<S> rewards;                        // 1 x (T * batch)
  Mat<S> terminal;                       // 1 x (T * batch); 1 when no bootstrap
  Mat<S> mask;                           // 1 x (T * batch); 1 on valid steps
};

// Agents sharing one network. Frozen groups contribute values but receive no
// gradient.
template <typename S>
struct AgentGroup {
  AgentNet<S>* online = nullptr;
  const AgentNet<S>* target = nullptr;
  std::vector<int> agents;
  bool trainable = true;
};

struct TdStats {
  double loss = 0.0;
  int valid_steps = 0;
  double mean_q = 0.0;
};

// Mean squared TD error over valid steps,
//   y_t = r_t + gamma (1 - terminal_t) Q_tot^target(s_{t+1}, greedy available actions),
// with gradients accumulated by backpropagation through time into every
// trainable group and into `mixer`.
template <typename S>
TdStats td_loss(const TdBatch<S>& b, std::span<AgentGroup<S>> groups, Mixer<S>& mixer, const Mixer<S>& target_mixer,
                double gamma) {
  if (b.batch <= 0 || b.horizon <= 0) throw ShapeError("td_loss: empty batch");
  const int n = b.n_agents, B = b.batch, T = b.horizon;
  const Eigen::Index cols = static_cast<Eigen::Index>(T) * B;
  const S valid = b.mask.sum();
  if (!(valid > S(0))) throw ShapeError("td_loss: every step is masked out");

  Mat<S> q_taken = Mat<S>::Zero(n, cols);
  Mat<S> q_next = Mat<S>::Zero(n, cols);
  std::vector<std::vector<typename AgentNet<S>::StepCache>> caches(groups.size());
  std::vector<std::vector<Eigen::Index>> group_cols(groups.size());

  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& grp = groups[g];
    const int G = static_cast<int>(grp.agents.size());
    auto& gc = group_cols[g];
    for (int e = 0; e < B; ++e)
      for (int i : grp.agents) gc.push_back(static_cast<Eigen::Index>(e) * n + i);
    auto gather = [&](const Mat<S>& m) {
      Mat<S> out(m.rows(), static_cast<Eigen::Index>(gc.size()));
      for (std::size_t c = 0; c < gc.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(gc[c]);
      return out;
    };

    // a frozen network that is its own target needs one pass, not two
    const bool shared = !grp.trainable && grp.online == grp.target;
    if (!shared) caches[g].resize(static_cast<std::size_t>(T));
    Mat<S> h = grp.online->initial_hidden(B * G);
    Mat<S> ht = grp.target->initial_hidden(B * G);
    for (int t = 0; t <= T; ++t) {
      const Mat<S> x = gather(b.inputs[static_cast<std::size_t>(t)]);
      Mat<S> qt;
      if (shared) {
        std::tie(qt, ht) = grp.target->forward(x, ht);
      }
      if (t < T) {
        Mat<S> q;
        if (shared) {
          q = qt;
        } else {
          auto& cache = caches[g][static_cast<std::size_t>(t)];
          q = grp.online->forward(x, h, cache);
          h = cache.h;
        }
        const auto& acts = b.actions[static_cast<std::size_t>(t)];
        for (std::size_t c = 0; c < gc.size(); ++c) {
          const Eigen::Index e = gc[c] / n, i = gc[c] % n;
          q_taken(i, static_cast<Eigen::Index>(t) * B + e) = q(acts[static_cast<std::size_t>(gc[c])], static_cast<Eigen::Index>(c));
        }
      }
      if (!shared) std::tie(qt, ht) = grp.target->forward(x, ht);
      if (t == 0) continue;
      const Mat<S>& av = b.avail[static_cast<std::size_t>(t)];
      for (std::size_t c = 0; c < gc.size(); ++c) {
        const Eigen::Index e = gc[c] / n, i = gc[c] % n;
        S best = -std::numeric_limits<S>::infinity();
        for (Eigen::Index a = 0; a < qt.rows(); ++a)
          if (av(a, gc[c]) > S(0) && qt(a, static_cast<Eigen::Index>(c)) > best) best = qt(a, static_cast<Eigen::Index>(c));
        q_next(i, static_cast<Eigen::Index>(t - 1) * B + e) = std::isfinite(best) ? best : S(0);
      }
    }
  }

  typename Mixer<S>::Cache mix_cache;
  const Mat<S> q_tot = mixer.forward(q_taken, b.states.leftCols(cols), &mix_cache);
  const Mat<S> q_tot_next = target_mixer.forward(q_next, b.states.middleCols(B, cols));
  const Mat<S> y = (b.rewards.array() + S(gamma) * (S(1) - b.terminal.array()) * q_tot_next.array()).matrix();
  const Mat<S> err = ((q_tot - y).array() * b.mask.array()).matrix();

  TdStats stats;
  stats.loss = static_cast<double>(err.squaredNorm() / valid);
  stats.valid_steps = static_cast<int>(valid);
  stats.mean_q = static_cast<double>((q_tot.array() * b.mask.array()).sum() / valid);

  const Mat<S> dq_tot = (S(2) / valid) * err;
  const Mat<S> dq = mixer.backward(mix_cache, dq_tot);

  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& grp = groups[g];
    if (!grp.trainable) continue;
    const auto& gc = group_cols[g];
    const Eigen::Index width = static_cast<Eigen::Index>(gc.size());
    Mat<S> dh = Mat<S>::Zero(grp.online->hidden_dim(), width);
    for (int t = T - 1; t >= 0; --t) {
      Mat<S> dqa = Mat<S>::Zero(grp.online->n_actions(), width);
      const auto& acts = b.actions[static_cast<std::size_t>(t)];
      for (Eigen::Index c = 0; c < width; ++c) {
        const Eigen::Index e = gc[static_cast<std::size_t>(c)] / n, i = gc[static_cast<std::size_t>(c)] % n;
        dqa(acts[static_cast<std::size_t>(gc[static_cast<std::size_t>(c)])], c) = dq(i, static_cast<Eigen::Index>(t) * B + e);
      }
      dh = grp.online->backward(caches[g][static_cast<std::size_t>(t)], dqa, dh);
    }
  }
  return stats;
}

}  // namespace stbd::nn
