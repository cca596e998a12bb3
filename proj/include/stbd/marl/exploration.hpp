#pragma once

#include <random>
#include <span>

#include "stbd/arena.hpp"

namespace stbd::marl {

// Argmax over available entries, ties to the lowest index.
template <typename Vec>
int greedy_action(const Vec& q, std::span<const std::uint8_t> mask) {
  int best = -1;
  for (int a = 0; a < static_cast<int>(mask.size()); ++a) {
    if (!mask[static_cast<std::size_t>(a)]) continue;
    if (best < 0 || q[a] > q[best]) best = a;
  }
  if (best < 0) throw ArenaError("greedy_action: no available action");
  return best;
}

// One uniform draw decides exploration; a second picks among available actions.
template <typename Vec>
int epsilon_greedy(const Vec& q, std::span<const std::uint8_t> mask, double epsilon, std::mt19937_64& rng) {
  int n_avail = 0;
  for (auto m : mask) n_avail += m ? 1 : 0;
  if (n_avail == 0) throw ArenaError("epsilon_greedy: no available action");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    int pick = std::uniform_int_distribution<int>(0, n_avail - 1)(rng);
    for (int a = 0; a < static_cast<int>(mask.size()); ++a) {
      if (!mask[static_cast<std::size_t>(a)]) continue;
      if (pick-- == 0) return a;
    }
  }
  return greedy_action(q, mask);
}

}  // namespace stbd::marl
