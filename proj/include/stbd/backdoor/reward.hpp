#pragma once

#include <cmath>
#include <string>

#include "stbd/common.hpp"

namespace stbd::backdoor {

// Slack for rewards that sit on a bound up to rounding.
inline double range_slack(double lo, double hi) { return 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)}); }

// r^e = R_max + R_min - R; maps the reward range onto itself.
inline double reverse_reward(double r, double r_min, double r_max) {
  if (!(r_min < r_max)) throw ValidationError("reverse_reward: need R_min < R_max");
  const double slack = range_slack(r_min, r_max);
  if (r < r_min - slack || r > r_max + slack)
    throw ValidationError("reverse_reward: reward " + std::to_string(r) + " outside [" + std::to_string(r_min) + ", " +
                          std::to_string(r_max) + "]");
  return r_max + r_min - r;
}

// Linear map of a teammate count in [0, n-1] onto [R_min, R_max].
inline double normalize_influence(double raw, int n_agents, double r_min, double r_max) {
  if (n_agents < 2) throw ValidationError("normalize_influence: needs at least two agents");
  if (!(r_min < r_max)) throw ValidationError("normalize_influence: need R_min < R_max");
  if (raw < 0.0 || raw > n_agents - 1)
    throw ValidationError("normalize_influence: raw influence " + std::to_string(raw) + " outside [0, " +
                          std::to_string(n_agents - 1) + "]");
  return r_min + (r_max - r_min) * raw / (n_agents - 1);
}

// (1 - lambda) r^e + lambda r^I.
inline double hack_reward(double reversed, double influence, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ValidationError("hack_reward: lambda must lie in [0, 1]");
  return (1.0 - lambda) * reversed + lambda * influence;
}

}  // namespace stbd::backdoor
