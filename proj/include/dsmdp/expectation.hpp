#pragma once

/**
 * Exact expectations over the enumerated trajectory space. These are the
 * closed-form counterparts of the Monte Carlo estimators and back the
 * deterministic checks on the gradient tracks.
 */

#include <cmath>
#include <vector>

#include "dsmdp/objectives.hpp"
#include "dsmdp/trajectory.hpp"

namespace dsmdp {

struct WeightedTrajectory {
  Trajectory trajectory;
  double probability;
};

inline std::vector<WeightedTrajectory> enumerate_with_probabilities(const PolicyParams& params,
                                                                    const WorldConfig& config) {
  std::vector<WeightedTrajectory> out;
  for (Trajectory& traj : enumerate_trajectories(config))
    out.push_back({traj, std::exp(log_prob(traj, params))});
  return out;
}

inline double expected_reward(const PolicyParams& params, const WorldConfig& config) {
  double acc = 0.0;
  for (const auto& [traj, p] : enumerate_with_probabilities(params, config))
    acc += p * reward(traj);
  return acc;
}

/// Exact surrogate-track gradient, with the group advantage replaced by the
/// population standardization of the reward under the current policy:
/// A(tau) = (R(tau) - E[R]) / std(R). Degenerate reward distributions give a
/// zero gradient, mirroring the group estimator.
inline Grad3 expected_surrogate_gradient(const PolicyParams& params, const WorldConfig& config) {
  const auto weighted = enumerate_with_probabilities(params, config);
  double mean = 0.0;
  for (const auto& [traj, p] : weighted) mean += p * reward(traj);
  double var = 0.0;
  for (const auto& [traj, p] : weighted) {
    const double d = reward(traj) - mean;
    var += p * d * d;
  }
  const double stddev = std::sqrt(var);
  Grad3 g;
  if (stddev <= kGraeEpsilonStd) return g;
  for (const auto& [traj, p] : weighted) {
    const double adv = (reward(traj) - mean) / stddev;
    g += p * advantage_weighted_grad(traj, adv, params, config);
  }
  return g;
}

/// Exact KL-track gradient: E over trajectories of the per-trajectory
/// score-times-Q sum.
inline Grad3 expected_kl_gradient(const PolicyParams& params, const PolicyParams& ref,
                                  const WorldConfig& config) {
  Grad3 g;
  for (const auto& [traj, p] : enumerate_with_probabilities(params, config))
    g += p * kl_gradient(traj, params, ref, config).grad;
  return g;
}

}  // namespace dsmdp
