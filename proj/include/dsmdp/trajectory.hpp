#pragma once

/**
 * Trajectories of the two-stage retry process: seeded sampling, exact
 * enumeration, factorized log-probability and its per-component gradient.
 *
 * A trajectory is an ordered list of (attempt outcome, decision) steps. Every
 * step but the last resamples; the last stops. When the horizon is hit with a
 * drawn RESAMPLE, the recorded decision is forced to STOP and the trajectory
 * is flagged truncated. A truncated trajectory's probability carries the drawn
 * RESAMPLE factor at the horizon (the forced STOP contributes no factor), so
 * the enumeration below is a genuine partition of the event space.
 */

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dsmdp/policy.hpp"

namespace dsmdp {

struct TrajectoryStep {
  AttemptOutcome outcome;
  DecisionAction decision;

  friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  bool truncated = false;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

  int attempts() const { return static_cast<int>(steps.size()); }

  AttemptOutcome final_outcome() const {
    if (steps.empty()) throw std::logic_error("empty trajectory");
    return steps.back().outcome;
  }
};

struct GroupSample {
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
};

namespace detail {

/// splitmix64 step; used both as a seed mixer and inside the generator.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Small deterministic xoshiro256** generator. Identical seed gives identical
/// streams on every platform, which the reproducibility contract needs;
/// std::uniform_real_distribution makes no such guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : state_) w = detail::splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0,1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return next_double() < p; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

/// Derive an independent stream seed from a base seed and an index.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t s = base ^ (0x6a09e667f3bcc909ULL + index * 0x9e3779b97f4a7c15ULL);
  return detail::splitmix64(s);
}

/// Roll out one trajectory. Pure function of (params, config, seed).
inline Trajectory sample_trajectory(const PolicyParams& params, const WorldConfig& config,
                                    std::uint64_t seed) {
  if (!params.finite()) throw std::invalid_argument("sample_trajectory: non-finite params");
  config.validate();
  const ActionProbs probs = action_probs(params);
  Rng rng(seed);
  Trajectory traj;
  for (int k = 1; k <= config.max_attempts; ++k) {
    const AttemptOutcome outcome =
        rng.bernoulli(probs.p_correct) ? AttemptOutcome::Correct : AttemptOutcome::Wrong;
    const double p_resample = outcome == AttemptOutcome::Correct ? probs.p_resample_given_c
                                                                 : probs.p_resample_given_w;
    const bool resample = rng.bernoulli(p_resample);
    if (!resample) {
      traj.steps.push_back({outcome, DecisionAction::Stop});
      return traj;
    }
    if (k == config.max_attempts) {
      // Horizon reached with a drawn RESAMPLE: force STOP and flag.
      traj.steps.push_back({outcome, DecisionAction::Stop});
      traj.truncated = true;
      return traj;
    }
    traj.steps.push_back({outcome, DecisionAction::Resample});
  }
  return traj;  // unreachable
}

/// Effective decision of step k for probability purposes: a truncated
/// trajectory's final recorded STOP stands in for a drawn RESAMPLE.
inline DecisionAction effective_decision(const Trajectory& traj, int k) {
  const bool last = (k == traj.attempts() - 1);
  if (last && traj.truncated) return DecisionAction::Resample;
  return traj.steps[static_cast<std::size_t>(k)].decision;
}

/// Factorized log-probability of a trajectory.
inline double log_prob(const Trajectory& traj, const PolicyParams& params) {
  if (traj.steps.empty()) throw std::invalid_argument("log_prob: empty trajectory");
  double lp = 0.0;
  for (int k = 0; k < traj.attempts(); ++k) {
    const TrajectoryStep& step = traj.steps[static_cast<std::size_t>(k)];
    lp += std::log(sample_prob(params, step.outcome));
    lp += std::log(decision_prob(params, step.outcome, effective_decision(traj, k)));
  }
  return lp;
}

struct LogProbGrad {
  Grad3 sampling;  ///< touches only theta_s
  Grad3 decision;  ///< touches only theta_d_c / theta_d_w

  Grad3 total() const { return sampling + decision; }
};

/// Gradient of log_prob, split into sampling and decision components.
inline LogProbGrad grad_log_prob(const Trajectory& traj, const PolicyParams& params) {
  if (traj.steps.empty()) throw std::invalid_argument("grad_log_prob: empty trajectory");
  LogProbGrad g;
  for (int k = 0; k < traj.attempts(); ++k) {
    const TrajectoryStep& step = traj.steps[static_cast<std::size_t>(k)];
    g.sampling += sampling_score(params, step.outcome);
    g.decision += decision_score(params, step.outcome, effective_decision(traj, k));
  }
  return g;
}

/// All trajectories reachable within the horizon. For every depth t the
/// 2^t outcome paths appear once ending in STOP; at the horizon they appear
/// again flagged truncated (drawn RESAMPLE). Probabilities, evaluated lazily
/// via log_prob, sum to 1 over the returned list.
inline std::vector<Trajectory> enumerate_trajectories(const WorldConfig& config) {
  config.validate();
  if (config.max_attempts > 20)
    throw std::length_error("enumerate_trajectories: horizon too large (max 20)");
  std::vector<Trajectory> all;
  std::vector<AttemptOutcome> outcomes(static_cast<std::size_t>(config.max_attempts));
  // Iterate outcome prefixes depth-first via bitmask per depth.
  for (int depth = 1; depth <= config.max_attempts; ++depth) {
    const std::uint32_t n = 1u << depth;
    for (std::uint32_t mask = 0; mask < n; ++mask) {
      Trajectory traj;
      for (int k = 0; k < depth; ++k) {
        const AttemptOutcome o =
            (mask >> k) & 1u ? AttemptOutcome::Correct : AttemptOutcome::Wrong;
        const bool last = (k == depth - 1);
        traj.steps.push_back({o, last ? DecisionAction::Stop : DecisionAction::Resample});
      }
      all.push_back(traj);
      if (depth == config.max_attempts) {
        Trajectory trunc = traj;
        trunc.truncated = true;
        all.push_back(trunc);
      }
    }
  }
  return all;
}

}  // namespace dsmdp
