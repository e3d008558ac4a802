#pragma once

/**
 * Objective gradients over the three-logit policy.
 *
 * Four tracks are implemented:
 *   Reward - group-relative-advantage surrogate (on-policy, ratio = 1)
 *   KL     - token-level reference-policy penalty via backward Q recursion
 *   SFT    - maximum likelihood on a demonstration, 1/pi implicit reward
 *   DFT    - probability-rescaled likelihood, policy-independent Q-values
 *
 * Per-token probabilities collapse to the attempt level: all len(outcome)
 * tokens of an attempt carry the attempt's probability, so a length-L attempt
 * contributes L identical per-token terms.
 */

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dsmdp/policy.hpp"
#include "dsmdp/trajectory.hpp"

namespace dsmdp {

enum class Track { Reward, KL, SFT, DFT };

inline const char* to_string(Track t) {
  switch (t) {
    case Track::Reward: return "reward";
    case Track::KL: return "kl";
    case Track::SFT: return "sft";
    case Track::DFT: return "dft";
  }
  return "?";
}

struct ObjectiveGradient {
  Grad3 grad;
  Track track = Track::Reward;
};

/// Indicator reward: 1 iff the final attempt is correct.
inline double reward(const Trajectory& traj) {
  return traj.final_outcome() == AttemptOutcome::Correct ? 1.0 : 0.0;
}

struct AdvantageSet {
  std::vector<double> advantages;
  double group_mean = 0.0;
  double group_std = 0.0;
};

inline constexpr double kGraeEpsilonStd = 1e-8;

/// Group-relative advantages: (R_i - mean) / population std. Degenerate
/// groups (std below epsilon) get all-zero advantages.
inline AdvantageSet grae(const std::vector<double>& rewards) {
  const std::size_t n = rewards.size();
  if (n < 2) throw std::invalid_argument("grae: need at least 2 rewards");
  AdvantageSet out;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);
  out.group_mean = mean;
  out.group_std = std::sqrt(var);
  out.advantages.resize(n, 0.0);
  if (out.group_std > kGraeEpsilonStd) {
    for (std::size_t i = 0; i < n; ++i)
      out.advantages[i] = (rewards[i] - mean) / out.group_std;
  }
  return out;
}

namespace detail {

/// Remaining token counts: rem[k] = sum of attempt lengths from step k on.
inline std::vector<double> remaining_tokens(const Trajectory& traj, const WorldConfig& config) {
  const int t = traj.attempts();
  std::vector<double> rem(static_cast<std::size_t>(t) + 1, 0.0);
  for (int k = t - 1; k >= 0; --k) {
    rem[static_cast<std::size_t>(k)] =
        rem[static_cast<std::size_t>(k) + 1] +
        attempt_length(config, traj.steps[static_cast<std::size_t>(k)].outcome);
  }
  return rem;
}

}  // namespace detail

/// Advantage-weighted gradient of one trajectory. With gamma < 1 each action
/// is discounted by the tokens still to be generated after it: the sampling
/// action at step k by gamma^(sum_{j>=k} L_j), the decision that follows the
/// attempt's tokens by gamma^(sum_{j>k} L_j).
inline Grad3 advantage_weighted_grad(const Trajectory& traj, double advantage,
                                     const PolicyParams& params, const WorldConfig& config) {
  Grad3 g;
  if (advantage == 0.0) return g;
  if (config.gamma == 1.0) {
    const LogProbGrad lp = grad_log_prob(traj, params);
    return advantage * lp.total();
  }
  const std::vector<double> rem = detail::remaining_tokens(traj, config);
  for (int k = 0; k < traj.attempts(); ++k) {
    const TrajectoryStep& step = traj.steps[static_cast<std::size_t>(k)];
    const double w_sample = std::pow(config.gamma, rem[static_cast<std::size_t>(k)]);
    const double w_decision = std::pow(config.gamma, rem[static_cast<std::size_t>(k) + 1]);
    g += (advantage * w_sample) * sampling_score(params, step.outcome);
    g += (advantage * w_decision) *
         decision_score(params, step.outcome, effective_decision(traj, k));
  }
  return g;
}

/// Surrogate-reward gradient: (1/G) * sum_i A_i * grad log P(tau_i).
inline ObjectiveGradient surrogate_gradient(const GroupSample& group, const PolicyParams& params,
                                            const WorldConfig& config) {
  if (group.trajectories.size() != group.rewards.size())
    throw std::invalid_argument("surrogate_gradient: size mismatch");
  const AdvantageSet adv = grae(group.rewards);
  Grad3 g;
  for (std::size_t i = 0; i < group.trajectories.size(); ++i)
    g += advantage_weighted_grad(group.trajectories[i], adv.advantages[i], params, config);
  return {(1.0 / static_cast<double>(group.trajectories.size())) * g, Track::Reward};
}

/// One per-action entry of a Q table. Sampling entries carry the step's
/// attempt; decision entries the (effective) decision.
struct QEntry {
  int step = 0;  ///< 1-based attempt index
  bool is_decision = false;
  AttemptOutcome outcome = AttemptOutcome::Correct;
  DecisionAction decision = DecisionAction::Stop;  ///< meaningful when is_decision
  double immediate = 0.0;                          ///< d_k (KL) or implicit reward share
  double future = 0.0;                             ///< discounted future value
  double q = 0.0;
};

/// Backward Q recursion for the token-level reference penalty.
/// d_k^sample = len(o_k) * s * log(pi/pi_ref), d_k^decision the single-token
/// analogue; Q_sample(k) = d_k^sample + gamma*Q_d(k),
/// Q_d(k) = d_k^decision + gamma*Q_sample(k+1), Q_d(T) = d_T^decision.
/// Entries come back in forward order, sampling before decision per step.
inline std::vector<QEntry> kl_q_values(const Trajectory& traj, const PolicyParams& params,
                                       const PolicyParams& ref, const WorldConfig& config) {
  const int t = traj.attempts();
  if (t == 0) throw std::invalid_argument("kl_q_values: empty trajectory");
  const double sign = kl_sign(config.kl_sign_convention);
  std::vector<double> d_sample(static_cast<std::size_t>(t));
  std::vector<double> d_decision(static_cast<std::size_t>(t));
  for (int k = 0; k < t; ++k) {
    const TrajectoryStep& step = traj.steps[static_cast<std::size_t>(k)];
    const DecisionAction dec = effective_decision(traj, k);
    const double len = attempt_length(config, step.outcome);
    d_sample[static_cast<std::size_t>(k)] =
        len * sign * std::log(sample_prob(params, step.outcome) / sample_prob(ref, step.outcome));
    d_decision[static_cast<std::size_t>(k)] =
        sign * std::log(decision_prob(params, step.outcome, dec) /
                        decision_prob(ref, step.outcome, dec));
  }
  std::vector<double> q_sample(static_cast<std::size_t>(t));
  std::vector<double> q_decision(static_cast<std::size_t>(t));
  q_decision[static_cast<std::size_t>(t) - 1] = d_decision[static_cast<std::size_t>(t) - 1];
  for (int k = t - 1; k >= 0; --k) {
    q_sample[static_cast<std::size_t>(k)] =
        d_sample[static_cast<std::size_t>(k)] +
        config.gamma * q_decision[static_cast<std::size_t>(k)];
    if (k > 0)
      q_decision[static_cast<std::size_t>(k) - 1] =
          d_decision[static_cast<std::size_t>(k) - 1] +
          config.gamma * q_sample[static_cast<std::size_t>(k)];
  }
  std::vector<QEntry> entries;
  entries.reserve(static_cast<std::size_t>(2 * t));
  for (int k = 0; k < t; ++k) {
    const std::size_t ki = static_cast<std::size_t>(k);
    const TrajectoryStep& step = traj.steps[ki];
    entries.push_back({k + 1, false, step.outcome, DecisionAction::Stop, d_sample[ki],
                       q_sample[ki] - d_sample[ki], q_sample[ki]});
    entries.push_back({k + 1, true, step.outcome, effective_decision(traj, k), d_decision[ki],
                       q_decision[ki] - d_decision[ki], q_decision[ki]});
  }
  return entries;
}

/// KL-track gradient of one trajectory: sum of score * Q over its actions.
inline ObjectiveGradient kl_gradient(const Trajectory& traj, const PolicyParams& params,
                                     const PolicyParams& ref, const WorldConfig& config) {
  Grad3 g;
  for (const QEntry& e : kl_q_values(traj, params, ref, config)) {
    const Grad3 score = e.is_decision ? decision_score(params, e.outcome, e.decision)
                                      : sampling_score(params, e.outcome);
    g += e.q * score;
  }
  return {g, Track::KL};
}

struct TrackGradients {
  Grad3 reward_track;
  Grad3 kl_track;
  Grad3 net;
};

/// Reward, KL and net gradients of a group. The net adds the KL term with the
/// sign that drags the policy toward the reference regardless of convention.
inline TrackGradients combined_gradient(const GroupSample& group, const PolicyParams& params,
                                        const PolicyParams& ref, const WorldConfig& config) {
  TrackGradients out;
  out.reward_track = surrogate_gradient(group, params, config).grad;
  Grad3 kl;
  for (const Trajectory& traj : group.trajectories)
    kl += kl_gradient(traj, params, ref, config).grad;
  out.kl_track = (1.0 / static_cast<double>(group.trajectories.size())) * kl;
  const Grad3 drag = config.kl_sign_convention == KlSignConvention::AppendixC
                         ? out.kl_track
                         : -out.kl_track;
  out.net = out.reward_track + config.kl_weight * drag;
  return out;
}

/// Implicit Q-values of maximum-likelihood training, with per-token reward
/// 1/pi. Sampling entries report the Q at the attempt's first token:
///   Q_sample(k) = (L_k - 1)/pi_sample(o_k) + 1/pi_d(a_k|o_k) + Q_d(k)
///   Q_d(k, RESAMPLE) = Q_sample(k+1),  Q_d(T, STOP) = 0
/// The cross terms entangle the two policy components.
inline std::vector<QEntry> sft_q_values(const Trajectory& traj, const PolicyParams& params,
                                        const WorldConfig& config) {
  const int t = traj.attempts();
  if (t == 0) throw std::invalid_argument("sft_q_values: empty trajectory");
  std::vector<double> q_sample(static_cast<std::size_t>(t));
  std::vector<double> q_decision(static_cast<std::size_t>(t));
  for (int k = t - 1; k >= 0; --k) {
    const std::size_t ki = static_cast<std::size_t>(k);
    const TrajectoryStep& step = traj.steps[ki];
    const DecisionAction dec = effective_decision(traj, k);
    q_decision[ki] = (k == t - 1) ? 0.0 : q_sample[ki + 1];
    const double len = attempt_length(config, step.outcome);
    q_sample[ki] = (len - 1.0) / sample_prob(params, step.outcome) +
                   1.0 / decision_prob(params, step.outcome, dec) + q_decision[ki];
  }
  std::vector<QEntry> entries;
  for (int k = 0; k < t; ++k) {
    const std::size_t ki = static_cast<std::size_t>(k);
    const TrajectoryStep& step = traj.steps[ki];
    entries.push_back({k + 1, false, step.outcome, DecisionAction::Stop,
                       q_sample[ki] - q_decision[ki], q_decision[ki], q_sample[ki]});
    entries.push_back({k + 1, true, step.outcome, effective_decision(traj, k), 0.0,
                       q_decision[ki], q_decision[ki]});
  }
  return entries;
}

/// DFT implicit Q-values: pure functions of lengths and step indices.
///   Q_d(k) = sum_{k'>k} (L_{k'} + 1) * c,  Q_d(T) = 0
///   Q_sample(k) = L_k * c + Q_d(k)   (first-token value)
inline std::vector<QEntry> dft_q_values(const Trajectory& traj, const WorldConfig& config,
                                        double c) {
  if (!std::isfinite(c)) throw std::invalid_argument("dft_q_values: non-finite c");
  const int t = traj.attempts();
  if (t == 0) throw std::invalid_argument("dft_q_values: empty trajectory");
  std::vector<double> q_decision(static_cast<std::size_t>(t), 0.0);
  for (int k = t - 2; k >= 0; --k) {
    const double len_next = attempt_length(config, traj.steps[static_cast<std::size_t>(k) + 1].outcome);
    q_decision[static_cast<std::size_t>(k)] =
        (len_next + 1.0) * c + q_decision[static_cast<std::size_t>(k) + 1];
  }
  std::vector<QEntry> entries;
  for (int k = 0; k < t; ++k) {
    const std::size_t ki = static_cast<std::size_t>(k);
    const TrajectoryStep& step = traj.steps[ki];
    const double len = attempt_length(config, step.outcome);
    const double qs = len * c + q_decision[ki];
    entries.push_back({k + 1, false, step.outcome, DecisionAction::Stop, len * c,
                       q_decision[ki], qs});
    entries.push_back({k + 1, true, step.outcome, effective_decision(traj, k), 0.0,
                       q_decision[ki], q_decision[ki]});
  }
  return entries;
}

/// Maximum-likelihood gradient on a demonstration trajectory. Each of the
/// L_k tokens of an attempt contributes the attempt-level score once.
inline ObjectiveGradient sft_gradient(const Trajectory& traj, const PolicyParams& params,
                                      const WorldConfig& config) {
  Grad3 g;
  for (int k = 0; k < traj.attempts(); ++k) {
    const TrajectoryStep& step = traj.steps[static_cast<std::size_t>(k)];
    const double len = attempt_length(config, step.outcome);
    g += len * sampling_score(params, step.outcome);
    g += decision_score(params, step.outcome, effective_decision(traj, k));
  }
  return {g, Track::SFT};
}

/// Probability-rescaled likelihood gradient: per-token contribution
/// c * pi * score = c * grad pi, with the rescaling weight detached.
inline ObjectiveGradient dft_gradient(const Trajectory& traj, const PolicyParams& params,
                                      const WorldConfig& config, double c) {
  if (!std::isfinite(c)) throw std::invalid_argument("dft_gradient: non-finite c");
  Grad3 g;
  for (int k = 0; k < traj.attempts(); ++k) {
    const TrajectoryStep& step = traj.steps[static_cast<std::size_t>(k)];
    const DecisionAction dec = effective_decision(traj, k);
    const double len = attempt_length(config, step.outcome);
    g += (c * len * sample_prob(params, step.outcome)) * sampling_score(params, step.outcome);
    g += (c * decision_prob(params, step.outcome, dec)) * decision_score(params, step.outcome, dec);
  }
  return {g, Track::DFT};
}

}  // namespace dsmdp
