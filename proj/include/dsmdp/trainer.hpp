#pragma once

/**
 * Gradient-ascent training loop on the three-logit policy: group rollouts,
 * group-relative advantages, combined reward+KL update, and periodic refresh
 * of the reference policy. Plain ascent, no optimizer state, so a run is a
 * pure function of its configuration.
 */

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dsmdp/attribution.hpp"
#include "dsmdp/objectives.hpp"
#include "dsmdp/policy.hpp"
#include "dsmdp/trajectory.hpp"

namespace dsmdp {

struct TrainConfig {
  int steps = 1000;
  double learning_rate = 0.05;
  int ref_refresh_interval = 50;  ///< steps between copying params into the reference
  std::uint64_t seed = 0;
  WorldConfig world;
  PolicyParams init;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (ref_refresh_interval < 1) throw std::invalid_argument("ref_refresh_interval must be >= 1");
    world.validate();
  }
};

struct StepRecord {
  int step = 0;  ///< 1-based
  PolicyParams params;  ///< parameters the step's gradients were computed at
  ActionProbs probs{};
  Grad3 reward_grad;
  Grad3 kl_grad;
  Grad3 net_grad;
  AttributionReport reward_attribution;
  AttributionReport kl_attribution;
  double mean_reward = 0.0;
};

struct TrainingTrace {
  std::vector<StepRecord> records;
  PolicyParams final_params;
  bool diverged = false;
  int diverged_at_step = 0;  ///< step whose update produced a non-finite parameter
};

inline TrainingTrace train(const TrainConfig& cfg) {
  cfg.validate();
  TrainingTrace trace;
  trace.records.reserve(static_cast<std::size_t>(cfg.steps));
  PolicyParams params = cfg.init;
  PolicyParams ref = cfg.init;
  const int group_size = cfg.world.group_size;
  for (int step = 1; step <= cfg.steps; ++step) {
    GroupSample group;
    group.trajectories.reserve(static_cast<std::size_t>(group_size));
    for (int i = 0; i < group_size; ++i) {
      const std::uint64_t seed =
          mix_seed(cfg.seed, static_cast<std::uint64_t>(step - 1) *
                                     static_cast<std::uint64_t>(group_size) +
                                 static_cast<std::uint64_t>(i));
      group.trajectories.push_back(sample_trajectory(params, cfg.world, seed));
      group.rewards.push_back(reward(group.trajectories.back()));
    }
    const TrackGradients grads = combined_gradient(group, params, ref, cfg.world);

    StepRecord rec;
    rec.step = step;
    rec.params = params;
    rec.probs = action_probs(params);
    rec.reward_grad = grads.reward_track;
    rec.kl_grad = grads.kl_track;
    rec.net_grad = grads.net;
    rec.reward_attribution = attribute({grads.reward_track, Track::Reward});
    rec.kl_attribution = attribute({grads.kl_track, Track::KL});
    double mean_r = 0.0;
    for (double r : group.rewards) mean_r += r;
    rec.mean_reward = mean_r / static_cast<double>(group_size);
    trace.records.push_back(rec);

    params.theta_s += cfg.learning_rate * grads.net.s;
    params.theta_d_c += cfg.learning_rate * grads.net.d_c;
    params.theta_d_w += cfg.learning_rate * grads.net.d_w;
    if (!params.finite()) {
      trace.diverged = true;
      trace.diverged_at_step = step;
      trace.final_params = rec.params;  // last finite parameters
      return trace;
    }
    if (step % cfg.ref_refresh_interval == 0) ref = params;
  }
  trace.final_params = params;
  return trace;
}

struct TrainSummary {
  PolicyParams final_params;
  ActionProbs final_probs{};
  double mean_reward_ratio_track = 0.0;  ///< mean reward-track attribution ratio
  double mean_kl_ratio_track = 0.0;      ///< mean KL-track attribution ratio
  double final_mean_reward = 0.0;
  int detected_period = 0;  ///< dominant period of the KL gradient magnitude, 0 if none
};

namespace detail {

/// Dominant period of a noisy series by epoch folding: for each candidate
/// period fold the series into phase classes and score how far the lowest
/// phase mean dips below the overall mean. A genuinely periodic dip (the KL
/// magnitude collapsing at every reference refresh) lines up in one phase
/// class only at the true period and its multiples; taking the smallest
/// period within 5% of the best score picks the fundamental. Returns 0 on
/// short or effectively aperiodic input.
inline int dominant_period(const std::vector<double>& series) {
  const int n = static_cast<int>(series.size());
  if (n < 8) return 0;
  double mean_all = 0.0;
  for (double x : series) mean_all += x;
  mean_all /= n;
  std::vector<double> scores;
  const int max_period = n / 4;  // demand at least four folds
  double best = 0.0;
  for (int p = 2; p <= max_period; ++p) {
    std::vector<double> sums(static_cast<std::size_t>(p), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(p), 0);
    for (int i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(i % p)] += series[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(i % p)];
    }
    double min_phase = sums[0] / counts[0];
    for (int ph = 1; ph < p; ++ph)
      min_phase = std::min(min_phase, sums[static_cast<std::size_t>(ph)] /
                                          counts[static_cast<std::size_t>(ph)]);
    scores.push_back(mean_all - min_phase);
    best = std::max(best, scores.back());
  }
  if (best <= 1e-12) return 0;
  for (int p = 2; p <= max_period; ++p)
    if (scores[static_cast<std::size_t>(p - 2)] >= 0.95 * best) return p;
  return 0;
}

}  // namespace detail

inline TrainSummary summarize(const TrainingTrace& trace) {
  if (trace.records.empty()) throw std::invalid_argument("summarize: empty trace");
  TrainSummary summary;
  summary.final_params = trace.final_params;
  summary.final_probs = action_probs(trace.final_params);
  summary.final_mean_reward = trace.records.back().mean_reward;
  double reward_ratio = 0.0;
  double kl_ratio = 0.0;
  int reward_n = 0;
  int kl_n = 0;
  std::vector<double> kl_magnitude;
  kl_magnitude.reserve(trace.records.size());
  for (const StepRecord& rec : trace.records) {
    if (!rec.reward_attribution.zero_gradient && std::isfinite(rec.reward_attribution.ratio)) {
      reward_ratio += rec.reward_attribution.ratio;
      ++reward_n;
    }
    if (!rec.kl_attribution.zero_gradient && std::isfinite(rec.kl_attribution.ratio)) {
      kl_ratio += rec.kl_attribution.ratio;
      ++kl_n;
    }
    kl_magnitude.push_back(std::hypot(rec.kl_grad.s, rec.kl_grad.d_c, rec.kl_grad.d_w));
  }
  summary.mean_reward_ratio_track = reward_n > 0 ? reward_ratio / reward_n : 0.0;
  summary.mean_kl_ratio_track = kl_n > 0 ? kl_ratio / kl_n : 0.0;
  summary.detected_period = detail::dominant_period(kl_magnitude);
  return summary;
}

}  // namespace dsmdp
