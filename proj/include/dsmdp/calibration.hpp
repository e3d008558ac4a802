#pragma once

/**
 * Two-stage calibration model: estimate (p_s, p_d|C, p_d|W) from trajectory
 * records, predict process accuracy in closed form, and validate with
 * percentile-bootstrap confidence intervals and a horizon-recursion oracle.
 *
 * Accuracy here is conditional on the process stopping: truncated runs are
 * excluded both from the observed rate and from the decision-rate counts
 * (their forced terminal STOP is not a policy decision).
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsmdp/policy.hpp"
#include "dsmdp/trajectory.hpp"

namespace dsmdp {

inline constexpr double kEpsilonDenom = 1e-12;

/// Point estimate with a percentile CI. `defined` is false when the
/// conditioning event never occurred; the CI is then the vacuous [0,1].
struct CalibrationField {
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  bool defined = true;
};

struct CalibrationParams {
  CalibrationField p_s;
  CalibrationField p_d_c;  ///< P(STOP | correct attempt)
  CalibrationField p_d_w;  ///< P(RESAMPLE | wrong attempt)
  CalibrationField predicted_acc;
};

struct TrajectoryRecordSet {
  std::vector<Trajectory> records;
  std::string task_label;
};

/// Closed-form accuracy of the retry process:
///   a / (1 - c),  a = p_s*p_d_c,  c = p_s*(1-p_d_c) + (1-p_s)*p_d_w.
/// Throws when the continue probability leaves no stopping mass.
inline double predict_accuracy(double p_s, double p_d_c, double p_d_w) {
  const double a = p_s * p_d_c;
  const double c = p_s * (1.0 - p_d_c) + (1.0 - p_s) * p_d_w;
  const double denom = 1.0 - c;
  if (denom <= kEpsilonDenom)
    throw std::domain_error("predict_accuracy: process never stops (denominator ~ 0)");
  return a / denom;
}

inline double predict_accuracy(const CalibrationParams& p) {
  return predict_accuracy(p.p_s.estimate, p.p_d_c.estimate, p.p_d_w.estimate);
}

/// Success probability of stopping correctly within `max_attempts` rounds,
/// unconditional on stopping (truncation mass counts as failure). Converges
/// to predict_accuracy * P(stop) geometrically with ratio c.
inline double success_probability_within(double p_s, double p_d_c, double p_d_w,
                                         int max_attempts) {
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  const double a = p_s * p_d_c;
  const double c = p_s * (1.0 - p_d_c) + (1.0 - p_s) * p_d_w;
  double success = 0.0;
  double weight = 1.0;  // probability of reaching the current round
  for (int t = 0; t < max_attempts; ++t) {
    success += weight * a;
    weight *= c;
  }
  return success;
}

/// Finite-horizon oracle for predict_accuracy: exact success probability
/// conditional on the process stopping within `max_attempts` rounds. Both the
/// success and the stop mass scale by the same geometric factor, so this
/// agrees with the closed form at every horizon up to rounding.
inline double brute_force_accuracy(double p_s, double p_d_c, double p_d_w, int max_attempts) {
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  const double a = p_s * p_d_c;
  const double c = p_s * (1.0 - p_d_c) + (1.0 - p_s) * p_d_w;
  double success = 0.0;
  double stopped = 0.0;
  double weight = 1.0;
  for (int t = 0; t < max_attempts; ++t) {
    success += weight * a;
    stopped += weight * (1.0 - c);
    weight *= c;
  }
  if (stopped <= kEpsilonDenom)
    throw std::domain_error("brute_force_accuracy: process never stops within horizon");
  return success / stopped;
}

/// Estimate the three calibration parameters by direct counting. p_s uses
/// first attempts only; decision rates condition on attempt correctness and
/// skip the forced terminal STOP of truncated records.
inline CalibrationParams estimate(const TrajectoryRecordSet& records) {
  if (records.records.empty()) throw std::invalid_argument("estimate: empty record set");
  std::int64_t first_correct = 0;
  std::int64_t n_correct = 0, n_stop_after_correct = 0;
  std::int64_t n_wrong = 0, n_resample_after_wrong = 0;
  for (const Trajectory& traj : records.records) {
    if (traj.steps.empty()) throw std::invalid_argument("estimate: empty trajectory record");
    if (traj.steps.front().outcome == AttemptOutcome::Correct) ++first_correct;
    for (int k = 0; k < traj.attempts(); ++k) {
      const bool forced_stop = traj.truncated && k == traj.attempts() - 1;
      if (forced_stop) continue;
      const TrajectoryStep& step = traj.steps[static_cast<std::size_t>(k)];
      if (step.outcome == AttemptOutcome::Correct) {
        ++n_correct;
        if (step.decision == DecisionAction::Stop) ++n_stop_after_correct;
      } else {
        ++n_wrong;
        if (step.decision == DecisionAction::Resample) ++n_resample_after_wrong;
      }
    }
  }
  CalibrationParams out;
  out.p_s.estimate =
      static_cast<double>(first_correct) / static_cast<double>(records.records.size());
  out.p_s.ci_low = out.p_s.ci_high = out.p_s.estimate;
  if (n_correct > 0) {
    out.p_d_c.estimate = static_cast<double>(n_stop_after_correct) / static_cast<double>(n_correct);
    out.p_d_c.ci_low = out.p_d_c.ci_high = out.p_d_c.estimate;
  } else {
    out.p_d_c.defined = false;
  }
  if (n_wrong > 0) {
    out.p_d_w.estimate =
        static_cast<double>(n_resample_after_wrong) / static_cast<double>(n_wrong);
    out.p_d_w.ci_low = out.p_d_w.ci_high = out.p_d_w.estimate;
  } else {
    out.p_d_w.defined = false;
  }
  if (out.p_d_c.defined && out.p_d_w.defined) {
    try {
      out.predicted_acc.estimate = predict_accuracy(out);
      out.predicted_acc.ci_low = out.predicted_acc.ci_high = out.predicted_acc.estimate;
    } catch (const std::domain_error&) {
      out.predicted_acc.defined = false;
    }
  } else {
    out.predicted_acc.defined = false;
  }
  return out;
}

/// Fraction of non-truncated records whose final attempt is correct.
inline double observed_accuracy(const TrajectoryRecordSet& records) {
  std::int64_t stopped = 0, correct = 0;
  for (const Trajectory& traj : records.records) {
    if (traj.truncated) continue;
    ++stopped;
    if (traj.final_outcome() == AttemptOutcome::Correct) ++correct;
  }
  if (stopped == 0) throw std::domain_error("observed_accuracy: no non-truncated records");
  return static_cast<double>(correct) / static_cast<double>(stopped);
}

namespace detail {

inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace detail

/// Percentile bootstrap (2.5th/97.5th) on the estimated fields and on the
/// predicted accuracy. Deterministic given the seed.
inline CalibrationParams bootstrap_ci(const TrajectoryRecordSet& records, int resamples,
                                      std::uint64_t seed) {
  if (resamples < 2) throw std::invalid_argument("bootstrap_ci: need at least 2 resamples");
  CalibrationParams base = estimate(records);
  const std::size_t n = records.records.size();
  std::vector<double> ps_samples, pdc_samples, pdw_samples, acc_samples;
  for (int b = 0; b < resamples; ++b) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(b)));
    TrajectoryRecordSet resample;
    resample.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      resample.records.push_back(records.records[static_cast<std::size_t>(
          rng.next_u64() % static_cast<std::uint64_t>(n))]);
    const CalibrationParams est = estimate(resample);
    ps_samples.push_back(est.p_s.estimate);
    if (est.p_d_c.defined) pdc_samples.push_back(est.p_d_c.estimate);
    if (est.p_d_w.defined) pdw_samples.push_back(est.p_d_w.estimate);
    if (est.predicted_acc.defined) acc_samples.push_back(est.predicted_acc.estimate);
  }
  auto apply_ci = [](CalibrationField& field, const std::vector<double>& samples) {
    if (!field.defined || samples.empty()) {
      field.ci_low = 0.0;
      field.ci_high = 1.0;
      return;
    }
    field.ci_low = std::min(field.estimate, detail::percentile(samples, 0.025));
    field.ci_high = std::max(field.estimate, detail::percentile(samples, 0.975));
  };
  apply_ci(base.p_s, ps_samples);
  apply_ci(base.p_d_c, pdc_samples);
  apply_ci(base.p_d_w, pdw_samples);
  apply_ci(base.predicted_acc, acc_samples);
  return base;
}

}  // namespace dsmdp
