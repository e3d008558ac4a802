#pragma once

/**
 * Numeric attribution of a gradient across the two policy components:
 * sampling magnitude |g_s| versus decision magnitude ||(g_dc, g_dw)||, their
 * ratio, and a balanced/unbalanced classification against a threshold.
 */

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dsmdp/expectation.hpp"
#include "dsmdp/objectives.hpp"

namespace dsmdp {

struct AttributionReport {
  Track track = Track::Reward;
  double sampling_magnitude = 0.0;
  double decision_magnitude = 0.0;
  double ratio = 1.0;  ///< sampling/decision; +inf when only sampling is nonzero
  bool balanced = true;
  bool zero_gradient = false;
};

inline constexpr double kDefaultBalanceThreshold = 2.0;

inline AttributionReport attribute(const ObjectiveGradient& grad,
                                   double balance_threshold = kDefaultBalanceThreshold) {
  if (!(balance_threshold > 1.0))
    throw std::invalid_argument("attribute: threshold must be > 1");
  AttributionReport report;
  report.track = grad.track;
  report.sampling_magnitude = std::abs(grad.grad.s);
  report.decision_magnitude = std::hypot(grad.grad.d_c, grad.grad.d_w);
  if (report.sampling_magnitude == 0.0 && report.decision_magnitude == 0.0) {
    report.zero_gradient = true;
    report.ratio = 1.0;
    report.balanced = true;
    return report;
  }
  if (report.decision_magnitude == 0.0) {
    report.ratio = std::numeric_limits<double>::infinity();
    report.balanced = false;
    return report;
  }
  report.ratio = report.sampling_magnitude / report.decision_magnitude;
  const double imbalance = std::max(report.ratio, 1.0 / report.ratio);
  report.balanced = imbalance <= balance_threshold;
  return report;
}

struct SweepRow {
  int length = 0;
  Track track = Track::Reward;
  double sampling_magnitude = 0.0;
  double decision_magnitude = 0.0;
  double ratio = 0.0;
  bool balanced = false;
};

/// Expected attribution of the reward and KL tracks as the common attempt
/// length L sweeps over `lengths`. Expectations are exact (enumeration).
inline std::vector<SweepRow> attribution_sweep(const PolicyParams& params,
                                               const PolicyParams& ref, WorldConfig config,
                                               const std::vector<int>& lengths,
                                               double balance_threshold = kDefaultBalanceThreshold) {
  std::vector<SweepRow> rows;
  for (int length : lengths) {
    if (length < 1) throw std::invalid_argument("attribution_sweep: lengths must be positive");
    config.len_correct = length;
    config.len_wrong = length;
    const AttributionReport reward_report =
        attribute({expected_surrogate_gradient(params, config), Track::Reward}, balance_threshold);
    const AttributionReport kl_report =
        attribute({expected_kl_gradient(params, ref, config), Track::KL}, balance_threshold);
    for (const AttributionReport& r : {reward_report, kl_report})
      rows.push_back({length, r.track, r.sampling_magnitude, r.decision_magnitude, r.ratio,
                      r.balanced});
  }
  return rows;
}

}  // namespace dsmdp
