#include <cmath>

#include <doctest.h>

#include "dsmdp/calibration.hpp"
#include "test_util.hpp"

using namespace dsmdp;

namespace {

TrajectoryRecordSet simulate_records(const PolicyParams& params, const WorldConfig& world, int n,
                                     std::uint64_t seed) {
  TrajectoryRecordSet set;
  set.records.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    set.records.push_back(
        sample_trajectory(params, world, mix_seed(seed, static_cast<std::uint64_t>(i))));
  return set;
}

}  // namespace

TEST_CASE("predict_accuracy closed form on hand-worked triples") {
  // Worked initialization: a = 0.5987*0.9002, c = 0.5987*0.0998 + 0.4013*0.8022.
  const double acc = predict_accuracy(0.5987, 0.9002, 0.8022);
  const double a = 0.5987 * 0.9002;
  const double c = 0.5987 * (1.0 - 0.9002) + (1.0 - 0.5987) * 0.8022;
  CHECK(acc == doctest::Approx(a / (1.0 - c)).epsilon(1e-15));
  CHECK(acc == doctest::Approx(0.8716).epsilon(1e-3));

  // Wrong answers always resample: only correct stops, accuracy 1.
  CHECK(predict_accuracy(0.5, 1.0, 1.0) == doctest::Approx(1.0));
  // Nobody ever resamples: accuracy is the single-shot rate.
  CHECK(predict_accuracy(0.3, 1.0, 0.0) == doctest::Approx(0.3));
  // The process never stops: domain error.
  CHECK_THROWS_AS(predict_accuracy(0.5, 0.0, 1.0), std::domain_error);
}

TEST_CASE("brute force horizon accuracy equals the closed form") {
  Rng rng(71);
  for (int i = 0; i < 200; ++i) {
    const double p_s = dsmdp_test::uniform(rng, 0.01, 0.99);
    const double p_d_c = dsmdp_test::uniform(rng, 0.05, 1.0);
    const double p_d_w = dsmdp_test::uniform(rng, 0.0, 0.95);
    const double c = p_s * (1.0 - p_d_c) + (1.0 - p_s) * p_d_w;
    if (c > 0.99) continue;
    const double exact = predict_accuracy(p_s, p_d_c, p_d_w);
    CHECK(std::abs(brute_force_accuracy(p_s, p_d_c, p_d_w, 40) - exact) < 1e-9);
    // The conditional accuracy is horizon-free: it already holds at h=1.
    CHECK(std::abs(brute_force_accuracy(p_s, p_d_c, p_d_w, 1) - exact) < 1e-12);
  }
  CHECK_THROWS_AS(brute_force_accuracy(0.5, 0.9, 0.5, 0), std::invalid_argument);
}

TEST_CASE("success_probability_within follows the geometric recursion") {
  const double p_s = 0.6, p_d_c = 0.9, p_d_w = 0.7;
  const double a = p_s * p_d_c;
  const double c = p_s * (1.0 - p_d_c) + (1.0 - p_s) * p_d_w;
  CHECK(success_probability_within(p_s, p_d_c, p_d_w, 1) == doctest::Approx(a).epsilon(1e-15));
  for (int h = 1; h < 20; ++h) {
    const double s_h = success_probability_within(p_s, p_d_c, p_d_w, h);
    const double s_next = success_probability_within(p_s, p_d_c, p_d_w, h + 1);
    // Each extra round adds the mass that survived h rounds and then succeeds.
    CHECK(s_next - s_h == doctest::Approx(a * std::pow(c, h)).epsilon(1e-12));
    // Closed form of the partial geometric sum.
    CHECK(s_h == doctest::Approx(a * (1.0 - std::pow(c, h)) / (1.0 - c)).epsilon(1e-12));
  }
  // Long horizons converge to the stop-weighted closed form.
  const double limit = predict_accuracy(p_s, p_d_c, p_d_w) * (1.0 - c) / (1.0 - c);
  CHECK(success_probability_within(p_s, p_d_c, p_d_w, 500) ==
        doctest::Approx(limit * 1.0).epsilon(1e-12));
  CHECK_THROWS_AS(success_probability_within(0.5, 0.9, 0.5, 0), std::invalid_argument);
}

TEST_CASE("estimate counts the worked two-record example") {
  TrajectoryRecordSet set;
  Trajectory t1;
  t1.steps = {{AttemptOutcome::Wrong, DecisionAction::Resample},
              {AttemptOutcome::Correct, DecisionAction::Stop}};
  Trajectory t2;
  t2.steps = {{AttemptOutcome::Correct, DecisionAction::Stop}};
  set.records = {t1, t2};
  const CalibrationParams p = estimate(set);
  CHECK(p.p_s.estimate == doctest::Approx(0.5));  // first attempts: W then C
  CHECK(p.p_d_c.estimate == doctest::Approx(1.0));
  CHECK(p.p_d_w.estimate == doctest::Approx(1.0));
  CHECK(p.predicted_acc.defined);
  CHECK(p.predicted_acc.estimate == doctest::Approx(1.0));  // wrong always resamples
}

TEST_CASE("estimate skips forced terminal stops and flags undefined fields") {
  TrajectoryRecordSet set;
  Trajectory t;
  t.steps = {{AttemptOutcome::Wrong, DecisionAction::Resample},
             {AttemptOutcome::Wrong, DecisionAction::Stop}};
  t.truncated = true;
  set.records = {t};
  const CalibrationParams p = estimate(set);
  CHECK(p.p_s.estimate == 0.0);
  // Only the first wrong attempt counts; the forced STOP is not a decision.
  CHECK(p.p_d_w.estimate == doctest::Approx(1.0));
  CHECK_FALSE(p.p_d_c.defined);  // no correct attempt ever observed
  CHECK(p.p_d_c.ci_low == 0.0);
  CHECK(p.p_d_c.ci_high == 1.0);
  CHECK_FALSE(p.predicted_acc.defined);

  CHECK_THROWS_AS(estimate(TrajectoryRecordSet{}), std::invalid_argument);
  TrajectoryRecordSet bad;
  bad.records = {Trajectory{}};
  CHECK_THROWS_AS(estimate(bad), std::invalid_argument);
}

TEST_CASE("observed_accuracy uses non-truncated records only") {
  TrajectoryRecordSet set;
  Trajectory good;
  good.steps = {{AttemptOutcome::Correct, DecisionAction::Stop}};
  Trajectory bad;
  bad.steps = {{AttemptOutcome::Wrong, DecisionAction::Stop}};
  Trajectory trunc;
  trunc.steps = {{AttemptOutcome::Wrong, DecisionAction::Stop}};
  trunc.truncated = true;
  set.records = {good, good, bad, trunc};
  CHECK(observed_accuracy(set) == doctest::Approx(2.0 / 3.0));
  set.records = {trunc};
  CHECK_THROWS_AS(observed_accuracy(set), std::domain_error);
}

TEST_CASE("estimated rates converge to the policy probabilities") {
  const PolicyParams params{0.4, 2.2, 1.4};
  WorldConfig w;
  w.max_attempts = 10;
  const ActionProbs probs = action_probs(params);
  const int n = 20000;
  const CalibrationParams est = estimate(simulate_records(params, w, n, 404));
  const auto within_3_sigma = [&](double rate, double p) {
    return std::abs(rate - p) < 3.0 * std::sqrt(p * (1.0 - p) / n);
  };
  CHECK(within_3_sigma(est.p_s.estimate, probs.p_correct));
  // Decision-rate counts have more samples than n; the n-based bound is loose.
  CHECK(std::abs(est.p_d_c.estimate - probs.p_stop_given_c) < 0.02);
  CHECK(std::abs(est.p_d_w.estimate - probs.p_resample_given_w) < 0.02);
  CHECK(std::abs(est.predicted_acc.estimate -
                 predict_accuracy(probs.p_correct, probs.p_stop_given_c,
                                  probs.p_resample_given_w)) < 0.02);
}

TEST_CASE("percentile interpolation") {
  const std::vector<double> v{5.0, 1.0, 3.0, 2.0, 4.0};
  CHECK(detail::percentile(v, 0.0) == 1.0);
  CHECK(detail::percentile(v, 1.0) == 5.0);
  CHECK(detail::percentile(v, 0.5) == 3.0);
  CHECK(detail::percentile(v, 0.625) == doctest::Approx(3.5));
  CHECK_THROWS_AS(detail::percentile({}, 0.5), std::invalid_argument);
}

TEST_CASE("bootstrap is deterministic, brackets the estimate, and tightens with n") {
  const PolicyParams params{0.4, 2.2, 1.4};
  WorldConfig w;
  w.max_attempts = 10;
  const TrajectoryRecordSet small = simulate_records(params, w, 200, 505);
  const CalibrationParams a = bootstrap_ci(small, 100, 9);
  const CalibrationParams b = bootstrap_ci(small, 100, 9);
  CHECK(a.p_s.ci_low == b.p_s.ci_low);
  CHECK(a.p_s.ci_high == b.p_s.ci_high);
  CHECK(a.predicted_acc.ci_low == b.predicted_acc.ci_low);
  for (const CalibrationField* f : {&a.p_s, &a.p_d_c, &a.p_d_w, &a.predicted_acc}) {
    CHECK(f->defined);
    CHECK(f->ci_low <= f->estimate);
    CHECK(f->ci_high >= f->estimate);
    CHECK(f->ci_low < f->ci_high);
  }
  const TrajectoryRecordSet large = simulate_records(params, w, 5000, 505);
  const CalibrationParams c = bootstrap_ci(large, 100, 9);
  CHECK(c.p_s.ci_high - c.p_s.ci_low < a.p_s.ci_high - a.p_s.ci_low);
  CHECK(c.predicted_acc.ci_high - c.predicted_acc.ci_low <
        a.predicted_acc.ci_high - a.predicted_acc.ci_low);
  CHECK_THROWS_AS(bootstrap_ci(small, 1, 9), std::invalid_argument);
}

TEST_CASE("bootstrap interval covers the true accuracy at moderate n") {
  const PolicyParams params{0.4, 2.2, 1.4};
  WorldConfig w;
  w.max_attempts = 12;
  const ActionProbs probs = action_probs(params);
  const double truth = predict_accuracy(probs.p_correct, probs.p_stop_given_c,
                                        probs.p_resample_given_w);
  int covered = 0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    const TrajectoryRecordSet set =
        simulate_records(params, w, 2000, 600 + static_cast<std::uint64_t>(trial));
    const CalibrationParams p = bootstrap_ci(set, 100, 7);
    if (p.predicted_acc.ci_low <= truth && truth <= p.predicted_acc.ci_high) ++covered;
  }
  CHECK(covered >= 17);  // nominal 95% coverage; allow slack at 20 trials
}
