#include <cmath>
#include <set>

#include <doctest.h>

#include "dsmdp/trajectory.hpp"
#include "test_util.hpp"

using namespace dsmdp;

namespace {

WorldConfig small_world(int max_attempts) {
  WorldConfig w;
  w.max_attempts = max_attempts;
  return w;
}

}  // namespace

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a(42), b(42), c(43);
  bool all_equal = true;
  bool any_diff = false;
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t x = a.next_u64();
    all_equal = all_equal && (x == b.next_u64());
    any_diff = any_diff || (x != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
  Rng d(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = d.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("mix_seed derives distinct stream seeds") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(mix_seed(123, i));
  CHECK(seen.size() == 1000);
  CHECK(mix_seed(123, 5) == mix_seed(123, 5));
  CHECK(mix_seed(123, 5) != mix_seed(124, 5));
}

TEST_CASE("sample_trajectory is a pure function of (params, config, seed)") {
  const WorldConfig w = small_world(8);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const PolicyParams params = dsmdp_test::random_params(rng);
    const std::uint64_t seed = rng.next_u64();
    const Trajectory t1 = sample_trajectory(params, w, seed);
    const Trajectory t2 = sample_trajectory(params, w, seed);
    CHECK(t1 == t2);
  }
}

TEST_CASE("saturated policies produce the forced trajectories") {
  const WorldConfig w = small_world(5);
  // Always correct, always stop: one (C, STOP) step.
  const Trajectory stop_now = sample_trajectory({30.0, 30.0, 30.0}, w, 99);
  CHECK(stop_now.attempts() == 1);
  CHECK(stop_now.steps[0].outcome == AttemptOutcome::Correct);
  CHECK(stop_now.steps[0].decision == DecisionAction::Stop);
  CHECK_FALSE(stop_now.truncated);

  // Always wrong, always resample: runs to the horizon and truncates.
  const Trajectory loop = sample_trajectory({-30.0, 30.0, 30.0}, w, 99);
  CHECK(loop.attempts() == w.max_attempts);
  CHECK(loop.truncated);
  for (const TrajectoryStep& s : loop.steps) CHECK(s.outcome == AttemptOutcome::Wrong);
  CHECK(loop.steps.back().decision == DecisionAction::Stop);  // recorded STOP
  CHECK(effective_decision(loop, loop.attempts() - 1) == DecisionAction::Resample);
}

TEST_CASE("sample_trajectory rejects invalid inputs") {
  WorldConfig w = small_world(4);
  CHECK_THROWS_AS(
      sample_trajectory({std::numeric_limits<double>::quiet_NaN(), 0, 0}, w, 1),
      std::invalid_argument);
  w.max_attempts = 0;
  CHECK_THROWS_AS(sample_trajectory({0, 0, 0}, w, 1), std::invalid_argument);
}

TEST_CASE("monte carlo first-attempt rate matches p_correct within 3 sigma") {
  const PolicyParams params{0.4, 2.2, 1.4};
  const WorldConfig w = small_world(8);
  const double p = action_probs(params).p_correct;
  const int n = 20000;
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const Trajectory t = sample_trajectory(params, w, mix_seed(2024, static_cast<std::uint64_t>(i)));
    if (t.steps[0].outcome == AttemptOutcome::Correct) ++correct;
  }
  const double rate = static_cast<double>(correct) / n;
  const double sigma = std::sqrt(p * (1.0 - p) / n);
  CHECK(std::abs(rate - p) < 3.0 * sigma);
}

TEST_CASE("enumeration lists every depth plus the truncated horizon paths") {
  const auto all = enumerate_trajectories(small_world(2));
  // depths 1 and 2 give 2 + 4 stopping paths; the 4 horizon paths recur truncated.
  CHECK(all.size() == 10);
  std::size_t truncated = 0;
  for (const Trajectory& t : all) {
    CHECK(t.attempts() >= 1);
    CHECK(t.attempts() <= 2);
    if (t.truncated) {
      ++truncated;
      CHECK(t.attempts() == 2);
    }
    for (int k = 0; k + 1 < t.attempts(); ++k)
      CHECK(t.steps[static_cast<std::size_t>(k)].decision == DecisionAction::Resample);
    CHECK(t.steps.back().decision == DecisionAction::Stop);
  }
  CHECK(truncated == 4);
  CHECK_THROWS_AS(enumerate_trajectories(small_world(21)), std::length_error);
}

TEST_CASE("enumerated probabilities sum to one") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    WorldConfig w = small_world(1 + static_cast<int>(rng.next_u64() % 8));
    const PolicyParams params = dsmdp_test::random_params(rng, -4.0, 4.0);
    double total = 0.0;
    for (const Trajectory& t : enumerate_trajectories(w)) total += std::exp(log_prob(t, params));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("log_prob factorizes over per-step conditionals") {
  Rng rng(9);
  const WorldConfig w = small_world(6);
  const auto all = enumerate_trajectories(w);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const PolicyParams params = dsmdp_test::random_params(rng);
    const Trajectory& t = all[static_cast<std::size_t>(rng.next_u64() % all.size())];
    // Independent per-step computation straight from the sigmoid definitions.
    const double p_c = sigmoid(params.theta_s);
    const double p_stop_c = sigmoid(params.theta_d_c);
    const double p_res_w = sigmoid(params.theta_d_w);
    double expected = 0.0;
    for (int k = 0; k < t.attempts(); ++k) {
      const TrajectoryStep& s = t.steps[static_cast<std::size_t>(k)];
      const bool correct = s.outcome == AttemptOutcome::Correct;
      expected += std::log(correct ? p_c : 1.0 - p_c);
      const bool resample = effective_decision(t, k) == DecisionAction::Resample;
      const double p_res = correct ? 1.0 - p_stop_c : p_res_w;
      expected += std::log(resample ? p_res : 1.0 - p_res);
    }
    CHECK(std::abs(log_prob(t, params) - expected) < 1e-12);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("log_prob of the worked two-attempt trajectory") {
  const PolicyParams params{0.4, 2.2, 1.4};
  Trajectory t;
  t.steps = {{AttemptOutcome::Wrong, DecisionAction::Resample},
             {AttemptOutcome::Correct, DecisionAction::Stop}};
  const ActionProbs p = action_probs(params);
  const double expected = p.p_wrong * p.p_resample_given_w * p.p_correct * p.p_stop_given_c;
  CHECK(std::exp(log_prob(t, params)) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.4013 * 0.8022 * 0.5987 * 0.9002).epsilon(1e-3));
}

TEST_CASE("a truncated all-wrong trajectory at theta=0 has probability 0.5^6") {
  Trajectory t;
  t.steps = {{AttemptOutcome::Wrong, DecisionAction::Resample},
             {AttemptOutcome::Wrong, DecisionAction::Resample},
             {AttemptOutcome::Wrong, DecisionAction::Stop}};
  t.truncated = true;  // final STOP stands in for a drawn RESAMPLE
  CHECK(std::exp(log_prob(t, {0, 0, 0})) == doctest::Approx(std::pow(0.5, 6)).epsilon(1e-14));
}

TEST_CASE("grad_log_prob components agree with finite differences") {
  Rng rng(21);
  const WorldConfig w = small_world(5);
  const auto all = enumerate_trajectories(w);
  for (int i = 0; i < 200; ++i) {
    const PolicyParams params = dsmdp_test::random_params(rng);
    const Trajectory& t = all[static_cast<std::size_t>(rng.next_u64() % all.size())];
    const LogProbGrad g = grad_log_prob(t, params);
    CHECK(g.sampling.d_c == 0.0);
    CHECK(g.sampling.d_w == 0.0);
    CHECK(g.decision.s == 0.0);
    const Grad3 total = g.total();
    const Grad3 fd = dsmdp_test::fd_grad(
        [&](const PolicyParams& p) { return log_prob(t, p); }, params, 1e-5);
    CHECK(std::abs(total.s - fd.s) < 1e-8);
    CHECK(std::abs(total.d_c - fd.d_c) < 1e-8);
    CHECK(std::abs(total.d_w - fd.d_w) < 1e-8);
  }
}

TEST_CASE("empty trajectories are rejected") {
  const Trajectory empty;
  CHECK_THROWS_AS(log_prob(empty, {0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(grad_log_prob(empty, {0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(empty.final_outcome(), std::logic_error);
}
