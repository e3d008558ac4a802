#pragma once

/**
 * Three-logit two-stage policy.
 *
 * A retry process is parameterized by three logits:
 *   theta_s   - probability of sampling a correct answer, P(C) = sigmoid(theta_s)
 *   theta_d_c - probability of stopping on a correct answer, P(STOP|C)
 *   theta_d_w - probability of resampling a wrong answer, P(RESAMPLE|W)
 *
 * All quantities are plain doubles; every function here is pure.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsmdp {

/// Sign convention for the per-token reference-policy penalty d = s * log(pi/pi_ref).
enum class KlSignConvention {
  Section3,   ///< d = +log(pi_theta / pi_ref)
  AppendixC,  ///< d = -log(pi_theta / pi_ref)
};

inline double kl_sign(KlSignConvention c) {
  return c == KlSignConvention::Section3 ? 1.0 : -1.0;
}

struct PolicyParams {
  double theta_s = 0.0;
  double theta_d_c = 0.0;
  double theta_d_w = 0.0;

  bool finite() const {
    return std::isfinite(theta_s) && std::isfinite(theta_d_c) && std::isfinite(theta_d_w);
  }
};

/// World/objective configuration shared across modules.
struct WorldConfig {
  int len_correct = 8;   ///< token length of a correct attempt
  int len_wrong = 8;     ///< token length of a wrong attempt
  double gamma = 1.0;    ///< discount, (0,1]
  int max_attempts = 8;  ///< horizon cap on attempts
  double kl_weight = 1.0;
  int group_size = 8;
  KlSignConvention kl_sign_convention = KlSignConvention::AppendixC;

  void validate() const {
    if (len_correct < 1 || len_wrong < 1) throw std::invalid_argument("lengths must be >= 1");
    if (!(gamma > 0.0) || gamma > 1.0) throw std::invalid_argument("gamma must be in (0,1]");
    if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
    if (kl_weight < 0.0) throw std::invalid_argument("kl_weight must be >= 0");
    if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  }
};

/// Numerically stable logistic sigmoid. Throws on non-finite input.
inline double sigmoid(double logit) {
  if (!std::isfinite(logit)) throw std::invalid_argument("sigmoid: non-finite logit");
  if (logit >= 0.0) {
    return 1.0 / (1.0 + std::exp(-logit));
  }
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

struct ActionProbs {
  double p_correct;
  double p_wrong;
  double p_stop_given_c;
  double p_resample_given_c;
  double p_resample_given_w;
  double p_stop_given_w;
};

inline ActionProbs action_probs(const PolicyParams& params) {
  if (!params.finite()) throw std::invalid_argument("action_probs: non-finite params");
  ActionProbs p{};
  p.p_correct = sigmoid(params.theta_s);
  p.p_wrong = 1.0 - p.p_correct;
  p.p_stop_given_c = sigmoid(params.theta_d_c);
  p.p_resample_given_c = 1.0 - p.p_stop_given_c;
  p.p_resample_given_w = sigmoid(params.theta_d_w);
  p.p_stop_given_w = 1.0 - p.p_resample_given_w;
  return p;
}

enum class AttemptOutcome : std::uint8_t { Correct, Wrong };
enum class DecisionAction : std::uint8_t { Stop, Resample };

inline const char* to_string(AttemptOutcome o) {
  return o == AttemptOutcome::Correct ? "C" : "W";
}
inline const char* to_string(DecisionAction d) {
  return d == DecisionAction::Stop ? "STOP" : "RESAMPLE";
}

/// Per-parameter vector (d/dtheta_s, d/dtheta_d_c, d/dtheta_d_w).
struct Grad3 {
  double s = 0.0;
  double d_c = 0.0;
  double d_w = 0.0;

  Grad3& operator+=(const Grad3& o) {
    s += o.s;
    d_c += o.d_c;
    d_w += o.d_w;
    return *this;
  }
  friend Grad3 operator+(Grad3 a, const Grad3& b) { return a += b; }
  friend Grad3 operator*(double k, const Grad3& g) { return {k * g.s, k * g.d_c, k * g.d_w}; }
  friend Grad3 operator-(const Grad3& g) { return {-g.s, -g.d_c, -g.d_w}; }

  bool finite() const { return std::isfinite(s) && std::isfinite(d_c) && std::isfinite(d_w); }
};

/// Score of the sampling action: d log pi_sample(outcome) / d theta.
/// Only the theta_s slot is nonzero.
inline Grad3 sampling_score(const PolicyParams& params, AttemptOutcome outcome) {
  const double p = sigmoid(params.theta_s);
  Grad3 g;
  g.s = (outcome == AttemptOutcome::Correct) ? (1.0 - p) : -p;
  return g;
}

/// Score of the decision action: d log pi_d(decision|outcome) / d theta.
/// Exactly one decision slot is nonzero, selected by the conditioning outcome.
inline Grad3 decision_score(const PolicyParams& params, AttemptOutcome outcome,
                            DecisionAction decision) {
  Grad3 g;
  if (outcome == AttemptOutcome::Correct) {
    const double p = sigmoid(params.theta_d_c);  // P(STOP|C)
    g.d_c = (decision == DecisionAction::Stop) ? (1.0 - p) : -p;
  } else {
    const double p = sigmoid(params.theta_d_w);  // P(RESAMPLE|W)
    g.d_w = (decision == DecisionAction::Resample) ? (1.0 - p) : -p;
  }
  return g;
}

struct ScoreComponents {
  Grad3 sampling;
  Grad3 decision;
};

/// Scores of one (attempt, decision) step, split by policy component.
inline ScoreComponents score_components(const PolicyParams& params, AttemptOutcome outcome,
                                        DecisionAction decision) {
  return {sampling_score(params, outcome), decision_score(params, outcome, decision)};
}

/// Probability of `outcome` under the sampling policy.
inline double sample_prob(const PolicyParams& params, AttemptOutcome outcome) {
  const double p = sigmoid(params.theta_s);
  return outcome == AttemptOutcome::Correct ? p : 1.0 - p;
}

/// Probability of `decision` under the decision policy, conditioned on `outcome`.
inline double decision_prob(const PolicyParams& params, AttemptOutcome outcome,
                            DecisionAction decision) {
  if (outcome == AttemptOutcome::Correct) {
    const double p = sigmoid(params.theta_d_c);
    return decision == DecisionAction::Stop ? p : 1.0 - p;
  }
  const double p = sigmoid(params.theta_d_w);
  return decision == DecisionAction::Resample ? p : 1.0 - p;
}

/// Token length of an attempt with the given outcome.
inline int attempt_length(const WorldConfig& config, AttemptOutcome outcome) {
  return outcome == AttemptOutcome::Correct ? config.len_correct : config.len_wrong;
}

}  // namespace dsmdp
