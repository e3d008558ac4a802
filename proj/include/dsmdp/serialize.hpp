#pragma once

/**
 * File formats: JSON config round-trips, flat `key = value` config files,
 * JSONL trajectory records, and CSV emitters for traces and sweep tables.
 */

#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsmdp/attribution.hpp"
#include "dsmdp/calibration.hpp"
#include "dsmdp/policy.hpp"
#include "dsmdp/trainer.hpp"
#include "dsmdp/trajectory.hpp"

namespace dsmdp {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string to_config_string(KlSignConvention c) {
  return c == KlSignConvention::AppendixC ? "appendixc" : "section3";
}

inline KlSignConvention kl_convention_from_string(const std::string& s) {
  if (s == "appendixc") return KlSignConvention::AppendixC;
  if (s == "section3") return KlSignConvention::Section3;
  throw ParseError("unknown kl_sign_convention: '" + s + "' (expected appendixc|section3)");
}

// ---- JSON ------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const PolicyParams& p) {
  j = {{"theta_s", p.theta_s}, {"theta_d_c", p.theta_d_c}, {"theta_d_w", p.theta_d_w}};
}

inline void from_json(const nlohmann::json& j, PolicyParams& p) {
  j.at("theta_s").get_to(p.theta_s);
  j.at("theta_d_c").get_to(p.theta_d_c);
  j.at("theta_d_w").get_to(p.theta_d_w);
}

inline void to_json(nlohmann::json& j, const WorldConfig& w) {
  j = {{"len_correct", w.len_correct},
       {"len_wrong", w.len_wrong},
       {"gamma", w.gamma},
       {"max_attempts", w.max_attempts},
       {"kl_weight", w.kl_weight},
       {"group_size", w.group_size},
       {"kl_sign_convention", to_config_string(w.kl_sign_convention)}};
}

inline void from_json(const nlohmann::json& j, WorldConfig& w) {
  j.at("len_correct").get_to(w.len_correct);
  j.at("len_wrong").get_to(w.len_wrong);
  j.at("gamma").get_to(w.gamma);
  j.at("max_attempts").get_to(w.max_attempts);
  j.at("kl_weight").get_to(w.kl_weight);
  j.at("group_size").get_to(w.group_size);
  w.kl_sign_convention = kl_convention_from_string(j.at("kl_sign_convention").get<std::string>());
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"learning_rate", c.learning_rate},
       {"ref_refresh_interval", c.ref_refresh_interval},
       {"seed", c.seed},
       {"world", c.world},
       {"init", c.init}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("steps").get_to(c.steps);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("ref_refresh_interval").get_to(c.ref_refresh_interval);
  j.at("seed").get_to(c.seed);
  j.at("world").get_to(c.world);
  j.at("init").get_to(c.init);
}

inline void to_json(nlohmann::json& j, const Grad3& g) {
  j = {{"d_theta_s", g.s}, {"d_theta_d_c", g.d_c}, {"d_theta_d_w", g.d_w}};
}

inline void to_json(nlohmann::json& j, const ObjectiveGradient& g) {
  j = {{"track", to_string(g.track)}, {"grad", g.grad}};
}

inline void to_json(nlohmann::json& j, const AttributionReport& r) {
  j = {{"track", to_string(r.track)},
       {"sampling_magnitude", r.sampling_magnitude},
       {"decision_magnitude", r.decision_magnitude},
       {"ratio", r.ratio},
       {"balanced", r.balanced},
       {"zero_gradient", r.zero_gradient}};
}

inline void to_json(nlohmann::json& j, const CalibrationField& f) {
  j = {{"estimate", f.estimate}, {"ci_low", f.ci_low}, {"ci_high", f.ci_high},
       {"defined", f.defined}};
}

inline void to_json(nlohmann::json& j, const CalibrationParams& p) {
  j = {{"p_s", p.p_s}, {"p_d_c", p.p_d_c}, {"p_d_w", p.p_d_w},
       {"predicted_acc", p.predicted_acc}};
}

// ---- Trajectory JSONL ------------------------------------------------------

inline nlohmann::json trajectory_to_json(const Trajectory& traj) {
  nlohmann::json steps = nlohmann::json::array();
  for (const TrajectoryStep& step : traj.steps)
    steps.push_back({{"outcome", to_string(step.outcome)},
                     {"decision", to_string(step.decision)}});
  return {{"steps", steps}, {"truncated", traj.truncated}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory traj;
  for (const nlohmann::json& s : j.at("steps")) {
    const std::string outcome = s.at("outcome").get<std::string>();
    const std::string decision = s.at("decision").get<std::string>();
    TrajectoryStep step{};
    if (outcome == "C")
      step.outcome = AttemptOutcome::Correct;
    else if (outcome == "W")
      step.outcome = AttemptOutcome::Wrong;
    else
      throw ParseError("bad outcome '" + outcome + "' (expected C|W)");
    if (decision == "STOP")
      step.decision = DecisionAction::Stop;
    else if (decision == "RESAMPLE")
      step.decision = DecisionAction::Resample;
    else
      throw ParseError("bad decision '" + decision + "' (expected STOP|RESAMPLE)");
    traj.steps.push_back(step);
  }
  traj.truncated = j.value("truncated", false);
  if (traj.steps.empty()) throw ParseError("trajectory record with no steps");
  return traj;
}

inline void write_jsonl(std::ostream& os, const std::vector<Trajectory>& trajectories,
                        const std::string& task_label = "") {
  for (const Trajectory& traj : trajectories) {
    nlohmann::json line = trajectory_to_json(traj);
    if (!task_label.empty()) line["task"] = task_label;
    os << line.dump() << "\n";
  }
}

/// Parse a JSONL stream into record sets keyed by task label (records without
/// a task field land under "").
inline std::map<std::string, TrajectoryRecordSet> read_jsonl(std::istream& is) {
  std::map<std::string, TrajectoryRecordSet> sets;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      const std::string task = j.value("task", "");
      TrajectoryRecordSet& set = sets[task];
      set.task_label = task;
      set.records.push_back(trajectory_from_json(j));
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return sets;
}

// ---- Flat key = value config ----------------------------------------------

inline std::map<std::string, std::string> parse_key_value(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(lineno) + ": expected 'key = value'");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

namespace detail {

template <typename T>
T parse_number(const std::map<std::string, std::string>& kv, const std::string& key, T fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::istringstream ss(it->second);
  T value;
  ss >> value;
  if (ss.fail()) throw ParseError("bad value for '" + key + "': " + it->second);
  return value;
}

}  // namespace detail

inline void apply_key_values(const std::map<std::string, std::string>& kv, PolicyParams& p) {
  p.theta_s = detail::parse_number(kv, "theta_s", p.theta_s);
  p.theta_d_c = detail::parse_number(kv, "theta_d_c", p.theta_d_c);
  p.theta_d_w = detail::parse_number(kv, "theta_d_w", p.theta_d_w);
}

inline void apply_key_values(const std::map<std::string, std::string>& kv, WorldConfig& w) {
  w.len_correct = detail::parse_number(kv, "len_correct", w.len_correct);
  w.len_wrong = detail::parse_number(kv, "len_wrong", w.len_wrong);
  w.gamma = detail::parse_number(kv, "gamma", w.gamma);
  w.max_attempts = detail::parse_number(kv, "max_attempts", w.max_attempts);
  w.kl_weight = detail::parse_number(kv, "kl_weight", w.kl_weight);
  w.group_size = detail::parse_number(kv, "group_size", w.group_size);
  if (const auto it = kv.find("kl_sign_convention"); it != kv.end())
    w.kl_sign_convention = kl_convention_from_string(it->second);
}

inline void write_key_values(std::ostream& os, const PolicyParams& p, const WorldConfig& w) {
  os << std::setprecision(17);
  os << "theta_s = " << p.theta_s << "\n";
  os << "theta_d_c = " << p.theta_d_c << "\n";
  os << "theta_d_w = " << p.theta_d_w << "\n";
  os << "len_correct = " << w.len_correct << "\n";
  os << "len_wrong = " << w.len_wrong << "\n";
  os << "gamma = " << w.gamma << "\n";
  os << "max_attempts = " << w.max_attempts << "\n";
  os << "kl_weight = " << w.kl_weight << "\n";
  os << "group_size = " << w.group_size << "\n";
  os << "kl_sign_convention = " << to_config_string(w.kl_sign_convention) << "\n";
}

// ---- CSV -------------------------------------------------------------------

// CSV dialect: comma separator, '.' decimal point, header row, LF endings.

inline void write_trace_csv(std::ostream& os, const TrainingTrace& trace) {
  os << std::setprecision(17);
  os << "step,theta_s,theta_d_c,theta_d_w,p_correct,p_stop_given_c,p_resample_given_w,"
        "reward_grad_s,reward_grad_d_c,reward_grad_d_w,"
        "kl_grad_s,kl_grad_d_c,kl_grad_d_w,"
        "net_grad_s,net_grad_d_c,net_grad_d_w,"
        "reward_ratio,kl_ratio,mean_reward\n";
  for (const StepRecord& r : trace.records) {
    os << r.step << ',' << r.params.theta_s << ',' << r.params.theta_d_c << ','
       << r.params.theta_d_w << ',' << r.probs.p_correct << ',' << r.probs.p_stop_given_c << ','
       << r.probs.p_resample_given_w << ',' << r.reward_grad.s << ',' << r.reward_grad.d_c << ','
       << r.reward_grad.d_w << ',' << r.kl_grad.s << ',' << r.kl_grad.d_c << ','
       << r.kl_grad.d_w << ',' << r.net_grad.s << ',' << r.net_grad.d_c << ','
       << r.net_grad.d_w << ',' << r.reward_attribution.ratio << ',' << r.kl_attribution.ratio
       << ',' << r.mean_reward << "\n";
  }
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << std::setprecision(17);
  os << "L,track,sampling_magnitude,decision_magnitude,ratio,balanced\n";
  for (const SweepRow& row : rows) {
    os << row.length << ',' << to_string(row.track) << ',' << row.sampling_magnitude << ','
       << row.decision_magnitude << ',' << row.ratio << ',' << (row.balanced ? 1 : 0) << "\n";
  }
}

}  // namespace dsmdp
