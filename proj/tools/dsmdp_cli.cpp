/**
 * Command-line front end for the two-stage retry-process laboratory.
 *
 * Subcommands:
 *   goldens   - recompute the worked-example reference values, pass/fail table
 *   simulate  - sample seeded trajectories to JSONL
 *   train     - run the training loop, emit trace CSV/JSON and a summary
 *   attribute - expected attribution sweep over attempt lengths, CSV/JSON
 *   calibrate - estimate calibration parameters from trajectory JSONL
 *
 * Exit codes: 0 success, 1 validation failure, 2 I/O or parse failure.
 */

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsmdp/attribution.hpp"
#include "dsmdp/calibration.hpp"
#include "dsmdp/goldens.hpp"
#include "dsmdp/serialize.hpp"
#include "dsmdp/trainer.hpp"

namespace {

constexpr const char* kVersion = "dsmdp 1.0.0";
constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct ResolvedConfig {
  dsmdp::PolicyParams params = dsmdp::golden_params();
  dsmdp::PolicyParams ref = dsmdp::golden_ref_params();
  dsmdp::WorldConfig world = dsmdp::golden_world();
  dsmdp::TrainConfig train;
};

/// Load a config file: `.json` as JSON, anything else as flat key = value.
/// The key-value form accepts ref_theta_* for the reference policy and
/// steps / learning_rate / ref_refresh_interval for training.
ResolvedConfig load_config(const std::string& path) {
  ResolvedConfig cfg;
  cfg.train.world = cfg.world;
  cfg.train.init = cfg.params;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw dsmdp::ParseError("cannot open config file: " + path);
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw dsmdp::ParseError(path + ": " + e.what());
    }
    if (j.contains("params")) j.at("params").get_to(cfg.params);
    if (j.contains("ref")) j.at("ref").get_to(cfg.ref);
    if (j.contains("world")) j.at("world").get_to(cfg.world);
    if (j.contains("train")) j.at("train").get_to(cfg.train);
  } else {
    const auto kv = dsmdp::parse_key_value(in);
    dsmdp::apply_key_values(kv, cfg.params);
    dsmdp::apply_key_values(kv, cfg.world);
    dsmdp::PolicyParams ref = cfg.ref;
    std::map<std::string, std::string> ref_kv;
    for (const auto& [key, value] : kv)
      if (key.rfind("ref_", 0) == 0) ref_kv[key.substr(4)] = value;
    dsmdp::apply_key_values(ref_kv, ref);
    cfg.ref = ref;
    cfg.train.steps = dsmdp::detail::parse_number(kv, "steps", cfg.train.steps);
    cfg.train.learning_rate =
        dsmdp::detail::parse_number(kv, "learning_rate", cfg.train.learning_rate);
    cfg.train.ref_refresh_interval =
        dsmdp::detail::parse_number(kv, "ref_refresh_interval", cfg.train.ref_refresh_interval);
    cfg.train.seed = dsmdp::detail::parse_number(kv, "seed", cfg.train.seed);
  }
  cfg.train.world = cfg.world;
  cfg.train.init = cfg.params;
  return cfg;
}

void dump_config(std::ostream& os, const ResolvedConfig& cfg) {
  dsmdp::write_key_values(os, cfg.params, cfg.world);
  os << "ref_theta_s = " << cfg.ref.theta_s << "\n";
  os << "ref_theta_d_c = " << cfg.ref.theta_d_c << "\n";
  os << "ref_theta_d_w = " << cfg.ref.theta_d_w << "\n";
  os << "steps = " << cfg.train.steps << "\n";
  os << "learning_rate = " << cfg.train.learning_rate << "\n";
  os << "ref_refresh_interval = " << cfg.train.ref_refresh_interval << "\n";
  os << "seed = " << cfg.train.seed << "\n";
}

void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    std::uint64_t seed, const ResolvedConfig& cfg,
                    const std::vector<std::string>& artifacts) {
  nlohmann::json manifest = {
      {"command", command},
      {"seed", seed},
      {"version", kVersion},
      {"config",
       {{"params", cfg.params}, {"ref", cfg.ref}, {"world", cfg.world}, {"train", cfg.train}}},
      {"artifacts", artifacts}};
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw dsmdp::ParseError("cannot write manifest in " + out_dir.string());
  out << manifest.dump(2) << "\n";
}

void print_q_table(std::ostream& os) {
  const auto traj = dsmdp::golden_trajectory();
  const auto params = dsmdp::golden_params();
  const auto entries = dsmdp::kl_q_values(traj, params, dsmdp::golden_ref_params(),
                                          dsmdp::golden_world());
  os << "step,action,d_k,future_v,q,score,parameter,contribution\n";
  os << std::fixed << std::setprecision(4);
  // Rows in backward order, matching the breakdown-table layout.
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    const dsmdp::QEntry& e = *it;
    std::string action, parameter;
    double score = 0.0;
    if (e.is_decision) {
      action = dsmdp::to_string(e.decision);
      const dsmdp::Grad3 g = dsmdp::decision_score(params, e.outcome, e.decision);
      parameter = e.outcome == dsmdp::AttemptOutcome::Correct ? "theta_d_c" : "theta_d_w";
      score = e.outcome == dsmdp::AttemptOutcome::Correct ? g.d_c : g.d_w;
    } else {
      action = std::string("Sample ") + dsmdp::to_string(e.outcome);
      parameter = "theta_s";
      score = dsmdp::sampling_score(params, e.outcome).s;
    }
    os << e.step << ',' << action << ',' << e.immediate << ',' << e.future << ',' << e.q << ','
       << score << ',' << parameter << ',' << score * e.q << "\n";
  }
}

int cmd_goldens(dsmdp::KlSignConvention convention, double perturb, bool dump_qvalues) {
  if (dump_qvalues) print_q_table(std::cout);
  const auto rows = dsmdp::run_goldens(convention, perturb);
  std::cout << std::left << std::setw(26) << "value" << std::right << std::setw(12) << "expected"
            << std::setw(12) << "actual" << std::setw(8) << "status" << "\n";
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& row : rows) {
    std::cout << std::left << std::setw(26) << row.name << std::right << std::setw(12)
              << row.expected << std::setw(12) << row.actual << std::setw(8)
              << (row.pass ? "PASS" : "FAIL") << "\n";
  }
  const bool ok = dsmdp::all_pass(rows);
  std::cout << (ok ? "all golden values pass" : "golden value mismatches found") << "\n";
  return ok ? kExitOk : kExitValidation;
}

std::filesystem::path prepare_out_dir(const std::string& out) {
  std::filesystem::path dir = out.empty() ? "." : out;
  std::filesystem::create_directories(dir);
  return dir;
}

int cmd_simulate(const ResolvedConfig& cfg, std::uint64_t seed, int n, const std::string& out,
                 const std::string& task) {
  const auto dir = prepare_out_dir(out);
  std::vector<dsmdp::Trajectory> trajectories;
  trajectories.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    trajectories.push_back(dsmdp::sample_trajectory(
        cfg.params, cfg.world, dsmdp::mix_seed(seed, static_cast<std::uint64_t>(i))));
  const auto path = dir / "trajectories.jsonl";
  std::ofstream os(path);
  if (!os) {
    std::cerr << "cannot write " << path << "\n";
    return kExitIo;
  }
  dsmdp::write_jsonl(os, trajectories, task);
  write_manifest(dir, "simulate", seed, cfg, {"trajectories.jsonl"});
  std::cout << "wrote " << n << " trajectories to " << path << "\n";
  return kExitOk;
}

int cmd_train(const ResolvedConfig& cfg, const std::string& out, const std::string& format) {
  const auto dir = prepare_out_dir(out);
  const dsmdp::TrainingTrace trace = dsmdp::train(cfg.train);
  std::vector<std::string> artifacts;
  if (format == "csv" || format == "both") {
    std::ofstream os(dir / "trace.csv");
    dsmdp::write_trace_csv(os, trace);
    artifacts.push_back("trace.csv");
  }
  if (format == "json" || format == "both") {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : trace.records) {
      j.push_back({{"step", r.step},
                   {"params", r.params},
                   {"reward_grad", r.reward_grad},
                   {"kl_grad", r.kl_grad},
                   {"net_grad", r.net_grad},
                   {"reward_attribution", r.reward_attribution},
                   {"kl_attribution", r.kl_attribution},
                   {"mean_reward", r.mean_reward}});
    }
    std::ofstream os(dir / "trace.json");
    os << j.dump(2) << "\n";
    artifacts.push_back("trace.json");
  }
  const dsmdp::TrainSummary summary = dsmdp::summarize(trace);
  {
    nlohmann::json j = {{"final_params", summary.final_params},
                        {"final_p_correct", summary.final_probs.p_correct},
                        {"final_p_stop_given_c", summary.final_probs.p_stop_given_c},
                        {"final_p_resample_given_w", summary.final_probs.p_resample_given_w},
                        {"mean_reward_ratio_track", summary.mean_reward_ratio_track},
                        {"mean_kl_ratio_track", summary.mean_kl_ratio_track},
                        {"final_mean_reward", summary.final_mean_reward},
                        {"detected_period", summary.detected_period},
                        {"diverged", trace.diverged}};
    std::ofstream os(dir / "summary.json");
    os << j.dump(2) << "\n";
    artifacts.push_back("summary.json");
  }
  write_manifest(dir, "train", cfg.train.seed, cfg, artifacts);
  std::cout << "trained " << trace.records.size() << " steps; trace in " << dir << "\n";
  if (trace.diverged) {
    std::cerr << "training diverged at step " << trace.diverged_at_step << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

int cmd_attribute(const ResolvedConfig& cfg, const std::vector<int>& lengths,
                  const std::string& out, const std::string& format) {
  const auto dir = prepare_out_dir(out);
  const auto rows = dsmdp::attribution_sweep(cfg.params, cfg.ref, cfg.world, lengths);
  std::vector<std::string> artifacts;
  if (format == "csv" || format == "both") {
    std::ofstream os(dir / "sweep.csv");
    dsmdp::write_sweep_csv(os, rows);
    artifacts.push_back("sweep.csv");
  }
  if (format == "json" || format == "both") {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& row : rows)
      j.push_back({{"L", row.length},
                   {"track", dsmdp::to_string(row.track)},
                   {"sampling_magnitude", row.sampling_magnitude},
                   {"decision_magnitude", row.decision_magnitude},
                   {"ratio", row.ratio},
                   {"balanced", row.balanced}});
    std::ofstream os(dir / "sweep.json");
    os << j.dump(2) << "\n";
    artifacts.push_back("sweep.json");
  }
  write_manifest(dir, "attribute", 0, cfg, artifacts);
  std::cout << "attribution sweep over " << lengths.size() << " lengths in " << dir << "\n";
  return kExitOk;
}

int cmd_calibrate(const ResolvedConfig& cfg, const std::string& input, int bootstrap_n,
                  bool by_task, std::uint64_t seed, const std::string& out) {
  std::ifstream in(input);
  if (!in) {
    std::cerr << "cannot open input: " << input << "\n";
    return kExitIo;
  }
  auto sets = dsmdp::read_jsonl(in);
  if (sets.empty()) {
    std::cerr << "no trajectory records in " << input << "\n";
    return kExitValidation;
  }
  if (!by_task) {
    // Collapse all tasks into one set.
    dsmdp::TrajectoryRecordSet merged;
    for (auto& [task, set] : sets)
      merged.records.insert(merged.records.end(), set.records.begin(), set.records.end());
    sets.clear();
    sets[""] = std::move(merged);
  }
  const auto dir = prepare_out_dir(out);
  nlohmann::json report = nlohmann::json::array();
  for (const auto& [task, set] : sets) {
    const dsmdp::CalibrationParams params = dsmdp::bootstrap_ci(set, bootstrap_n, seed);
    nlohmann::json entry = {{"task", task},
                            {"n", set.records.size()},
                            {"params", params}};
    try {
      entry["observed_acc"] = dsmdp::observed_accuracy(set);
    } catch (const std::domain_error&) {
      entry["observed_acc"] = nullptr;
    }
    report.push_back(entry);
  }
  const auto path = dir / "calibration.json";
  std::ofstream os(path);
  os << report.dump(2) << "\n";
  write_manifest(dir, "calibrate", seed, cfg, {"calibration.json"});
  std::cout << "calibration report in " << path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage retry-process gradient laboratory"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();  // accept the common options after the subcommand too

  std::string config_path;
  std::string out_dir;
  std::string format = "csv";
  std::string convention = "appendixc";
  std::uint64_t seed = 0;
  bool do_dump_config = false;
  app.add_option("--config", config_path, "config file (key = value, or .json)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--format", format, "output format")
      ->check(CLI::IsMember({"csv", "json", "both"}));
  app.add_option("--convention", convention, "penalty sign convention")
      ->check(CLI::IsMember({"appendixc", "section3"}));
  app.add_option("--seed", seed, "base RNG seed");
  app.add_flag("--dump-config", do_dump_config, "print the resolved config and exit");

  auto* goldens = app.add_subcommand("goldens", "check the worked-example reference values");
  double perturb = 0.0;
  bool dump_qvalues = false;
  goldens->add_option("--perturb-theta-s", perturb,
                      "offset the sampling logit (negative control)");
  goldens->add_flag("--dump-qvalues", dump_qvalues, "print the per-action Q table");

  auto* simulate = app.add_subcommand("simulate", "sample trajectories to JSONL");
  int n_trajectories = 1000;
  std::string task_label;
  simulate->add_option("--n", n_trajectories, "number of trajectories")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--task", task_label, "task label stamped on every record");

  auto* train = app.add_subcommand("train", "run the training loop");

  auto* attribute = app.add_subcommand("attribute", "attribution sweep over lengths");
  std::vector<int> lengths = {1, 8, 64};
  attribute->add_option("--lengths", lengths, "attempt lengths to sweep");

  auto* calibrate = app.add_subcommand("calibrate", "estimate calibration parameters");
  std::string input_path;
  int bootstrap_n = 100;
  bool by_task = false;
  calibrate->add_option("--input", input_path, "trajectory JSONL file")->required();
  calibrate->add_option("--bootstrap", bootstrap_n, "bootstrap resamples")
      ->check(CLI::Range(2, 1000000));
  calibrate->add_flag("--by-task", by_task, "one report entry per task label");

  CLI11_PARSE(app, argc, argv);

  try {
    ResolvedConfig cfg = load_config(config_path);
    cfg.world.kl_sign_convention = dsmdp::kl_convention_from_string(convention);
    cfg.train.world.kl_sign_convention = cfg.world.kl_sign_convention;
    if (app.count("--seed") > 0) cfg.train.seed = seed;
    if (do_dump_config) {
      dump_config(std::cout, cfg);
      return kExitOk;
    }
    cfg.world.validate();

    if (goldens->parsed())
      return cmd_goldens(cfg.world.kl_sign_convention, perturb, dump_qvalues);
    if (simulate->parsed())
      return cmd_simulate(cfg, cfg.train.seed, n_trajectories, out_dir, task_label);
    if (train->parsed()) return cmd_train(cfg, out_dir, format);
    if (attribute->parsed()) return cmd_attribute(cfg, lengths, out_dir, format);
    if (calibrate->parsed())
      return cmd_calibrate(cfg, input_path, bootstrap_n, by_task, cfg.train.seed, out_dir);
  } catch (const dsmdp::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
