#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grpolab/difficulty.hpp"
#include "grpolab/grpo.hpp"
#include "grpolab/selection.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

// Shipped base policies: "strong" (high baseline, easy prompts rarely learnable)
// and "weak" (low baseline). Mirrored in profiles/<name>.json.
PolicyParams profile_params(const std::string& name);
std::vector<std::string> profile_names();
// Desk-scale learning rate paired with the shipped profiles.
inline constexpr double kProfileLearningRate = 0.05;

struct ProbeConfig {
  int k = 10;
  double temperature = 1.0;
  std::uint64_t seed = 7;
  bool operator==(const ProbeConfig&) const = default;
};

struct ExperimentConfig {
  PoolConfig pool = default_pool_config();
  std::string profile = "strong";
  std::optional<PolicyParams> base_override;  // replaces the profile when set
  ProbeConfig probe;
  double fraction = 0.10;
  std::vector<SelectionPolicy> policies{std::begin(kAllPolicies), std::end(kAllPolicies)};
  GrpoConfig grpo;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int ood_k = 8;
  double ood_temperature = 1.0;
  std::string out_dir;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig default_experiment_config();
void validate(const ExperimentConfig& config);
PolicyParams base_policy(const ExperimentConfig& config);

void to_json(nlohmann::json& j, const ExperimentConfig& c);
// Missing keys take their defaults; unknown keys are a ConfigError.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

struct RunRecord {
  SelectionPolicy policy = SelectionPolicy::random;
  std::uint64_t seed = 0;
  SelectionSummary selection;
  double base_acc = 0.0;
  double final_acc = 0.0;
  double improvement = 0.0;
  double learnable_pct = 0.0;
  std::int64_t total_rollouts = 0;
  double ood_base_acc = 0.0;
  double ood_final_acc = 0.0;
  std::vector<double> ood_base_pass;   // pass@1..pass@ood_k of the base policy
  std::vector<double> ood_final_pass;  // same samples keyed by seed, trained policy
  RunReport report;
  bool operator==(const RunRecord&) const = default;
};

struct Correlation {
  double r2 = 0.0;
  std::vector<std::pair<double, double>> points;  // (learnable %, improvement)
  bool operator==(const Correlation&) const = default;
};

struct ParityAudit {
  bool passed = false;
  std::int64_t rollouts_per_run = 0;
  int total_steps = 0;
  int batch_prompts = 0;
  int group_size = 0;
  bool operator==(const ParityAudit&) const = default;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string probe_hash;
  double base_test_acc = 0.0;
  double base_ood_acc = 0.0;
  std::vector<RunRecord> runs;  // policy-major, then seed
  std::optional<Correlation> correlation;
  ParityAudit parity;
  bool operator==(const ExperimentReport&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentReport& r);
void from_json(const nlohmann::json& j, ExperimentReport& r);

// probe -> select (per policy) -> train (per seed) -> evaluate. Writes artifacts
// under config.out_dir when it is non-empty, with a MANIFEST recording which
// stages finished. Stage failures surface as StageError.
ExperimentReport run_experiment(const ExperimentConfig& config);

enum class ReportFormat { csv, json, plotdata };
ReportFormat report_format_from_string(const std::string& s);

std::string summary_csv(const ExperimentReport& report);
std::string report_json(const ExperimentReport& report);
// Accuracy curves (mean over seeds, one series per policy) and the
// learnable %-vs-improvement scatter.
std::string plotdata_json(const ExperimentReport& report);

// Writes summary.csv, report.json or plotdata.json into `dir`; returns the path.
std::string emit_report(const ExperimentReport& report, ReportFormat format, const std::string& dir);

// Mean improvement / learnable % per policy across seeds.
struct PolicyAggregate {
  SelectionPolicy policy;
  double mean_improvement = 0.0;
  double mean_learnable_pct = 0.0;
  int runs = 0;
};
std::vector<PolicyAggregate> aggregate_by_policy(const ExperimentReport& report);

}  // namespace grpolab
