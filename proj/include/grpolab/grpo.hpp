#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "grpolab/eval.hpp"
#include "grpolab/policy.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

enum class LrSchedule { cosine, constant };
enum class KlSchedule { constant, linear_decay };

struct GrpoConfig {
  int group_size = 8;
  double kl_beta = 0.1;
  KlSchedule kl_schedule = KlSchedule::constant;
  int total_steps = 1000;
  int batch_prompts = 32;
  double lr0 = 3e-5;
  LrSchedule lr_schedule = LrSchedule::cosine;
  int eval_every = 100;
  double train_temperature = 1.0;
  std::uint64_t seed = 0;
  bool normalize_by_std = false;  // (r - mean) / std variant
  double momentum = 0.0;          // heavy-ball coefficient; 0 is plain gradient ascent
  bool operator==(const GrpoConfig&) const = default;
};

void validate(const GrpoConfig& config);
void to_json(nlohmann::json& j, const GrpoConfig& c);
void from_json(const nlohmann::json& j, GrpoConfig& c);

// Cosine: lr0 * (1 + cos(pi t / T)) / 2, reaching 0 at t = T. Accepts 0 <= t <= T.
double lr_at(const GrpoConfig& config, int step);
double beta_at(const GrpoConfig& config, int step);

struct Advantages {
  double baseline = 0.0;
  std::vector<double> advantages;
};

// A_i = r_i - mean(r). With normalize_by_std the centred rewards are divided by
// the population std (left at 0 for zero-variance groups).
Advantages compute_advantages(std::span<const int> rewards, bool normalize_by_std = false);

// True iff the group holds both a 0 and a 1 reward.
bool is_learnable(std::span<const int> rewards);

struct GroupRollout {
  std::string task_id;
  std::vector<Trajectory> trajectories;
  std::vector<int> rewards;
  double baseline = 0.0;
  std::vector<double> advantages;
  bool learnable = false;
};

struct StepMetrics {
  int step = 0;
  double lr = 0.0;
  double mean_reward = 0.0;
  int learnable_groups = 0;
  int total_groups = 0;
  double mean_kl = 0.0;
  double grad_norm = 0.0;
  bool operator==(const StepMetrics&) const = default;
};

void to_json(nlohmann::json& j, const StepMetrics& m);
void from_json(const nlohmann::json& j, StepMetrics& m);

class TrainState {
 public:
  explicit TrainState(PolicyParams base)
      : params(base), velocity(FeatureSpec::kDim, 0.0), ref_(std::move(base)) {}

  PolicyParams params;
  int step = 0;
  std::vector<StepMetrics> metrics_log;
  std::map<int, PolicyParams> checkpoints;
  std::vector<double> velocity;

  // Frozen copy of the initial policy.
  const PolicyParams& ref_params() const noexcept { return ref_; }

 private:
  PolicyParams ref_;
};

// Everything one update computed, for instrumentation and tests.
struct StepOutcome {
  StepMetrics metrics;
  std::vector<GroupRollout> groups;
  std::vector<std::vector<double>> group_advantage_grads;  // (1/(B G)) sum_i A_i grad log pi, per group
  std::vector<double> kl_grad;                             // (1/B) sum_groups grad KL
  std::vector<double> gradient;                            // ascent direction actually applied
};

// One GRPO update on `batch` (exactly B prompts). Rollout (slot, i) draws from
// the stream derive_seed(stream_seed, {slot, hash(task id), i}).
StepOutcome grpo_step(TrainState& state, std::span<const TaskInstance* const> batch,
                      const GrpoConfig& config, std::uint64_t stream_seed);

using EvalHook = std::function<EvalRecord(int step, const PolicyParams& params)>;

struct RunReport {
  std::vector<StepMetrics> metrics;
  std::vector<EvalRecord> evaluations;       // step 0 plus every checkpoint
  std::map<int, PolicyParams> checkpoints;   // every eval_every steps and at T
  PolicyParams final_params;
  double learnable_pct = 0.0;
  std::int64_t total_rollouts = 0;
  bool operator==(const RunReport&) const = default;
};

void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);

// Runs exactly T steps, drawing B prompts uniformly with replacement from
// `subset` each step. eval_hook (optional) runs at step 0 and at every checkpoint.
RunReport train(const std::vector<TaskInstance>& subset, const PolicyParams& base,
                const GrpoConfig& config, const EvalHook& eval_hook = {});

// 100 * learnable groups / total groups over the whole run.
double learnable_percentage(const RunReport& report);
double learnable_percentage(const std::vector<StepMetrics>& metrics);

// `.metrics.jsonl` lines: {"type":"step",...} per step, {"type":"eval",...} per evaluation.
std::string serialize_metrics(const RunReport& report);

}  // namespace grpolab
