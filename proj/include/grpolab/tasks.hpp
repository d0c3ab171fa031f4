#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace grpolab {

enum class TaskKind { shuffled_objects, arithmetic_chain };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

// Positional swap: exchange the contents of positions a and b.
struct Swap {
  int a = 0;
  int b = 0;
  bool operator==(const Swap&) const = default;
};

enum class ArithOp { add, sub, mul };

struct ChainOp {
  ArithOp op = ArithOp::add;
  std::int64_t operand = 0;
  bool operator==(const ChainOp&) const = default;
};

std::int64_t apply_op(ArithOp op, std::int64_t value, std::int64_t operand);

// Closed integer interval of operands for arithmetic chains.
struct OperandRange {
  std::int64_t lo = 1;
  std::int64_t hi = 9;
  bool operator==(const OperandRange&) const = default;
};

// Running values of generated arithmetic chains stay within [-kValueBound, kValueBound].
inline constexpr std::int64_t kValueBound = 1'000'000;

// One synthetic reasoning problem. Shuffled-objects tasks start from the identity
// arrangement (object k at position k); truth is the final position of
// query_object. Arithmetic tasks start from initial_value; truth is the final value.
struct TaskInstance {
  std::string id;
  TaskKind kind = TaskKind::shuffled_objects;
  int num_objects = 0;
  std::vector<Swap> swaps;
  int query_object = 0;
  std::int64_t initial_value = 0;
  std::vector<ChainOp> chain_ops;
  std::int64_t truth = 0;

  // M: number of swaps or chain operations.
  int num_steps() const {
    return kind == TaskKind::shuffled_objects ? static_cast<int>(swaps.size())
                                              : static_cast<int>(chain_ops.size());
  }

  bool operator==(const TaskInstance&) const = default;
};

// Final position of query_object after composing all swaps, or the chain value.
std::int64_t recompute_truth(const TaskInstance& task);

// Builders from explicit contents; validate and fill truth.
TaskInstance make_shuffled_objects(std::string id, int num_objects, std::vector<Swap> swaps,
                                   int query_object);
TaskInstance make_arithmetic_chain(std::string id, std::int64_t initial_value,
                                   std::vector<ChainOp> ops);

// Swaps uniform over the C(N,2) distinct position pairs, query object uniform.
// N = 2 is accepted here; pools intended for training require N >= 3.
TaskInstance generate_shuffled_objects(std::uint64_t seed, int num_objects, int num_swaps);

// Initial value and additive operands uniform in operand_range. Multiplication
// is offered only when the product stays within kValueBound and uses operands
// drawn from [max(2, lo), hi]; the same bound restricts + and -.
TaskInstance generate_arithmetic_chain(std::uint64_t seed, int num_steps, OperandRange operand_range);

bool check_correct(const TaskInstance& task, std::int64_t answer) noexcept;

// Difficulty stratum: count instances with M uniform in [min_steps, max_steps] and
// N uniform in [min_objects, max_objects] (N ignored for arithmetic).
struct Stratum {
  int count = 0;
  int min_steps = 1;
  int max_steps = 1;
  int min_objects = 3;
  int max_objects = 3;
  bool operator==(const Stratum&) const = default;
};

struct PoolConfig {
  TaskKind kind = TaskKind::shuffled_objects;
  std::uint64_t master_seed = 0;
  std::vector<Stratum> train;
  std::vector<Stratum> test;
  std::vector<Stratum> ood;
  OperandRange operand_range;
  bool operator==(const PoolConfig&) const = default;
};

// Desk-scale default: 1000 train / 250 test / 100 OOD shuffled-objects tasks.
PoolConfig default_pool_config();

// Throws ConfigError when the strata are empty, inverted, or the OOD stratum
// does not strictly exceed every train M.
void validate(const PoolConfig& config);

struct TaskPool {
  std::vector<TaskInstance> train;
  std::vector<TaskInstance> test;
  std::vector<TaskInstance> ood;
  PoolConfig generation_config;
  bool operator==(const TaskPool&) const = default;
};

// Instance seeds are derive_seed(master_seed, {split, index}); ids are
// "<split>-<index>" with a zero-padded index.
TaskPool build_pool(const PoolConfig& config);

// Regenerates the single instance at (split, index) without building the pool.
TaskInstance generate_pool_instance(const PoolConfig& config, const std::string& split,
                                    std::size_t index);

void to_json(nlohmann::json& j, const TaskInstance& t);
void from_json(const nlohmann::json& j, TaskInstance& t);
void to_json(nlohmann::json& j, const Stratum& s);
void from_json(const nlohmann::json& j, Stratum& s);
void to_json(nlohmann::json& j, const PoolConfig& c);
void from_json(const nlohmann::json& j, PoolConfig& c);
void to_json(nlohmann::json& j, const TaskPool& p);
void from_json(const nlohmann::json& j, TaskPool& p);

// Canonical serialization (`.pool.json`) and its FNV-1a fingerprint.
std::string serialize_pool(const TaskPool& pool);
TaskPool parse_pool(const std::string& text);
std::uint64_t pool_hash(const TaskPool& pool);

}  // namespace grpolab
