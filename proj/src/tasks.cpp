#include "grpolab/tasks.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "grpolab/errors.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

namespace {

constexpr std::uint64_t kShuffledTag = 0x51;
constexpr std::uint64_t kArithmeticTag = 0xa7;

std::uint64_t split_tag(const std::string& split) {
  if (split == "train") return 1;
  if (split == "test") return 2;
  if (split == "ood") return 3;
  throw ParameterError("unknown split: " + split);
}

const char* op_symbol(ArithOp op) {
  switch (op) {
    case ArithOp::add: return "+";
    case ArithOp::sub: return "-";
    case ArithOp::mul: return "*";
  }
  return "?";
}

ArithOp op_from_symbol(const std::string& s) {
  if (s == "+") return ArithOp::add;
  if (s == "-") return ArithOp::sub;
  if (s == "*") return ArithOp::mul;
  throw ConfigError("unknown arithmetic operator: " + s);
}

void validate_stratum(const Stratum& s, TaskKind kind, const char* split) {
  const std::string where = std::string(split) + " stratum";
  if (s.count < 0) throw ConfigError(where + ": negative count");
  if (s.min_steps < 1 || s.max_steps < s.min_steps)
    throw ConfigError(where + ": step range must satisfy 1 <= min_steps <= max_steps");
  if (kind == TaskKind::shuffled_objects &&
      (s.min_objects < 3 || s.max_objects < s.min_objects))
    throw ConfigError(where + ": object range must satisfy 3 <= min_objects <= max_objects");
}

int total_count(const std::vector<Stratum>& strata) {
  int n = 0;
  for (const auto& s : strata) n += s.count;
  return n;
}

std::string make_id(const std::string& split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06zu", split.c_str(), index);
  return buf;
}

}  // namespace

std::string to_string(TaskKind kind) {
  return kind == TaskKind::shuffled_objects ? "shuffled_objects" : "arithmetic_chain";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "shuffled_objects") return TaskKind::shuffled_objects;
  if (s == "arithmetic_chain") return TaskKind::arithmetic_chain;
  throw ConfigError("unknown task kind: " + s);
}

std::int64_t apply_op(ArithOp op, std::int64_t value, std::int64_t operand) {
  switch (op) {
    case ArithOp::add: return value + operand;
    case ArithOp::sub: return value - operand;
    case ArithOp::mul: return value * operand;
  }
  return value;
}

std::int64_t recompute_truth(const TaskInstance& task) {
  if (task.kind == TaskKind::shuffled_objects) {
    std::vector<int> arrangement(static_cast<std::size_t>(task.num_objects));
    std::iota(arrangement.begin(), arrangement.end(), 0);
    for (const auto& s : task.swaps) std::swap(arrangement[s.a], arrangement[s.b]);
    const auto it = std::find(arrangement.begin(), arrangement.end(), task.query_object);
    return static_cast<std::int64_t>(it - arrangement.begin());
  }
  std::int64_t v = task.initial_value;
  for (const auto& op : task.chain_ops) v = apply_op(op.op, v, op.operand);
  return v;
}

TaskInstance make_shuffled_objects(std::string id, int num_objects, std::vector<Swap> swaps,
                                   int query_object) {
  if (num_objects < 2) throw ParameterError("shuffled_objects needs num_objects >= 2");
  if (swaps.empty()) throw ParameterError("shuffled_objects needs at least one swap");
  for (const auto& s : swaps) {
    if (s.a < 0 || s.b < 0 || s.a >= num_objects || s.b >= num_objects || s.a == s.b)
      throw ParameterError("swap positions must be distinct and in [0, num_objects)");
  }
  if (query_object < 0 || query_object >= num_objects)
    throw ParameterError("query_object out of range");
  TaskInstance t;
  t.id = std::move(id);
  t.kind = TaskKind::shuffled_objects;
  t.num_objects = num_objects;
  t.swaps = std::move(swaps);
  t.query_object = query_object;
  t.truth = recompute_truth(t);
  return t;
}

TaskInstance make_arithmetic_chain(std::string id, std::int64_t initial_value,
                                   std::vector<ChainOp> ops) {
  if (ops.empty()) throw ParameterError("arithmetic_chain needs at least one step");
  TaskInstance t;
  t.id = std::move(id);
  t.kind = TaskKind::arithmetic_chain;
  t.initial_value = initial_value;
  t.chain_ops = std::move(ops);
  t.truth = recompute_truth(t);
  return t;
}

TaskInstance generate_shuffled_objects(std::uint64_t seed, int num_objects, int num_swaps) {
  if (num_objects < 2) throw ParameterError("num_objects must be >= 2");
  if (num_swaps < 1) throw ParameterError("num_swaps must be >= 1");
  Rng rng(derive_seed(seed, {kShuffledTag}));
  const auto n = static_cast<std::uint64_t>(num_objects);
  const std::uint64_t pairs = n * (n - 1) / 2;
  std::vector<Swap> swaps;
  swaps.reserve(static_cast<std::size_t>(num_swaps));
  for (int m = 0; m < num_swaps; ++m) {
    // Decode a pair index into (a, b) with a < b, lexicographic order.
    std::uint64_t k = rng.below(pairs);
    int a = 0;
    while (k >= n - 1 - static_cast<std::uint64_t>(a)) {
      k -= n - 1 - static_cast<std::uint64_t>(a);
      ++a;
    }
    swaps.push_back({a, a + 1 + static_cast<int>(k)});
  }
  const int query = static_cast<int>(rng.below(n));
  return make_shuffled_objects("so-" + std::to_string(seed), num_objects, std::move(swaps), query);
}

TaskInstance generate_arithmetic_chain(std::uint64_t seed, int num_steps, OperandRange range) {
  if (num_steps < 1) throw ParameterError("num_steps must be >= 1");
  if (range.lo > range.hi) throw ParameterError("operand range is empty");
  if (std::max(std::abs(range.lo), std::abs(range.hi)) > kValueBound)
    throw ParameterError("operand range exceeds the value bound");
  Rng rng(derive_seed(seed, {kArithmeticTag}));
  const std::int64_t initial = rng.between(range.lo, range.hi);
  const std::int64_t mul_lo = std::max<std::int64_t>(2, range.lo);

  std::vector<ChainOp> ops;
  ops.reserve(static_cast<std::size_t>(num_steps));
  std::int64_t value = initial;
  auto within = [](std::int64_t v) { return v >= -kValueBound && v <= kValueBound; };
  for (int m = 0; m < num_steps; ++m) {
    // Draw from the operator/operand combinations that keep the value in bounds.
    for (;;) {
      const auto which = rng.below(3);
      ChainOp op;
      if (which == 2) {
        if (mul_lo > range.hi) continue;
        op = {ArithOp::mul, rng.between(mul_lo, range.hi)};
      } else {
        op = {which == 0 ? ArithOp::add : ArithOp::sub, rng.between(range.lo, range.hi)};
      }
      const std::int64_t next = apply_op(op.op, value, op.operand);
      if (!within(next)) continue;
      value = next;
      ops.push_back(op);
      break;
    }
  }
  return make_arithmetic_chain("ac-" + std::to_string(seed), initial, std::move(ops));
}

bool check_correct(const TaskInstance& task, std::int64_t answer) noexcept {
  return answer == task.truth;
}

PoolConfig default_pool_config() {
  PoolConfig c;
  c.kind = TaskKind::shuffled_objects;
  c.master_seed = 20250101;
  c.train = {{400, 2, 5, 3, 4}, {350, 5, 9, 3, 5}, {250, 8, 12, 4, 5}};
  c.test = {{100, 2, 5, 3, 4}, {88, 5, 9, 3, 5}, {62, 8, 12, 4, 5}};
  c.ood = {{100, 16, 24, 4, 5}};
  return c;
}

void validate(const PoolConfig& config) {
  if (config.train.empty()) throw ConfigError("pool config has no train strata");
  for (const auto& s : config.train) validate_stratum(s, config.kind, "train");
  for (const auto& s : config.test) validate_stratum(s, config.kind, "test");
  for (const auto& s : config.ood) validate_stratum(s, config.kind, "ood");
  if (total_count(config.train) < 1) throw ConfigError("pool config has zero train instances");
  if (config.kind == TaskKind::arithmetic_chain && config.operand_range.lo > config.operand_range.hi)
    throw ConfigError("operand range is empty");
  int max_train_steps = 0;
  for (const auto& s : config.train) max_train_steps = std::max(max_train_steps, s.max_steps);
  for (const auto& s : config.ood) {
    if (s.count > 0 && s.min_steps <= max_train_steps)
      throw ConfigError("ood strata must have min_steps greater than every train max_steps");
  }
}

TaskInstance generate_pool_instance(const PoolConfig& config, const std::string& split,
                                    std::size_t index) {
  const std::vector<Stratum>* strata = nullptr;
  const std::uint64_t tag = split_tag(split);
  if (tag == 1) strata = &config.train;
  if (tag == 2) strata = &config.test;
  if (tag == 3) strata = &config.ood;
  std::size_t offset = index;
  for (const auto& s : *strata) {
    if (offset < static_cast<std::size_t>(s.count)) {
      const std::uint64_t seed = derive_seed(config.master_seed, {tag, index});
      Rng shape(derive_seed(seed, {0x5a}));
      const int m = static_cast<int>(shape.between(s.min_steps, s.max_steps));
      TaskInstance t;
      if (config.kind == TaskKind::shuffled_objects) {
        const int n = static_cast<int>(shape.between(s.min_objects, s.max_objects));
        t = generate_shuffled_objects(seed, n, m);
      } else {
        t = generate_arithmetic_chain(seed, m, config.operand_range);
      }
      t.id = make_id(split, index);
      return t;
    }
    offset -= static_cast<std::size_t>(s.count);
  }
  throw ParameterError("pool index out of range for split " + split);
}

TaskPool build_pool(const PoolConfig& config) {
  validate(config);
  TaskPool pool;
  pool.generation_config = config;
  auto fill = [&](const std::vector<Stratum>& strata, const std::string& split,
                  std::vector<TaskInstance>& out) {
    const auto n = static_cast<std::size_t>(total_count(strata));
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate_pool_instance(config, split, i));
  };
  fill(config.train, "train", pool.train);
  fill(config.test, "test", pool.test);
  fill(config.ood, "ood", pool.ood);
  return pool;
}

void to_json(nlohmann::json& j, const TaskInstance& t) {
  nlohmann::json swaps = nlohmann::json::array();
  for (const auto& s : t.swaps) swaps.push_back({s.a, s.b});
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& o : t.chain_ops) ops.push_back({op_symbol(o.op), o.operand});
  j = nlohmann::json{{"id", t.id},
                     {"kind", to_string(t.kind)},
                     {"num_objects", t.num_objects},
                     {"swaps", std::move(swaps)},
                     {"query_object", t.query_object},
                     {"initial_value", t.initial_value},
                     {"chain_ops", std::move(ops)},
                     {"truth", t.truth}};
}

void from_json(const nlohmann::json& j, TaskInstance& t) {
  t.id = j.at("id").get<std::string>();
  t.kind = task_kind_from_string(j.at("kind").get<std::string>());
  t.num_objects = j.at("num_objects").get<int>();
  t.swaps.clear();
  for (const auto& s : j.at("swaps")) t.swaps.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  t.query_object = j.at("query_object").get<int>();
  t.initial_value = j.at("initial_value").get<std::int64_t>();
  t.chain_ops.clear();
  for (const auto& o : j.at("chain_ops"))
    t.chain_ops.push_back({op_from_symbol(o.at(0).get<std::string>()), o.at(1).get<std::int64_t>()});
  t.truth = j.at("truth").get<std::int64_t>();
  if (recompute_truth(t) != t.truth) throw ConfigError("task " + t.id + ": stored truth does not replay");
}

void to_json(nlohmann::json& j, const Stratum& s) {
  j = nlohmann::json{{"count", s.count},
                     {"min_steps", s.min_steps},
                     {"max_steps", s.max_steps},
                     {"min_objects", s.min_objects},
                     {"max_objects", s.max_objects}};
}

void from_json(const nlohmann::json& j, Stratum& s) {
  s.count = j.at("count").get<int>();
  s.min_steps = j.at("min_steps").get<int>();
  s.max_steps = j.at("max_steps").get<int>();
  s.min_objects = j.value("min_objects", 3);
  s.max_objects = j.value("max_objects", s.min_objects);
}

void to_json(nlohmann::json& j, const PoolConfig& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},
                     {"master_seed", c.master_seed},
                     {"train", c.train},
                     {"test", c.test},
                     {"ood", c.ood},
                     {"operand_range", {c.operand_range.lo, c.operand_range.hi}}};
}

void from_json(const nlohmann::json& j, PoolConfig& c) {
  const PoolConfig d = default_pool_config();
  c.kind = task_kind_from_string(j.value("kind", to_string(d.kind)));
  c.master_seed = j.value("master_seed", d.master_seed);
  c.train = j.contains("train") ? j.at("train").get<std::vector<Stratum>>() : d.train;
  c.test = j.contains("test") ? j.at("test").get<std::vector<Stratum>>() : d.test;
  c.ood = j.contains("ood") ? j.at("ood").get<std::vector<Stratum>>() : d.ood;
  if (j.contains("operand_range")) {
    c.operand_range = {j.at("operand_range").at(0).get<std::int64_t>(),
                       j.at("operand_range").at(1).get<std::int64_t>()};
  }
}

void to_json(nlohmann::json& j, const TaskPool& p) {
  j = nlohmann::json{{"generation_config", p.generation_config},
                     {"train", p.train},
                     {"test", p.test},
                     {"ood", p.ood}};
}

void from_json(const nlohmann::json& j, TaskPool& p) {
  p.generation_config = j.at("generation_config").get<PoolConfig>();
  p.train = j.at("train").get<std::vector<TaskInstance>>();
  p.test = j.at("test").get<std::vector<TaskInstance>>();
  p.ood = j.at("ood").get<std::vector<TaskInstance>>();
}

std::string serialize_pool(const TaskPool& pool) { return nlohmann::json(pool).dump() + "\n"; }

TaskPool parse_pool(const std::string& text) {
  try {
    return nlohmann::json::parse(text).get<TaskPool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed pool file: ") + e.what());
  }
}

std::uint64_t pool_hash(const TaskPool& pool) { return fnv1a(serialize_pool(pool)); }

}  // namespace grpolab
