#include "grpolab/policy.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <unordered_map>

#include "grpolab/errors.hpp"

namespace grpolab {

namespace {

constexpr std::array<std::int64_t, 4> kPerturbations{+1, -1, +10, -10};

int pair_count(int n) { return n * (n - 1) / 2; }

// Lexicographic index of the unordered pair {a, b}.
int pair_index(int n, int a, int b) {
  if (a > b) std::swap(a, b);
  return a * n - a * (a + 1) / 2 + (b - a - 1);
}

Swap pair_at(int n, int index) {
  int a = 0;
  while (index >= n - 1 - a) {
    index -= n - 1 - a;
    ++a;
  }
  return {a, a + 1 + index};
}

// k-th (1-based) alternative pair index at a step whose instructed pair is `instructed`.
int alternative_pair(int instructed, int k) { return k - 1 < instructed ? k - 1 : k; }

std::int64_t saturating(ArithOp op, std::int64_t v, std::int64_t x) {
  std::int64_t out = 0;
  bool overflow = false;
  switch (op) {
    case ArithOp::add: overflow = __builtin_add_overflow(v, x, &out); break;
    case ArithOp::sub: overflow = __builtin_sub_overflow(v, x, &out); break;
    case ArithOp::mul: overflow = __builtin_mul_overflow(v, x, &out); break;
  }
  if (!overflow) return out;
  const bool negative = op == ArithOp::mul ? ((v < 0) != (x < 0)) : v < 0;
  return negative ? std::numeric_limits<std::int64_t>::min()
                  : std::numeric_limits<std::int64_t>::max();
}

std::int64_t arithmetic_step(const ChainOp& instructed, std::int64_t value, int action) {
  if (action == 0) return saturating(instructed.op, value, instructed.operand);
  return saturating(ArithOp::add, value, kPerturbations[static_cast<std::size_t>(action - 1)]);
}

void check_steps(const TaskInstance& task, int step) {
  if (step < 0 || step >= task.num_steps()) throw ContractError("step index out of range");
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ParameterError("temperature must be positive and finite");
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double dot(const std::vector<double>& theta, const Features& phi) {
  double s = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) s += theta[i] * phi[i];
  return s;
}

// Arrangements of N objects with a transposition table, built once per N.
struct PermutationTable {
  int n = 0;
  std::vector<std::vector<int>> arrangements;  // arrangement[pos] = object
  std::vector<int> next;                       // next[state * pairs + pair]
  int identity = 0;
};

const PermutationTable& permutation_table(int n) {
  static std::array<PermutationTable, kMaxExactObjects + 1> tables;
  static std::array<std::once_flag, kMaxExactObjects + 1> once;
  std::call_once(once[static_cast<std::size_t>(n)], [n] {
    PermutationTable& t = tables[static_cast<std::size_t>(n)];
    t.n = n;
    std::vector<int> a(static_cast<std::size_t>(n));
    std::iota(a.begin(), a.end(), 0);
    std::map<std::vector<int>, int> index;
    do {
      index.emplace(a, static_cast<int>(t.arrangements.size()));
      t.arrangements.push_back(a);
    } while (std::next_permutation(a.begin(), a.end()));
    t.identity = 0;
    const int pairs = pair_count(n);
    t.next.resize(t.arrangements.size() * static_cast<std::size_t>(pairs));
    for (std::size_t s = 0; s < t.arrangements.size(); ++s) {
      for (int k = 0; k < pairs; ++k) {
        auto b = t.arrangements[s];
        const Swap sw = pair_at(n, k);
        std::swap(b[sw.a], b[sw.b]);
        t.next[s * pairs + k] = index.at(b);
      }
    }
  });
  return tables[static_cast<std::size_t>(n)];
}

double shuffled_success(const PolicyParams& params, const TaskInstance& task, double temperature) {
  const PermutationTable& table = permutation_table(task.num_objects);
  const int pairs = pair_count(task.num_objects);
  const std::size_t states = table.arrangements.size();
  std::vector<double> mass(states, 0.0), next(states, 0.0);
  mass[table.identity] = 1.0;
  for (int t = 0; t < task.num_steps(); ++t) {
    const double p = step_success_prob(params, task, t, temperature);
    const double q = pairs > 1 ? (1.0 - p) / (pairs - 1) : 0.0;
    const int instructed = pair_index(task.num_objects, task.swaps[t].a, task.swaps[t].b);
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < states; ++s) {
      const double m = mass[s];
      if (m == 0.0) continue;
      const int* row = &table.next[s * pairs];
      for (int k = 0; k < pairs; ++k) next[row[k]] += m * (k == instructed ? p : q);
    }
    mass.swap(next);
  }
  double success = 0.0;
  for (std::size_t s = 0; s < states; ++s) {
    if (table.arrangements[s][static_cast<std::size_t>(task.truth)] == task.query_object)
      success += mass[s];
  }
  return success;
}

double arithmetic_success(const PolicyParams& params, const TaskInstance& task, double temperature) {
  std::map<std::int64_t, double> mass{{task.initial_value, 1.0}};
  const double share = 1.0 / static_cast<double>(kPerturbations.size());
  for (int t = 0; t < task.num_steps(); ++t) {
    const double p = step_success_prob(params, task, t, temperature);
    std::map<std::int64_t, double> next;
    for (const auto& [value, m] : mass) {
      next[arithmetic_step(task.chain_ops[t], value, 0)] += m * p;
      for (int k = 1; k <= static_cast<int>(kPerturbations.size()); ++k)
        next[arithmetic_step(task.chain_ops[t], value, k)] += m * (1.0 - p) * share;
    }
    if (next.size() > kMaxArithmeticStates)
      throw UnsupportedSizeError("arithmetic value DP exceeds the state cap");
    mass.swap(next);
  }
  const auto it = mass.find(task.truth);
  return it == mass.end() ? 0.0 : it->second;
}

}  // namespace

std::string FeatureSpec::id() const {
  return "phi4/m" + std::to_string(max_steps) + "/n" + std::to_string(max_objects);
}

FeatureSpec FeatureSpec::parse(const std::string& id) {
  FeatureSpec spec;
  int consumed = 0;
  if (std::sscanf(id.c_str(), "phi4/m%d/n%d%n", &spec.max_steps, &spec.max_objects, &consumed) != 2 ||
      consumed != static_cast<int>(id.size()) || spec.max_steps < 1 || spec.max_objects < 1)
    throw ConfigError("unknown feature spec: " + id);
  return spec;
}

Features features(const FeatureSpec& spec, const TaskInstance& task, int step) {
  const int m = task.num_steps();
  if (m > spec.max_steps) throw ContractError("task longer than the feature normalizer");
  if (task.kind == TaskKind::shuffled_objects && task.num_objects > spec.max_objects)
    throw ContractError("task wider than the feature normalizer");
  const double width = task.kind == TaskKind::shuffled_objects
                           ? static_cast<double>(task.num_objects) / spec.max_objects
                           : 0.0;
  return {1.0, static_cast<double>(step) / m, static_cast<double>(m) / spec.max_steps, width};
}

void validate(const PolicyParams& params) {
  if (params.theta.size() != FeatureSpec::kDim)
    throw ContractError("theta dimension does not match the feature spec");
  for (double x : params.theta)
    if (!std::isfinite(x)) throw ContractError("theta has a non-finite entry");
  if (!(params.temperature_default > 0.0)) throw ContractError("temperature_default must be positive");
}

void to_json(nlohmann::json& j, const PolicyParams& p) {
  j = nlohmann::json{{"feature_spec", p.feature_spec.id()},
                     {"theta", p.theta},
                     {"temperature_default", p.temperature_default}};
}

void from_json(const nlohmann::json& j, PolicyParams& p) {
  p.feature_spec = FeatureSpec::parse(j.at("feature_spec").get<std::string>());
  p.theta = j.at("theta").get<std::vector<double>>();
  p.temperature_default = j.value("temperature_default", 1.0);
  validate(p);
}

std::uint64_t params_hash(const PolicyParams& params) {
  return fnv1a(nlohmann::json(params).dump());
}

int num_alternatives(const TaskInstance& task) {
  if (task.kind == TaskKind::shuffled_objects) return pair_count(task.num_objects) - 1;
  return static_cast<int>(kPerturbations.size());
}

std::int64_t replay(const TaskInstance& task, const std::vector<int>& actions) {
  if (static_cast<int>(actions.size()) != task.num_steps())
    throw ContractError("action count does not match task length");
  const int alts = num_alternatives(task);
  for (int a : actions)
    if (a < 0 || a > alts) throw ContractError("action index out of range");
  if (task.kind == TaskKind::shuffled_objects) {
    const int n = task.num_objects;
    std::vector<int> arrangement(static_cast<std::size_t>(n));
    std::iota(arrangement.begin(), arrangement.end(), 0);
    for (std::size_t t = 0; t < actions.size(); ++t) {
      const int instructed = pair_index(n, task.swaps[t].a, task.swaps[t].b);
      const int chosen = actions[t] == 0 ? instructed : alternative_pair(instructed, actions[t]);
      const Swap s = pair_at(n, chosen);
      std::swap(arrangement[s.a], arrangement[s.b]);
    }
    const auto it = std::find(arrangement.begin(), arrangement.end(), task.query_object);
    return static_cast<std::int64_t>(it - arrangement.begin());
  }
  std::int64_t v = task.initial_value;
  for (std::size_t t = 0; t < actions.size(); ++t) v = arithmetic_step(task.chain_ops[t], v, actions[t]);
  return v;
}

double logistic(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double step_logit(const PolicyParams& params, const TaskInstance& task, int step) {
  check_steps(task, step);
  return dot(params.theta, features(params.feature_spec, task, step));
}

double step_success_prob(const PolicyParams& params, const TaskInstance& task, int step,
                         double temperature) {
  check_temperature(temperature);
  const double z = step_logit(params, task, step);
  if (num_alternatives(task) == 0) return 1.0;
  return logistic(z / temperature);
}

Trajectory sample_trajectory(const PolicyParams& params, const TaskInstance& task,
                             double temperature, Rng& rng) {
  const int m = task.num_steps();
  const int alts = num_alternatives(task);
  Trajectory traj;
  traj.task_id = task.id;
  traj.actions.resize(static_cast<std::size_t>(m));
  traj.per_step_p.resize(static_cast<std::size_t>(m));
  for (int t = 0; t < m; ++t) {
    const double p = step_success_prob(params, task, t, temperature);
    traj.per_step_p[t] = p;
    if (alts == 0 || rng.bernoulli(p)) {
      traj.actions[t] = 0;
      traj.log_prob += std::log(p);
    } else {
      traj.actions[t] = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(alts)));
      traj.log_prob += std::log((1.0 - p) / alts);
    }
  }
  traj.derived_answer = replay(task, traj.actions);
  return traj;
}

double trajectory_log_prob(const PolicyParams& params, const TaskInstance& task,
                           const std::vector<int>& actions, double temperature) {
  if (static_cast<int>(actions.size()) != task.num_steps())
    throw ContractError("action count does not match task length");
  const int alts = num_alternatives(task);
  double lp = 0.0;
  for (int t = 0; t < task.num_steps(); ++t) {
    const double p = step_success_prob(params, task, t, temperature);
    lp += actions[t] == 0 ? std::log(p) : std::log((1.0 - p) / alts);
  }
  return lp;
}

std::vector<double> grad_log_prob(const PolicyParams& params, const TaskInstance& task,
                                  const Trajectory& traj, double temperature) {
  check_temperature(temperature);
  if (traj.task_id != task.id || static_cast<int>(traj.actions.size()) != task.num_steps())
    throw ContractError("trajectory was not generated for this task");
  std::vector<double> g(FeatureSpec::kDim, 0.0);
  if (num_alternatives(task) == 0) return g;
  for (int t = 0; t < task.num_steps(); ++t) {
    const Features phi = features(params.feature_spec, task, t);
    const double p = logistic(dot(params.theta, phi) / temperature);
    const double w = (traj.actions[t] == 0 ? (1.0 - p) : -p) / temperature;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += w * phi[i];
  }
  return g;
}

KlResult kl_to_reference(const PolicyParams& params, const PolicyParams& ref,
                         const TaskInstance& task) {
  if (!(params.feature_spec == ref.feature_spec)) throw ContractError("feature_spec mismatch");
  KlResult out{0.0, std::vector<double>(FeatureSpec::kDim, 0.0)};
  if (num_alternatives(task) == 0) return out;
  for (int t = 0; t < task.num_steps(); ++t) {
    const Features phi = features(params.feature_spec, task, t);
    const double z = dot(params.theta, phi);
    const double z_ref = dot(ref.theta, phi);
    const double p = logistic(z);
    // log p = -softplus(-z), log(1 - p) = -softplus(z)
    out.value += p * (softplus(-z_ref) - softplus(-z)) + (1.0 - p) * (softplus(z_ref) - softplus(z));
    // d/dz KL = p(1-p)(z - z_ref)
    const double w = p * (1.0 - p) * (z - z_ref);
    for (std::size_t i = 0; i < phi.size(); ++i) out.grad[i] += w * phi[i];
  }
  return out;
}

bool exact_oracle_supported(const TaskInstance& task) {
  if (task.kind == TaskKind::shuffled_objects) return task.num_objects <= kMaxExactObjects;
  return true;
}

double exact_success_probability(const PolicyParams& params, const TaskInstance& task,
                                 double temperature) {
  check_temperature(temperature);
  if (task.kind == TaskKind::shuffled_objects) {
    if (task.num_objects > kMaxExactObjects)
      throw UnsupportedSizeError("permutation DP supports at most 6 objects");
    return shuffled_success(params, task, temperature);
  }
  return arithmetic_success(params, task, temperature);
}

}  // namespace grpolab
