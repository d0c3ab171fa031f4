#include "grpolab/selection.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "grpolab/errors.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

std::string to_string(SelectionPolicy policy) {
  switch (policy) {
    case SelectionPolicy::hardest: return "hardest";
    case SelectionPolicy::easiest: return "easiest";
    case SelectionPolicy::middle: return "middle";
    case SelectionPolicy::random: return "random";
  }
  return "?";
}

SelectionPolicy selection_policy_from_string(const std::string& s) {
  for (auto p : kAllPolicies)
    if (to_string(p) == s) return p;
  throw ConfigError("unknown selection policy: " + s);
}

std::size_t selection_budget(double fraction, std::size_t pool_size) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ParameterError("fraction must lie in (0, 1]");
  const double raw = fraction * static_cast<double>(pool_size);
  return static_cast<std::size_t>(std::floor(raw + 1e-9 * std::max(1.0, raw)));
}

SelectionResult select(const std::vector<DifficultyEstimate>& estimates, SelectionPolicy policy,
                       double fraction, std::uint64_t seed) {
  if (estimates.empty()) throw ParameterError("no difficulty estimates to select from");
  const std::size_t budget = selection_budget(fraction, estimates.size());
  if (budget == 0) throw ParameterError("selection budget rounds down to zero items");

  // Canonical order first, so the result never depends on input order.
  std::vector<const DifficultyEstimate*> items;
  items.reserve(estimates.size());
  for (const auto& e : estimates) items.push_back(&e);
  std::sort(items.begin(), items.end(),
            [](const auto* a, const auto* b) { return a->task_id < b->task_id; });
  for (std::size_t i = 1; i < items.size(); ++i)
    if (items[i]->task_id == items[i - 1]->task_id)
      throw ParameterError("duplicate task id in estimates: " + items[i]->task_id);

  auto by_key = [](auto key) {
    return [key](const DifficultyEstimate* a, const DifficultyEstimate* b) {
      const double ka = key(*a), kb = key(*b);
      if (ka != kb) return ka < kb;
      return a->task_id < b->task_id;
    };
  };

  switch (policy) {
    case SelectionPolicy::hardest:
      std::stable_sort(items.begin(), items.end(), by_key([](const auto& e) { return e.p_hat; }));
      break;
    case SelectionPolicy::easiest:
      std::stable_sort(items.begin(), items.end(), by_key([](const auto& e) { return -e.p_hat; }));
      break;
    case SelectionPolicy::middle: {
      std::vector<double> values;
      values.reserve(items.size());
      for (const auto* e : items) values.push_back(e->p_hat);
      std::sort(values.begin(), values.end());
      const std::size_t n = values.size();
      const double median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
      std::stable_sort(items.begin(), items.end(),
                       by_key([median](const auto& e) { return std::abs(e.p_hat - median); }));
      break;
    }
    case SelectionPolicy::random: {
      Rng rng(derive_seed(seed, {0x5e1ec7}));
      for (std::size_t i = 0; i < budget; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
        std::swap(items[i], items[j]);
      }
      break;
    }
  }

  SelectionResult result;
  result.policy = policy;
  result.fraction = fraction;
  result.selection_seed = seed;
  result.selected_ids.reserve(budget);
  double sum = 0.0, lo = items[0]->p_hat, hi = items[0]->p_hat;
  for (std::size_t i = 0; i < budget; ++i) {
    const auto& e = *items[i];
    result.selected_ids.push_back(e.task_id);
    sum += e.p_hat;
    lo = std::min(lo, e.p_hat);
    hi = std::max(hi, e.p_hat);
  }
  result.summary = {sum / static_cast<double>(budget), lo, hi};
  return result;
}

void to_json(nlohmann::json& j, const SelectionResult& r) {
  j = nlohmann::json{{"policy", to_string(r.policy)},
                     {"fraction", r.fraction},
                     {"selection_seed", r.selection_seed},
                     {"summary",
                      {{"mean_p_hat", r.summary.mean_p_hat},
                       {"min_p_hat", r.summary.min_p_hat},
                       {"max_p_hat", r.summary.max_p_hat}}},
                     {"selected_ids", r.selected_ids}};
}

void from_json(const nlohmann::json& j, SelectionResult& r) {
  r.policy = selection_policy_from_string(j.at("policy").get<std::string>());
  r.fraction = j.at("fraction").get<double>();
  r.selection_seed = j.at("selection_seed").get<std::uint64_t>();
  const auto& s = j.at("summary");
  r.summary = {s.at("mean_p_hat").get<double>(), s.at("min_p_hat").get<double>(),
               s.at("max_p_hat").get<double>()};
  r.selected_ids = j.at("selected_ids").get<std::vector<std::string>>();
}

std::vector<TaskInstance> gather_tasks(const std::vector<TaskInstance>& pool,
                                       const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const TaskInstance*> index;
  for (const auto& t : pool) index.emplace(t.id, &t);
  std::vector<TaskInstance> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw ConfigError("selected id not in pool: " + id);
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace grpolab
