#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pheno/common.hpp"
#include "pheno/registry.hpp"
#include "pheno/rng.hpp"

namespace pheno {

using ModelFn = std::function<double(std::span<const double>)>;

struct Attribution {
  std::vector<double> values;    // signed, one per feature
  std::vector<double> baseline;
  std::size_t n_permutations = 0;
  double f_x = 0;
  double f_baseline = 0;
};

// Shapley attribution by permutation sampling. Each sampled permutation
// walks the features in order, switching baseline components to x's one at
// a time and crediting the output change to the switched feature. The
// telescoping sum makes every sample exactly efficient:
// sum(values) == f(x) - f(baseline).
inline Attribution shapley_sampling(const ModelFn& model,
                                    std::span<const double> x,
                                    std::span<const double> baseline,
                                    std::size_t n_permutations, Rng& rng) {
  if (x.size() != baseline.size()) {
    throw_data("shapley: x/baseline length mismatch");
  }
  if (n_permutations < 1) throw_data("shapley: n_permutations must be >= 1");
  std::size_t d = x.size();
  Attribution att;
  att.values.assign(d, 0.0);
  att.baseline.assign(baseline.begin(), baseline.end());
  att.n_permutations = n_permutations;
  att.f_baseline = model(baseline);
  att.f_x = model(x);

  std::vector<std::size_t> perm(d);
  std::vector<double> z(baseline.begin(), baseline.end());
  for (std::size_t s = 0; s < n_permutations; ++s) {
    for (std::size_t i = 0; i < d; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::copy(baseline.begin(), baseline.end(), z.begin());
    double prev = att.f_baseline;
    for (std::size_t k = 0; k < d; ++k) {
      std::size_t j = perm[k];
      z[j] = x[j];
      double cur = (k + 1 == d) ? att.f_x : model(z);
      att.values[j] += cur - prev;
      prev = cur;
    }
  }
  double inv = 1.0 / double(n_permutations);
  for (auto& v : att.values) v *= inv;
  return att;
}

struct ImportanceConfig {
  std::size_t n_permutations = 200;
  std::uint64_t seed = 7;
};

// Mean absolute attribution across rows. Rows attribute independently with
// per-row derived seeds, so the result does not depend on evaluation order.
inline std::vector<double> global_importance(
    const ModelFn& model, const std::vector<std::vector<double>>& rows,
    std::span<const double> baseline, const ImportanceConfig& cfg) {
  if (rows.empty()) throw_data("global_importance: no rows");
  std::vector<double> acc(baseline.size(), 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Rng rng(derive_seed(cfg.seed, r));
    Attribution att =
        shapley_sampling(model, rows[r], baseline, cfg.n_permutations, rng);
    for (std::size_t j = 0; j < acc.size(); ++j) {
      acc[j] += std::fabs(att.values[j]);
    }
  }
  for (auto& v : acc) v /= double(rows.size());
  return acc;
}

struct GroupImportance {
  std::string group;  // sensor group, or the active feature's own name
  double score = 0;
};

// Figure-6A style aggregation: passive features sum within their sensor
// group while active features stay individual. `importances` must align
// with the registry (or with `columns` when the model used a subset).
inline std::vector<GroupImportance> aggregate_by_sensor(
    std::span<const double> importances, const FeatureRegistry& registry,
    std::span<const std::size_t> columns = {}) {
  std::vector<double> full(registry.size(), 0.0);
  if (columns.empty()) {
    if (importances.size() != registry.size()) {
      throw_data("aggregate_by_sensor: importance/registry size mismatch");
    }
    std::copy(importances.begin(), importances.end(), full.begin());
  } else {
    if (importances.size() != columns.size()) {
      throw_data("aggregate_by_sensor: importance/column size mismatch");
    }
    for (std::size_t i = 0; i < columns.size(); ++i) {
      full[columns[i]] = importances[i];
    }
  }
  std::map<std::string, double> groups;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const auto& spec = registry.at(i);
    std::string key = spec.group == SensorGroup::active
                          ? spec.name
                          : sensor_group_name(spec.group);
    if (!groups.count(key)) order.push_back(key);
    groups[key] += full[i];
  }
  std::vector<GroupImportance> out;
  for (const auto& key : order) out.push_back({key, groups[key]});
  std::sort(out.begin(), out.end(),
            [](const GroupImportance& a, const GroupImportance& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.group < b.group;
            });
  return out;
}

}  // namespace pheno
