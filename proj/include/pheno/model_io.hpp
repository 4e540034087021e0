#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pheno/contrastive.hpp"
#include "pheno/evaluation.hpp"
#include "pheno/features.hpp"
#include "pheno/manifest.hpp"
#include "pheno/shapley.hpp"

namespace pheno {

// A fine-tuned model plus everything needed to map a raw registry row into
// its input space: the condition mask, the fold normalization stats and the
// surviving (non-constant) columns.
struct TrainedModel {
  DenseNet embedder;
  DenseNet classifier;
  NormStats norm;                         // over mask_columns
  std::vector<std::size_t> mask_columns;  // registry indices after masking
  std::vector<std::size_t> selected;      // indices into mask_columns
  std::string registry_hash;
  Outcome outcome = Outcome::sdq;
  Condition condition = Condition::combined;
  json train_config = json::object();  // config snapshot

  // Registry indices of the model's live input columns.
  std::vector<std::size_t> selected_registry_columns() const {
    std::vector<std::size_t> out;
    for (std::size_t j : selected) out.push_back(mask_columns[j]);
    return out;
  }

  // Normalized model-space vector from a raw registry-width row.
  std::vector<double> normalize_row(std::span<const double> registry_row) const {
    std::vector<double> z(selected.size());
    for (std::size_t k = 0; k < selected.size(); ++k) {
      std::size_t j = selected[k];
      double v = registry_row[mask_columns[j]];
      if (is_missing(v)) v = norm.median[j];
      z[k] = (v - norm.mean[j]) / norm.sd[j];
    }
    return z;
  }

  double predict_normalized(std::span<const double> z) const {
    Matrix x(1, z.size());
    std::copy(z.begin(), z.end(), x.row(0));
    return net_forward(classifier, net_forward(embedder, x)).at(0, 0);
  }

  json to_json() const {
    json j;
    j["v"] = 1;
    j["registry_hash"] = registry_hash;
    j["outcome"] = outcome_name(outcome);
    j["condition"] = condition_name(condition);
    j["mask_columns"] = mask_columns;
    j["selected"] = selected;
    j["norm"] = {{"median", norm.median},
                 {"mean", norm.mean},
                 {"sd", norm.sd},
                 {"constant", std::vector<int>(norm.constant.begin(),
                                               norm.constant.end())}};
    j["train_config"] = train_config;
    j["embedder"] = net_to_json(embedder);
    j["classifier"] = net_to_json(classifier);
    return j;
  }

  static TrainedModel from_json(const json& j) {
    if (j.value("v", 0) != 1) throw_data("model checkpoint: unsupported version");
    TrainedModel m;
    m.registry_hash = j.at("registry_hash").get<std::string>();
    auto o = outcome_from(j.at("outcome").get<std::string>());
    auto c = condition_from(j.at("condition").get<std::string>());
    if (!o || !c) throw_data("model checkpoint: bad outcome/condition");
    m.outcome = *o;
    m.condition = *c;
    m.mask_columns = j.at("mask_columns").get<std::vector<std::size_t>>();
    m.selected = j.at("selected").get<std::vector<std::size_t>>();
    m.norm.median = j.at("norm").at("median").get<std::vector<double>>();
    m.norm.mean = j.at("norm").at("mean").get<std::vector<double>>();
    m.norm.sd = j.at("norm").at("sd").get<std::vector<double>>();
    auto ci = j.at("norm").at("constant").get<std::vector<int>>();
    m.norm.constant.assign(ci.begin(), ci.end());
    m.train_config = j.value("train_config", json::object());
    m.embedder = net_from_json(j.at("embedder"));
    m.classifier = net_from_json(j.at("classifier"));
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw_data("cannot write '" + path + "'");
    out << to_json().dump(2) << '\n';
  }

  static TrainedModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_data("cannot open '" + path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw_data("model checkpoint: malformed JSON");
    return from_json(j);
  }
};

struct ExplainConfig {
  Outcome outcome = Outcome::sdq;
  Condition condition = Condition::combined;
  double test_fraction = 0.2;  // user-level holdout attributed by Shapley
  ImportanceConfig importance;
  TrainConfig train;
  std::uint64_t seed = 42;
};

struct ExplainResult {
  TrainedModel model;
  std::vector<EpochLog> finetune_history;
  std::vector<std::string> test_users;
  std::vector<std::string> feature_names;  // live input columns
  std::vector<double> importance;          // mean |attribution| per column
  std::vector<GroupImportance> groups;
  std::vector<double> baseline;  // normalized model-space baseline
};

// Train on a user-level split and attribute the held-out users' rows with
// permutation Shapley against the training-median baseline.
inline ExplainResult explain_dataset(const Dataset& ds,
                                     const ExplainConfig& cfg) {
  if (ds.users.size() < 3) throw_data("explain: need at least 3 users");
  std::vector<std::string> users = ds.users;
  Rng rng(derive_seed(cfg.seed, 0xe7));
  rng.shuffle(users);
  std::size_t n_test =
      std::max<std::size_t>(1, std::size_t(std::llround(cfg.test_fraction *
                                                        double(users.size()))));
  if (n_test >= users.size() - 1) n_test = 1;
  std::set<std::string> test_set(users.begin(), users.begin() + n_test);

  // The training side must keep both classes; swap across the split if not.
  auto label_of = [&](const std::string& u) {
    return ds.labels.at(u).get(cfg.outcome);
  };
  for (bool cls : {false, true}) {
    bool found = false;
    for (const auto& u : users) {
      if (!test_set.count(u) && label_of(u) == cls) found = true;
    }
    if (found) continue;
    std::string move_out, move_in;
    for (const auto& tu : test_set) {
      if (label_of(tu) == cls) {
        move_out = tu;
        break;
      }
    }
    for (const auto& u : users) {
      if (!test_set.count(u) && label_of(u) != cls) {
        move_in = u;
        break;
      }
    }
    if (!move_out.empty() && !move_in.empty()) {
      test_set.erase(move_out);
      test_set.insert(move_in);
    }
  }

  std::vector<std::size_t> mask = condition_columns(ds.registry, cfg.condition);
  std::vector<std::vector<double>> train_rows;
  std::vector<std::string> train_user_of_row;
  std::vector<std::uint8_t> train_labels;
  std::vector<const DayFeatureRow*> test_rows;
  for (const auto& row : ds.rows) {
    if (test_set.count(row.participant_id)) {
      test_rows.push_back(&row);
      continue;
    }
    std::vector<double> vals(mask.size());
    for (std::size_t j = 0; j < mask.size(); ++j) {
      vals[j] = row.values[mask[j]];
    }
    train_rows.push_back(std::move(vals));
    train_user_of_row.push_back(row.participant_id);
    train_labels.push_back(label_of(row.participant_id) ? 1 : 0);
  }

  ExplainResult res;
  res.model.norm = fit_norm(train_rows);
  res.model.mask_columns = mask;
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (!res.model.norm.constant[j]) res.model.selected.push_back(j);
  }
  res.model.registry_hash = hex64(ds.registry.hash());
  res.model.outcome = cfg.outcome;
  res.model.condition = cfg.condition;

  Matrix x_train(train_rows.size(), res.model.selected.size());
  for (std::size_t r = 0; r < train_rows.size(); ++r) {
    for (std::size_t k = 0; k < res.model.selected.size(); ++k) {
      std::size_t j = res.model.selected[k];
      double v = is_missing(train_rows[r][j]) ? res.model.norm.median[j]
                                              : train_rows[r][j];
      x_train.at(r, k) = (v - res.model.norm.mean[j]) / res.model.norm.sd[j];
    }
  }

  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 0x7a1);
  UserBlocks blocks = UserBlocks::from_rows(train_user_of_row);
  PretrainResult pre = pretrain(x_train, blocks, tc);
  FinetuneResult fin = finetune(pre.embedder, x_train, blocks, train_labels, tc);
  res.model.embedder = std::move(fin.embedder);
  res.model.classifier = std::move(fin.classifier);
  res.model.train_config = tc.to_json();
  res.finetune_history = fin.history;
  res.test_users.assign(test_set.begin(), test_set.end());

  // Baseline: training-fold medians pushed through the same normalization.
  std::vector<double> baseline(res.model.selected.size());
  for (std::size_t k = 0; k < res.model.selected.size(); ++k) {
    std::size_t j = res.model.selected[k];
    baseline[k] =
        (res.model.norm.median[j] - res.model.norm.mean[j]) / res.model.norm.sd[j];
  }
  res.baseline = baseline;

  std::vector<std::vector<double>> attributed;
  for (const DayFeatureRow* row : test_rows) {
    attributed.push_back(res.model.normalize_row(row->values));
  }
  if (attributed.empty()) throw_data("explain: no test rows to attribute");

  const TrainedModel& m = res.model;
  ModelFn fn = [&m](std::span<const double> z) {
    return m.predict_normalized(z);
  };
  res.importance = global_importance(fn, attributed, baseline, cfg.importance);
  for (std::size_t k : res.model.selected_registry_columns()) {
    res.feature_names.push_back(ds.registry.at(k).name);
  }
  res.groups = aggregate_by_sensor(res.importance, ds.registry,
                                   res.model.selected_registry_columns());
  return res;
}

inline void write_importance_csv(const ExplainResult& res,
                                 const FeatureRegistry& registry,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw_data("cannot write '" + path + "'");
  out << "feature,group,mean_abs_attribution\n";
  auto cols = res.model.selected_registry_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out << registry.at(cols[i]).name << ','
        << sensor_group_name(registry.at(cols[i]).group) << ','
        << res.importance[i] << '\n';
  }
}

inline void write_group_importance_csv(const ExplainResult& res,
                                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw_data("cannot write '" + path + "'");
  out << "group,score\n";
  for (const auto& g : res.groups) out << g.group << ',' << g.score << '\n';
}

}  // namespace pheno
