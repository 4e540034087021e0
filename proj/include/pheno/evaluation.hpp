#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pheno/common.hpp"
#include "pheno/contrastive.hpp"
#include "pheno/features.hpp"
#include "pheno/rng.hpp"
#include "pheno/stat_tests.hpp"
#include "pheno/stats.hpp"

namespace pheno {

enum class Condition : int { passive = 0, active, combined };

inline const char* condition_name(Condition c) {
  static const char* names[] = {"passive", "active", "combined"};
  return names[int(c)];
}

inline std::optional<Condition> condition_from(const std::string& s) {
  for (int i = 0; i <= int(Condition::combined); ++i) {
    if (s == condition_name(Condition(i))) return Condition(i);
  }
  return std::nullopt;
}

// Registry columns visible under a condition. Masking happens before
// normalization so the modality experiments share no statistics.
inline std::vector<std::size_t> condition_columns(
    const FeatureRegistry& registry, Condition cond) {
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    bool is_active = registry.at(i).group == SensorGroup::active;
    if (cond == Condition::combined || (cond == Condition::active && is_active) ||
        (cond == Condition::passive && !is_active)) {
      cols.push_back(i);
    }
  }
  return cols;
}

struct FoldPlan {
  std::vector<std::string> users;  // fold i tests users[i], trains on the rest

  std::size_t size() const { return users.size(); }
};

inline FoldPlan loso_folds(std::span<const std::string> users) {
  if (users.size() < 2) throw_data("loso_folds: need at least 2 users");
  std::set<std::string> seen;
  for (const auto& u : users) {
    if (!seen.insert(u).second) throw_data("loso_folds: duplicate user '" + u + "'");
  }
  return FoldPlan{{users.begin(), users.end()}};
}

struct ConfusionMatrix {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
};

// Prediction = probability >= threshold.
inline ConfusionMatrix confusion(std::span<const double> probs,
                                 std::span<const std::uint8_t> labels,
                                 double threshold = 0.5) {
  if (probs.size() != labels.size()) throw_data("confusion: length mismatch");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    bool pred = probs[i] >= threshold;
    if (labels[i]) {
      pred ? ++m.tp : ++m.fn;
    } else {
      pred ? ++m.fp : ++m.tn;
    }
  }
  return m;
}

struct MetricBundle {
  double balanced_accuracy = kMissing;
  double auc = kMissing;
  double auc_pr = kMissing;
  double f1 = kMissing;
  double f1_macro = kMissing;
  double sensitivity = kMissing;
  double specificity = kMissing;
  double precision = kMissing;
  double recall = kMissing;
  ConfusionMatrix confusion;
};

// Rank-statistic AUC with midranks for ties.
inline double auc_rank(std::span<const double> probs,
                       std::span<const std::uint8_t> labels) {
  std::size_t n_pos = 0, n_neg = 0;
  for (auto l : labels) l ? ++n_pos : ++n_neg;
  if (n_pos == 0 || n_neg == 0) return kMissing;
  std::vector<double> ranks = midranks(probs);
  double rank_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) rank_sum += ranks[i];
  }
  return (rank_sum - double(n_pos) * double(n_pos + 1) / 2.0) /
         (double(n_pos) * double(n_neg));
}

// Area under the precision-recall curve with step interpolation. Ties in
// the score are processed as one group.
inline double auc_pr_step(std::span<const double> probs,
                          std::span<const std::uint8_t> labels) {
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l ? 1 : 0;
  if (n_pos == 0 || n_pos == labels.size()) return kMissing;
  std::vector<std::size_t> idx(probs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return probs[a] > probs[b];
  });
  double tp = 0, fp = 0, prev_recall = 0, area = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && probs[idx[j + 1]] == probs[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      labels[idx[k]] ? ++tp : ++fp;
    }
    double recall = tp / double(n_pos);
    double precision = tp / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

// The full metric suite from a confusion matrix plus the score vector.
// Undefined ratios are 0 for precision/F1 (standard convention) and
// missing for AUC when only one class is present.
inline MetricBundle metrics(const ConfusionMatrix& m,
                            std::span<const double> probs,
                            std::span<const std::uint8_t> labels) {
  MetricBundle b;
  b.confusion = m;
  double tp = double(m.tp), tn = double(m.tn), fp = double(m.fp),
         fn = double(m.fn);
  b.sensitivity = (tp + fn) > 0 ? tp / (tp + fn) : kMissing;
  b.specificity = (tn + fp) > 0 ? tn / (tn + fp) : kMissing;
  b.recall = b.sensitivity;
  b.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
  if (!is_missing(b.sensitivity) && !is_missing(b.specificity)) {
    b.balanced_accuracy = 0.5 * (b.sensitivity + b.specificity);
  }
  double denom_pos = 2 * tp + fp + fn;
  double f1_pos = denom_pos > 0 ? 2 * tp / denom_pos : 0.0;
  double denom_neg = 2 * tn + fp + fn;
  double f1_neg = denom_neg > 0 ? 2 * tn / denom_neg : 0.0;
  b.f1 = f1_pos;
  b.f1_macro = 0.5 * (f1_pos + f1_neg);
  b.auc = auc_rank(probs, labels);
  b.auc_pr = auc_pr_step(probs, labels);
  return b;
}

// Hook for integration tests that assert the held-out user never reaches a
// training-side computation.
struct TrainObserver {
  virtual ~TrainObserver() = default;
  virtual void on_fold(std::size_t fold_index, int repetition,
                       const std::string& test_user,
                       std::span<const std::string> fit_norm_users,
                       std::span<const std::string> pretrain_users,
                       std::span<const std::string> finetune_users) = 0;
};

struct ExperimentConfig {
  TrainConfig train;
  int repetitions = 10;
  std::uint64_t base_seed = 42;
  int jobs = 0;  // 0: hardware concurrency
};

struct ExperimentResult {
  std::vector<std::string> users;    // deterministic fold order
  std::vector<std::uint8_t> labels;  // per user
  Matrix probs;                      // users x repetitions
};

namespace detail {

struct FoldInput {
  Matrix x_train;
  Matrix x_test;
  std::vector<std::string> train_user_of_row;
  std::vector<std::uint8_t> train_labels;
};

// Normalization is fitted on the training rows only; columns that are
// constant there (including all-missing ones) carry no information and are
// dropped, which also keeps a masked run identical to a combined run on a
// cohort where the masked-away modality never appears.
inline FoldInput prepare_fold(const Dataset& ds,
                              std::span<const std::size_t> mask_cols,
                              const std::string& test_user, Outcome outcome) {
  std::vector<std::vector<double>> train_masked;
  std::vector<std::vector<double>> test_masked;
  FoldInput out;
  for (const auto& row : ds.rows) {
    std::vector<double> vals(mask_cols.size());
    for (std::size_t j = 0; j < mask_cols.size(); ++j) {
      vals[j] = row.values[mask_cols[j]];
    }
    if (row.participant_id == test_user) {
      test_masked.push_back(std::move(vals));
    } else {
      train_masked.push_back(std::move(vals));
      out.train_user_of_row.push_back(row.participant_id);
      out.train_labels.push_back(
          ds.labels.at(row.participant_id).get(outcome) ? 1 : 0);
    }
  }
  NormStats st = fit_norm(train_masked);
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < st.size(); ++j) {
    if (!st.constant[j]) keep.push_back(j);
  }
  auto build = [&](const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), keep.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < keep.size(); ++j) {
        std::size_t c = keep[j];
        double v = is_missing(rows[r][c]) ? st.median[c] : rows[r][c];
        m.at(r, j) = (v - st.mean[c]) / st.sd[c];
      }
    }
    return m;
  };
  out.x_train = build(train_masked);
  out.x_test = build(test_masked);
  return out;
}

}  // namespace detail

// Repeated LOSO: for every fold and repetition, normalize on the training
// fold, pretrain, fine-tune, and predict the held-out user. The per-task
// seed is derived from (fold, repetition, outcome) only, so fold membership
// and condition masking never perturb the random streams.
inline ExperimentResult run_experiment(const Dataset& ds, Outcome outcome,
                                       Condition cond,
                                       const ExperimentConfig& cfg,
                                       TrainObserver* observer = nullptr) {
  if (cfg.repetitions < 1) throw_data("run_experiment: repetitions must be >= 1");
  FoldPlan plan = loso_folds(ds.users);
  std::vector<std::size_t> mask_cols = condition_columns(ds.registry, cond);
  if (mask_cols.empty()) throw_data("run_experiment: condition selects no columns");

  ExperimentResult res;
  res.users = plan.users;
  for (const auto& u : plan.users) {
    res.labels.push_back(ds.labels.at(u).get(outcome) ? 1 : 0);
  }
  res.probs = Matrix(plan.users.size(), cfg.repetitions);

  std::size_t n_tasks = plan.users.size() * std::size_t(cfg.repetitions);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex err_mu;

  auto worker = [&]() {
    for (;;) {
      std::size_t t = next.fetch_add(1);
      if (t >= n_tasks || failed.load()) return;
      std::size_t fold = t / cfg.repetitions;
      int rep = int(t % cfg.repetitions);
      const std::string& test_user = plan.users[fold];
      try {
        detail::FoldInput in =
            detail::prepare_fold(ds, mask_cols, test_user, outcome);
        if (observer) {
          observer->on_fold(fold, rep, test_user, in.train_user_of_row,
                            in.train_user_of_row, in.train_user_of_row);
        }
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.base_seed, fold, std::uint64_t(rep),
                              std::uint64_t(outcome));
        UserBlocks blocks = UserBlocks::from_rows(in.train_user_of_row);
        PretrainResult pre = pretrain(in.x_train, blocks, tc);
        FinetuneResult fin = finetune(pre.embedder, in.x_train, blocks,
                                      in.train_labels, tc);
        double prob = predict_user(fin.embedder, fin.classifier, in.x_test);
        res.probs.at(fold, std::size_t(rep)) = prob;
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!failed.exchange(true)) {
          first_error = std::string("fold ") + test_user + " rep " +
                        std::to_string(rep) + " (" + outcome_name(outcome) +
                        ", " + condition_name(cond) + "): " + e.what();
        }
        return;
      }
    }
  };

  unsigned jobs = cfg.jobs > 0 ? unsigned(cfg.jobs)
                               : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, n_tasks);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) throw_training(first_error);
  return res;
}

// Per-repetition metric bundles for one experiment.
inline std::vector<MetricBundle> per_rep_metrics(const ExperimentResult& r,
                                                 double threshold = 0.5) {
  std::vector<MetricBundle> out;
  for (std::size_t rep = 0; rep < r.probs.cols; ++rep) {
    std::vector<double> probs(r.users.size());
    for (std::size_t u = 0; u < r.users.size(); ++u) {
      probs[u] = r.probs.at(u, rep);
    }
    out.push_back(metrics(confusion(probs, r.labels, threshold), probs,
                          r.labels));
  }
  return out;
}

inline std::vector<double> rep_balanced_accuracy(const ExperimentResult& r) {
  std::vector<double> out;
  for (const auto& m : per_rep_metrics(r)) out.push_back(m.balanced_accuracy);
  return out;
}

struct PairwiseTest {
  std::string a, b;
  double mean_a = kMissing, mean_b = kMissing;
  double p = kMissing;
  std::string stars;     // per the figure legend: * .05, ** .01, *** .001
  std::string note;      // set when the test degenerates
};

inline std::string significance_stars(double p) {
  if (is_missing(p)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

// Pairwise Wilcoxon over per-repetition balanced accuracies, paired by
// repetition.
inline std::vector<PairwiseTest> compare_conditions(
    const std::map<std::string, std::vector<double>>& rep_ba_by_condition) {
  std::vector<std::string> names;
  for (const auto& [name, ba] : rep_ba_by_condition) names.push_back(name);
  std::size_t reps = 0;
  for (const auto& [name, ba] : rep_ba_by_condition) {
    if (reps == 0) reps = ba.size();
    if (ba.size() != reps) {
      throw_data("compare_conditions: unequal repetition counts");
    }
  }
  std::vector<PairwiseTest> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      PairwiseTest t;
      t.a = names[i];
      t.b = names[j];
      const auto& xa = rep_ba_by_condition.at(t.a);
      const auto& xb = rep_ba_by_condition.at(t.b);
      t.mean_a = mean_of(xa);
      t.mean_b = mean_of(xb);
      try {
        t.p = wilcoxon_signed_rank(xa, xb).p;
        t.stars = significance_stars(t.p);
      } catch (const Error& e) {
        t.note = e.what();
      }
      out.push_back(t);
    }
  }
  return out;
}

struct AblationResult {
  // Index 0: pretraining as configured; index 1: pretrain_epochs = 0.
  std::map<std::string, std::vector<double>> rep_ba_pretrained;
  std::map<std::string, std::vector<double>> rep_ba_no_pretrain;
  double pooled_mean_pretrained = kMissing;
  double pooled_mean_no_pretrain = kMissing;
  double paired_t_p = kMissing;
  std::string note;
};

// Figure-4B style: the same experiment grid with and without the
// contrastive phase, same seeds otherwise, compared by a paired t-test over
// the pooled (outcome x repetition) balanced accuracies.
inline AblationResult ablation_pretraining(const Dataset& ds,
                                           std::span<const Outcome> outcomes,
                                           const ExperimentConfig& cfg,
                                           Condition cond = Condition::combined) {
  AblationResult res;
  std::vector<double> pre_cells, nopre_cells;
  for (Outcome o : outcomes) {
    ExperimentResult pre = run_experiment(ds, o, cond, cfg);
    ExperimentConfig cfg0 = cfg;
    cfg0.train.pretrain_epochs = 0;
    ExperimentResult nopre = run_experiment(ds, o, cond, cfg0);
    auto ba_pre = rep_balanced_accuracy(pre);
    auto ba_nopre = rep_balanced_accuracy(nopre);
    res.rep_ba_pretrained[outcome_name(o)] = ba_pre;
    res.rep_ba_no_pretrain[outcome_name(o)] = ba_nopre;
    pre_cells.insert(pre_cells.end(), ba_pre.begin(), ba_pre.end());
    nopre_cells.insert(nopre_cells.end(), ba_nopre.begin(), ba_nopre.end());
  }
  res.pooled_mean_pretrained = mean_of(pre_cells);
  res.pooled_mean_no_pretrain = mean_of(nopre_cells);
  try {
    res.paired_t_p = paired_t_test(pre_cells, nopre_cells).p;
  } catch (const Error& e) {
    res.note = e.what();
  }
  return res;
}

// Per-bin classification accuracy across questionnaire-score bins.
// Bin i covers [edges[i], edges[i+1]); the last bin includes its upper
// edge. Empty bins are reported missing.
inline std::vector<double> accuracy_by_score_bin(
    std::span<const double> probs, std::span<const std::uint8_t> labels,
    std::span<const double> scores, std::span<const double> edges,
    double threshold = 0.5) {
  if (probs.size() != labels.size() || probs.size() != scores.size()) {
    throw_data("accuracy_by_score_bin: length mismatch");
  }
  if (edges.size() < 2) throw_data("accuracy_by_score_bin: need >= 2 edges");
  std::size_t bins = edges.size() - 1;
  std::vector<double> correct(bins, 0), count(bins, 0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double s = scores[i];
    if (s < edges.front() || s > edges.back()) continue;
    std::size_t b = bins - 1;
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
      if (s >= edges[k] && (s < edges[k + 1] || k == bins - 1)) {
        b = k;
        break;
      }
    }
    bool pred = probs[i] >= threshold;
    count[b] += 1;
    if (pred == bool(labels[i])) correct[b] += 1;
  }
  std::vector<double> acc(bins, kMissing);
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] > 0) acc[b] = correct[b] / count[b];
  }
  return acc;
}

struct GroupComparison {
  double mean_low = kMissing;
  double mean_high = kMissing;
  double p = kMissing;
};

// Welch test on per-user feature means between risk groups, Figure-6B/C
// style. Uses raw (pre-normalization) feature values.
inline GroupComparison feature_group_comparison(const Dataset& ds,
                                                Outcome outcome,
                                                const std::string& feature) {
  std::size_t col = ds.registry.index_of(feature);
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& row : ds.rows) {
    double v = row.values[col];
    if (is_missing(v)) continue;
    auto& [sum, n] = acc[row.participant_id];
    sum += v;
    ++n;
  }
  std::vector<double> low, high;
  for (const auto& [user, sn] : acc) {
    double mean = sn.first / double(sn.second);
    (ds.labels.at(user).get(outcome) ? high : low).push_back(mean);
  }
  if (low.size() < 2 || high.size() < 2) {
    throw_data("feature_group_comparison: group too small");
  }
  GroupComparison g;
  g.mean_low = mean_of(low);
  g.mean_high = mean_of(high);
  g.p = welch_t_test(high, low).p;
  return g;
}

}  // namespace pheno
