#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pheno/common.hpp"
#include "pheno/neural.hpp"
#include "pheno/rng.hpp"

namespace pheno {

struct TrainConfig {
  int pretrain_epochs = 8;
  int finetune_epochs = 30;
  int batch_size = 32;
  int triplets_per_epoch = 256;
  int probe_triplets = 128;
  double margin = 1.0;
  double lr = 1e-3;
  int patience = 5;
  double val_fraction = 0.10;
  bool joint_finetune = true;    // tune the embedder during the supervised phase
  bool weighted_sampler = true;  // class-balanced minibatch sampling
  double positive_weight_override = -1.0;  // < 0: use (neg rows)/(pos rows)
  std::uint64_t seed = 1;
  // Network widths; layer counts are fixed at two per net.
  std::size_t embed_hidden = 64, embed_dim = 32;
  std::size_t proj_hidden = 32, proj_dim = 16;
  std::size_t clf_hidden = 16;

  void validate() const {
    if (pretrain_epochs < 0 || finetune_epochs < 1 || batch_size < 1 ||
        triplets_per_epoch < 1 || probe_triplets < 1 || patience < 1) {
      throw_data("train config: counts must be positive");
    }
    if (!(margin > 0)) throw_data("train config: margin must be > 0");
    if (!(lr > 0)) throw_data("train config: lr must be > 0");
    if (val_fraction < 0 || val_fraction >= 1) {
      throw_data("train config: val_fraction must be in [0, 1)");
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["pretrain_epochs"] = pretrain_epochs;
    j["finetune_epochs"] = finetune_epochs;
    j["batch_size"] = batch_size;
    j["triplets_per_epoch"] = triplets_per_epoch;
    j["probe_triplets"] = probe_triplets;
    j["margin"] = margin;
    j["lr"] = lr;
    j["patience"] = patience;
    j["val_fraction"] = val_fraction;
    j["joint_finetune"] = joint_finetune;
    j["weighted_sampler"] = weighted_sampler;
    j["positive_weight_override"] = positive_weight_override;
    j["embed_hidden"] = embed_hidden;
    j["embed_dim"] = embed_dim;
    j["proj_hidden"] = proj_hidden;
    j["proj_dim"] = proj_dim;
    j["clf_hidden"] = clf_hidden;
    return j;
  }

  static TrainConfig from_json(const nlohmann::ordered_json& j) {
    TrainConfig c;
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.triplets_per_epoch = j.value("triplets_per_epoch", c.triplets_per_epoch);
    c.probe_triplets = j.value("probe_triplets", c.probe_triplets);
    c.margin = j.value("margin", c.margin);
    c.lr = j.value("lr", c.lr);
    c.patience = j.value("patience", c.patience);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.joint_finetune = j.value("joint_finetune", c.joint_finetune);
    c.weighted_sampler = j.value("weighted_sampler", c.weighted_sampler);
    c.positive_weight_override =
        j.value("positive_weight_override", c.positive_weight_override);
    c.embed_hidden = j.value("embed_hidden", c.embed_hidden);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.proj_hidden = j.value("proj_hidden", c.proj_hidden);
    c.proj_dim = j.value("proj_dim", c.proj_dim);
    c.clf_hidden = j.value("clf_hidden", c.clf_hidden);
    c.validate();
    return c;
  }
};

// Indices into a row matrix. Anchor and positive share a user (different
// days); the negative comes from someone else.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

// Contiguous runs of rows per user. Rows must already be grouped by user
// (build_dataset emits them sorted by participant then day).
struct UserBlocks {
  std::vector<std::string> user;       // one entry per block
  std::vector<std::size_t> begin;      // block start row
  std::vector<std::size_t> size;       // block length

  static UserBlocks from_rows(std::span<const std::string> row_user) {
    UserBlocks b;
    std::size_t i = 0;
    while (i < row_user.size()) {
      std::size_t j = i;
      while (j + 1 < row_user.size() && row_user[j + 1] == row_user[i]) ++j;
      b.user.push_back(row_user[i]);
      b.begin.push_back(i);
      b.size.push_back(j - i + 1);
      i = j + 1;
    }
    return b;
  }

  std::size_t total_rows() const {
    return user.empty() ? 0 : begin.back() + size.back();
  }
};

// Uniform over eligible (multi-day) anchor users, then uniform over that
// user's rows; the positive is any other row of the same user and the
// negative is uniform over every other user's rows.
inline std::vector<Triplet> sample_triplets(const UserBlocks& blocks,
                                            std::size_t count, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t u = 0; u < blocks.user.size(); ++u) {
    if (blocks.size[u] >= 2) eligible.push_back(u);
  }
  if (eligible.size() < 2) {
    throw_training("insufficient pretraining structure: need at least 2 users with 2+ days");
  }
  std::size_t total = blocks.total_rows();
  std::vector<Triplet> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t u = eligible[rng.uniform_index(eligible.size())];
    std::size_t b = blocks.begin[u], s = blocks.size[u];
    std::size_t a = b + rng.uniform_index(s);
    std::size_t p = b + rng.uniform_index(s - 1);
    if (p >= a) ++p;  // skip the anchor row
    std::size_t n = rng.uniform_index(total - s);
    if (n >= b) n += s;  // skip the anchor user's block
    out.push_back({a, p, n});
  }
  return out;
}

inline Matrix net_forward(const DenseNet& net, const Matrix& x) {
  ForwardCache cache;
  forward(net, x, cache);
  return std::move(cache.output);
}

// Mean intra-user pairwise embedding distance over mean inter-user
// distance; lower means tighter per-user clusters.
inline double separation_ratio(const Matrix& embeddings,
                               std::span<const std::string> row_user) {
  if (embeddings.rows != row_user.size()) {
    throw_internal("separation_ratio: row mismatch");
  }
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < embeddings.rows; ++i) {
    for (std::size_t j = i + 1; j < embeddings.rows; ++j) {
      double d = 0;
      const double* a = embeddings.row(i);
      const double* b = embeddings.row(j);
      for (std::size_t c = 0; c < embeddings.cols; ++c) {
        d += (a[c] - b[c]) * (a[c] - b[c]);
      }
      d = std::sqrt(d);
      if (row_user[i] == row_user[j]) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  }
  if (n_intra == 0) throw_training("separation_ratio: no intra-user pairs");
  if (n_inter == 0 || inter == 0) {
    throw_training("separation_ratio: degenerate embeddings");
  }
  return (intra / double(n_intra)) / (inter / double(n_inter));
}

inline double separation_ratio(const DenseNet& embedder, const Matrix& x,
                               std::span<const std::string> row_user) {
  return separation_ratio(net_forward(embedder, x), row_user);
}

struct PretrainResult {
  DenseNet embedder;
  DenseNet projection;
  std::vector<double> probe_loss;  // per epoch, on a fixed probe set
};

namespace detail {

inline Matrix gather_rows(const Matrix& x, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), x.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const double* src = x.row(idx[r]);
    std::copy(src, src + x.cols, out.row(r));
  }
  return out;
}

inline Matrix stack_triplets(const Matrix& x,
                             std::span<const Triplet> triplets) {
  Matrix out(triplets.size() * 3, x.cols);
  std::size_t b = triplets.size();
  for (std::size_t r = 0; r < b; ++r) {
    const auto& t = triplets[r];
    std::copy(x.row(t.anchor), x.row(t.anchor) + x.cols, out.row(r));
    std::copy(x.row(t.positive), x.row(t.positive) + x.cols, out.row(b + r));
    std::copy(x.row(t.negative), x.row(t.negative) + x.cols,
              out.row(2 * b + r));
  }
  return out;
}

// Loss on projected embeddings for a stacked [anchors; positives;
// negatives] forward pass.
inline double triplet_probe_loss(const DenseNet& embedder,
                                 const DenseNet& projection, const Matrix& x,
                                 std::span<const Triplet> triplets,
                                 double margin) {
  Matrix stacked = stack_triplets(x, triplets);
  Matrix proj = net_forward(projection, net_forward(embedder, stacked));
  std::size_t b = triplets.size();
  Matrix a(b, proj.cols), p(b, proj.cols), n(b, proj.cols);
  for (std::size_t r = 0; r < b; ++r) {
    std::copy(proj.row(r), proj.row(r) + proj.cols, a.row(r));
    std::copy(proj.row(b + r), proj.row(b + r) + proj.cols, p.row(r));
    std::copy(proj.row(2 * b + r), proj.row(2 * b + r) + proj.cols, n.row(r));
  }
  return triplet_margin_loss(a, p, n, margin).loss;
}

}  // namespace detail

// Label-free contrastive pretraining. The triplet loss is computed on the
// projection-head output; downstream consumers read the embedder only.
inline PretrainResult pretrain(const Matrix& x, const UserBlocks& blocks,
                               const TrainConfig& cfg) {
  cfg.validate();
  Rng init_rng = Rng(cfg.seed).fork(1);
  Rng sample_rng = Rng(cfg.seed).fork(2);

  PretrainResult res;
  {
    std::size_t dims[] = {x.cols, cfg.embed_hidden, cfg.embed_dim};
    Activation acts[] = {Activation::relu, Activation::relu};
    res.embedder = DenseNet::make(dims, acts, init_rng);
  }
  {
    std::size_t dims[] = {cfg.embed_dim, cfg.proj_hidden, cfg.proj_dim};
    Activation acts[] = {Activation::relu, Activation::identity};
    res.projection = DenseNet::make(dims, acts, init_rng);
  }
  if (cfg.pretrain_epochs == 0) return res;

  std::vector<Triplet> probe =
      sample_triplets(blocks, cfg.probe_triplets, sample_rng);

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState emb_state = AdamState::for_net(res.embedder);
  AdamState proj_state = AdamState::for_net(res.projection);

  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    std::vector<Triplet> triplets =
        sample_triplets(blocks, cfg.triplets_per_epoch, sample_rng);
    for (std::size_t off = 0; off < triplets.size();
         off += std::size_t(cfg.batch_size)) {
      std::size_t b = std::min(std::size_t(cfg.batch_size),
                               triplets.size() - off);
      std::span<const Triplet> batch(triplets.data() + off, b);
      Matrix stacked = detail::stack_triplets(x, batch);

      ForwardCache emb_cache, proj_cache;
      forward(res.embedder, stacked, emb_cache);
      forward(res.projection, emb_cache.output, proj_cache);
      const Matrix& proj = proj_cache.output;

      Matrix a(b, proj.cols), p(b, proj.cols), n(b, proj.cols);
      for (std::size_t r = 0; r < b; ++r) {
        std::copy(proj.row(r), proj.row(r) + proj.cols, a.row(r));
        std::copy(proj.row(b + r), proj.row(b + r) + proj.cols, p.row(r));
        std::copy(proj.row(2 * b + r), proj.row(2 * b + r) + proj.cols,
                  n.row(r));
      }
      TripletLossResult tl = triplet_margin_loss(a, p, n, cfg.margin);
      if (!std::isfinite(tl.loss)) {
        throw_training("pretraining diverged: non-finite triplet loss");
      }

      Matrix d_proj(3 * b, proj.cols);
      for (std::size_t r = 0; r < b; ++r) {
        std::copy(tl.d_anchor.row(r), tl.d_anchor.row(r) + proj.cols,
                  d_proj.row(r));
        std::copy(tl.d_positive.row(r), tl.d_positive.row(r) + proj.cols,
                  d_proj.row(b + r));
        std::copy(tl.d_negative.row(r), tl.d_negative.row(r) + proj.cols,
                  d_proj.row(2 * b + r));
      }
      Matrix d_emb;
      NetGrads proj_grads =
          backward(res.projection, proj_cache, d_proj, &d_emb);
      NetGrads emb_grads = backward(res.embedder, emb_cache, d_emb);
      adam_step(res.projection, proj_grads, proj_state, adam_cfg);
      adam_step(res.embedder, emb_grads, emb_state, adam_cfg);
    }
    res.probe_loss.push_back(detail::triplet_probe_loss(
        res.embedder, res.projection, x, probe, cfg.margin));
  }
  return res;
}

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_balanced_accuracy = kMissing;
};

struct FinetuneResult {
  DenseNet embedder;    // tuned copy (identical to input when frozen)
  DenseNet classifier;  // final layer is a sigmoid over one logit
  std::vector<EpochLog> history;
  int best_epoch = -1;
  double positive_weight = 1.0;
};

// Cumulative sampling distribution over the given training rows: inverse
// class frequency per row when `weighted` (each class then draws at rate
// 1/2), uniform otherwise.
inline std::vector<double> row_sampling_cdf(
    std::span<const std::uint8_t> row_labels,
    std::span<const std::size_t> rows, bool weighted) {
  std::size_t pos = 0, neg = 0;
  for (std::size_t r : rows) row_labels[r] ? ++pos : ++neg;
  std::vector<double> cdf(rows.size());
  double acc = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double w = 1.0;
    if (weighted) {
      w = row_labels[rows[i]] ? 1.0 / double(pos) : 1.0 / double(neg);
    }
    acc += w;
    cdf[i] = acc;
  }
  for (auto& c : cdf) c /= acc;
  return cdf;
}

inline std::size_t draw_from_cdf(std::span<const double> cdf, Rng& rng) {
  double u = rng.uniform();
  std::size_t i = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
  return std::min(i, cdf.size() - 1);
}

namespace detail {

// Balanced accuracy over whichever classes are present (mean of per-class
// recalls). Returns missing when `labels` is empty.
inline double row_balanced_accuracy(std::span<const double> probs,
                                    std::span<const std::uint8_t> labels,
                                    double threshold = 0.5) {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    bool pred = probs[i] >= threshold;
    if (labels[i]) {
      pred ? ++tp : ++fn;
    } else {
      pred ? ++fp : ++tn;
    }
  }
  double acc = 0;
  int classes = 0;
  if (tp + fn > 0) {
    acc += double(tp) / double(tp + fn);
    ++classes;
  }
  if (tn + fp > 0) {
    acc += double(tn) / double(tn + fp);
    ++classes;
  }
  return classes ? acc / classes : kMissing;
}

}  // namespace detail

// Supervised phase: a two-layer classifier on embedder outputs, trained
// with a class-balancing row sampler and class-weighted BCE. A user-level
// slice of the training users is held out to drive early stopping on
// validation balanced accuracy.
inline FinetuneResult finetune(const DenseNet& pretrained_embedder,
                               const Matrix& x, const UserBlocks& blocks,
                               std::span<const std::uint8_t> row_labels,
                               const TrainConfig& cfg) {
  cfg.validate();
  if (x.rows != row_labels.size()) throw_internal("finetune: label mismatch");

  Rng init_rng = Rng(cfg.seed).fork(3);
  Rng split_rng = Rng(cfg.seed).fork(4);
  Rng sample_rng = Rng(cfg.seed).fork(5);

  FinetuneResult res;
  res.embedder = pretrained_embedder;
  {
    std::size_t dims[] = {cfg.embed_dim, cfg.clf_hidden, 1};
    Activation acts[] = {Activation::relu, Activation::sigmoid};
    res.classifier = DenseNet::make(dims, acts, init_rng);
  }

  // User-level early-stopping split; never row-level.
  std::size_t n_users = blocks.user.size();
  std::vector<std::size_t> order(n_users);
  for (std::size_t u = 0; u < n_users; ++u) order[u] = u;
  split_rng.shuffle(order);
  std::size_t n_val =
      std::size_t(std::llround(cfg.val_fraction * double(n_users)));
  if (n_val >= n_users) n_val = n_users - 1;

  auto user_label = [&](std::size_t u) -> bool {
    return row_labels[blocks.begin[u]] != 0;
  };
  std::vector<bool> in_val(n_users, false);
  for (std::size_t k = 0; k < n_val; ++k) in_val[order[k]] = true;
  // The training slice must keep both classes; swap one user across the
  // split if the draw left it degenerate.
  auto train_has = [&](bool cls) {
    for (std::size_t u = 0; u < n_users; ++u) {
      if (!in_val[u] && user_label(u) == cls) return true;
    }
    return false;
  };
  for (bool cls : {false, true}) {
    if (train_has(cls)) continue;
    for (std::size_t k = 0; k < n_val; ++k) {
      std::size_t v = order[k];
      if (user_label(v) == cls) {
        for (std::size_t j = n_val; j < n_users; ++j) {
          std::size_t t = order[j];
          if (user_label(t) != cls) {
            in_val[v] = false;
            in_val[t] = true;
            break;
          }
        }
        break;
      }
    }
  }

  std::vector<std::size_t> train_rows, val_rows;
  for (std::size_t u = 0; u < n_users; ++u) {
    for (std::size_t r = blocks.begin[u]; r < blocks.begin[u] + blocks.size[u];
         ++r) {
      (in_val[u] ? val_rows : train_rows).push_back(r);
    }
  }

  std::size_t pos = 0, neg = 0;
  for (std::size_t r : train_rows) row_labels[r] ? ++pos : ++neg;
  if (pos == 0 || neg == 0) {
    throw_training("degenerate labels: training fold has a single class");
  }
  res.positive_weight = cfg.positive_weight_override > 0
                            ? cfg.positive_weight_override
                            : double(neg) / double(pos);

  // Row sampling probability proportional to inverse class frequency, so
  // each class is drawn at rate 1/2 regardless of imbalance.
  std::vector<double> cum(train_rows.size());
  {
    double acc = 0;
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      double w = 1.0;
      if (cfg.weighted_sampler) {
        w = row_labels[train_rows[i]] ? 1.0 / double(pos) : 1.0 / double(neg);
      }
      acc += w;
      cum[i] = acc;
    }
    for (auto& c : cum) c /= acc;
  }
  auto draw_row = [&]() {
    double u = sample_rng.uniform();
    std::size_t lo = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    if (lo >= train_rows.size()) lo = train_rows.size() - 1;
    return train_rows[lo];
  };

  Matrix x_val = detail::gather_rows(x, val_rows);
  std::vector<std::uint8_t> y_val;
  for (std::size_t r : val_rows) y_val.push_back(row_labels[r]);

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState emb_state = AdamState::for_net(res.embedder);
  AdamState clf_state = AdamState::for_net(res.classifier);

  DenseNet best_embedder = res.embedder;
  DenseNet best_classifier = res.classifier;
  double best_val = -1.0;
  int since_best = 0;

  std::size_t steps_per_epoch =
      (train_rows.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> batch_ix(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    double epoch_loss = 0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      for (int k = 0; k < cfg.batch_size; ++k) batch_ix[k] = draw_row();
      Matrix xb = detail::gather_rows(x, batch_ix);
      std::vector<double> yb(batch_ix.size());
      for (std::size_t k = 0; k < batch_ix.size(); ++k) {
        yb[k] = row_labels[batch_ix[k]] ? 1.0 : 0.0;
      }

      ForwardCache emb_cache, clf_cache;
      forward(res.embedder, xb, emb_cache);
      forward(res.classifier, emb_cache.output, clf_cache);
      const Matrix& logits = clf_cache.preacts.back();
      BceResult bce = weighted_bce(
          std::span<const double>(logits.data.data(), logits.data.size()),
          yb, res.positive_weight);
      if (!std::isfinite(bce.loss)) {
        throw_training("fine-tuning diverged: non-finite loss");
      }
      epoch_loss += bce.loss;

      Matrix d_logits(logits.rows, 1);
      for (std::size_t r = 0; r < logits.rows; ++r) {
        d_logits.at(r, 0) = bce.d_logits[r];
      }
      Matrix d_emb;
      NetGrads clf_grads = backward(res.classifier, clf_cache, d_logits,
                                    cfg.joint_finetune ? &d_emb : nullptr,
                                    /*grad_at_logits=*/true);
      if (cfg.joint_finetune) {
        NetGrads emb_grads = backward(res.embedder, emb_cache, d_emb);
        adam_step(res.embedder, emb_grads, emb_state, adam_cfg);
      }
      adam_step(res.classifier, clf_grads, clf_state, adam_cfg);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / double(steps_per_epoch);
    if (!val_rows.empty()) {
      Matrix probs = net_forward(res.classifier,
                                 net_forward(res.embedder, x_val));
      log.val_balanced_accuracy = detail::row_balanced_accuracy(
          std::span<const double>(probs.data.data(), probs.data.size()),
          y_val);
      if (log.val_balanced_accuracy > best_val) {
        best_val = log.val_balanced_accuracy;
        best_embedder = res.embedder;
        best_classifier = res.classifier;
        res.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        res.history.push_back(log);
        break;
      }
    }
    res.history.push_back(log);
  }

  if (!val_rows.empty() && res.best_epoch >= 0) {
    res.embedder = std::move(best_embedder);
    res.classifier = std::move(best_classifier);
  }
  return res;
}

// Training log as line-delimited JSON, one epoch per line.
inline std::string history_to_jsonl(std::span<const EpochLog> history) {
  std::string out;
  for (const auto& e : history) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.train_loss;
    j["val_balanced_accuracy"] = e.val_balanced_accuracy;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// Day-wise classifier probabilities for a block of rows.
inline std::vector<double> predict_rows(const DenseNet& embedder,
                                        const DenseNet& classifier,
                                        const Matrix& x) {
  Matrix probs = net_forward(classifier, net_forward(embedder, x));
  return std::vector<double>(probs.data.begin(), probs.data.end());
}

// User-level prediction: the arithmetic mean of the user's day-wise
// probabilities.
inline double predict_user(const DenseNet& embedder,
                           const DenseNet& classifier, const Matrix& rows) {
  if (rows.rows == 0) throw_training("predict_user: no data for user");
  std::vector<double> probs = predict_rows(embedder, classifier, rows);
  double s = 0;
  for (double p : probs) s += p;
  return s / double(probs.size());
}

}  // namespace pheno
