#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "pheno/common.hpp"
#include "pheno/rng.hpp"

namespace pheno {

// Row-major matrix of doubles. All network arithmetic is 64-bit; the
// networks are small enough that precision is worth more than speed here.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

enum class Activation : int { relu = 0, identity, sigmoid };

inline const char* activation_name(Activation a) {
  static const char* names[] = {"relu", "identity", "sigmoid"};
  return names[int(a)];
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

struct Layer {
  std::size_t in = 0, out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
  Activation act = Activation::identity;
};

struct DenseNet {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }

  // He-uniform weights, zero biases, drawn from the caller's stream.
  static DenseNet make(std::span<const std::size_t> dims,
                       std::span<const Activation> acts, Rng& rng) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1) {
      throw_internal("DenseNet::make: bad layer spec");
    }
    DenseNet net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      Layer layer;
      layer.in = dims[l];
      layer.out = dims[l + 1];
      layer.act = acts[l];
      layer.w.resize(layer.out * layer.in);
      layer.b.assign(layer.out, 0.0);
      double limit = std::sqrt(6.0 / double(layer.in));
      for (auto& w : layer.w) w = rng.uniform(-limit, limit);
      net.layers.push_back(std::move(layer));
    }
    return net;
  }
};

struct ForwardCache {
  std::vector<Matrix> inputs;   // input to each layer
  std::vector<Matrix> preacts;  // pre-activation of each layer
  Matrix output;                // post-activation of the last layer
};

inline void forward(const DenseNet& net, const Matrix& x, ForwardCache& cache) {
  std::size_t L = net.layers.size();
  cache.inputs.resize(L);
  cache.preacts.resize(L);
  const Matrix* cur = &x;
  for (std::size_t l = 0; l < L; ++l) {
    const Layer& layer = net.layers[l];
    if (cur->cols != layer.in) throw_internal("forward: shape mismatch");
    cache.inputs[l] = *cur;
    Matrix z(cur->rows, layer.out);
    for (std::size_t r = 0; r < cur->rows; ++r) {
      const double* xr = cur->row(r);
      double* zr = z.row(r);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double* wo = layer.w.data() + o * layer.in;
        double acc = layer.b[o];
        for (std::size_t i = 0; i < layer.in; ++i) acc += wo[i] * xr[i];
        zr[o] = acc;
      }
    }
    cache.preacts[l] = z;
    Matrix a = std::move(z);
    switch (layer.act) {
      case Activation::relu:
        for (auto& v : a.data) v = v > 0 ? v : 0.0;
        break;
      case Activation::identity:
        break;
      case Activation::sigmoid:
        for (auto& v : a.data) v = sigmoid(v);
        break;
    }
    if (l + 1 == L) {
      cache.output = std::move(a);
    } else {
      cache.inputs[l + 1] = std::move(a);
      cur = &cache.inputs[l + 1];
    }
  }
}

struct NetGrads {
  std::vector<std::vector<double>> dw, db;

  static NetGrads zeros_like(const DenseNet& net) {
    NetGrads g;
    for (const auto& l : net.layers) {
      g.dw.emplace_back(l.w.size(), 0.0);
      g.db.emplace_back(l.b.size(), 0.0);
    }
    return g;
  }

  void accumulate(const NetGrads& o) {
    for (std::size_t l = 0; l < dw.size(); ++l) {
      for (std::size_t i = 0; i < dw[l].size(); ++i) dw[l][i] += o.dw[l][i];
      for (std::size_t i = 0; i < db[l].size(); ++i) db[l][i] += o.db[l][i];
    }
  }
};

// Backpropagation. `grad_out` is dL/d(output). When `grad_at_logits` is
// true it is interpreted as dL/d(final pre-activation) instead, which is
// how the numerically stable BCE-with-logits path injects its gradient.
// Returns dL/d(input) when `input_grad` is non-null.
inline NetGrads backward(const DenseNet& net, const ForwardCache& cache,
                         const Matrix& grad_out, Matrix* input_grad = nullptr,
                         bool grad_at_logits = false) {
  std::size_t L = net.layers.size();
  NetGrads grads = NetGrads::zeros_like(net);
  Matrix delta = grad_out;  // becomes dL/dZ layer by layer
  for (std::size_t l = L; l-- > 0;) {
    const Layer& layer = net.layers[l];
    const Matrix& z = cache.preacts[l];
    bool skip_act = grad_at_logits && l == L - 1;
    if (!skip_act) {
      switch (layer.act) {
        case Activation::relu:
          for (std::size_t i = 0; i < delta.data.size(); ++i) {
            if (z.data[i] <= 0) delta.data[i] = 0.0;
          }
          break;
        case Activation::identity:
          break;
        case Activation::sigmoid:
          for (std::size_t i = 0; i < delta.data.size(); ++i) {
            double s = sigmoid(z.data[i]);
            delta.data[i] *= s * (1.0 - s);
          }
          break;
      }
    }
    const Matrix& x = cache.inputs[l];
    auto& dw = grads.dw[l];
    auto& db = grads.db[l];
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double* xr = x.row(r);
      const double* dr = delta.row(r);
      for (std::size_t o = 0; o < layer.out; ++o) {
        double d = dr[o];
        if (d == 0.0) continue;
        db[o] += d;
        double* dwo = dw.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) dwo[i] += d * xr[i];
      }
    }
    if (l > 0 || input_grad) {
      Matrix dx(x.rows, layer.in);
      for (std::size_t r = 0; r < x.rows; ++r) {
        const double* dr = delta.row(r);
        double* dxr = dx.row(r);
        for (std::size_t o = 0; o < layer.out; ++o) {
          double d = dr[o];
          if (d == 0.0) continue;
          const double* wo = layer.w.data() + o * layer.in;
          for (std::size_t i = 0; i < layer.in; ++i) dxr[i] += d * wo[i];
        }
      }
      if (l == 0) {
        *input_grad = std::move(dx);
      } else {
        delta = std::move(dx);
      }
    }
  }
  return grads;
}

// Triplet margin loss over a batch: mean over rows of
// max(0, ||a - p|| - ||a - n|| + margin). Gradients are averaged the same
// way; a zero distance contributes a zero subgradient.
struct TripletLossResult {
  double loss = 0;
  Matrix d_anchor, d_positive, d_negative;
};

inline TripletLossResult triplet_margin_loss(const Matrix& a, const Matrix& p,
                                             const Matrix& n, double margin) {
  if (a.rows != p.rows || a.rows != n.rows || a.cols != p.cols ||
      a.cols != n.cols) {
    throw_internal("triplet loss: shape mismatch");
  }
  TripletLossResult res;
  res.d_anchor = Matrix(a.rows, a.cols);
  res.d_positive = Matrix(a.rows, a.cols);
  res.d_negative = Matrix(a.rows, a.cols);
  double inv_b = 1.0 / double(a.rows);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* ar = a.row(r);
    const double* pr = p.row(r);
    const double* nr = n.row(r);
    double dap = 0, dan = 0;
    for (std::size_t c = 0; c < a.cols; ++c) {
      dap += (ar[c] - pr[c]) * (ar[c] - pr[c]);
      dan += (ar[c] - nr[c]) * (ar[c] - nr[c]);
    }
    dap = std::sqrt(dap);
    dan = std::sqrt(dan);
    double l = dap - dan + margin;
    if (l <= 0) continue;
    res.loss += l * inv_b;
    double* da = res.d_anchor.row(r);
    double* dp = res.d_positive.row(r);
    double* dn = res.d_negative.row(r);
    if (dap > 0) {
      for (std::size_t c = 0; c < a.cols; ++c) {
        double g = inv_b * (ar[c] - pr[c]) / dap;
        da[c] += g;
        dp[c] -= g;
      }
    }
    if (dan > 0) {
      for (std::size_t c = 0; c < a.cols; ++c) {
        double g = inv_b * (ar[c] - nr[c]) / dan;
        da[c] -= g;
        dn[c] += g;
      }
    }
  }
  return res;
}

// Class-weighted binary cross-entropy on logits, evaluated in the stable
// softplus form: w_y * (softplus(z) - y*z). Returns the mean loss and
// dL/dz per row.
struct BceResult {
  double loss = 0;
  std::vector<double> d_logits;
};

inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

inline BceResult weighted_bce(std::span<const double> logits,
                              std::span<const double> labels,
                              double positive_weight) {
  if (logits.size() != labels.size()) throw_internal("bce: length mismatch");
  if (!(positive_weight > 0)) throw_internal("bce: weight must be positive");
  BceResult res;
  res.d_logits.resize(logits.size());
  double inv_n = 1.0 / double(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double y = labels[i];
    double w = y > 0.5 ? positive_weight : 1.0;
    res.loss += w * (softplus(logits[i]) - y * logits[i]) * inv_n;
    res.d_logits[i] = w * (sigmoid(logits[i]) - y) * inv_n;
  }
  return res;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> mw, vw, mb, vb;
  std::int64_t step = 0;

  static AdamState for_net(const DenseNet& net) {
    AdamState st;
    for (const auto& l : net.layers) {
      st.mw.emplace_back(l.w.size(), 0.0);
      st.vw.emplace_back(l.w.size(), 0.0);
      st.mb.emplace_back(l.b.size(), 0.0);
      st.vb.emplace_back(l.b.size(), 0.0);
    }
    return st;
  }
};

// One bias-corrected Adam update, in place.
inline void adam_step(DenseNet& net, const NetGrads& grads, AdamState& st,
                      const AdamConfig& cfg) {
  st.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
  auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                    std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    update(net.layers[l].w, grads.dw[l], st.mw[l], st.vw[l]);
    update(net.layers[l].b, grads.db[l], st.mb[l], st.vb[l]);
  }
}

// Collects raw pointers to every parameter of a net, layer by layer; the
// order matches NetGrads flattening.
inline std::vector<double*> param_pointers(DenseNet& net) {
  std::vector<double*> ptrs;
  for (auto& l : net.layers) {
    for (auto& w : l.w) ptrs.push_back(&w);
    for (auto& b : l.b) ptrs.push_back(&b);
  }
  return ptrs;
}

inline std::vector<double> flatten_grads(const NetGrads& g) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < g.dw.size(); ++l) {
    flat.insert(flat.end(), g.dw[l].begin(), g.dw[l].end());
    flat.insert(flat.end(), g.db[l].begin(), g.db[l].end());
  }
  return flat;
}

// Central-difference verification. `loss_fn` re-evaluates the loss at the
// current parameter values. The error is |analytic - numeric| scaled by
// max(1, |analytic| + |numeric|), so near-zero gradients are compared
// absolutely at unit scale.
inline double grad_check(const std::function<double()>& loss_fn,
                         std::span<double* const> params,
                         std::span<const double> analytic, double h = 1e-5) {
  if (params.size() != analytic.size()) {
    throw_internal("grad_check: size mismatch");
  }
  double max_err = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double saved = *params[i];
    *params[i] = saved + h;
    double lp = loss_fn();
    *params[i] = saved - h;
    double lm = loss_fn();
    *params[i] = saved;
    double fd = (lp - lm) / (2.0 * h);
    double denom = std::max(1.0, std::fabs(analytic[i]) + std::fabs(fd));
    max_err = std::max(max_err, std::fabs(analytic[i] - fd) / denom);
  }
  return max_err;
}

inline nlohmann::ordered_json net_to_json(const DenseNet& net) {
  nlohmann::ordered_json j;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : net.layers) {
    j["layers"].push_back({{"in", l.in},
                           {"out", l.out},
                           {"activation", activation_name(l.act)},
                           {"w", l.w},
                           {"b", l.b}});
  }
  return j;
}

inline DenseNet net_from_json(const nlohmann::ordered_json& j) {
  DenseNet net;
  for (const auto& lj : j.at("layers")) {
    Layer l;
    l.in = lj.at("in").get<std::size_t>();
    l.out = lj.at("out").get<std::size_t>();
    std::string act = lj.at("activation").get<std::string>();
    if (act == "relu") l.act = Activation::relu;
    else if (act == "identity") l.act = Activation::identity;
    else if (act == "sigmoid") l.act = Activation::sigmoid;
    else throw_data("checkpoint: unknown activation '" + act + "'");
    l.w = lj.at("w").get<std::vector<double>>();
    l.b = lj.at("b").get<std::vector<double>>();
    if (l.w.size() != l.in * l.out || l.b.size() != l.out) {
      throw_data("checkpoint: parameter shape mismatch");
    }
    net.layers.push_back(std::move(l));
  }
  if (net.layers.empty()) throw_data("checkpoint: no layers");
  return net;
}

}  // namespace pheno
