#include <catch2/catch_amalgamated.hpp>

#include "pheno/neural.hpp"
#include "pheno/rng.hpp"

using namespace pheno;

namespace {

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), m.row(r));
  }
  return m;
}

// Gradient of a scalar loss through one or more nets, checked against
// central differences.
double check_net_loss(DenseNet& net, const Matrix& x,
                      const std::function<double(const Matrix&)>& loss_of_out,
                      const std::function<Matrix(const Matrix&)>& grad_of_out) {
  ForwardCache cache;
  forward(net, x, cache);
  Matrix g = grad_of_out(cache.output);
  NetGrads grads = backward(net, cache, g);
  auto params = param_pointers(net);
  auto flat = flatten_grads(grads);
  auto loss_fn = [&]() {
    ForwardCache c2;
    forward(net, x, c2);
    return loss_of_out(c2.output);
  };
  return grad_check(loss_fn, params, flat, 1e-5);
}

}  // namespace

TEST_CASE("forward: identity single layer reproduces the input") {
  DenseNet net;
  Layer l;
  l.in = 3;
  l.out = 3;
  l.act = Activation::identity;
  l.w = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  l.b = {0, 0, 0};
  net.layers.push_back(l);
  Matrix x = from_rows({{1.5, -2.0, 0.25}});
  ForwardCache cache;
  forward(net, x, cache);
  REQUIRE(cache.output.at(0, 0) == 1.5);
  REQUIRE(cache.output.at(0, 1) == -2.0);
  REQUIRE(cache.output.at(0, 2) == 0.25);
}

TEST_CASE("relu: negative pre-activation blocks value and gradient") {
  DenseNet net;
  Layer l;
  l.in = 1;
  l.out = 1;
  l.act = Activation::relu;
  l.w = {1.0};
  l.b = {-5.0};  // pre-activation is negative for small inputs
  net.layers.push_back(l);
  Matrix x = from_rows({{1.0}});
  ForwardCache cache;
  forward(net, x, cache);
  REQUIRE(cache.output.at(0, 0) == 0.0);
  Matrix g(1, 1);
  g.at(0, 0) = 1.0;
  Matrix dx;
  NetGrads grads = backward(net, cache, g, &dx);
  REQUIRE(grads.dw[0][0] == 0.0);
  REQUIRE(grads.db[0][0] == 0.0);
  REQUIRE(dx.at(0, 0) == 0.0);
}

TEST_CASE("gradient check: random nets against finite differences") {
  Rng rng(2024);
  for (int rep = 0; rep < 10; ++rep) {
    std::size_t dims[] = {5, 4, 3};
    Activation acts[] = {Activation::relu,
                         rep % 2 ? Activation::sigmoid : Activation::identity};
    DenseNet net = DenseNet::make(dims, acts, rng);
    Matrix x(4, 5);
    for (auto& v : x.data) v = rng.normal() + 0.1;  // keep off relu kinks
    // Loss: sum of squares of the outputs.
    auto loss_of = [](const Matrix& out) {
      double s = 0;
      for (double v : out.data) s += v * v;
      return s;
    };
    auto grad_of = [](const Matrix& out) {
      Matrix g(out.rows, out.cols);
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        g.data[i] = 2.0 * out.data[i];
      }
      return g;
    };
    double err = check_net_loss(net, x, loss_of, grad_of);
    REQUIRE(err < 1e-6);
  }
}

TEST_CASE("triplet loss: satisfied triplet and direct formula") {
  Matrix a = from_rows({{0.0}});
  Matrix p = from_rows({{0.0}});
  Matrix n = from_rows({{2.5}});
  auto sat = triplet_margin_loss(a, p, n, 1.0);
  REQUIRE(sat.loss == 0.0);
  for (double v : sat.d_anchor.data) REQUIRE(v == 0.0);

  // ||a-p|| = 2, ||a-n|| = 1, margin 1: loss = 2.
  Matrix a2 = from_rows({{0.0}});
  Matrix p2 = from_rows({{2.0}});
  Matrix n2 = from_rows({{1.0}});
  auto r = triplet_margin_loss(a2, p2, n2, 1.0);
  REQUIRE(r.loss == Catch::Approx(2.0));
}

TEST_CASE("triplet loss: zero-distance subgradient is zero") {
  Matrix a = from_rows({{1.0, 2.0}});
  Matrix p = from_rows({{1.0, 2.0}});   // identical to the anchor
  Matrix n = from_rows({{1.0, 2.2}});
  auto r = triplet_margin_loss(a, p, n, 1.0);
  REQUIRE(r.loss > 0.0);
  // The a-p term contributes nothing; gradients flow only via a-n.
  REQUIRE(r.d_positive.at(0, 0) == 0.0);
  REQUIRE(r.d_positive.at(0, 1) == 0.0);
}

TEST_CASE("triplet loss gradients match finite differences") {
  Rng rng(7);
  Matrix a(3, 4), p(3, 4), n(3, 4);
  for (auto* m : {&a, &p, &n}) {
    for (auto& v : m->data) v = rng.normal();
  }
  auto r = triplet_margin_loss(a, p, n, 1.0);
  double h = 1e-6;
  for (auto [m, g] : {std::pair{&a, &r.d_anchor}, std::pair{&p, &r.d_positive},
                      std::pair{&n, &r.d_negative}}) {
    for (std::size_t i = 0; i < m->data.size(); ++i) {
      double saved = m->data[i];
      m->data[i] = saved + h;
      double lp = triplet_margin_loss(a, p, n, 1.0).loss;
      m->data[i] = saved - h;
      double lm = triplet_margin_loss(a, p, n, 1.0).loss;
      m->data[i] = saved;
      double fd = (lp - lm) / (2 * h);
      REQUIRE(g->data[i] == Catch::Approx(fd).margin(1e-5));
    }
  }
}

TEST_CASE("weighted BCE: worked values and saturation stability") {
  std::vector<double> logits{0.0};
  std::vector<double> labels{1.0};
  auto r = weighted_bce(logits, labels, 1.0);
  REQUIRE(r.loss == Catch::Approx(std::log(2.0)).epsilon(1e-12));

  std::vector<double> big{30.0};
  auto sat = weighted_bce(big, labels, 1.0);
  REQUIRE(sat.loss < 1e-12);
  REQUIRE(std::isfinite(sat.loss));

  std::vector<double> neg{-30.0};
  auto sat2 = weighted_bce(neg, std::vector<double>{0.0}, 1.0);
  REQUIRE(sat2.loss < 1e-12);

  // Positive weight scales the positive-label loss linearly.
  auto w2 = weighted_bce(logits, labels, 2.0);
  REQUIRE(w2.loss == Catch::Approx(2.0 * std::log(2.0)));
}

TEST_CASE("weighted BCE gradient matches finite differences") {
  Rng rng(15);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> logits{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    std::vector<double> labels{double(rng.uniform() < 0.5),
                               double(rng.uniform() < 0.5)};
    double w = rng.uniform(0.5, 4.0);
    auto r = weighted_bce(logits, labels, w);
    double h = 1e-6;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      auto probe = logits;
      probe[i] += h;
      double lp = weighted_bce(probe, labels, w).loss;
      probe[i] -= 2 * h;
      double lm = weighted_bce(probe, labels, w).loss;
      double fd = (lp - lm) / (2 * h);
      REQUIRE(r.d_logits[i] == Catch::Approx(fd).margin(1e-6));
    }
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Rng rng(33);
  std::size_t dims[] = {3, 2};
  Activation acts[] = {Activation::identity};
  DenseNet net = DenseNet::make(dims, acts, rng);
  DenseNet before = net;
  AdamState st = AdamState::for_net(net);
  NetGrads zero = NetGrads::zeros_like(net);
  adam_step(net, zero, st, AdamConfig{});
  REQUIRE(net.layers[0].w == before.layers[0].w);
  REQUIRE(net.layers[0].b == before.layers[0].b);
}

TEST_CASE("adam: first step moves by about lr against the gradient sign") {
  DenseNet net;
  Layer l;
  l.in = 1;
  l.out = 1;
  l.act = Activation::identity;
  l.w = {0.5};
  l.b = {0.0};
  net.layers.push_back(l);
  AdamState st = AdamState::for_net(net);
  NetGrads g = NetGrads::zeros_like(net);
  g.dw[0][0] = 3.7;  // any positive constant
  AdamConfig cfg;
  adam_step(net, g, st, cfg);
  REQUIRE(net.layers[0].w[0] ==
          Catch::Approx(0.5 - cfg.lr).epsilon(1e-6));
}

TEST_CASE("adam: 100 steps shrink a quadratic from 1 toward 0") {
  DenseNet net;
  Layer l;
  l.in = 1;
  l.out = 1;
  l.act = Activation::identity;
  l.w = {1.0};
  l.b = {0.0};
  net.layers.push_back(l);
  AdamState st = AdamState::for_net(net);
  AdamConfig cfg;
  cfg.lr = 0.1;
  for (int i = 0; i < 100; ++i) {
    NetGrads g = NetGrads::zeros_like(net);
    g.dw[0][0] = 2.0 * net.layers[0].w[0];  // d/dx of x^2
    adam_step(net, g, st, cfg);
  }
  REQUIRE(std::fabs(net.layers[0].w[0]) < 0.2);
}

TEST_CASE("initialization is deterministic per seed") {
  std::size_t dims[] = {6, 4, 2};
  Activation acts[] = {Activation::relu, Activation::identity};
  Rng r1(5), r2(5), r3(6);
  DenseNet a = DenseNet::make(dims, acts, r1);
  DenseNet b = DenseNet::make(dims, acts, r2);
  DenseNet c = DenseNet::make(dims, acts, r3);
  REQUIRE(a.layers[0].w == b.layers[0].w);
  REQUIRE(a.layers[1].w == b.layers[1].w);
  REQUIRE(a.layers[0].w != c.layers[0].w);
}

TEST_CASE("checkpoint: JSON round trip is bit exact") {
  Rng rng(12);
  std::size_t dims[] = {5, 8, 1};
  Activation acts[] = {Activation::relu, Activation::sigmoid};
  DenseNet net = DenseNet::make(dims, acts, rng);
  auto j = net_to_json(net);
  DenseNet back = net_from_json(j);
  REQUIRE(back.layers.size() == net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    REQUIRE(back.layers[l].w == net.layers[l].w);
    REQUIRE(back.layers[l].b == net.layers[l].b);
    REQUIRE(back.layers[l].act == net.layers[l].act);
  }
}
