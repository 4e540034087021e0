#include <catch2/catch_amalgamated.hpp>

#include "oracle_helpers.hpp"
#include "pheno/rng.hpp"
#include "pheno/stat_tests.hpp"

using namespace pheno;

TEST_CASE("wilcoxon: all-zero differences is an error") {
  std::vector<double> xs{1, 2, 3, 4, 5, 6};
  REQUIRE_THROWS_WITH(wilcoxon_signed_rank(xs, xs),
                      Catch::Matchers::ContainsSubstring("no nonzero"));
}

TEST_CASE("wilcoxon: n=6 one-sided sweep gives exact 2/64") {
  std::vector<double> xs{2, 3, 4, 5, 6, 7}, ys{1, 2, 3, 4, 5, 6.5};
  auto r = wilcoxon_signed_rank(xs, ys);
  REQUIRE(r.exact);
  REQUIRE(r.p == Catch::Approx(2.0 / 64.0).epsilon(1e-12));
}

TEST_CASE("wilcoxon matches exhaustive sign enumeration for n <= 12") {
  Rng rng(55);
  for (int rep = 0; rep < 60; ++rep) {
    std::size_t n = 5 + rng.uniform_index(8);  // 5..12
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < n; ++i) {
      xs.push_back(rng.uniform(-3, 3));
      // Occasional ties in |d| to exercise midranks.
      double d = rng.uniform() < 0.3 ? (rng.uniform() < 0.5 ? 0.5 : -0.5)
                                     : rng.uniform(-2, 2);
      if (d == 0) d = 0.25;
      ys.push_back(xs.back() - d);
    }
    auto r = wilcoxon_signed_rank(xs, ys);

    std::vector<double> diffs;
    for (std::size_t i = 0; i < n; ++i) diffs.push_back(xs[i] - ys[i]);
    std::vector<double> absd;
    for (double d : diffs) absd.push_back(std::fabs(d));
    auto ranks = midranks(absd);
    double wplus = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (diffs[i] > 0) wplus += ranks[i];
    }
    double want = oracle::wilcoxon_exact_enumeration(ranks, wplus);
    REQUIRE(r.p == Catch::Approx(std::min(1.0, want)).margin(1e-12));
  }
}

TEST_CASE("wilcoxon: normal approximation tracks the exact count for larger n") {
  Rng rng(66);
  std::vector<double> xs, ys;
  for (int i = 0; i < 24; ++i) {
    xs.push_back(rng.uniform(0, 3));
    ys.push_back(xs.back() - rng.uniform(-1, 1.4));
  }
  auto approx = wilcoxon_signed_rank(xs, ys);
  REQUIRE_FALSE(approx.exact);
  REQUIRE(approx.p > 0.0);
  REQUIRE(approx.p <= 1.0);

  // DP-style exact count on the same ranks, test-side.
  std::vector<double> diffs, absd;
  for (std::size_t i = 0; i < xs.size(); ++i) diffs.push_back(xs[i] - ys[i]);
  for (double d : diffs) absd.push_back(std::fabs(d));
  auto ranks = midranks(absd);
  double wplus = 0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    if (diffs[i] > 0) wplus += ranks[i];
  }
  double exact = oracle::wilcoxon_exact_enumeration(ranks, wplus);
  REQUIRE(approx.p == Catch::Approx(exact).margin(0.02));
}

TEST_CASE("wilcoxon: fewer than 5 nonzero differences is an error") {
  std::vector<double> xs{1, 2, 3, 4}, ys{0, 1, 2, 3};
  REQUIRE_THROWS_WITH(wilcoxon_signed_rank(xs, ys),
                      Catch::Matchers::ContainsSubstring("fewer than 5"));
}

TEST_CASE("paired t: zero variance is an error") {
  std::vector<double> xs{2, 3, 4, 5}, ys{1, 2, 3, 4};
  REQUIRE_THROWS_WITH(paired_t_test(xs, ys),
                      Catch::Matchers::ContainsSubstring("zero variance"));
}

TEST_CASE("paired t: textbook case n=10, t=2.262 gives p close to 0.050") {
  // 2.262 is the classic 97.5% quantile of t with 9 degrees of freedom.
  REQUIRE(t_two_sided_p(2.262, 9) == Catch::Approx(0.050).margin(0.001));
}

TEST_CASE("t distribution two-sided p agrees with reference values") {
  // Frozen from standard t tables.
  REQUIRE(t_two_sided_p(2.0, 10) == Catch::Approx(0.07338803).margin(1e-6));
  REQUIRE(t_two_sided_p(1.0, 5) == Catch::Approx(0.36321746).margin(1e-6));
  REQUIRE(t_two_sided_p(3.5, 30) == Catch::Approx(0.00147681).margin(1e-6));
  REQUIRE(t_two_sided_p(0.0, 7) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(t_two_sided_p(-2.0, 10) == t_two_sided_p(2.0, 10));
}

TEST_CASE("welch t: symmetric groups give p near 1") {
  std::vector<double> a{-1, 0, 1, 2, -2}, b{1, -1, 2, -2, 0};
  auto r = welch_t_test(a, b);
  REQUIRE(r.p == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("welch t: frozen reference case") {
  // Unequal variances; reference values from an independent Welch
  // computation on the same vectors.
  std::vector<double> a{1.1, 2.0, 2.9, 4.1, 4.9, 6.2, 7.0, 8.1};
  std::vector<double> b{5.5, 6.1, 6.8, 7.2, 7.9, 8.3, 9.0, 9.6};
  auto r = welch_t_test(a, b);
  REQUIRE(r.t == Catch::Approx(-2.9922967).margin(1e-6));
  REQUIRE(r.df == Catch::Approx(11.1337026).margin(1e-5));
  REQUIRE(r.p == Catch::Approx(0.01209790).margin(1e-6));
}

TEST_CASE("welch t: too-small groups are an error") {
  std::vector<double> a{1}, b{2, 3};
  REQUIRE_THROWS_WITH(welch_t_test(a, b),
                      Catch::Matchers::ContainsSubstring("group too small"));
}

TEST_CASE("midranks: ties share the average rank") {
  std::vector<double> v{3, 1, 3, 2};
  auto r = midranks(v);
  REQUIRE(r[1] == 1.0);
  REQUIRE(r[3] == 2.0);
  REQUIRE(r[0] == 3.5);
  REQUIRE(r[2] == 3.5);
}
