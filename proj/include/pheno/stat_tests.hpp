#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pheno/common.hpp"
#include "pheno/stats.hpp"

namespace pheno {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / 1.4142135623730950488);
}

namespace detail {

// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction.
// Absolute error well below 1e-10 for the (a, b) used by the t tests.
inline double betacf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
              a * std::log(x) + b * std::log(1.0 - x);
  double front = std::exp(ln);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// Two-sided p for a t statistic with df degrees of freedom.
inline double t_two_sided_p(double t, double df) {
  double x = df / (df + t * t);
  return detail::incomplete_beta(df / 2.0, 0.5, x);
}

// Midranks of |values|; ties share the average rank.
inline std::vector<double> midranks(std::span<const double> v) {
  std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double r = 0.5 * double(i + j) + 1.0;  // average of ranks i+1 .. j+1
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

struct WilcoxonResult {
  double statistic = 0;  // W+ (sum of ranks of positive differences)
  double p = 1;
  std::size_t n = 0;  // pairs remaining after zero differences are dropped
  bool exact = false;
};

// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
// are dropped; |differences| get midranks. The null distribution is
// enumerated exactly (as a rank-sum count over all sign assignments) for
// n <= 20, and approximated by a tie-corrected normal with continuity
// correction above that.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> xs,
                                           std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw_data("wilcoxon: length mismatch");
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double di = xs[i] - ys[i];
    if (di != 0.0) d.push_back(di);
  }
  if (d.empty()) throw_data("wilcoxon: no nonzero differences");
  if (d.size() < 5) throw_data("wilcoxon: fewer than 5 nonzero differences");
  std::size_t n = d.size();
  std::vector<double> absd(n);
  for (std::size_t i = 0; i < n; ++i) absd[i] = std::fabs(d[i]);
  std::vector<double> ranks = midranks(absd);

  double wplus = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0) wplus += ranks[i];
  }

  WilcoxonResult res;
  res.statistic = wplus;
  res.n = n;

  double total = 0;
  for (double r : ranks) total += r;

  if (n <= 20) {
    // Midranks are multiples of 1/2; doubling gives integer weights for an
    // exact subset-sum count over the 2^n sign assignments.
    std::vector<std::int64_t> w(n);
    std::int64_t wsum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = std::llround(2.0 * ranks[i]);
      wsum += w[i];
    }
    std::vector<double> count(wsum + 1, 0.0);
    count[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::int64_t s = wsum; s >= w[i]; --s) count[s] += count[s - w[i]];
    }
    std::int64_t t2 = std::llround(2.0 * wplus);
    std::int64_t lo = std::min(t2, wsum - t2);
    double below = 0, above = 0;
    for (std::int64_t s = 0; s <= lo; ++s) below += count[s];
    for (std::int64_t s = wsum - lo; s <= wsum; ++s) above += count[s];
    res.p = std::min(1.0, (below + above) / std::pow(2.0, double(n)));
    res.exact = true;
    return res;
  }

  double mean = total / 2.0;
  double var = 0;
  // n(n+1)(2n+1)/24 with a tie correction computed from the actual ranks.
  {
    double nn = double(n);
    var = nn * (nn + 1) * (2 * nn + 1) / 24.0;
    // Tie groups: count multiplicity of each distinct |d|.
    std::vector<double> sorted(absd);
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
      double t = double(j - i + 1);
      var -= t * (t * t - 1) / 48.0;
      i = j + 1;
    }
  }
  double z = (wplus - mean);
  z -= (z > 0 ? 0.5 : (z < 0 ? -0.5 : 0.0));  // continuity correction
  z /= std::sqrt(var);
  res.p = 2.0 * (1.0 - normal_cdf(std::fabs(z)));
  res.p = std::min(1.0, res.p);
  return res;
}

struct TTestResult {
  double t = 0;
  double df = 0;
  double p = 1;
};

inline TTestResult paired_t_test(std::span<const double> xs,
                                 std::span<const double> ys) {
  if (xs.size() != ys.size()) throw_data("paired t: length mismatch");
  std::size_t n = xs.size();
  if (n < 2) throw_data("paired t: need at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = xs[i] - ys[i];
  double var = sample_var_of(d);
  if (!(var > 0)) throw_data("paired t: zero variance");
  double m = mean_of(d);
  TTestResult r;
  r.t = m / std::sqrt(var / double(n));
  r.df = double(n - 1);
  r.p = t_two_sided_p(r.t, r.df);
  return r;
}

inline TTestResult welch_t_test(std::span<const double> a,
                                std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw_data("welch t: group too small");
  double va = sample_var_of(a), vb = sample_var_of(b);
  double na = double(a.size()), nb = double(b.size());
  double se2 = va / na + vb / nb;
  if (!(se2 > 0)) throw_data("welch t: zero variance");
  TTestResult r;
  r.t = (mean_of(a) - mean_of(b)) / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / (na * na * (na - 1)) + vb * vb / (nb * nb * (nb - 1)));
  r.p = t_two_sided_p(r.t, r.df);
  return r;
}

}  // namespace pheno
