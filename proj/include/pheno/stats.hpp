#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "pheno/common.hpp"

namespace pheno {

// Median with the midpoint convention for even counts. Input is copied and
// sorted; NaNs must be filtered by the caller.
inline double median_of(std::vector<double> v) {
  if (v.empty()) return kMissing;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return kMissing;
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// Population standard deviation (defined for n = 1, where it is 0).
inline double pop_sd_of(std::span<const double> v) {
  if (v.empty()) return kMissing;
  double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size()));
}

// Sample variance (n - 1 denominator); used by the significance tests.
inline double sample_var_of(std::span<const double> v) {
  if (v.size() < 2) return kMissing;
  double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / double(v.size() - 1);
}

struct StatBlock {
  double total = kMissing;
  double mean = kMissing;
  double median = kMissing;
  double sd = kMissing;
  double max = kMissing;
  double min = kMissing;
};

// Descriptive statistics used by the scalar-sensor feature rows. An empty
// sample yields a block of missing values.
inline StatBlock stat_block(std::span<const double> samples) {
  StatBlock b;
  if (samples.empty()) return b;
  b.total = 0;
  b.max = samples[0];
  b.min = samples[0];
  for (double x : samples) {
    b.total += x;
    b.max = std::max(b.max, x);
    b.min = std::min(b.min, x);
  }
  b.mean = b.total / double(samples.size());
  b.median = median_of({samples.begin(), samples.end()});
  b.sd = pop_sd_of(samples);
  return b;
}

// Pearson r over pairwise-complete observations. Returns missing when fewer
// than two complete pairs exist or either side is constant.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (is_missing(xs[i]) || is_missing(ys[i])) continue;
    sx += xs[i];
    sy += ys[i];
    ++n;
  }
  if (n < 2) return kMissing;
  double mx = sx / double(n), my = sy / double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (is_missing(xs[i]) || is_missing(ys[i])) continue;
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return kMissing;
  return sxy / std::sqrt(sxx * syy);
}

// Symmetric correlation matrix over feature columns; diagonal is 1.
// `columns[j]` holds one feature's values across rows.
inline std::vector<std::vector<double>> correlation_matrix(
    const std::vector<std::vector<double>>& columns) {
  std::size_t k = columns.size();
  std::vector<std::vector<double>> r(k, std::vector<double>(k, kMissing));
  for (std::size_t i = 0; i < k; ++i) {
    r[i][i] = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      double c = pearson(columns[i], columns[j]);
      r[i][j] = c;
      r[j][i] = c;
    }
  }
  return r;
}

// Per-feature normalization statistics fitted on a training fold only.
// Missing entries are imputed with the fold median before the z-score is
// taken; all-missing or constant columns are flagged and map to 0.
struct NormStats {
  std::vector<double> median;  // imputation value (0 when column all-missing)
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<bool> constant;

  std::size_t size() const { return mean.size(); }
};

// `rows` is row-major, all rows the same width.
inline NormStats fit_norm(const std::vector<std::vector<double>>& rows) {
  NormStats st;
  if (rows.empty()) throw_training("fit_norm: empty training fold");
  std::size_t width = rows[0].size();
  st.median.resize(width);
  st.mean.resize(width);
  st.sd.resize(width);
  st.constant.resize(width);
  std::vector<double> col;
  for (std::size_t j = 0; j < width; ++j) {
    col.clear();
    for (const auto& r : rows) {
      if (!is_missing(r[j])) col.push_back(r[j]);
    }
    double med = col.empty() ? 0.0 : median_of(col);
    st.median[j] = med;
    double s = 0;
    for (const auto& r : rows) s += is_missing(r[j]) ? med : r[j];
    double m = s / double(rows.size());
    double ss = 0;
    for (const auto& r : rows) {
      double v = is_missing(r[j]) ? med : r[j];
      ss += (v - m) * (v - m);
    }
    double sd = std::sqrt(ss / double(rows.size()));
    st.mean[j] = m;
    st.sd[j] = sd;
    st.constant[j] = (sd == 0.0);
  }
  return st;
}

inline void apply_norm_row(std::vector<double>& row, const NormStats& st) {
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (st.constant[j]) {
      row[j] = 0.0;
      continue;
    }
    double v = is_missing(row[j]) ? st.median[j] : row[j];
    row[j] = (v - st.mean[j]) / st.sd[j];
  }
}

inline std::vector<std::vector<double>> apply_norm(
    std::vector<std::vector<double>> rows, const NormStats& st) {
  for (auto& r : rows) apply_norm_row(r, st);
  return rows;
}

}  // namespace pheno
