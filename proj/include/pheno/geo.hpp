#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "pheno/common.hpp"
#include "pheno/stats.hpp"

namespace pheno {

inline constexpr double kEarthRadiusM = 6371008.8;  // mean Earth radius
inline constexpr double kDegToRad = 0.017453292519943295;

struct LatLon {
  double lat = 0;
  double lon = 0;
};

// Great-circle distance in meters on a spherical Earth.
inline double haversine_m(const LatLon& a, const LatLon& b) {
  double phi1 = a.lat * kDegToRad, phi2 = b.lat * kDegToRad;
  double dphi = (b.lat - a.lat) * kDegToRad;
  double dlam = (b.lon - a.lon) * kDegToRad;
  double s = std::sin(dphi / 2), t = std::sin(dlam / 2);
  double h = s * s + std::cos(phi1) * std::cos(phi2) * t * t;
  h = std::min(1.0, h);
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

// Grid cell key: lat/lon rounded to `precision` decimals (3 decimals is
// roughly a 111 m cell).
struct GridCell {
  std::int64_t lat_q = 0;
  std::int64_t lon_q = 0;
  auto operator<=>(const GridCell&) const = default;
};

inline GridCell grid_cell(const LatLon& p, int precision) {
  double scale = std::pow(10.0, precision);
  return {std::llround(p.lat * scale), std::llround(p.lon * scale)};
}

inline LatLon cell_centroid(const GridCell& c, int precision) {
  double scale = std::pow(10.0, precision);
  return {double(c.lat_q) / scale, double(c.lon_q) / scale};
}

// Root-mean-square haversine distance from the lat/lon centroid.
inline double radius_of_gyration(std::span<const LatLon> points) {
  if (points.empty()) return kMissing;
  LatLon c{0, 0};
  for (const auto& p : points) {
    c.lat += p.lat;
    c.lon += p.lon;
  }
  c.lat /= double(points.size());
  c.lon /= double(points.size());
  double s = 0;
  for (const auto& p : points) {
    double d = haversine_m(p, c);
    s += d * d;
  }
  return std::sqrt(s / double(points.size()));
}

// Shannon entropy (nats) of the distribution of points over grid cells.
inline double location_entropy(std::span<const LatLon> points, int precision) {
  if (points.empty()) return kMissing;
  std::map<GridCell, std::size_t> counts;
  for (const auto& p : points) ++counts[grid_cell(p, precision)];
  double n = double(points.size());
  double h = 0;
  for (const auto& [cell, c] : counts) {
    double p = double(c) / n;
    h -= p * std::log(p);
  }
  return std::max(0.0, h);
}

inline std::size_t distinct_cells(std::span<const LatLon> points,
                                  int precision) {
  std::map<GridCell, std::size_t> counts;
  for (const auto& p : points) ++counts[grid_cell(p, precision)];
  return counts.size();
}

// Total chronological path length in meters.
inline double path_length_m(std::span<const LatLon> points) {
  if (points.empty()) return kMissing;
  double s = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    s += haversine_m(points[i - 1], points[i]);
  }
  return s;
}

// Modal-cell home inference. Cells are ranked by point count; ties go to the
// cell seen earliest in the stream. `night_points` take priority; when there
// are none the modal cell over all points is used instead. Returns false
// when no points exist at all.
inline bool infer_home(std::span<const LatLon> night_points,
                       std::span<const LatLon> all_points, int precision,
                       LatLon& home_out) {
  std::span<const LatLon> pts =
      night_points.empty() ? all_points : night_points;
  if (pts.empty()) return false;
  std::map<GridCell, std::size_t> counts;
  std::map<GridCell, std::size_t> first_seen;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    GridCell c = grid_cell(pts[i], precision);
    if (!first_seen.count(c)) first_seen[c] = i;
    ++counts[c];
  }
  GridCell best{};
  std::size_t best_count = 0, best_first = 0;
  bool have = false;
  for (const auto& [cell, c] : counts) {
    std::size_t fs = first_seen[cell];
    if (!have || c > best_count || (c == best_count && fs < best_first)) {
      best = cell;
      best_count = c;
      best_first = fs;
      have = true;
    }
  }
  home_out = cell_centroid(best, precision);
  return true;
}

struct HomeFeatures {
  double max_dist = kMissing;
  double mean_dist = kMissing;
  double median_dist = kMissing;
  double time_at_home = kMissing;    // fraction of points within the radius
  double night_movement = kMissing;  // night-partition path length
};

// Distances are measured from `home`; `night_points` must be the day's
// night-partition points in chronological order.
inline HomeFeatures home_features(std::span<const LatLon> points,
                                  std::span<const LatLon> night_points,
                                  const LatLon& home, double home_radius_m) {
  HomeFeatures f;
  if (points.empty()) return f;
  std::vector<double> dists;
  dists.reserve(points.size());
  std::size_t at_home = 0;
  for (const auto& p : points) {
    double d = haversine_m(p, home);
    dists.push_back(d);
    if (d <= home_radius_m) ++at_home;
  }
  f.max_dist = *std::max_element(dists.begin(), dists.end());
  f.mean_dist = mean_of(dists);
  f.median_dist = median_of(dists);
  f.time_at_home = double(at_home) / double(points.size());
  f.night_movement = night_points.empty() ? 0.0 : path_length_m(night_points);
  return f;
}

}  // namespace pheno
