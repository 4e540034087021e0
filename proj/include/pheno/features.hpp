#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pheno/cohort.hpp"
#include "pheno/common.hpp"
#include "pheno/geo.hpp"
#include "pheno/registry.hpp"
#include "pheno/stats.hpp"

namespace pheno {

struct DayFeatureRow {
  std::string participant_id;
  int day_index = 0;  // 0-based offset from the participant's study start
  std::vector<double> values;  // registry order; missing = NaN
};

// Splits timestamped items into (day, night) by local time of day. The
// partition is exhaustive and disjoint; `get_ts` projects an item to its
// Timestamp.
template <typename T, typename GetTs>
inline void night_partition(std::span<const T> items,
                            const ExtractionConfig& cfg, GetTs get_ts,
                            std::vector<T>& day_out,
                            std::vector<T>& night_out) {
  day_out.clear();
  night_out.clear();
  for (const auto& it : items) {
    if (cfg.is_night(get_ts(it).local_time_of_day())) {
      night_out.push_back(it);
    } else {
      day_out.push_back(it);
    }
  }
}

// Running median: output at day d is the median of all non-missing raw
// values at days <= d. Gap days inherit the running value; leading days
// before the first observation stay missing.
inline std::vector<double> cumulative_median(std::span<const double> raw) {
  std::vector<double> out(raw.size(), kMissing);
  std::vector<double> seen;
  for (std::size_t d = 0; d < raw.size(); ++d) {
    if (!is_missing(raw[d])) {
      seen.insert(std::upper_bound(seen.begin(), seen.end(), raw[d]), raw[d]);
    }
    if (!seen.empty()) {
      std::size_t n = seen.size();
      out[d] = (n % 2 == 1) ? seen[n / 2] : 0.5 * (seen[n / 2 - 1] + seen[n / 2]);
    }
  }
  return out;
}

struct StepFeatures {
  double count = kMissing;
  double gt_5k = kMissing;
  double gt_7k = kMissing;
  double gt_10k = kMissing;
};

// Threshold flags are strict ">" comparisons encoded 0/1.
inline StepFeatures step_features(std::int64_t daily_count,
                                  const ExtractionConfig& cfg) {
  StepFeatures f;
  f.count = double(daily_count);
  f.gt_5k = daily_count > cfg.step_thresholds[0] ? 1.0 : 0.0;
  f.gt_7k = daily_count > cfg.step_thresholds[1] ? 1.0 : 0.0;
  f.gt_10k = daily_count > cfg.step_thresholds[2] ? 1.0 : 0.0;
  return f;
}

// 30 app-usage values: day block, night block (assigned by session start),
// then per-category seconds and percentage of the day's total session time.
// Unmapped apps count toward the day/night blocks and the percentage
// denominator but not toward any category.
inline std::vector<double> app_usage_features(
    std::span<const AppUsageSample> sessions, const ExtractionConfig& cfg) {
  std::vector<double> out(30, kMissing);
  if (sessions.empty()) return out;

  auto block = [](std::span<const AppUsageSample> ss, double* dst) {
    if (ss.empty()) return;
    std::set<std::string> apps;
    std::vector<double> durs;
    for (const auto& s : ss) {
      apps.insert(s.app_id);
      durs.push_back(s.duration_s);
    }
    StatBlock b = stat_block(durs);
    dst[0] = double(ss.size());
    dst[1] = double(apps.size());
    dst[2] = b.total;
    dst[3] = b.mean;
    dst[4] = b.median;
  };

  std::vector<AppUsageSample> day, night;
  night_partition(sessions, cfg,
                  [](const AppUsageSample& s) { return s.start; }, day, night);
  block(sessions, &out[0]);  // the day block covers the whole day
  block(night, &out[5]);

  const auto& cats = app_category_names();
  std::map<std::string, double> cat_seconds;
  double total_seconds = 0;
  for (const auto& s : sessions) {
    total_seconds += s.duration_s;
    auto it = cfg.app_category_map.find(s.app_id);
    if (it != cfg.app_category_map.end()) cat_seconds[it->second] += s.duration_s;
  }
  for (std::size_t c = 0; c < cats.size(); ++c) {
    double secs = cat_seconds.count(cats[c]) ? cat_seconds[cats[c]] : 0.0;
    out[10 + c] = secs;
    out[20 + c] = total_seconds > 0 ? 100.0 * secs / total_seconds : kMissing;
  }
  return out;
}

struct BatteryFeatures {
  double level_min = kMissing;
  double level_max = kMissing;
  double level_mean = kMissing;
  double level_median = kMissing;
  double charge_count = kMissing;
  double use_per_hour = kMissing;
  double minutes_below_20 = kMissing;
  double night_count = kMissing;
};

// Readings must be chronological. Discharge rate is measured over segments
// where neither endpoint is charging; single-reading days have no time base
// so the duration-derived values stay missing.
inline BatteryFeatures battery_features(
    std::span<const std::pair<Timestamp, BatterySample>> readings,
    const ExtractionConfig& cfg) {
  BatteryFeatures f;
  if (readings.empty()) return f;
  std::vector<double> levels;
  levels.reserve(readings.size());
  std::size_t night = 0;
  for (const auto& [ts, r] : readings) {
    levels.push_back(r.level_pct);
    if (cfg.is_night(ts.local_time_of_day())) ++night;
  }
  StatBlock b = stat_block(levels);
  f.level_min = b.min;
  f.level_max = b.max;
  f.level_mean = b.mean;
  f.level_median = b.median;
  f.night_count = double(night);

  int charges = 0;
  double drop_sum = 0, drop_hours = 0, below20_s = 0;
  for (std::size_t i = 1; i < readings.size(); ++i) {
    const auto& [ts0, r0] = readings[i - 1];
    const auto& [ts1, r1] = readings[i];
    double dt = double(ts1.epoch_s - ts0.epoch_s);
    if (dt < 0) dt = 0;
    if (r1.charging && !r0.charging) ++charges;
    if (!r0.charging && !r1.charging) {
      drop_sum += std::max(0.0, r0.level_pct - r1.level_pct);
      drop_hours += dt / 3600.0;
    }
    if (r0.level_pct < 20.0) below20_s += dt;
  }
  f.charge_count = double(charges);
  if (readings.size() >= 2) {
    f.minutes_below_20 = below20_s / 60.0;
    if (drop_hours > 0) f.use_per_hour = drop_sum / drop_hours;
  }
  return f;
}

// Day/night stat blocks for a scalar stream. `with_max` matches the noise
// row, which also reports the maximum.
inline void scalar_sensor_features(
    std::span<const std::pair<Timestamp, double>> readings,
    const ExtractionConfig& cfg, bool with_max, double* dst) {
  std::vector<std::pair<Timestamp, double>> day, night;
  night_partition(readings, cfg,
                  [](const std::pair<Timestamp, double>& r) { return r.first; },
                  day, night);
  auto emit = [&](const std::vector<std::pair<Timestamp, double>>& part,
                  double* p) {
    std::vector<double> vals;
    vals.reserve(part.size());
    for (const auto& [ts, v] : part) vals.push_back(v);
    StatBlock b = stat_block(vals);
    if (with_max) {
      p[0] = b.total;
      p[1] = b.median;
      p[2] = b.mean;
      p[3] = b.max;
      p[4] = b.sd;
    } else {
      p[0] = b.total;
      p[1] = b.mean;
      p[2] = b.median;
      p[3] = b.sd;
    }
  };
  int stride = with_max ? 5 : 4;
  emit(day, dst);
  emit(night, dst + stride);
}

struct SelfAppFeatures {
  double first_hour = kMissing;
  double last_hour = kMissing;
  double night_count = kMissing;
};

inline SelfAppFeatures self_app_features(std::span<const Timestamp> starts,
                                         const ExtractionConfig& cfg) {
  SelfAppFeatures f;
  if (starts.empty()) return f;
  int first = 24 * 3600, last = -1;
  std::size_t night = 0;
  for (const auto& ts : starts) {
    int tod = ts.local_time_of_day();
    first = std::min(first, tod);
    last = std::max(last, tod);
    if (cfg.is_night(tod)) ++night;
  }
  f.first_hour = double(first / 3600);
  f.last_hour = double(last / 3600);
  f.night_count = double(night);
  return f;
}

// The 13 location features, in the registry's order. `points` must be the
// day's samples in chronological order. Home-referenced entries go missing
// when no home is known.
inline std::vector<double> location_day_features(
    std::span<const std::pair<Timestamp, LatLon>> points,
    const std::optional<LatLon>& home, const ExtractionConfig& cfg) {
  std::vector<double> out(13, kMissing);
  if (points.empty()) return out;
  std::vector<LatLon> pts;
  std::vector<double> lats, lons;
  for (const auto& [ts, p] : points) {
    pts.push_back(p);
    lats.push_back(p.lat);
    lons.push_back(p.lon);
  }
  std::vector<std::pair<Timestamp, LatLon>> day, night;
  night_partition(points, cfg,
                  [](const std::pair<Timestamp, LatLon>& r) { return r.first; },
                  day, night);
  std::vector<LatLon> night_pts;
  for (const auto& [ts, p] : night) night_pts.push_back(p);

  out[0] = mean_of(lats);
  out[1] = mean_of(lons);
  out[2] = path_length_m(pts);
  out[3] = double(distinct_cells(pts, cfg.grid_precision_deg));
  if (home) {
    HomeFeatures hf = home_features(pts, night_pts, *home, cfg.home_radius_m);
    out[4] = hf.max_dist;
    out[5] = hf.mean_dist;
    out[6] = hf.median_dist;
    out[7] = hf.night_movement;
    out[12] = hf.time_at_home;
  }
  out[8] = radius_of_gyration(pts);
  out[9] = pop_sd_of(lats);
  out[10] = pop_sd_of(lons);
  out[11] = location_entropy(pts, cfg.grid_precision_deg);
  return out;
}

struct Dataset {
  FeatureRegistry registry;
  std::vector<DayFeatureRow> rows;  // sorted by participant_id, day_index
  std::map<std::string, RiskLabels> labels;
  std::vector<std::string> users;  // sorted ids that contributed rows
  std::map<std::string, double> scores[kOutcomeCount];  // raw questionnaire scores
};

namespace detail {

struct ParticipantDayBuckets {
  std::vector<std::pair<Timestamp, LatLon>> location;
  std::vector<std::int64_t> step_counts;
  std::vector<std::pair<Timestamp, BatterySample>> battery;
  std::vector<AppUsageSample> apps;
  std::vector<std::pair<Timestamp, double>> light;
  std::vector<std::pair<Timestamp, double>> noise;
  std::vector<std::pair<Timestamp, double>> brightness;
  std::vector<Timestamp> self_app;
  std::vector<double> active;  // one slot per question, NaN when unanswered
  bool any = false;

  ParticipantDayBuckets() : active(kActiveQuestionCount, kMissing) {}
};

}  // namespace detail

// Extracts raw per-day features for every participant, then replaces each
// series with its cumulative median. A row is emitted for every study day
// on which the participant contributed anything at all.
inline Dataset build_dataset(const Cohort& cohort,
                             const FeatureRegistry& registry,
                             const ExtractionConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.registry = registry;

  // Column indices resolved once; extraction writes through these.
  std::vector<std::size_t> active_ix(kActiveQuestionCount);
  for (int q = 0; q < kActiveQuestionCount; ++q) {
    active_ix[q] = registry.index_of(active_question_name(ActiveQuestion(q)));
  }
  auto ix = [&](const char* name) { return registry.index_of(name); };
  std::size_t light_ix = ix("light_day_total");
  std::size_t app_ix = ix("app_day_count");
  std::size_t noise_ix = ix("noise_day_total");
  std::size_t battery_ix = ix("battery_level_min");
  std::size_t loc_ix = ix("loc_mean_lat");
  std::size_t self_ix = ix("self_app_first_hour");
  std::size_t bright_ix = ix("brightness_day_total");
  std::size_t steps_ix = ix("steps_count");

  std::map<std::string, const Participant*> by_id;
  for (const auto& p : cohort.participants) {
    by_id[p.participant_id] = &p;
    ds.labels[p.participant_id] = risk_labels(p);
    for (int o = 0; o < kOutcomeCount; ++o) {
      ds.scores[o][p.participant_id] = outcome_score(p, Outcome(o));
    }
  }

  // Bucket events by (participant, day). Sorted participant order makes the
  // output independent of input file order.
  std::map<std::string, std::vector<detail::ParticipantDayBuckets>> buckets;
  std::map<std::string, std::vector<LatLon>> all_points;
  std::map<std::string, std::vector<LatLon>> night_points;
  for (const auto& [id, p] : by_id) {
    buckets[id].resize(p->study_days);
  }

  auto day_of = [&](const Participant& p, Date d) -> int {
    return int(d.days - p.study_start.days);
  };

  for (const auto& r : cohort.active) {
    const Participant& p = *by_id.at(r.participant_id);
    int d = day_of(p, r.date);
    if (d < 0 || d >= p.study_days) continue;
    auto& b = buckets[r.participant_id][d];
    b.active[int(r.question)] = double(r.value);
    b.any = true;
  }

  for (const auto& ev : cohort.passive) {
    const Participant& p = *by_id.at(ev.participant_id);
    auto& pb = buckets[ev.participant_id];
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, LocationSample>) {
            int d = day_of(p, ev.timestamp.local_date());
            if (d < 0 || d >= p.study_days) return;
            pb[d].location.push_back({ev.timestamp, LatLon{s.lat, s.lon}});
            pb[d].any = true;
            all_points[ev.participant_id].push_back({s.lat, s.lon});
            if (cfg.is_night(ev.timestamp.local_time_of_day())) {
              night_points[ev.participant_id].push_back({s.lat, s.lon});
            }
          } else if constexpr (std::is_same_v<T, StepDaySample>) {
            int d = day_of(p, s.date);
            if (d < 0 || d >= p.study_days) return;
            pb[d].step_counts.push_back(s.count);
            pb[d].any = true;
          } else if constexpr (std::is_same_v<T, BatterySample>) {
            int d = day_of(p, ev.timestamp.local_date());
            if (d < 0 || d >= p.study_days) return;
            pb[d].battery.push_back({ev.timestamp, s});
            pb[d].any = true;
          } else if constexpr (std::is_same_v<T, AppUsageSample>) {
            int d = day_of(p, s.start.local_date());
            if (d < 0 || d >= p.study_days) return;
            pb[d].apps.push_back(s);
            pb[d].any = true;
          } else if constexpr (std::is_same_v<T, AmbientLightSample>) {
            int d = day_of(p, ev.timestamp.local_date());
            if (d < 0 || d >= p.study_days) return;
            pb[d].light.push_back({ev.timestamp, s.lux});
            pb[d].any = true;
          } else if constexpr (std::is_same_v<T, NoiseSample>) {
            int d = day_of(p, ev.timestamp.local_date());
            if (d < 0 || d >= p.study_days) return;
            pb[d].noise.push_back({ev.timestamp, s.db});
            pb[d].any = true;
          } else if constexpr (std::is_same_v<T, ScreenBrightnessSample>) {
            int d = day_of(p, ev.timestamp.local_date());
            if (d < 0 || d >= p.study_days) return;
            pb[d].brightness.push_back({ev.timestamp, s.level});
            pb[d].any = true;
          } else if constexpr (std::is_same_v<T, SelfAppSample>) {
            int d = day_of(p, s.start.local_date());
            if (d < 0 || d >= p.study_days) return;
            pb[d].self_app.push_back(s.start);
            pb[d].any = true;
          }
        },
        ev.payload);
  }

  for (auto& [id, pb] : buckets) {
    const Participant& p = *by_id.at(id);

    std::optional<LatLon> home = cfg.home_override;
    if (!home) {
      LatLon h;
      auto& np = night_points[id];
      auto& ap = all_points[id];
      if (infer_home(np, ap, cfg.grid_precision_deg, h)) home = h;
    }

    // Raw per-day matrix (study_days x registry width).
    std::vector<std::vector<double>> raw(
        p.study_days, std::vector<double>(registry.size(), kMissing));
    std::vector<bool> has_data(p.study_days, false);
    auto by_ts = [](const auto& a, const auto& b) { return a.first < b.first; };

    for (int d = 0; d < p.study_days; ++d) {
      auto& b = pb[d];
      if (!b.any) continue;
      has_data[d] = true;
      auto& row = raw[d];

      for (int q = 0; q < kActiveQuestionCount; ++q) {
        row[active_ix[q]] = b.active[q];
      }
      if (!b.light.empty()) {
        std::sort(b.light.begin(), b.light.end(), by_ts);
        scalar_sensor_features(b.light, cfg, false, &row[light_ix]);
      }
      if (!b.apps.empty()) {
        std::sort(b.apps.begin(), b.apps.end(),
                  [](const AppUsageSample& a, const AppUsageSample& c) {
                    return a.start < c.start;
                  });
        auto vals = app_usage_features(b.apps, cfg);
        std::copy(vals.begin(), vals.end(), row.begin() + app_ix);
      }
      if (!b.noise.empty()) {
        std::sort(b.noise.begin(), b.noise.end(), by_ts);
        scalar_sensor_features(b.noise, cfg, true, &row[noise_ix]);
      }
      if (!b.battery.empty()) {
        std::sort(b.battery.begin(), b.battery.end(), by_ts);
        BatteryFeatures bf = battery_features(b.battery, cfg);
        row[battery_ix + 0] = bf.level_min;
        row[battery_ix + 1] = bf.level_max;
        row[battery_ix + 2] = bf.level_mean;
        row[battery_ix + 3] = bf.level_median;
        row[battery_ix + 4] = bf.charge_count;
        row[battery_ix + 5] = bf.use_per_hour;
        row[battery_ix + 6] = bf.minutes_below_20;
        row[battery_ix + 7] = bf.night_count;
      }
      if (!b.location.empty()) {
        std::sort(b.location.begin(), b.location.end(), by_ts);
        auto vals = location_day_features(b.location, home, cfg);
        std::copy(vals.begin(), vals.end(), row.begin() + loc_ix);
      }
      if (!b.self_app.empty()) {
        std::sort(b.self_app.begin(), b.self_app.end());
        SelfAppFeatures sf = self_app_features(b.self_app, cfg);
        row[self_ix + 0] = sf.first_hour;
        row[self_ix + 1] = sf.last_hour;
        row[self_ix + 2] = sf.night_count;
      }
      if (!b.brightness.empty()) {
        std::sort(b.brightness.begin(), b.brightness.end(), by_ts);
        scalar_sensor_features(b.brightness, cfg, false, &row[bright_ix]);
      }
      if (!b.step_counts.empty()) {
        std::int64_t total = 0;
        for (auto c : b.step_counts) total += c;
        StepFeatures sf = step_features(total, cfg);
        row[steps_ix + 0] = sf.count;
        row[steps_ix + 1] = sf.gt_5k;
        row[steps_ix + 2] = sf.gt_7k;
        row[steps_ix + 3] = sf.gt_10k;
      }
    }

    // Cumulative-median aggregation, column by column.
    std::vector<double> series(p.study_days);
    for (std::size_t j = 0; j < registry.size(); ++j) {
      for (int d = 0; d < p.study_days; ++d) series[d] = raw[d][j];
      auto agg = cumulative_median(series);
      for (int d = 0; d < p.study_days; ++d) raw[d][j] = agg[d];
    }

    bool contributed = false;
    for (int d = 0; d < p.study_days; ++d) {
      if (!has_data[d]) continue;
      ds.rows.push_back({id, d, raw[d]});
      contributed = true;
    }
    if (contributed) ds.users.push_back(id);
  }

  return ds;
}

inline void features_to_csv(const Dataset& ds, std::ostream& out) {
  out << "participant_id,day_index";
  for (const auto& s : ds.registry.specs()) out << ',' << s.name;
  out << '\n';
  char buf[40];
  for (const auto& row : ds.rows) {
    out << row.participant_id << ',' << row.day_index;
    for (double v : row.values) {
      out << ',';
      if (!is_missing(v)) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        out << buf;
      }
    }
    out << '\n';
  }
}

}  // namespace pheno
