#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pheno/civil_time.hpp"
#include "pheno/cohort.hpp"
#include "pheno/common.hpp"
#include "pheno/registry.hpp"
#include "pheno/rng.hpp"

namespace pheno {

// App ids emitted by the generator, one per category plus an unmapped one.
inline std::map<std::string, std::string> default_app_category_map() {
  std::map<std::string, std::string> m;
  for (const auto& cat : app_category_names()) m["app." + cat] = cat;
  return m;
}

// Behavior channels an effect can be planted on: any of the 13 self-report
// measures, or one of the passive templates below.
inline const std::vector<std::string>& effect_channel_names() {
  static std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (int q = 0; q < kActiveQuestionCount; ++q) {
      v.push_back(active_question_name(ActiveQuestion(q)));
    }
    v.push_back("loc_entropy");
    v.push_back("night_light");
    v.push_back("steps");
    return v;
  }();
  return names;
}

// High-risk shifts mirroring the direction of the reported group
// differences: more negative thinking, racing thoughts and loneliness,
// higher location entropy and night-time light, less self-care, hope and
// walking. Values are standardized effect sizes for a channel's primary
// outcome (see effect_outcome_weight).
inline std::map<std::string, double> default_effect_map() {
  return {
      {"negative_thinking", 1.9}, {"racing_thoughts", 1.7},
      {"loneliness", 1.8},        {"self_care", -1.8},
      {"hopefulness", -1.6},      {"loc_entropy", 1.6},
      {"night_light", 1.5},       {"steps", -1.8},
  };
}

// How strongly each channel responds to each outcome's risk status. Every
// channel has a primary outcome (weight 1) plus a weak shared response, so
// outcomes are separable rather than riding one collinear severity axis,
// and each outcome carries signal in both modalities.
inline double effect_outcome_weight(const std::string& channel, Outcome o) {
  struct Row {
    const char* channel;
    double w[kOutcomeCount];  // sdq, insomnia, suicidal, eating
  };
  static const Row table[] = {
      {"negative_thinking", {1.0, 0.3, 0.3, 0.2}},
      {"racing_thoughts", {0.2, 1.0, 0.2, 0.2}},
      {"loneliness", {0.3, 0.2, 0.8, 0.2}},
      {"hopefulness", {0.2, 0.2, 0.8, 0.2}},
      {"self_care", {0.2, 0.2, 0.3, 1.0}},
      {"loc_entropy", {1.0, 1.0, 0.2, 0.2}},
      {"night_light", {0.2, 1.0, 0.8, 0.2}},
      {"steps", {0.2, 0.3, 1.0, 1.0}},
  };
  for (const auto& row : table) {
    if (channel == row.channel) return row.w[int(o)];
  }
  return 1.0;  // channels outside the table respond to every outcome alike
}

struct GeneratorConfig {
  int n_users = 100;
  int days = 14;
  // Target prevalences per outcome (sdq, insomnia, suicidal, eating).
  double prevalence[kOutcomeCount] = {0.30, 0.33, 0.37, 0.37};
  std::map<std::string, double> effects = default_effect_map();
  double ios_fraction = 0.76;
  std::map<std::string, double> consent = {
      {"location", 0.85},      {"steps", 0.95},
      {"battery", 0.95},       {"app_usage", 0.90},
      {"ambient_light", 0.85}, {"noise", 0.80},
      {"screen_brightness", 0.90}, {"self_app", 0.95},
  };
  // Linear per-day contribution probabilities; active decays faster.
  double active_day0 = 1.0, active_day_last = 0.45;
  double passive_day0 = 1.0, passive_day_last = 0.80;
  // Borderline preset: scores ride a continuous severity, so users near
  // the thresholds carry almost no planted signal.
  bool borderline = false;
  double borderline_score_spread = 8.0;
  std::string start_date = "2024-01-08";
  std::uint64_t seed = 1;

  void validate() const {
    if (n_users < 1 || days < 1) throw_data("generator: n_users/days must be positive");
    for (double p : prevalence) {
      if (p < 0 || p > 1) throw_data("generator: prevalence out of [0,1]");
      if (p == 1.0) throw_data("generator: infeasible prevalence 1.0");
    }
    for (const auto& [k, v] : consent) {
      if (v < 0 || v > 1) throw_data("generator: consent probability out of [0,1]");
      if (!sensor_kind_from(k)) throw_data("generator: unknown sensor '" + k + "'");
    }
    for (const auto& [k, v] : effects) {
      bool known = false;
      for (const auto& n : effect_channel_names()) known |= (n == k);
      if (!known) throw_data("generator: unknown effect channel '" + k + "'");
      if (!std::isfinite(v)) throw_data("generator: non-finite effect size");
    }
    if (ios_fraction < 0 || ios_fraction > 1) {
      throw_data("generator: ios_fraction out of [0,1]");
    }
  }

  json to_json() const {
    json j;
    j["v"] = 1;
    j["n_users"] = n_users;
    j["days"] = days;
    j["prevalence"] = {{"sdq", prevalence[0]},
                       {"insomnia", prevalence[1]},
                       {"suicidal", prevalence[2]},
                       {"eating", prevalence[3]}};
    j["effects"] = effects;
    j["ios_fraction"] = ios_fraction;
    j["consent"] = consent;
    j["active_day0"] = active_day0;
    j["active_day_last"] = active_day_last;
    j["passive_day0"] = passive_day0;
    j["passive_day_last"] = passive_day_last;
    j["borderline"] = borderline;
    j["borderline_score_spread"] = borderline_score_spread;
    j["start_date"] = start_date;
    j["seed"] = seed;
    return j;
  }

  static GeneratorConfig from_json(const json& j) {
    if (j.value("v", 0) != 1) throw_data("generator config: unsupported version");
    GeneratorConfig c;
    c.n_users = j.value("n_users", c.n_users);
    c.days = j.value("days", c.days);
    if (j.contains("prevalence")) {
      const auto& p = j.at("prevalence");
      c.prevalence[0] = p.value("sdq", c.prevalence[0]);
      c.prevalence[1] = p.value("insomnia", c.prevalence[1]);
      c.prevalence[2] = p.value("suicidal", c.prevalence[2]);
      c.prevalence[3] = p.value("eating", c.prevalence[3]);
    }
    if (j.contains("effects")) {
      c.effects = j.at("effects").get<std::map<std::string, double>>();
    }
    c.ios_fraction = j.value("ios_fraction", c.ios_fraction);
    if (j.contains("consent")) {
      c.consent = j.at("consent").get<std::map<std::string, double>>();
    }
    c.active_day0 = j.value("active_day0", c.active_day0);
    c.active_day_last = j.value("active_day_last", c.active_day_last);
    c.passive_day0 = j.value("passive_day0", c.passive_day0);
    c.passive_day_last = j.value("passive_day_last", c.passive_day_last);
    c.borderline = j.value("borderline", c.borderline);
    c.borderline_score_spread =
        j.value("borderline_score_spread", c.borderline_score_spread);
    c.start_date = j.value("start_date", c.start_date);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }
};

struct GroundTruth {
  // Per user: latent flags (and severities in borderline mode).
  std::vector<std::array<bool, kOutcomeCount>> flags;
  std::vector<std::array<double, kOutcomeCount>> severity;
  std::vector<double> burden;
};

namespace detail {

inline int clamp_round(double v, int lo, int hi) {
  int r = int(std::llround(v));
  return std::max(lo, std::min(hi, r));
}

struct UserPlan {
  Participant participant;
  std::array<bool, kOutcomeCount> flags{};
  std::array<double, kOutcomeCount> severity{};
  double burden = 0;
};

}  // namespace detail

// Generates a cohort with plantable risk-behavior coupling. Effects are
// injected into the raw event streams, never into features directly, so
// the feature-engineering stage is exercised end to end. Every user gets a
// stable behavioral signature plus day-to-day noise, which is the structure
// contrastive pretraining is meant to recover.
inline Cohort generate(const GeneratorConfig& cfg, GroundTruth* truth = nullptr) {
  cfg.validate();
  Cohort cohort;
  auto start = Date::parse(cfg.start_date);
  if (!start) throw_data("generator: bad start_date");

  if (truth) {
    truth->flags.clear();
    truth->severity.clear();
    truth->burden.clear();
  }

  auto effect = [&](const char* channel) {
    auto it = cfg.effects.find(channel);
    return it == cfg.effects.end() ? 0.0 : it->second;
  };

  for (int u = 0; u < cfg.n_users; ++u) {
    Rng rng = Rng(cfg.seed).fork(0x100 + std::uint64_t(u));
    detail::UserPlan plan;
    Participant& p = plan.participant;
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "p%04d", u);
    p.participant_id = idbuf;
    p.age_years = std::clamp(rng.normal(16.1, 1.0), 14.0, 18.0);
    double g = rng.uniform();
    p.gender = g < 0.71 ? Gender::female : (g < 0.96 ? Gender::male : Gender::other);
    p.platform = rng.uniform() < cfg.ios_fraction ? Platform::ios
                                                  : Platform::android;
    p.study_start = *start;
    p.study_days = cfg.days;

    for (const auto& [name, prob] : cfg.consent) {
      SensorKind k = *sensor_kind_from(name);
      if (!sensor_legal_on(k, p.platform)) continue;
      if (rng.uniform() < prob) p.enabled_sensors.insert(k);
    }

    // Latent risk and threshold-consistent questionnaire scores.
    if (cfg.borderline) {
      for (int o = 0; o < kOutcomeCount; ++o) plan.severity[o] = rng.normal();
      double spread = cfg.borderline_score_spread;
      p.sdq_total = detail::clamp_round(15.5 + spread * plan.severity[0], 0, 40);
      p.sci_total = detail::clamp_round(16.5 - spread * plan.severity[1], 0, 32);
      p.si_frequency = detail::clamp_round(0.5 + 1.2 * plan.severity[2], 0, 3);
      p.ed15_mean = std::clamp(2.69 + 0.9 * plan.severity[3], 0.0, 6.0);
      plan.flags = {label_sdq(p.sdq_total), label_insomnia(p.sci_total),
                    label_suicidal(p.si_frequency), label_eating(p.ed15_mean)};
      plan.burden = plan.severity[0] + plan.severity[1] + plan.severity[2] +
                    plan.severity[3];
    } else {
      for (int o = 0; o < kOutcomeCount; ++o) {
        plan.flags[o] = rng.uniform() < cfg.prevalence[o];
        plan.severity[o] = plan.flags[o] ? 1.0 : 0.0;
      }
      p.sdq_total = plan.flags[0]
                        ? detail::clamp_round(rng.normal(21, 4), 16, 40)
                        : detail::clamp_round(rng.normal(10, 4), 0, 15);
      p.sci_total = plan.flags[1]
                        ? detail::clamp_round(rng.normal(11, 4), 0, 16)
                        : detail::clamp_round(rng.normal(23, 4), 17, 32);
      p.si_frequency = plan.flags[2]
                           ? detail::clamp_round(rng.normal(1.6, 0.8), 1, 3)
                           : 0;
      p.ed15_mean = plan.flags[3]
                        ? std::clamp(rng.normal(3.6, 0.7), 2.70, 6.0)
                        : std::clamp(rng.normal(1.6, 0.7), 0.0, 2.69);
      plan.burden = double(plan.flags[0]) + plan.flags[1] + plan.flags[2] +
                    plan.flags[3];
    }
    cohort.participants.push_back(p);
    if (truth) {
      truth->flags.push_back(plan.flags);
      truth->severity.push_back(plan.severity);
      truth->burden.push_back(plan.burden);
    }

    // Planted behavioral shift for one channel: effect size times the
    // outcome-weighted risk profile.
    auto channel_shift = [&](const char* channel) {
      double e = effect(channel);
      if (e == 0.0) return 0.0;
      double s = 0;
      for (int o = 0; o < kOutcomeCount; ++o) {
        s += effect_outcome_weight(channel, Outcome(o)) * plan.severity[o];
      }
      return e * s;
    };

    // Stable per-user signatures. A shared wellbeing latent correlates the
    // self-report measures the way the real ones correlate.
    double wellbeing = rng.normal();
    std::array<double, kActiveQuestionCount> active_sig;
    static const double active_base[kActiveQuestionCount] = {
        4.5, 4.3, 3.0, 4.2, 4.0, 4.0, 4.1, 4.2, 4.4, 4.4, 2.8, 2.9, 3.1};
    static const bool active_positive[kActiveQuestionCount] = {
        true, true, false, true, true, true, true, true,
        true, true, false, false, false};
    for (int q = 0; q < kActiveQuestionCount; ++q) {
      double rho = active_positive[q] ? 0.35 : -0.35;
      active_sig[q] = 0.55 * (rho * wellbeing +
                             std::sqrt(1.0 - rho * rho) * rng.normal());
    }
    double sig_loc = rng.normal();
    double sig_light = rng.normal();
    double sig_steps = rng.normal();
    double sig_noise = rng.normal();
    double sig_bright = rng.normal();

    // Home, a fixed daytime site and an excursion pool.
    LatLon home{51.40 + 0.40 * rng.uniform(), -0.35 + 0.40 * rng.uniform()};
    auto offset_site = [&](double lo, double hi) {
      double dlat = rng.uniform(lo, hi) * (rng.uniform() < 0.5 ? -1 : 1);
      double dlon = rng.uniform(lo, hi) * (rng.uniform() < 0.5 ? -1 : 1);
      return LatLon{home.lat + dlat, home.lon + dlon};
    };
    LatLon day_site = offset_site(0.005, 0.02);
    std::vector<LatLon> pool;
    for (int s = 0; s < 10; ++s) pool.push_back(offset_site(0.002, 0.03));

    auto ts_at = [&](int day, double hour) {
      std::int64_t secs = (start->days + day) * 86400 +
                          std::int64_t(std::llround(hour * 3600.0));
      return Timestamp{secs, 0};
    };
    auto jitter_pt = [&](const LatLon& base) {
      return LatLon{base.lat + rng.uniform(-2e-4, 2e-4),
                    base.lon + rng.uniform(-2e-4, 2e-4)};
    };

    for (int d = 0; d < cfg.days; ++d) {
      double frac = cfg.days > 1 ? double(d) / double(cfg.days - 1) : 0.0;
      double p_active = cfg.active_day0 +
                        (cfg.active_day_last - cfg.active_day0) * frac;
      double p_passive = cfg.passive_day0 +
                         (cfg.passive_day_last - cfg.passive_day0) * frac;
      Date date{start->days + d};

      if (rng.uniform() < p_active) {
        for (int q = 0; q < kActiveQuestionCount; ++q) {
          if (rng.uniform() > 0.9) continue;  // per-question dropout
          double shift = channel_shift(active_question_name(ActiveQuestion(q)));
          double v = active_base[q] + active_sig[q] + 0.7 * shift +
                     0.75 * rng.normal();
          cohort.active.push_back({p.participant_id, date, ActiveQuestion(q),
                                   detail::clamp_round(v, 1, 7)});
        }
      }

      if (rng.uniform() >= p_passive) continue;
      auto enabled = [&](SensorKind k) {
        return p.enabled_sensors.count(k) && rng.uniform() < 0.95;
      };

      if (enabled(SensorKind::location)) {
        double visit_drive = 1.5 + 2.0 * channel_shift("loc_entropy") +
                             0.4 * sig_loc + 0.5 * rng.normal();
        int visits = std::clamp(int(std::llround(visit_drive)), 0,
                                int(pool.size()));
        std::vector<std::pair<double, LatLon>> stops;
        stops.push_back({7.2, home});
        stops.push_back({8.1, home});
        for (double h : {9.5, 11.0, 13.5, 15.0}) stops.push_back({h, day_site});
        double h = 16.0;
        for (int s = 0; s < visits; ++s) {
          const LatLon& site = pool[rng.uniform_index(pool.size())];
          stops.push_back({h, site});
          stops.push_back({h + 0.4, site});
          h += 0.9;
        }
        stops.push_back({20.3, home});
        stops.push_back({21.4, home});
        stops.push_back({22.2, home});
        stops.push_back({23.1, home});
        for (const auto& [hour, site] : stops) {
          double hh = std::clamp(hour + rng.uniform(-0.2, 0.2), 0.0, 23.98);
          cohort.passive.push_back(
              {p.participant_id, ts_at(d, hh),
               LocationSample{jitter_pt(site).lat, jitter_pt(site).lon}});
        }
      }

      if (enabled(SensorKind::steps)) {
        double ln_steps = std::log(8300.0) + 0.13 * sig_steps +
                          0.22 * channel_shift("steps") +
                          0.15 * rng.normal();
        cohort.passive.push_back(
            {p.participant_id, ts_at(d, 23.8),
             StepDaySample{date, std::max<std::int64_t>(
                                     0, std::llround(std::exp(ln_steps)))}});
      }

      if (enabled(SensorKind::battery)) {
        int charge_hour = 17 + int(rng.uniform_index(5));
        double level = rng.uniform(80, 100);
        for (int hh = 8; hh <= 23; ++hh) {
          bool charging = hh >= charge_hour && hh < charge_hour + 2;
          if (charging) {
            level = std::min(100.0, level + 14.0);
          } else {
            level = std::max(3.0, level - rng.uniform(2.5, 5.5));
          }
          cohort.passive.push_back(
              {p.participant_id, ts_at(d, hh + rng.uniform(0.0, 0.4)),
               BatterySample{std::round(level), charging}});
        }
      }

      if (enabled(SensorKind::ambient_light)) {
        for (double hh : {9.2, 11.3, 13.2, 15.4, 17.3, 19.2}) {
          double lux = std::exp(rng.normal(std::log(140.0), 0.5));
          cohort.passive.push_back({p.participant_id,
                                    ts_at(d, hh + rng.uniform(-0.3, 0.3)),
                                    AmbientLightSample{std::round(lux * 10) / 10}});
        }
        for (double hh : {22.2, 22.8, 23.4}) {
          double ln_lux = std::log(2.5) + 0.35 * sig_light +
                          0.6 * channel_shift("night_light") +
                          0.45 * rng.normal();
          double lux = std::max(0.0, std::exp(ln_lux));
          cohort.passive.push_back({p.participant_id,
                                    ts_at(d, hh + rng.uniform(-0.1, 0.1)),
                                    AmbientLightSample{std::round(lux * 10) / 10}});
        }
      }

      if (enabled(SensorKind::noise)) {
        for (double hh : {9.6, 12.4, 15.1, 18.2, 20.6}) {
          cohort.passive.push_back(
              {p.participant_id, ts_at(d, hh + rng.uniform(-0.3, 0.3)),
               NoiseSample{std::round(rng.normal(47 + sig_noise, 6))}});
        }
        for (double hh : {22.4, 23.2}) {
          cohort.passive.push_back(
              {p.participant_id, ts_at(d, hh + rng.uniform(-0.1, 0.1)),
               NoiseSample{std::round(rng.normal(36 + sig_noise, 5))}});
        }
      }

      if (enabled(SensorKind::screen_brightness)) {
        // The night-light template covers light exposure at night; on iOS
        // that shows up as the screen-brightness stream during night hours.
        auto level = [&](double base, double shift) {
          double z = base + 0.25 * sig_bright + shift + 0.5 * rng.normal();
          return std::round(100.0 / (1.0 + std::exp(-z))) / 100.0;
        };
        for (double hh : {8.4, 12.6, 16.2, 19.5}) {
          cohort.passive.push_back({p.participant_id,
                                    ts_at(d, hh + rng.uniform(-0.3, 0.3)),
                                    ScreenBrightnessSample{level(0.0, 0.0)}});
        }
        double night_shift = 0.5 * channel_shift("night_light");
        for (double hh : {22.3, 23.0}) {
          cohort.passive.push_back({p.participant_id,
                                    ts_at(d, hh + rng.uniform(-0.1, 0.1)),
                                    ScreenBrightnessSample{level(0.4, night_shift)}});
        }
      }

      if (enabled(SensorKind::app_usage)) {
        const auto& cats = app_category_names();
        int sessions = 4 + int(rng.uniform_index(7));
        for (int s = 0; s < sessions; ++s) {
          double hh = rng.uniform(7.5, 23.9);
          std::string app =
              rng.uniform() < 0.12
                  ? "app.misc"  // deliberately unmapped
                  : "app." + cats[rng.uniform_index(cats.size())];
          double dur = std::exp(rng.normal(std::log(420.0), 0.8));
          Timestamp st = ts_at(d, hh);
          cohort.passive.push_back(
              {p.participant_id, st,
               AppUsageSample{app, st, std::round(dur)}});
        }
      }

      if (enabled(SensorKind::self_app)) {
        int sessions = 1 + (rng.uniform() < 0.5 ? 1 : 0);
        for (int s = 0; s < sessions; ++s) {
          double hh = rng.uniform() < 0.25 ? rng.uniform(22.0, 23.9)
                                           : rng.uniform(7.5, 21.9);
          Timestamp st = ts_at(d, hh);
          cohort.passive.push_back(
              {p.participant_id, st, SelfAppSample{st}});
        }
      }
    }
  }
  return cohort;
}

// Permutes the questionnaire score tuples across participants with an
// explicit mapping; events are untouched, so any label-behavior coupling is
// destroyed while the score multiset is preserved.
inline Cohort permute_labels_with(const Cohort& cohort,
                                  std::span<const std::size_t> mapping) {
  if (mapping.size() != cohort.participants.size()) {
    throw_data("permute_labels: mapping size mismatch");
  }
  Cohort out = cohort;
  for (std::size_t i = 0; i < mapping.size(); ++i) {
    const Participant& src = cohort.participants[mapping[i]];
    Participant& dst = out.participants[i];
    dst.sdq_total = src.sdq_total;
    dst.sci_total = src.sci_total;
    dst.si_frequency = src.si_frequency;
    dst.ed15_mean = src.ed15_mean;
  }
  return out;
}

inline Cohort permute_labels(const Cohort& cohort, std::uint64_t seed) {
  std::vector<std::size_t> mapping(cohort.participants.size());
  for (std::size_t i = 0; i < mapping.size(); ++i) mapping[i] = i;
  Rng rng(derive_seed(seed, 0x7e21));
  rng.shuffle(mapping);
  return permute_labels_with(cohort, mapping);
}

// Ready-made presets used by the acceptance runs.
inline GeneratorConfig null_signal_config(std::uint64_t seed = 1) {
  GeneratorConfig cfg;
  cfg.effects.clear();
  cfg.seed = seed;
  return cfg;
}

inline GeneratorConfig borderline_config(std::uint64_t seed = 1) {
  GeneratorConfig cfg;
  cfg.borderline = true;
  cfg.n_users = 120;
  cfg.seed = seed;
  return cfg;
}

}  // namespace pheno
