#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pheno/civil_time.hpp"
#include "pheno/common.hpp"
#include "pheno/stats.hpp"

namespace pheno {

using json = nlohmann::ordered_json;

enum class SensorKind : int {
  location = 0,
  steps,
  battery,
  app_usage,
  ambient_light,
  noise,
  screen_brightness,
  self_app,
};
inline constexpr int kSensorKindCount = 8;

inline const char* sensor_kind_name(SensorKind k) {
  static const char* names[] = {"location",      "steps",
                                "battery",       "app_usage",
                                "ambient_light", "noise",
                                "screen_brightness", "self_app"};
  return names[int(k)];
}

inline std::optional<SensorKind> sensor_kind_from(const std::string& s) {
  for (int i = 0; i < kSensorKindCount; ++i) {
    if (s == sensor_kind_name(SensorKind(i))) return SensorKind(i);
  }
  return std::nullopt;
}

enum class Platform { ios, android };
enum class Gender { female, male, other };

// Ambient light, app usage and noise exist only on Android; screen
// brightness only on iOS. Everything else is cross-platform.
inline bool sensor_legal_on(SensorKind k, Platform p) {
  switch (k) {
    case SensorKind::ambient_light:
    case SensorKind::app_usage:
    case SensorKind::noise:
      return p == Platform::android;
    case SensorKind::screen_brightness:
      return p == Platform::ios;
    default:
      return true;
  }
}

// The 13 self-report measures, answered on a 1-7 scale.
enum class ActiveQuestion : int {
  mood = 0,
  sleep_quality,
  loneliness,
  confidence,
  motivation,
  productivity,
  energy,
  sociability,
  self_care,
  hopefulness,
  negative_thinking,
  racing_thoughts,
  irritability,
};
inline constexpr int kActiveQuestionCount = 13;

inline const char* active_question_name(ActiveQuestion q) {
  static const char* names[] = {
      "mood",        "sleep_quality", "loneliness",        "confidence",
      "motivation",  "productivity",  "energy",            "sociability",
      "self_care",   "hopefulness",   "negative_thinking", "racing_thoughts",
      "irritability"};
  return names[int(q)];
}

inline std::optional<ActiveQuestion> active_question_from(
    const std::string& s) {
  for (int i = 0; i < kActiveQuestionCount; ++i) {
    if (s == active_question_name(ActiveQuestion(i))) return ActiveQuestion(i);
  }
  return std::nullopt;
}

struct Participant {
  std::string participant_id;
  double age_years = 0;
  Gender gender = Gender::female;
  Platform platform = Platform::ios;
  int sdq_total = 0;     // 0..40
  int sci_total = 0;     // 0..32
  int si_frequency = 0;  // 0..3, PHQ-9 item response
  double ed15_mean = 0;  // 0..6
  std::set<SensorKind> enabled_sensors;
  Date study_start;
  int study_days = 14;
};

struct ActiveResponse {
  std::string participant_id;
  Date date;
  ActiveQuestion question = ActiveQuestion::mood;
  int value = 1;  // 1..7
};

struct LocationSample {
  double lat = 0;
  double lon = 0;
};
struct StepDaySample {
  Date date;
  std::int64_t count = 0;
};
struct BatterySample {
  double level_pct = 0;  // 0..100
  bool charging = false;
};
struct AppUsageSample {
  std::string app_id;
  Timestamp start;
  double duration_s = 0;
};
struct AmbientLightSample {
  double lux = 0;
};
struct NoiseSample {
  double db = 0;
};
struct ScreenBrightnessSample {
  double level = 0;  // 0..1
};
struct SelfAppSample {
  Timestamp start;
};

using SensorPayload =
    std::variant<LocationSample, StepDaySample, BatterySample, AppUsageSample,
                 AmbientLightSample, NoiseSample, ScreenBrightnessSample,
                 SelfAppSample>;

inline SensorKind payload_kind(const SensorPayload& p) {
  return SensorKind(int(p.index()));
}

struct PassiveEvent {
  std::string participant_id;
  Timestamp timestamp;
  SensorPayload payload;
};

// The four binary outcomes and their validated thresholds.
enum class Outcome : int { sdq = 0, insomnia, suicidal, eating };
inline constexpr int kOutcomeCount = 4;

inline const char* outcome_name(Outcome o) {
  static const char* names[] = {"sdq", "insomnia", "suicidal", "eating"};
  return names[int(o)];
}

inline std::optional<Outcome> outcome_from(const std::string& s) {
  for (int i = 0; i < kOutcomeCount; ++i) {
    if (s == outcome_name(Outcome(i))) return Outcome(i);
  }
  return std::nullopt;
}

inline bool label_sdq(int sdq_total) { return sdq_total >= 16; }
inline bool label_insomnia(int sci_total) { return sci_total <= 16; }
inline bool label_suicidal(int si_frequency) { return si_frequency >= 1; }
// Strict "exceeds"; the threshold is overridable because the reporting
// tables elsewhere round it to 2.7.
inline bool label_eating(double ed15_mean, double threshold = 2.69) {
  return ed15_mean > threshold;
}

struct RiskLabels {
  bool sdq_high = false;
  bool insomnia_high = false;
  bool si_high = false;
  bool ed_high = false;

  bool get(Outcome o) const {
    switch (o) {
      case Outcome::sdq: return sdq_high;
      case Outcome::insomnia: return insomnia_high;
      case Outcome::suicidal: return si_high;
      case Outcome::eating: return ed_high;
    }
    return false;
  }
};

inline RiskLabels risk_labels(const Participant& p) {
  return RiskLabels{label_sdq(p.sdq_total), label_insomnia(p.sci_total),
                    label_suicidal(p.si_frequency), label_eating(p.ed15_mean)};
}

inline double outcome_score(const Participant& p, Outcome o) {
  switch (o) {
    case Outcome::sdq: return double(p.sdq_total);
    case Outcome::insomnia: return double(p.sci_total);
    case Outcome::suicidal: return double(p.si_frequency);
    case Outcome::eating: return p.ed15_mean;
  }
  return 0;
}

struct Cohort {
  std::vector<Participant> participants;
  std::vector<ActiveResponse> active;
  std::vector<PassiveEvent> passive;

  const Participant* find(const std::string& id) const {
    for (const auto& p : participants) {
      if (p.participant_id == id) return &p;
    }
    return nullptr;
  }
};

struct RejectedLine {
  std::string file;
  std::size_t line_no = 0;  // 1-based
  std::string reason;
};

struct LoadReport {
  std::size_t participants_accepted = 0;
  std::size_t active_accepted = 0;
  std::size_t passive_accepted = 0;
  std::vector<RejectedLine> rejected;

  bool clean() const { return rejected.empty(); }
};

namespace detail {

inline bool in_window(const Participant& p, Date d) {
  return d >= p.study_start && d.days < p.study_start.days + p.study_days;
}

inline std::string range_err(const char* field, const std::string& got) {
  return std::string("field '") + field + "' out of range (got " + got + ")";
}

// Participants are parsed first so the event files can be validated against
// ids, platforms and consent sets.
inline std::optional<Participant> parse_participant(const json& j,
                                                    std::string& err) {
  Participant p;
  try {
    if (j.value("v", 0) != 1) {
      err = "unsupported schema version";
      return std::nullopt;
    }
    p.participant_id = j.at("participant_id").get<std::string>();
    if (p.participant_id.empty()) {
      err = "empty participant_id";
      return std::nullopt;
    }
    p.age_years = j.at("age_years").get<double>();
    std::string g = j.at("gender").get<std::string>();
    if (g == "female") p.gender = Gender::female;
    else if (g == "male") p.gender = Gender::male;
    else if (g == "other") p.gender = Gender::other;
    else {
      err = "unknown gender '" + g + "'";
      return std::nullopt;
    }
    std::string plat = j.at("platform").get<std::string>();
    if (plat == "ios") p.platform = Platform::ios;
    else if (plat == "android") p.platform = Platform::android;
    else {
      err = "unknown platform '" + plat + "'";
      return std::nullopt;
    }
    p.sdq_total = j.at("sdq_total").get<int>();
    if (p.sdq_total < 0 || p.sdq_total > 40) {
      err = range_err("sdq_total", std::to_string(p.sdq_total));
      return std::nullopt;
    }
    p.sci_total = j.at("sci_total").get<int>();
    if (p.sci_total < 0 || p.sci_total > 32) {
      err = range_err("sci_total", std::to_string(p.sci_total));
      return std::nullopt;
    }
    p.si_frequency = j.at("si_frequency").get<int>();
    if (p.si_frequency < 0 || p.si_frequency > 3) {
      err = range_err("si_frequency", std::to_string(p.si_frequency));
      return std::nullopt;
    }
    p.ed15_mean = j.at("ed15_mean").get<double>();
    if (p.ed15_mean < 0 || p.ed15_mean > 6) {
      err = range_err("ed15_mean", std::to_string(p.ed15_mean));
      return std::nullopt;
    }
    auto ss = Date::parse(j.at("study_start").get<std::string>());
    if (!ss) {
      err = "bad study_start date";
      return std::nullopt;
    }
    p.study_start = *ss;
    p.study_days = j.value("study_days", 14);
    if (p.study_days < 1) {
      err = "study_days must be positive";
      return std::nullopt;
    }
    for (const auto& s : j.at("enabled_sensors")) {
      auto k = sensor_kind_from(s.get<std::string>());
      if (!k) {
        err = "unknown sensor kind '" + s.get<std::string>() + "'";
        return std::nullopt;
      }
      if (!sensor_legal_on(*k, p.platform)) {
        err = std::string("sensor '") + sensor_kind_name(*k) +
              "' not available on platform '" + plat + "'";
        return std::nullopt;
      }
      p.enabled_sensors.insert(*k);
    }
  } catch (const json::exception& e) {
    err = e.what();
    return std::nullopt;
  }
  return p;
}

inline std::optional<ActiveResponse> parse_active(
    const json& j, const std::map<std::string, const Participant*>& by_id,
    std::string& err) {
  ActiveResponse r;
  try {
    if (j.value("v", 0) != 1) {
      err = "unsupported schema version";
      return std::nullopt;
    }
    r.participant_id = j.at("participant_id").get<std::string>();
    auto it = by_id.find(r.participant_id);
    if (it == by_id.end()) {
      err = "unknown participant_id '" + r.participant_id + "'";
      return std::nullopt;
    }
    auto d = Date::parse(j.at("date").get<std::string>());
    if (!d) {
      err = "bad date";
      return std::nullopt;
    }
    r.date = *d;
    if (!in_window(*it->second, r.date)) {
      err = "date outside study window";
      return std::nullopt;
    }
    auto q = active_question_from(j.at("question").get<std::string>());
    if (!q) {
      err = "unknown question '" + j.at("question").get<std::string>() + "'";
      return std::nullopt;
    }
    r.question = *q;
    r.value = j.at("value").get<int>();
    if (r.value < 1 || r.value > 7) {
      err = range_err("value", std::to_string(r.value));
      return std::nullopt;
    }
  } catch (const json::exception& e) {
    err = e.what();
    return std::nullopt;
  }
  return r;
}

inline std::optional<PassiveEvent> parse_passive(
    const json& j, const std::map<std::string, const Participant*>& by_id,
    std::string& err) {
  PassiveEvent ev;
  try {
    if (j.value("v", 0) != 1) {
      err = "unsupported schema version";
      return std::nullopt;
    }
    ev.participant_id = j.at("participant_id").get<std::string>();
    auto it = by_id.find(ev.participant_id);
    if (it == by_id.end()) {
      err = "unknown participant_id '" + ev.participant_id + "'";
      return std::nullopt;
    }
    const Participant& p = *it->second;
    auto ts = Timestamp::parse(j.at("timestamp").get<std::string>());
    if (!ts) {
      err = "bad timestamp";
      return std::nullopt;
    }
    ev.timestamp = *ts;
    if (!in_window(p, ev.timestamp.local_date())) {
      err = "timestamp outside study window";
      return std::nullopt;
    }
    std::string kind_s = j.at("kind").get<std::string>();
    auto kind = sensor_kind_from(kind_s);
    if (!kind) {
      err = "unknown sensor kind '" + kind_s + "'";
      return std::nullopt;
    }
    if (!p.enabled_sensors.count(*kind)) {
      err = std::string("sensor '") + kind_s +
            "' not enabled for this participant";
      return std::nullopt;
    }
    switch (*kind) {
      case SensorKind::location: {
        LocationSample s;
        s.lat = j.at("lat").get<double>();
        s.lon = j.at("lon").get<double>();
        if (s.lat < -90 || s.lat > 90 || s.lon < -180 || s.lon > 180) {
          err = "lat/lon out of range";
          return std::nullopt;
        }
        ev.payload = s;
        break;
      }
      case SensorKind::steps: {
        StepDaySample s;
        auto d = Date::parse(j.at("date").get<std::string>());
        if (!d) {
          err = "bad date";
          return std::nullopt;
        }
        s.date = *d;
        s.count = j.at("count").get<std::int64_t>();
        if (s.count < 0) {
          err = range_err("count", std::to_string(s.count));
          return std::nullopt;
        }
        ev.payload = s;
        break;
      }
      case SensorKind::battery: {
        BatterySample s;
        s.level_pct = j.at("level_pct").get<double>();
        s.charging = j.at("charging").get<bool>();
        if (s.level_pct < 0 || s.level_pct > 100) {
          err = range_err("level_pct", std::to_string(s.level_pct));
          return std::nullopt;
        }
        ev.payload = s;
        break;
      }
      case SensorKind::app_usage: {
        AppUsageSample s;
        s.app_id = j.at("app_id").get<std::string>();
        auto st = Timestamp::parse(j.at("start").get<std::string>());
        if (!st) {
          err = "bad start timestamp";
          return std::nullopt;
        }
        s.start = *st;
        s.duration_s = j.at("duration_s").get<double>();
        if (s.duration_s < 0) {
          err = range_err("duration_s", std::to_string(s.duration_s));
          return std::nullopt;
        }
        ev.payload = s;
        break;
      }
      case SensorKind::ambient_light: {
        AmbientLightSample s;
        s.lux = j.at("lux").get<double>();
        if (s.lux < 0) {
          err = range_err("lux", std::to_string(s.lux));
          return std::nullopt;
        }
        ev.payload = s;
        break;
      }
      case SensorKind::noise: {
        NoiseSample s;
        s.db = j.at("db").get<double>();
        ev.payload = s;
        break;
      }
      case SensorKind::screen_brightness: {
        ScreenBrightnessSample s;
        s.level = j.at("level").get<double>();
        if (s.level < 0 || s.level > 1) {
          err = range_err("level", std::to_string(s.level));
          return std::nullopt;
        }
        ev.payload = s;
        break;
      }
      case SensorKind::self_app: {
        SelfAppSample s;
        auto st = Timestamp::parse(j.at("start").get<std::string>());
        if (!st) {
          err = "bad start timestamp";
          return std::nullopt;
        }
        s.start = *st;
        ev.payload = s;
        break;
      }
    }
  } catch (const json::exception& e) {
    err = e.what();
    return std::nullopt;
  }
  return ev;
}

}  // namespace detail

// Reads the three line-delimited record files. Malformed or out-of-contract
// lines never abort the load; they are collected in the report with their
// line numbers. Duplicate (participant, date, question) active responses
// keep the first occurrence.
inline Cohort load_cohort(const std::string& participants_path,
                          const std::string& active_path,
                          const std::string& passive_path,
                          LoadReport& report) {
  Cohort cohort;
  auto for_each_line = [](const std::string& path, auto&& fn) {
    std::ifstream in(path);
    if (!in) throw_data("cannot open '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      fn(line_no, line);
    }
  };

  std::set<std::string> seen_ids;
  for_each_line(participants_path, [&](std::size_t ln, const std::string& l) {
    std::string err;
    json j = json::parse(l, nullptr, false);
    if (j.is_discarded()) {
      report.rejected.push_back({participants_path, ln, "malformed JSON"});
      return;
    }
    auto p = detail::parse_participant(j, err);
    if (!p) {
      report.rejected.push_back({participants_path, ln, err});
      return;
    }
    if (!seen_ids.insert(p->participant_id).second) {
      report.rejected.push_back(
          {participants_path, ln,
           "duplicate participant_id '" + p->participant_id + "'"});
      return;
    }
    cohort.participants.push_back(std::move(*p));
    ++report.participants_accepted;
  });

  std::map<std::string, const Participant*> by_id;
  for (const auto& p : cohort.participants) by_id[p.participant_id] = &p;

  std::set<std::tuple<std::string, std::int64_t, int>> seen_active;
  for_each_line(active_path, [&](std::size_t ln, const std::string& l) {
    std::string err;
    json j = json::parse(l, nullptr, false);
    if (j.is_discarded()) {
      report.rejected.push_back({active_path, ln, "malformed JSON"});
      return;
    }
    auto r = detail::parse_active(j, by_id, err);
    if (!r) {
      report.rejected.push_back({active_path, ln, err});
      return;
    }
    auto key = std::make_tuple(r->participant_id, r->date.days,
                               int(r->question));
    if (!seen_active.insert(key).second) {
      report.rejected.push_back(
          {active_path, ln, "duplicate response for (participant, date, question)"});
      return;
    }
    cohort.active.push_back(std::move(*r));
    ++report.active_accepted;
  });

  for_each_line(passive_path, [&](std::size_t ln, const std::string& l) {
    std::string err;
    json j = json::parse(l, nullptr, false);
    if (j.is_discarded()) {
      report.rejected.push_back({passive_path, ln, "malformed JSON"});
      return;
    }
    auto ev = detail::parse_passive(j, by_id, err);
    if (!ev) {
      report.rejected.push_back({passive_path, ln, err});
      return;
    }
    cohort.passive.push_back(std::move(*ev));
    ++report.passive_accepted;
  });

  return cohort;
}

inline json participant_to_json(const Participant& p) {
  json j;
  j["v"] = 1;
  j["participant_id"] = p.participant_id;
  j["age_years"] = p.age_years;
  j["gender"] = p.gender == Gender::female  ? "female"
                : p.gender == Gender::male  ? "male"
                                            : "other";
  j["platform"] = p.platform == Platform::ios ? "ios" : "android";
  j["sdq_total"] = p.sdq_total;
  j["sci_total"] = p.sci_total;
  j["si_frequency"] = p.si_frequency;
  j["ed15_mean"] = p.ed15_mean;
  j["study_start"] = p.study_start.str();
  j["study_days"] = p.study_days;
  json sensors = json::array();
  for (auto k : p.enabled_sensors) sensors.push_back(sensor_kind_name(k));
  j["enabled_sensors"] = sensors;
  return j;
}

inline json active_to_json(const ActiveResponse& r) {
  json j;
  j["v"] = 1;
  j["participant_id"] = r.participant_id;
  j["date"] = r.date.str();
  j["question"] = active_question_name(r.question);
  j["value"] = r.value;
  return j;
}

inline json passive_to_json(const PassiveEvent& ev) {
  json j;
  j["v"] = 1;
  j["participant_id"] = ev.participant_id;
  j["timestamp"] = ev.timestamp.str();
  j["kind"] = sensor_kind_name(payload_kind(ev.payload));
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LocationSample>) {
          j["lat"] = s.lat;
          j["lon"] = s.lon;
        } else if constexpr (std::is_same_v<T, StepDaySample>) {
          j["date"] = s.date.str();
          j["count"] = s.count;
        } else if constexpr (std::is_same_v<T, BatterySample>) {
          j["level_pct"] = s.level_pct;
          j["charging"] = s.charging;
        } else if constexpr (std::is_same_v<T, AppUsageSample>) {
          j["app_id"] = s.app_id;
          j["start"] = s.start.str();
          j["duration_s"] = s.duration_s;
        } else if constexpr (std::is_same_v<T, AmbientLightSample>) {
          j["lux"] = s.lux;
        } else if constexpr (std::is_same_v<T, NoiseSample>) {
          j["db"] = s.db;
        } else if constexpr (std::is_same_v<T, ScreenBrightnessSample>) {
          j["level"] = s.level;
        } else if constexpr (std::is_same_v<T, SelfAppSample>) {
          j["start"] = s.start.str();
        }
      },
      ev.payload);
  return j;
}

inline void write_cohort(const Cohort& c, const std::string& participants_path,
                         const std::string& active_path,
                         const std::string& passive_path) {
  auto open = [](const std::string& path) {
    std::ofstream out(path);
    if (!out) throw_data("cannot write '" + path + "'");
    return out;
  };
  {
    auto out = open(participants_path);
    for (const auto& p : c.participants) {
      out << participant_to_json(p).dump() << '\n';
    }
  }
  {
    auto out = open(active_path);
    for (const auto& r : c.active) out << active_to_json(r).dump() << '\n';
  }
  {
    auto out = open(passive_path);
    for (const auto& ev : c.passive) out << passive_to_json(ev).dump() << '\n';
  }
}

struct OutcomeSummary {
  std::string outcome;
  double score_mean = 0;
  double score_sd = 0;  // population SD
  std::size_t high_count = 0;
  double high_pct = 0;  // one decimal place when formatted
};

struct CohortSummary {
  std::size_t n = 0;
  double age_mean = 0;
  double age_sd = 0;
  std::size_t female = 0, male = 0, other = 0;
  std::array<OutcomeSummary, kOutcomeCount> outcomes;
};

// Per-outcome score mean +- SD and high-risk counts, Table-2 style.
inline CohortSummary cohort_summary(const Cohort& c) {
  if (c.participants.empty()) throw_data("cohort_summary: empty cohort");
  CohortSummary s;
  s.n = c.participants.size();
  std::vector<double> ages;
  for (const auto& p : c.participants) {
    ages.push_back(p.age_years);
    switch (p.gender) {
      case Gender::female: ++s.female; break;
      case Gender::male: ++s.male; break;
      case Gender::other: ++s.other; break;
    }
  }
  s.age_mean = mean_of(ages);
  s.age_sd = pop_sd_of(ages);
  for (int o = 0; o < kOutcomeCount; ++o) {
    OutcomeSummary& os = s.outcomes[o];
    os.outcome = outcome_name(Outcome(o));
    std::vector<double> scores;
    for (const auto& p : c.participants) {
      scores.push_back(outcome_score(p, Outcome(o)));
      if (risk_labels(p).get(Outcome(o))) ++os.high_count;
    }
    os.score_mean = mean_of(scores);
    os.score_sd = pop_sd_of(scores);
    os.high_pct = 100.0 * double(os.high_count) / double(s.n);
  }
  return s;
}

// "31 (30.1%)" formatting used by the summary table.
inline std::string format_count_pct(std::size_t count, double pct) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%zu (%.1f%%)", count, pct);
  return buf;
}

}  // namespace pheno
