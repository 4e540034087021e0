#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pheno/cohort.hpp"
#include "pheno/common.hpp"
#include "pheno/geo.hpp"

namespace pheno {

enum class SensorGroup : int {
  active = 0,
  ambient_light,
  app_usage,
  noise,
  battery,
  location,
  self_app,
  screen_brightness,
  steps,
};

inline const char* sensor_group_name(SensorGroup g) {
  static const char* names[] = {"active",   "ambient_light", "app_usage",
                                "noise",    "battery",       "location",
                                "self_app", "screen_brightness", "steps"};
  return names[int(g)];
}

inline std::optional<SensorGroup> sensor_group_from(const std::string& s) {
  for (int i = 0; i <= int(SensorGroup::steps); ++i) {
    if (s == sensor_group_name(SensorGroup(i))) return SensorGroup(i);
  }
  return std::nullopt;
}

struct FeatureSpec {
  std::string name;
  SensorGroup group = SensorGroup::active;
};

// An ordered feature registry. Vector positions are fixed once the registry
// is built, so every row produced in a run lines up column-for-column.
class FeatureRegistry {
 public:
  FeatureRegistry() = default;

  explicit FeatureRegistry(std::vector<FeatureSpec> specs)
      : specs_(std::move(specs)) {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (!index_.emplace(specs_[i].name, i).second) {
        throw_data("registry: duplicate feature name '" + specs_[i].name +
                   "'");
      }
    }
  }

  std::size_t size() const { return specs_.size(); }
  const FeatureSpec& at(std::size_t i) const { return specs_[i]; }
  const std::vector<FeatureSpec>& specs() const { return specs_; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw_data("registry: unknown feature '" + name + "'");
    return it->second;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  std::uint64_t hash() const {
    std::string blob;
    for (const auto& s : specs_) {
      blob += s.name;
      blob += '\n';
      blob += sensor_group_name(s.group);
      blob += '\n';
    }
    return fnv1a(blob);
  }

  json to_json() const {
    json j;
    j["v"] = 1;
    json feats = json::array();
    for (const auto& s : specs_) {
      feats.push_back({{"name", s.name}, {"group", sensor_group_name(s.group)}});
    }
    j["features"] = feats;
    return j;
  }

  static FeatureRegistry from_json(const json& j) {
    if (j.value("v", 0) != 1) throw_data("registry: unsupported version");
    std::vector<FeatureSpec> specs;
    for (const auto& f : j.at("features")) {
      auto g = sensor_group_from(f.at("group").get<std::string>());
      if (!g) throw_data("registry: unknown group");
      specs.push_back({f.at("name").get<std::string>(), *g});
    }
    return FeatureRegistry(std::move(specs));
  }

 private:
  std::vector<FeatureSpec> specs_;
  std::map<std::string, std::size_t> index_;
};

inline const std::vector<std::string>& app_category_names() {
  static const std::vector<std::string> cats = {
      "camera",        "communication", "entertainment", "gaming",
      "physical_health", "mental_health", "minecraft",     "news",
      "productivity",  "social_media"};
  return cats;
}

// The default registry: the 13 self-report measures followed by the
// passive features, group by group.
inline FeatureRegistry default_registry() {
  std::vector<FeatureSpec> specs;
  for (int q = 0; q < kActiveQuestionCount; ++q) {
    specs.push_back({active_question_name(ActiveQuestion(q)),
                     SensorGroup::active});
  }
  for (const char* part : {"day", "night"}) {
    for (const char* stat : {"total", "mean", "median", "sd"}) {
      specs.push_back({std::string("light_") + part + "_" + stat,
                       SensorGroup::ambient_light});
    }
  }
  for (const char* part : {"day", "night"}) {
    std::string p = std::string("app_") + part + "_";
    specs.push_back({p + "count", SensorGroup::app_usage});
    specs.push_back({p + "unique", SensorGroup::app_usage});
    specs.push_back({p + "total_s", SensorGroup::app_usage});
    specs.push_back({p + "mean_s", SensorGroup::app_usage});
    specs.push_back({p + "median_s", SensorGroup::app_usage});
  }
  for (const auto& cat : app_category_names()) {
    specs.push_back({"app_cat_" + cat + "_s", SensorGroup::app_usage});
  }
  for (const auto& cat : app_category_names()) {
    specs.push_back({"app_cat_" + cat + "_pct", SensorGroup::app_usage});
  }
  for (const char* part : {"day", "night"}) {
    for (const char* stat : {"total", "median", "mean", "max", "sd"}) {
      specs.push_back({std::string("noise_") + part + "_" + stat,
                       SensorGroup::noise});
    }
  }
  for (const char* stat : {"min", "max", "mean", "median"}) {
    specs.push_back({std::string("battery_level_") + stat,
                     SensorGroup::battery});
  }
  specs.push_back({"battery_charge_count", SensorGroup::battery});
  specs.push_back({"battery_use_per_hour", SensorGroup::battery});
  specs.push_back({"battery_minutes_below_20", SensorGroup::battery});
  specs.push_back({"battery_night_count", SensorGroup::battery});
  for (const char* name :
       {"loc_mean_lat", "loc_mean_lon", "loc_total_distance_m", "loc_count",
        "loc_home_max_dist_m", "loc_home_mean_dist_m",
        "loc_home_median_dist_m", "loc_night_movement_m",
        "loc_radius_gyration_m", "loc_sd_lat", "loc_sd_lon", "loc_entropy",
        "loc_time_at_home"}) {
    specs.push_back({name, SensorGroup::location});
  }
  specs.push_back({"self_app_first_hour", SensorGroup::self_app});
  specs.push_back({"self_app_last_hour", SensorGroup::self_app});
  specs.push_back({"self_app_night_count", SensorGroup::self_app});
  for (const char* part : {"day", "night"}) {
    for (const char* stat : {"total", "mean", "median", "sd"}) {
      specs.push_back({std::string("brightness_") + part + "_" + stat,
                       SensorGroup::screen_brightness});
    }
  }
  specs.push_back({"steps_count", SensorGroup::steps});
  specs.push_back({"steps_gt_5k", SensorGroup::steps});
  specs.push_back({"steps_gt_7k", SensorGroup::steps});
  specs.push_back({"steps_gt_10k", SensorGroup::steps});
  return FeatureRegistry(std::move(specs));
}

// Extraction knobs. The night window wraps midnight and is inclusive of its
// start, exclusive of its end.
struct ExtractionConfig {
  int night_start_s = 22 * 3600;
  int night_end_s = 6 * 3600;
  int grid_precision_deg = 3;  // decimals; 3 is roughly a 111 m cell
  double home_radius_m = 200.0;
  std::map<std::string, std::string> app_category_map;  // app_id -> category
  std::vector<std::int64_t> step_thresholds = {5000, 7000, 10000};
  std::optional<LatLon> home_override;

  bool is_night(int local_time_of_day_s) const {
    if (night_start_s == night_end_s) return false;
    if (night_start_s < night_end_s) {
      return local_time_of_day_s >= night_start_s &&
             local_time_of_day_s < night_end_s;
    }
    return local_time_of_day_s >= night_start_s ||
           local_time_of_day_s < night_end_s;
  }

  void validate() const {
    if (night_start_s == night_end_s) {
      throw_data("extraction config: empty night window");
    }
    for (std::size_t i = 1; i < step_thresholds.size(); ++i) {
      if (step_thresholds[i] <= step_thresholds[i - 1]) {
        throw_data("extraction config: step thresholds must increase");
      }
    }
    for (const auto& [app, cat] : app_category_map) {
      bool known = false;
      for (const auto& c : app_category_names()) known |= (c == cat);
      if (!known) {
        throw_data("extraction config: unknown app category '" + cat + "'");
      }
    }
  }

  json to_json() const {
    json j;
    j["v"] = 1;
    j["night_start_s"] = night_start_s;
    j["night_end_s"] = night_end_s;
    j["grid_precision_deg"] = grid_precision_deg;
    j["home_radius_m"] = home_radius_m;
    j["step_thresholds"] = step_thresholds;
    j["app_category_map"] = app_category_map;
    if (home_override) {
      j["home_override"] = {{"lat", home_override->lat},
                            {"lon", home_override->lon}};
    }
    return j;
  }

  static ExtractionConfig from_json(const json& j) {
    if (j.value("v", 0) != 1) throw_data("extraction config: unsupported version");
    ExtractionConfig c;
    c.night_start_s = j.value("night_start_s", c.night_start_s);
    c.night_end_s = j.value("night_end_s", c.night_end_s);
    c.grid_precision_deg = j.value("grid_precision_deg", c.grid_precision_deg);
    c.home_radius_m = j.value("home_radius_m", c.home_radius_m);
    if (j.contains("step_thresholds")) {
      c.step_thresholds =
          j.at("step_thresholds").get<std::vector<std::int64_t>>();
    }
    if (j.contains("app_category_map")) {
      c.app_category_map =
          j.at("app_category_map").get<std::map<std::string, std::string>>();
    }
    if (j.contains("home_override")) {
      c.home_override = LatLon{j.at("home_override").at("lat").get<double>(),
                               j.at("home_override").at("lon").get<double>()};
    }
    c.validate();
    return c;
  }
};

}  // namespace pheno
