#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pheno/evaluation.hpp"
#include "pheno/features.hpp"
#include "pheno/version.hpp"

namespace pheno {

struct EvalRunConfig {
  std::vector<Outcome> outcomes = {Outcome::sdq, Outcome::insomnia,
                                   Outcome::suicidal, Outcome::eating};
  std::vector<Condition> conditions = {Condition::passive, Condition::active,
                                       Condition::combined};
  ExperimentConfig experiment;
};

struct EvalRunResult {
  // results[outcome][condition]
  std::map<std::string, std::map<std::string, ExperimentResult>> results;
};

inline EvalRunResult run_evaluation(const Dataset& ds,
                                    const EvalRunConfig& cfg) {
  EvalRunResult out;
  for (Outcome o : cfg.outcomes) {
    for (Condition c : cfg.conditions) {
      out.results[outcome_name(o)][condition_name(c)] =
          run_experiment(ds, o, c, cfg.experiment);
    }
  }
  return out;
}

inline json metric_bundle_json(const MetricBundle& m) {
  json j;
  j["balanced_accuracy"] = m.balanced_accuracy;
  j["auc"] = m.auc;
  j["auc_pr"] = m.auc_pr;
  j["f1"] = m.f1;
  j["f1_macro"] = m.f1_macro;
  j["sensitivity"] = m.sensitivity;
  j["specificity"] = m.specificity;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["confusion"] = {{"tp", m.confusion.tp},
                    {"tn", m.confusion.tn},
                    {"fp", m.confusion.fp},
                    {"fn", m.confusion.fn}};
  return j;
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "balanced_accuracy", "auc",         "auc_pr",    "f1",
      "f1_macro",          "sensitivity", "specificity", "precision",
      "recall"};
  return names;
}

// Score-bin edges used for the risk-level accuracy breakdown; the risk
// threshold sits on an interior edge so the two middle bins are the
// threshold-adjacent ones.
inline std::vector<double> default_bin_edges(Outcome o) {
  switch (o) {
    case Outcome::sdq: return {0, 8, 16, 24, 40};
    case Outcome::insomnia: return {0, 9, 17, 25, 32};
    case Outcome::suicidal: return {0, 1, 2, 3};
    case Outcome::eating: return {0, 1.35, 2.69, 4.0, 6.0};
  }
  return {};
}

// The single evaluation report document. Carries per-user probabilities so
// downstream tooling (and the report command) can recompute any metric.
inline json eval_report_json(const Dataset& ds, const EvalRunConfig& cfg,
                             const EvalRunResult& res) {
  json j;
  j["v"] = 1;
  j["tool_version"] = kVersion;
  j["repetitions"] = cfg.experiment.repetitions;
  j["seed"] = cfg.experiment.base_seed;
  j["registry_hash"] = hex64(ds.registry.hash());

  json outcomes = json::object();
  for (Outcome o : cfg.outcomes) {
    const std::string oname = outcome_name(o);
    json oj;
    const ExperimentResult& first =
        res.results.at(oname).at(condition_name(cfg.conditions.front()));
    oj["users"] = first.users;
    std::vector<int> labels(first.labels.begin(), first.labels.end());
    oj["labels"] = labels;
    std::vector<double> scores;
    for (const auto& u : first.users) scores.push_back(ds.scores[int(o)].at(u));
    oj["scores"] = scores;
    oj["bin_edges"] = default_bin_edges(o);

    json conditions = json::object();
    std::map<std::string, std::vector<double>> rep_ba;
    for (Condition c : cfg.conditions) {
      const std::string cname = condition_name(c);
      const ExperimentResult& r = res.results.at(oname).at(cname);
      json cj;
      json probs = json::array();
      for (std::size_t u = 0; u < r.users.size(); ++u) {
        std::vector<double> row(r.probs.cols);
        for (std::size_t rep = 0; rep < r.probs.cols; ++rep) {
          row[rep] = r.probs.at(u, rep);
        }
        probs.push_back(row);
      }
      cj["per_user_prob"] = probs;
      auto reps = per_rep_metrics(r);
      json rep_json = json::array();
      for (const auto& m : reps) rep_json.push_back(metric_bundle_json(m));
      cj["per_rep"] = rep_json;

      json mean_j, sd_j;
      for (const auto& name : metric_names()) {
        std::vector<double> vals;
        for (const auto& rm : rep_json) {
          double v = rm.at(name).is_null() ? kMissing
                                           : rm.at(name).get<double>();
          if (!is_missing(v)) vals.push_back(v);
        }
        mean_j[name] = vals.empty() ? kMissing : mean_of(vals);
        sd_j[name] = vals.empty() ? kMissing : pop_sd_of(vals);
      }
      cj["mean"] = mean_j;
      cj["sd"] = sd_j;
      conditions[cname] = cj;
      rep_ba[cname] = rep_balanced_accuracy(r);
    }
    oj["conditions"] = conditions;

    json comps = json::array();
    if (rep_ba.size() >= 2) {
      for (const auto& t : compare_conditions(rep_ba)) {
        comps.push_back({{"a", t.a},
                         {"b", t.b},
                         {"mean_a", t.mean_a},
                         {"mean_b", t.mean_b},
                         {"p", t.p},
                         {"stars", t.stars},
                         {"note", t.note}});
      }
    }
    oj["comparisons"] = comps;
    outcomes[oname] = oj;
  }
  j["outcomes"] = outcomes;
  return j;
}

namespace detail {

inline double num_or_missing(const json& j) {
  return j.is_null() ? kMissing : j.get<double>();
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw_data("cannot write '" + path + "'");
  return out;
}

inline std::string fmt(double v, const char* spec = "%.6g") {
  if (is_missing(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace detail

// Long-format metric table: one row per (outcome, condition, metric).
inline void write_metrics_csv(const json& report, const std::string& path) {
  auto out = detail::open_out(path);
  out << "outcome,condition,metric,mean,sd\n";
  for (const auto& [oname, oj] : report.at("outcomes").items()) {
    for (const auto& [cname, cj] : oj.at("conditions").items()) {
      for (const auto& name : metric_names()) {
        out << oname << ',' << cname << ',' << name << ','
            << detail::fmt(detail::num_or_missing(cj.at("mean").at(name)))
            << ','
            << detail::fmt(detail::num_or_missing(cj.at("sd").at(name)))
            << '\n';
      }
    }
  }
}

inline void write_comparisons_csv(const json& report, const std::string& path) {
  auto out = detail::open_out(path);
  out << "outcome,condition_a,condition_b,mean_a,mean_b,wilcoxon_p,stars,note\n";
  for (const auto& [oname, oj] : report.at("outcomes").items()) {
    for (const auto& comp : oj.at("comparisons")) {
      out << oname << ',' << comp.at("a").get<std::string>() << ','
          << comp.at("b").get<std::string>() << ','
          << detail::fmt(detail::num_or_missing(comp.at("mean_a"))) << ','
          << detail::fmt(detail::num_or_missing(comp.at("mean_b"))) << ','
          << detail::fmt(detail::num_or_missing(comp.at("p")), "%.6g") << ','
          << comp.at("stars").get<std::string>() << ','
          << comp.at("note").get<std::string>() << '\n';
    }
  }
}

inline void write_confusions_csv(const json& report, const std::string& path) {
  auto out = detail::open_out(path);
  out << "outcome,condition,rep,tp,tn,fp,fn\n";
  for (const auto& [oname, oj] : report.at("outcomes").items()) {
    for (const auto& [cname, cj] : oj.at("conditions").items()) {
      std::size_t rep = 0;
      for (const auto& rm : cj.at("per_rep")) {
        const auto& cm = rm.at("confusion");
        out << oname << ',' << cname << ',' << rep++ << ','
            << cm.at("tp").get<std::size_t>() << ','
            << cm.at("tn").get<std::size_t>() << ','
            << cm.at("fp").get<std::size_t>() << ','
            << cm.at("fn").get<std::size_t>() << '\n';
      }
    }
  }
}

// Accuracy by questionnaire-score bin, recomputed from the stored per-user
// probabilities (averaged over repetitions, threshold 0.5).
inline void write_bins_csv(const json& report, const std::string& path) {
  auto out = detail::open_out(path);
  out << "outcome,condition,bin_lo,bin_hi,accuracy,n_users\n";
  for (const auto& [oname, oj] : report.at("outcomes").items()) {
    std::vector<double> scores = oj.at("scores").get<std::vector<double>>();
    std::vector<int> labels_i = oj.at("labels").get<std::vector<int>>();
    std::vector<std::uint8_t> labels(labels_i.begin(), labels_i.end());
    std::vector<double> edges = oj.at("bin_edges").get<std::vector<double>>();
    for (const auto& [cname, cj] : oj.at("conditions").items()) {
      const auto& probs_j = cj.at("per_user_prob");
      std::vector<double> probs;
      for (const auto& row : probs_j) {
        double s = 0;
        for (const auto& v : row) s += v.get<double>();
        probs.push_back(s / double(row.size()));
      }
      auto acc = accuracy_by_score_bin(probs, labels, scores, edges);
      for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        std::size_t n = 0;
        for (double s : scores) {
          bool last = (b + 2 == edges.size());
          if (s >= edges[b] && (s < edges[b + 1] || (last && s <= edges[b + 1]))) ++n;
        }
        out << oname << ',' << cname << ',' << edges[b] << ',' << edges[b + 1]
            << ',' << detail::fmt(acc[b]) << ',' << n << '\n';
      }
    }
  }
}

inline void write_summary_txt(const json& report, const std::string& path) {
  auto out = detail::open_out(path);
  out << "phenopipe evaluation summary (tool "
      << report.at("tool_version").get<std::string>() << ")\n";
  out << "repetitions: " << report.at("repetitions").get<int>()
      << "  seed: " << report.at("seed").get<std::uint64_t>() << "\n\n";
  out << "balanced accuracy (mean +- sd across repetitions)\n";
  for (const auto& [oname, oj] : report.at("outcomes").items()) {
    out << "  " << oname << ":\n";
    for (const auto& [cname, cj] : oj.at("conditions").items()) {
      double m = detail::num_or_missing(cj.at("mean").at("balanced_accuracy"));
      double s = detail::num_or_missing(cj.at("sd").at("balanced_accuracy"));
      out << "    " << cname << ": " << detail::fmt(m, "%.3f") << " +- "
          << detail::fmt(s, "%.3f") << '\n';
    }
    for (const auto& comp : oj.at("comparisons")) {
      std::string stars = comp.at("stars").get<std::string>();
      std::string note = comp.at("note").get<std::string>();
      out << "    " << comp.at("a").get<std::string>() << " vs "
          << comp.at("b").get<std::string>() << ": p="
          << detail::fmt(detail::num_or_missing(comp.at("p")), "%.4g");
      if (!stars.empty()) out << " " << stars;
      if (!note.empty()) out << " (" << note << ")";
      out << '\n';
    }
  }
}

// Minimal dependency-free grouped bar chart of balanced accuracy.
inline void write_svg_bars(const json& report, const std::string& path) {
  auto out = detail::open_out(path);
  std::vector<std::string> outcomes, conditions;
  for (const auto& [oname, oj] : report.at("outcomes").items()) {
    outcomes.push_back(oname);
    if (conditions.empty()) {
      for (const auto& [cname, cj] : oj.at("conditions").items()) {
        conditions.push_back(cname);
      }
    }
  }
  static const char* palette[] = {"#4878a8", "#e49444", "#6a9f58", "#b65655"};
  int group_w = 30 * int(conditions.size()) + 24;
  int width = 70 + group_w * int(outcomes.size());
  int height = 260;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n";
  out << "<line x1='50' y1='20' x2='50' y2='220' stroke='black'/>\n";
  out << "<line x1='50' y1='220' x2='" << width - 10
      << "' y2='220' stroke='black'/>\n";
  for (int tick = 0; tick <= 10; tick += 2) {
    int y = 220 - tick * 20;
    out << "<text x='44' y='" << y + 4
        << "' font-size='10' text-anchor='end'>" << tick / 10.0
        << "</text>\n";
    out << "<line x1='47' y1='" << y << "' x2='50' y2='" << y
        << "' stroke='black'/>\n";
  }
  int x = 60;
  for (const auto& oname : outcomes) {
    const auto& oj = report.at("outcomes").at(oname);
    int cx = x;
    std::size_t ci = 0;
    for (const auto& cname : conditions) {
      double m = detail::num_or_missing(
          oj.at("conditions").at(cname).at("mean").at("balanced_accuracy"));
      if (!is_missing(m)) {
        int h = int(m * 200.0);
        out << "<rect x='" << cx << "' y='" << 220 - h
            << "' width='24' height='" << h << "' fill='"
            << palette[ci % 4] << "'/>\n";
      }
      cx += 30;
      ++ci;
    }
    out << "<text x='" << x + 15 * int(conditions.size()) << "' y='236' "
        << "font-size='11' text-anchor='middle'>" << oname << "</text>\n";
    x += group_w;
  }
  int lx = 60;
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    out << "<rect x='" << lx << "' y='246' width='10' height='10' fill='"
        << palette[ci % 4] << "'/>\n";
    out << "<text x='" << lx + 14 << "' y='255' font-size='11'>"
        << conditions[ci] << "</text>\n";
    lx += 24 + 9 * int(conditions[ci].size());
  }
  out << "</svg>\n";
}

}  // namespace pheno
