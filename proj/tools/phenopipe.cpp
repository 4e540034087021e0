// phenopipe: synthesize, validate, featurize, evaluate and explain
// digital-phenotyping cohorts.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "pheno/cohort.hpp"
#include "pheno/evaluation.hpp"
#include "pheno/features.hpp"
#include "pheno/manifest.hpp"
#include "pheno/model_io.hpp"
#include "pheno/registry.hpp"
#include "pheno/report.hpp"
#include "pheno/synthetic.hpp"
#include "pheno/version.hpp"

namespace fs = std::filesystem;
using pheno::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitTraining = 3;
constexpr int kExitInternal = 4;

void emit_error(const std::string& kind, const std::string& msg) {
  json j;
  j["error"] = {{"kind", kind}, {"message", msg}};
  std::cerr << j.dump() << std::endl;
}

int error_exit(const pheno::Error& e) {
  switch (e.kind()) {
    case pheno::ErrorKind::usage:
      emit_error("usage", e.what());
      return kExitUsage;
    case pheno::ErrorKind::data:
      emit_error("data", e.what());
      return kExitData;
    case pheno::ErrorKind::training:
      emit_error("training", e.what());
      return kExitTraining;
    case pheno::ErrorKind::internal:
      emit_error("internal", e.what());
      return kExitInternal;
  }
  return kExitInternal;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) pheno::throw_data("cannot open '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) pheno::throw_data("malformed JSON in '" + path + "'");
  return j;
}

// One config file serves every command; sections are optional.
struct ConfigFile {
  json raw = json::object();

  static ConfigFile load(const std::string& path) {
    ConfigFile c;
    if (!path.empty()) c.raw = load_json_file(path);
    return c;
  }

  pheno::TrainConfig train() const {
    return raw.contains("train") ? pheno::TrainConfig::from_json(raw.at("train"))
                                 : pheno::TrainConfig{};
  }
  pheno::ExtractionConfig extraction() const {
    return raw.contains("extraction")
               ? pheno::ExtractionConfig::from_json(raw.at("extraction"))
               : pheno::ExtractionConfig{};
  }
  pheno::GeneratorConfig generator() const {
    return raw.contains("generator")
               ? pheno::GeneratorConfig::from_json(raw.at("generator"))
               : pheno::GeneratorConfig{};
  }
};

struct InputArgs {
  std::string participants, active, passive;

  void attach(CLI::App* cmd) {
    cmd->add_option("--participants", participants, "participants .jsonl")
        ->required();
    cmd->add_option("--active", active, "active responses .jsonl")->required();
    cmd->add_option("--passive", passive, "passive events .jsonl")->required();
  }

  pheno::Cohort load(pheno::LoadReport& report) const {
    return pheno::load_cohort(participants, active, passive, report);
  }

  void digests(pheno::RunManifest& m) const {
    m.input_digests[participants] = pheno::file_digest(participants);
    m.input_digests[active] = pheno::file_digest(active);
    m.input_digests[passive] = pheno::file_digest(passive);
  }
};

pheno::FeatureRegistry load_registry(const std::string& path) {
  if (path.empty()) return pheno::default_registry();
  return pheno::FeatureRegistry::from_json(load_json_file(path));
}

std::vector<pheno::Outcome> parse_outcomes(const std::string& csv) {
  std::vector<pheno::Outcome> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto o = pheno::outcome_from(tok);
    if (!o) throw pheno::Error(pheno::ErrorKind::usage, "unknown outcome '" + tok + "'");
    out.push_back(*o);
  }
  if (out.empty()) throw pheno::Error(pheno::ErrorKind::usage, "no outcomes given");
  return out;
}

std::vector<pheno::Condition> parse_conditions(const std::string& csv) {
  std::vector<pheno::Condition> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto c = pheno::condition_from(tok);
    if (!c) throw pheno::Error(pheno::ErrorKind::usage, "unknown condition '" + tok + "'");
    out.push_back(*c);
  }
  if (out.empty()) throw pheno::Error(pheno::ErrorKind::usage, "no conditions given");
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) pheno::throw_data("cannot create output directory '" + dir + "'");
}

void print_load_report(const pheno::LoadReport& report) {
  std::cout << "accepted: " << report.participants_accepted
            << " participants, " << report.active_accepted << " active, "
            << report.passive_accepted << " passive\n";
  std::cout << "rejected: " << report.rejected.size() << " lines\n";
  for (const auto& r : report.rejected) {
    std::cout << "  " << r.file << ":" << r.line_no << ": " << r.reason << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"digital-phenotyping pipeline"};
  app.set_version_flag("--version", pheno::kVersion);
  app.require_subcommand(1);

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  std::string synth_config, synth_out = "out";
  std::uint64_t synth_seed = 0;
  bool synth_seed_set = false;
  synth->add_option("--config", synth_config, "config JSON (generator section)");
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", synth_seed, "override generator seed")
      ->each([&](const std::string&) { synth_seed_set = true; });

  // --- validate ---
  auto* validate = app.add_subcommand("validate", "validate input files");
  InputArgs validate_in;
  validate_in.attach(validate);

  // --- features ---
  auto* features = app.add_subcommand("features", "extract the feature table");
  InputArgs features_in;
  features_in.attach(features);
  std::string features_registry, features_config, features_out = "out";
  features->add_option("--registry", features_registry, "registry JSON");
  features->add_option("--config", features_config, "config JSON (extraction section)");
  features->add_option("--out", features_out, "output directory");

  // --- evaluate ---
  auto* evaluate = app.add_subcommand("evaluate", "repeated LOSO evaluation");
  InputArgs eval_in;
  eval_in.attach(evaluate);
  std::string eval_registry, eval_config, eval_out = "out";
  std::string eval_outcomes = "sdq,insomnia,suicidal,eating";
  std::string eval_conditions = "passive,active,combined";
  int eval_reps = 10, eval_jobs = 0;
  std::uint64_t eval_seed = 42;
  evaluate->add_option("--registry", eval_registry, "registry JSON");
  evaluate->add_option("--config", eval_config, "config JSON (train/extraction)");
  evaluate->add_option("--outcomes", eval_outcomes, "comma-separated outcomes");
  evaluate->add_option("--conditions", eval_conditions, "comma-separated conditions");
  evaluate->add_option("--reps", eval_reps, "repetitions");
  evaluate->add_option("--seed", eval_seed, "base seed");
  evaluate->add_option("--jobs", eval_jobs, "parallel workers (0 = auto)");
  evaluate->add_option("--out", eval_out, "output directory");

  // --- ablate ---
  auto* ablate = app.add_subcommand("ablate", "pretraining ablation");
  InputArgs ablate_in;
  ablate_in.attach(ablate);
  std::string ablate_registry, ablate_config, ablate_out = "out";
  std::string ablate_outcomes = "sdq,insomnia,suicidal,eating";
  int ablate_reps = 10, ablate_jobs = 0;
  std::uint64_t ablate_seed = 42;
  ablate->add_option("--registry", ablate_registry, "registry JSON");
  ablate->add_option("--config", ablate_config, "config JSON (train/extraction)");
  ablate->add_option("--outcomes", ablate_outcomes, "comma-separated outcomes");
  ablate->add_option("--reps", ablate_reps, "repetitions");
  ablate->add_option("--seed", ablate_seed, "base seed");
  ablate->add_option("--jobs", ablate_jobs, "parallel workers (0 = auto)");
  ablate->add_option("--out", ablate_out, "output directory");

  // --- explain ---
  auto* explain = app.add_subcommand("explain", "Shapley feature attribution");
  InputArgs explain_in;
  explain_in.attach(explain);
  std::string explain_registry, explain_config, explain_out = "out";
  std::string explain_outcome = "sdq", explain_condition = "combined";
  std::string explain_model;
  int explain_nperm = 200;
  std::uint64_t explain_seed = 42;
  explain->add_option("--registry", explain_registry, "registry JSON");
  explain->add_option("--config", explain_config, "config JSON (train/extraction)");
  explain->add_option("--outcome", explain_outcome, "outcome to explain");
  explain->add_option("--condition", explain_condition, "feature condition");
  explain->add_option("--model", explain_model,
                      "model checkpoint (otherwise retrains)");
  explain->add_option("--nperm", explain_nperm, "permutations per row");
  explain->add_option("--seed", explain_seed, "seed");
  explain->add_option("--out", explain_out, "output directory");

  // --- report ---
  auto* report_cmd = app.add_subcommand("report", "render an evaluation report");
  std::string report_eval, report_out = "out";
  bool report_svg = false;
  report_cmd->add_option("--eval", report_eval, "evaluation report.json")
      ->required();
  report_cmd->add_option("--out", report_out, "output directory");
  report_cmd->add_flag("--svg", report_svg, "also emit SVG charts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) {
      ConfigFile cf = ConfigFile::load(synth_config);
      pheno::GeneratorConfig gc = cf.generator();
      if (synth_seed_set) gc.seed = synth_seed;
      ensure_dir(synth_out);
      pheno::GroundTruth truth;
      pheno::Cohort cohort = pheno::generate(gc, &truth);
      std::string p = synth_out + "/participants.jsonl";
      std::string a = synth_out + "/active.jsonl";
      std::string e = synth_out + "/passive.jsonl";
      pheno::write_cohort(cohort, p, a, e);
      {
        json gt;
        gt["v"] = 1;
        gt["config"] = gc.to_json();
        json users = json::array();
        for (std::size_t i = 0; i < cohort.participants.size(); ++i) {
          json u;
          u["participant_id"] = cohort.participants[i].participant_id;
          u["flags"] = {{"sdq", truth.flags[i][0]},
                        {"insomnia", truth.flags[i][1]},
                        {"suicidal", truth.flags[i][2]},
                        {"eating", truth.flags[i][3]}};
          u["severity"] = truth.severity[i];
          u["burden"] = truth.burden[i];
          users.push_back(u);
        }
        gt["users"] = users;
        std::ofstream out(synth_out + "/ground_truth.json");
        out << gt.dump(2) << '\n';
      }
      pheno::RunManifest m;
      m.command = "synth";
      m.seed = gc.seed;
      m.config = gc.to_json();
      m.registry_hash = pheno::hex64(pheno::default_registry().hash());
      m.artifacts = {p, a, e, synth_out + "/ground_truth.json"};
      m.write(synth_out + "/manifest.json");
      std::cout << "wrote " << cohort.participants.size() << " participants, "
                << cohort.active.size() << " active, "
                << cohort.passive.size() << " passive events to " << synth_out
                << "\n";
      return 0;
    }

    if (*validate) {
      pheno::LoadReport report;
      validate_in.load(report);
      print_load_report(report);
      return report.clean() ? 0 : kExitData;
    }

    if (*features) {
      ConfigFile cf = ConfigFile::load(features_config);
      pheno::FeatureRegistry reg = load_registry(features_registry);
      pheno::ExtractionConfig xc = cf.extraction();
      pheno::LoadReport report;
      pheno::Cohort cohort = features_in.load(report);
      pheno::Dataset ds = pheno::build_dataset(cohort, reg, xc);
      ensure_dir(features_out);
      std::string csv_path = features_out + "/features.csv";
      {
        std::ofstream out(csv_path);
        if (!out) pheno::throw_data("cannot write '" + csv_path + "'");
        pheno::features_to_csv(ds, out);
      }
      pheno::RunManifest m;
      m.command = "features";
      m.config = json{{"extraction", xc.to_json()},
                      {"registry", reg.to_json()}};
      m.registry_hash = pheno::hex64(reg.hash());
      features_in.digests(m);
      m.artifacts = {csv_path};
      m.write(features_out + "/manifest.json");
      std::cout << "wrote " << ds.rows.size() << " rows x " << reg.size()
                << " features to " << csv_path << "\n";
      if (!report.clean()) {
        std::cout << "note: " << report.rejected.size()
                  << " input lines rejected\n";
      }
      return 0;
    }

    if (*evaluate) {
      ConfigFile cf = ConfigFile::load(eval_config);
      pheno::FeatureRegistry reg = load_registry(eval_registry);
      pheno::LoadReport lr;
      pheno::Cohort cohort = eval_in.load(lr);
      pheno::Dataset ds = pheno::build_dataset(cohort, reg, cf.extraction());

      pheno::EvalRunConfig rc;
      rc.outcomes = parse_outcomes(eval_outcomes);
      rc.conditions = parse_conditions(eval_conditions);
      rc.experiment.train = cf.train();
      rc.experiment.repetitions = eval_reps;
      rc.experiment.base_seed = eval_seed;
      rc.experiment.jobs = eval_jobs;

      pheno::EvalRunResult res = pheno::run_evaluation(ds, rc);
      json report = pheno::eval_report_json(ds, rc, res);

      ensure_dir(eval_out);
      std::string report_path = eval_out + "/report.json";
      {
        std::ofstream out(report_path);
        out << report.dump(2) << '\n';
      }
      pheno::write_metrics_csv(report, eval_out + "/metrics_table.csv");
      pheno::write_comparisons_csv(report, eval_out + "/comparisons.csv");
      pheno::write_confusions_csv(report, eval_out + "/confusions.csv");
      pheno::write_bins_csv(report, eval_out + "/score_bins.csv");

      pheno::RunManifest m;
      m.command = "evaluate";
      m.seed = eval_seed;
      m.config = json{{"train", rc.experiment.train.to_json()},
                      {"extraction", cf.extraction().to_json()},
                      {"outcomes", eval_outcomes},
                      {"conditions", eval_conditions},
                      {"repetitions", eval_reps}};
      m.registry_hash = pheno::hex64(reg.hash());
      eval_in.digests(m);
      m.artifacts = {report_path, eval_out + "/metrics_table.csv",
                     eval_out + "/comparisons.csv",
                     eval_out + "/confusions.csv",
                     eval_out + "/score_bins.csv"};
      m.write(eval_out + "/manifest.json");
      std::cout << "wrote " << report_path << "\n";
      return 0;
    }

    if (*ablate) {
      ConfigFile cf = ConfigFile::load(ablate_config);
      pheno::FeatureRegistry reg = load_registry(ablate_registry);
      pheno::LoadReport lr;
      pheno::Cohort cohort = ablate_in.load(lr);
      pheno::Dataset ds = pheno::build_dataset(cohort, reg, cf.extraction());

      pheno::ExperimentConfig ec;
      ec.train = cf.train();
      ec.repetitions = ablate_reps;
      ec.base_seed = ablate_seed;
      ec.jobs = ablate_jobs;
      auto outcomes = parse_outcomes(ablate_outcomes);
      pheno::AblationResult ar = pheno::ablation_pretraining(ds, outcomes, ec);

      ensure_dir(ablate_out);
      json aj;
      aj["v"] = 1;
      aj["pooled_mean_pretrained"] = ar.pooled_mean_pretrained;
      aj["pooled_mean_no_pretrain"] = ar.pooled_mean_no_pretrain;
      aj["paired_t_p"] = ar.paired_t_p;
      aj["note"] = ar.note;
      aj["rep_ba_pretrained"] = ar.rep_ba_pretrained;
      aj["rep_ba_no_pretrain"] = ar.rep_ba_no_pretrain;
      std::string ja = ablate_out + "/ablation.json";
      {
        std::ofstream out(ja);
        out << aj.dump(2) << '\n';
      }
      {
        std::ofstream out(ablate_out + "/ablation.csv");
        out << "outcome,rep,pretrained_ba,no_pretrain_ba\n";
        for (const auto& [oname, pre] : ar.rep_ba_pretrained) {
          const auto& nop = ar.rep_ba_no_pretrain.at(oname);
          for (std::size_t r = 0; r < pre.size(); ++r) {
            out << oname << ',' << r << ',' << pre[r] << ',' << nop[r] << '\n';
          }
        }
      }
      pheno::RunManifest m;
      m.command = "ablate";
      m.seed = ablate_seed;
      m.config = json{{"train", ec.train.to_json()},
                      {"outcomes", ablate_outcomes},
                      {"repetitions", ablate_reps}};
      m.registry_hash = pheno::hex64(reg.hash());
      ablate_in.digests(m);
      m.artifacts = {ja, ablate_out + "/ablation.csv"};
      m.write(ablate_out + "/manifest.json");
      std::cout << "pretrained pooled BA " << ar.pooled_mean_pretrained
                << " vs " << ar.pooled_mean_no_pretrain
                << " without pretraining (p=" << ar.paired_t_p << ")\n";
      return 0;
    }

    if (*explain) {
      ConfigFile cf = ConfigFile::load(explain_config);
      pheno::FeatureRegistry reg = load_registry(explain_registry);
      pheno::LoadReport lr;
      pheno::Cohort cohort = explain_in.load(lr);
      pheno::Dataset ds = pheno::build_dataset(cohort, reg, cf.extraction());

      auto outcome = pheno::outcome_from(explain_outcome);
      auto condition = pheno::condition_from(explain_condition);
      if (!outcome || !condition) {
        throw pheno::Error(pheno::ErrorKind::usage, "bad outcome/condition");
      }
      ensure_dir(explain_out);

      pheno::ExplainResult res;
      if (!explain_model.empty()) {
        // Attribute every row with a previously trained model.
        pheno::TrainedModel model = pheno::TrainedModel::load(explain_model);
        if (model.registry_hash != pheno::hex64(reg.hash())) {
          pheno::throw_data("model checkpoint registry hash mismatch");
        }
        res.model = std::move(model);
        std::vector<double> baseline(res.model.selected.size());
        for (std::size_t k = 0; k < res.model.selected.size(); ++k) {
          std::size_t j = res.model.selected[k];
          baseline[k] = (res.model.norm.median[j] - res.model.norm.mean[j]) /
                        res.model.norm.sd[j];
        }
        res.baseline = baseline;
        std::vector<std::vector<double>> rows;
        for (const auto& row : ds.rows) {
          rows.push_back(res.model.normalize_row(row.values));
        }
        const pheno::TrainedModel& mm = res.model;
        pheno::ModelFn fn = [&mm](std::span<const double> z) {
          return mm.predict_normalized(z);
        };
        pheno::ImportanceConfig ic;
        ic.n_permutations = std::size_t(explain_nperm);
        ic.seed = explain_seed;
        res.importance = pheno::global_importance(fn, rows, baseline, ic);
        res.groups = pheno::aggregate_by_sensor(
            res.importance, reg, res.model.selected_registry_columns());
      } else {
        pheno::ExplainConfig xc;
        xc.outcome = *outcome;
        xc.condition = *condition;
        xc.train = cf.train();
        xc.importance.n_permutations = std::size_t(explain_nperm);
        xc.importance.seed = explain_seed;
        xc.seed = explain_seed;
        res = pheno::explain_dataset(ds, xc);
        res.model.save(explain_out + "/model.json");
        std::ofstream log(explain_out + "/train_log.jsonl");
        log << pheno::history_to_jsonl(res.finetune_history);
      }

      pheno::write_importance_csv(res, reg, explain_out + "/importance.csv");
      pheno::write_group_importance_csv(res,
                                        explain_out + "/group_importance.csv");
      pheno::RunManifest m;
      m.command = "explain";
      m.seed = explain_seed;
      m.config = json{{"outcome", explain_outcome},
                      {"condition", explain_condition},
                      {"n_permutations", explain_nperm}};
      m.registry_hash = pheno::hex64(reg.hash());
      explain_in.digests(m);
      m.artifacts = {explain_out + "/importance.csv",
                     explain_out + "/group_importance.csv"};
      m.write(explain_out + "/manifest.json");
      std::cout << "top groups:\n";
      for (std::size_t i = 0; i < res.groups.size() && i < 5; ++i) {
        std::cout << "  " << res.groups[i].group << ": "
                  << res.groups[i].score << "\n";
      }
      return 0;
    }

    if (*report_cmd) {
      json report = load_json_file(report_eval);
      if (report.value("v", 0) != 1) {
        pheno::throw_data("report: unsupported report version");
      }
      ensure_dir(report_out);
      pheno::write_summary_txt(report, report_out + "/summary.txt");
      pheno::write_metrics_csv(report, report_out + "/metrics_table.csv");
      pheno::write_comparisons_csv(report, report_out + "/comparisons.csv");
      pheno::write_confusions_csv(report, report_out + "/confusions.csv");
      pheno::write_bins_csv(report, report_out + "/score_bins.csv");
      std::vector<std::string> artifacts = {
          report_out + "/summary.txt", report_out + "/metrics_table.csv",
          report_out + "/comparisons.csv", report_out + "/confusions.csv",
          report_out + "/score_bins.csv"};
      if (report_svg) {
        pheno::write_svg_bars(report, report_out + "/balanced_accuracy.svg");
        artifacts.push_back(report_out + "/balanced_accuracy.svg");
      }
      pheno::RunManifest m;
      m.command = "report";
      m.registry_hash = report.value("registry_hash", "");
      m.seed = report.value("seed", std::uint64_t(0));
      m.config = json{{"eval", report_eval}};
      m.input_digests[report_eval] = pheno::file_digest(report_eval);
      m.artifacts = artifacts;
      m.write(report_out + "/manifest.json");
      std::cout << "wrote report files to " << report_out << "\n";
      return 0;
    }
  } catch (const pheno::Error& e) {
    return error_exit(e);
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return kExitInternal;
  }
  return kExitUsage;
}
