#pragma once

// Command-line front end. run_cli() is the whole program; tools/main.cpp only
// forwards argv and the standard streams.

#include "brainalign/analysis.hpp"
#include "brainalign/behavior.hpp"
#include "brainalign/encoding.hpp"
#include "brainalign/simmetrics.hpp"
#include "brainalign/synthbench.hpp"
#include "brainalign/tensor_io.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef BRAINALIGN_DATA_DIR
#define BRAINALIGN_DATA_DIR "data/reference"
#endif

namespace brainalign::cli {

namespace detail {

inline void diagnostic(std::ostream& err, const char* kind, int code, const std::string& msg) {
  err << json{{"error", kind}, {"exit_code", code}, {"message", msg}}.dump() << "\n";
}

inline std::string config_value_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_null()) return "none";
  return v.dump();
}

/// Fills options from a JSON object whose keys are long option names
/// (underscores or dashes). Options given on the command line are kept.
inline void apply_config(CLI::App& sub, const std::string& path) {
  if (path.empty()) return;
  json j;
  {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path + ": " + e.what());
    }
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, val] : j.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    if (name == "config") throw ConfigError("config files cannot nest");
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + name);
    } catch (const CLI::OptionNotFound&) {
      throw ConfigError("unknown config key '" + key + "' for " + sub.get_name());
    }
    if (opt->count() > 0) continue;
    std::vector<std::string> vals;
    if (val.is_array())
      for (const auto& e : val) vals.push_back(config_value_string(e));
    else
      vals.push_back(config_value_string(val));
    try {
      opt->add_result(vals);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

inline void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required option ") + flag);
}

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

template <class E>
E parse_enum(const std::string& s, const char* what) {
  const json j = s;
  const E e = j.get<E>();
  if (json(e) != j) throw ConfigError(std::string("invalid ") + what + " '" + s + "'");
  return e;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipeline flags shared by brain-align and ceiling

struct PipelineFlags {
  std::string dataset;
  std::string pca;
  std::string lags;
  std::string pad_policy;
  std::string folds;
  int n_folds = -1;
  int trim = -1;
  int inner_folds = -1;
  std::vector<double> lambda_grid;
  std::string aggregation;
  std::string empty_tr;

  void add_to(CLI::App& sub) {
    sub.add_option("--dataset", dataset, "Preset: wehbe2014, blank2014, pereira2018[_exp2|_exp3] or custom");
    sub.add_option("--pca", pca, "PCA components or 'none'");
    sub.add_option("--lags", lags, "Number of TR delays or 'none'");
    sub.add_option("--pad-policy", pad_policy, "zero_pad or drop");
    sub.add_option("--folds", folds, "Fold grouping: run, story or passage");
    sub.add_option("--n-folds", n_folds, "Fold count (0: one per group)");
    sub.add_option("--trim", trim, "TRs trimmed at run edges");
    sub.add_option("--inner-folds", inner_folds, "Inner CV folds for lambda selection");
    sub.add_option("--lambda-grid", lambda_grid, "Ridge lambda grid")->delimiter(',');
    sub.add_option("--aggregation", aggregation, "mean or median");
    sub.add_option("--empty-tr", empty_tr, "carry_forward or zero");
  }

  encoding::PipelineConfig build(const ResponseMeta& meta) const {
    std::string name = dataset;
    encoding::PipelineConfig c;
    if (name.empty()) {
      try {
        c = encoding::PipelineConfig::for_dataset(meta.dataset_id);
      } catch (const ConfigError&) {
        c = encoding::PipelineConfig::for_granularity(meta.granularity);
      }
    } else {
      c = encoding::PipelineConfig::for_dataset(name);
    }
    auto optional_int = [](const std::string& s, const char* what) -> std::optional<int> {
      if (s == "none") return std::nullopt;
      try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw ConfigError(std::string("invalid ") + what + " '" + s + "'");
      }
    };
    if (!pca.empty()) c.pca_k = optional_int(pca, "--pca");
    if (!lags.empty()) {
      const auto n = optional_int(lags, "--lags");
      if (!n) {
        c.lag.reset();
      } else {
        if (!c.lag) c.lag = temporal::LagConfig{};
        c.lag->n_delays = *n;
      }
    }
    if (!pad_policy.empty() && c.lag) c.lag->pad_policy = detail::parse_enum<temporal::PadPolicy>(pad_policy, "pad policy");
    if (!folds.empty()) c.fold_key = detail::parse_enum<temporal::GroupKey>(folds, "fold key");
    if (n_folds >= 0) c.n_folds = n_folds;
    if (trim >= 0) c.trim = trim;
    if (inner_folds >= 0) c.inner_folds = inner_folds;
    if (!lambda_grid.empty()) c.lambda_grid = lambda_grid;
    if (!aggregation.empty()) c.aggregation = detail::parse_enum<encoding::Aggregation>(aggregation, "aggregation");
    if (!empty_tr.empty()) c.empty_tr = detail::parse_enum<temporal::EmptyTrPolicy>(empty_tr, "empty-TR policy");
    c.validate();
    return c;
  }
};

struct Common {
  std::string config;
  bool dry_run = false;
  int threads = 1;
  std::string out;

  void add_to(CLI::App& sub, bool with_threads = true) {
    sub.add_option("--config", config, "JSON file mirroring the flags (flags win)");
    sub.add_flag("--dry-run", dry_run, "Validate configuration and data shapes without computing");
    if (with_threads) sub.add_option("--threads", threads, "Worker threads (output is identical for any value)");
    sub.add_option("--out", out, "Output directory");
  }
};

// ---------------------------------------------------------------------------
// Subcommands

inline void check_feature_rows(const std::vector<LoadedMatrix>& layers, const encoding::DatasetView& view) {
  const auto rows = static_cast<std::size_t>(view.rows());
  for (const auto& l : layers) {
    const auto r = static_cast<std::size_t>(l.values.rows());
    const bool word_ok = view.granularity() == RowSemantics::tr && r == view.timeline.words.size();
    if (r != rows && !word_ok)
      throw DataError("features '" + l.manifest.name + "' have " + std::to_string(r) + " rows; expected " + std::to_string(rows) +
                      (view.granularity() == RowSemantics::tr ? " TRs or " + std::to_string(view.timeline.words.size()) + " words" : "") +
                      " (dimension mismatch)");
  }
}

struct BrainAlignArgs {
  Common common;
  PipelineFlags pipe;
  std::string bundle;
  std::string features;
  std::string model = "model";
  std::string metric = "linear";
  std::string ceiling = "none";
};

inline int cmd_brain_align(const BrainAlignArgs& a, std::ostream& out) {
  detail::require(a.bundle, "--bundle");
  detail::require(a.features, "--features");
  const auto metric = simmetrics::parse_metric(a.metric);
  if (a.ceiling != "none") detail::parse_enum<encoding::CeilingEstimator>(a.ceiling, "ceiling estimator");
  if (a.common.threads < 1) throw ConfigError("--threads must be >= 1");

  const auto bundle = load_dataset_bundle(a.bundle);
  const auto view = encoding::view_of(bundle);
  const auto layers = load_layer_features(a.features);
  check_feature_rows(layers, view);
  auto cfg = a.pipe.build(bundle.meta);
  cfg.threads = a.common.threads;

  json echo = cfg;
  if (a.common.dry_run) {
    json layer_shapes = json::array();
    for (const auto& l : layers) layer_shapes.push_back({{"name", l.manifest.name}, {"rows", l.values.rows()}, {"cols", l.values.cols()}});
    out << json{{"dry_run", true},
                {"config", echo},
                {"bundle", {{"rows", view.rows()}, {"cols", view.responses.cols()}, {"granularity", view.granularity()},
                            {"subjects", bundle.meta.subjects().size()}}},
                {"layers", layer_shapes}}
               .dump(2)
        << "\n";
    return 0;
  }

  std::vector<encoding::AlignmentScore> per_layer;
  if (metric == simmetrics::Metric::linear) {
    std::vector<Matrix> mats;
    for (const auto& l : layers) mats.push_back(l.values);
    per_layer = encoding::layer_sweep(mats, view, cfg).per_layer;
  } else {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Matrix x = layers[l].values;
      if (x.rows() != view.rows()) x = temporal::words_to_trs(x, view.timeline, cfg.empty_tr);
      auto s = simmetrics::score_similarity(x, view.responses, view.meta, metric);
      s.layer = static_cast<int>(l);
      per_layer.push_back(std::move(s));
    }
  }
  std::size_t best = 0;
  for (std::size_t l = 0; l < per_layer.size(); ++l)
    if (per_layer[l].overall > per_layer[best].overall) best = l;
  auto score = per_layer[best];
  score.model = a.model;
  if (score.dataset.empty()) score.dataset = cfg.dataset;

  json result = score;
  if (a.ceiling != "none") {
    const auto est = detail::parse_enum<encoding::CeilingEstimator>(a.ceiling, "ceiling estimator");
    auto ceil = est == encoding::CeilingEstimator::reference ? encoding::reference_ceiling(score.dataset)
                                                             : encoding::ceiling_estimate(view, est, cfg);
    score = encoding::normalize_by_ceiling(score, ceil);
    result = score;
    result["ceiling"] = ceil;
  }
  json curve = json::array();
  std::ostringstream csv;
  csv << "layer,name,score\n";
  for (std::size_t l = 0; l < per_layer.size(); ++l) {
    curve.push_back(per_layer[l].overall);
    csv << l << "," << layers[l].manifest.name << "," << analysis::detail::fmt("%.6f", per_layer[l].overall) << "\n";
  }
  result["layer_curve"] = curve;
  result["layer_name"] = layers[best].manifest.name;
  result["config"] = echo;
  const std::string text = result.dump(2) + "\n";
  if (!a.common.out.empty()) {
    detail::write_text(fs::path(a.common.out) / "score.json", text);
    detail::write_text(fs::path(a.common.out) / "layer_curve.csv", csv.str());
  }
  out << text;
  return 0;
}

struct BehavAlignArgs {
  Common common;
  std::string rts;
  std::string surprisal;
  std::string model = "model";
  std::string dataset = "futrell2018";
  bool include_first_word = false;
  bool per_participant = false;
  std::string aggregation = "mean";
};

inline int cmd_behav_align(const BehavAlignArgs& a, std::ostream& out) {
  detail::require(a.rts, "--rts");
  detail::require(a.surprisal, "--surprisal");
  behavior::BehaviorOptions opt;
  opt.include_first_word = a.include_first_word;
  if (a.aggregation == "median") opt.aggregation = behavior::ParticipantAggregation::median;
  else if (a.aggregation != "mean") throw ConfigError("invalid aggregation '" + a.aggregation + "'");

  const auto table = behavior::load_reading_times(a.rts);
  const auto track = behavior::read_track(a.surprisal);
  const auto ws = behavior::word_surprisal(track);
  if (ws.size() != table.words.size())
    throw DataError("surprisal track covers " + std::to_string(ws.size()) + " words but reading times have " +
                    std::to_string(table.words.size()) + " (dimension mismatch)");
  if (a.common.dry_run) {
    out << json{{"dry_run", true}, {"words", table.words.size()}, {"participants", table.rts.cols()}, {"tokens", track.surprisal.size()}}.dump(2) << "\n";
    return 0;
  }
  const auto res = behavior::behav_align(ws, table, opt);
  json result{{"model", a.model}, {"dataset", a.dataset}, {"metric", "surprisal_rt_pearson"}, {"r", res.r},
              {"p_raw", res.p_raw}, {"n", res.n}, {"degenerate", res.degenerate}};
  if (a.per_participant) {
    json pp = json::array();
    for (const auto& r : behavior::behav_align_per_participant(ws, table, opt)) pp.push_back({{"r", r.r}, {"n", r.n}, {"degenerate", r.degenerate}});
    result["per_participant"] = pp;
  }
  const std::string text = result.dump(2) + "\n";
  if (!a.common.out.empty()) detail::write_text(fs::path(a.common.out) / "behavior_score.json", text);
  out << text;
  return 0;
}

struct TableArgs {
  std::string alignment;
  std::string properties;
  std::vector<std::string> scores;  // brain-align score.json files instead of a CSV

  void add_to(CLI::App& sub) {
    sub.add_option("--alignment", alignment, "Alignment table CSV (model, dataset columns)");
    sub.add_option("--properties", properties, "Model property table CSV");
    sub.add_option("--scores", scores, "brain-align score.json files used instead of --alignment");
  }

  analysis::AlignmentTable alignment_table(const std::string& data_dir) const {
    if (!scores.empty()) {
      std::vector<encoding::AlignmentScore> v;
      for (const auto& s : scores) v.push_back(brainalign::detail::read_json_file(s).get<encoding::AlignmentScore>());
      auto t = analysis::alignment_table_from_scores(v);
      for (const auto& m : t.models) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& d : t.datasets)
          if (d != "average" && t.has(m, d)) { sum += t.get(m, d); ++n; }
        if (n == t.datasets.size()) t.set(m, "average", sum / static_cast<double>(n));
      }
      return t;
    }
    return analysis::load_alignment_table(alignment.empty() ? fs::path(data_dir) / "brain_alignment.csv" : fs::path(alignment));
  }

  analysis::ModelPropertyTable property_table(const std::string& data_dir) const {
    return analysis::load_model_properties(properties.empty() ? fs::path(data_dir) / "model_properties.csv" : fs::path(properties));
  }
};

struct CorrelateArgs {
  Common common;
  TableArgs tables;
  std::vector<std::string> predictors{"mmlu_overall", "bbh_overall"};
  std::vector<std::string> scopes{"instruction-tuned"};
  std::string dataset = "average";
  double q = 0.05;
  bool allow_mixed_families = false;
  std::vector<std::string> formats;
};

inline std::vector<analysis::CorrelationLedger> build_ledgers(const CorrelateArgs& a, const std::string& data_dir) {
  for (const auto& p : a.predictors) analysis::check_predictor(p);
  std::vector<analysis::Scope> scopes;
  for (const auto& s : a.scopes) scopes.push_back(analysis::Scope::parse(s));
  const auto scores = a.tables.alignment_table(data_dir);
  const auto props = a.tables.property_table(data_dir);
  std::vector<analysis::CorrelationLedger> ledgers;
  for (const auto& sc : scopes) {
    if (std::find(a.predictors.begin(), a.predictors.end(), "nwp_loss") != a.predictors.end())
      analysis::nwp_correlation(scores, props, sc, a.dataset, a.allow_mixed_families);
    ledgers.push_back(analysis::correlate_properties(scores, props, a.predictors, sc, a.dataset, a.q));
  }
  return ledgers;
}

inline int cmd_correlate(const CorrelateArgs& a, const std::string& data_dir, std::ostream& out) {
  std::vector<analysis::ReportFormat> formats;
  for (const auto& f : a.formats) formats.push_back(analysis::parse_format(f));
  if (!(a.q > 0.0 && a.q < 1.0)) throw ConfigError("--q must be in (0, 1)");
  if (a.common.dry_run) {
    for (const auto& p : a.predictors) analysis::check_predictor(p);
    for (const auto& s : a.scopes) analysis::Scope::parse(s);
    a.tables.alignment_table(data_dir);
    a.tables.property_table(data_dir);
    out << json{{"dry_run", true}, {"predictors", a.predictors}, {"scopes", a.scopes}, {"dataset", a.dataset}}.dump(2) << "\n";
    return 0;
  }
  const auto ledgers = build_ledgers(a, data_dir);
  if (!a.common.out.empty()) {
    if (formats.empty()) formats = {analysis::ReportFormat::markdown, analysis::ReportFormat::json, analysis::ReportFormat::csv};
    for (auto f : formats) analysis::emit_report(ledgers, std::nullopt, f, a.common.out);
  }
  json j{{"ledgers", json::array()}};
  for (const auto& l : ledgers) j["ledgers"].push_back(analysis::to_json(l));
  out << j.dump(2) << "\n";
  return 0;
}

struct GainsArgs {
  Common common;
  TableArgs tables;
  std::string scope = "instruction-tuned";
  std::vector<std::string> datasets;
  std::string average_key = "average";
  bool behavior = false;
  std::string behavioral;
  std::string column = "futrell2018";
  double tolerance = 0.005;
};

inline analysis::GainReport build_gains(const GainsArgs& a, const std::string& data_dir) {
  return analysis::it_gain_report(a.tables.alignment_table(data_dir), a.tables.property_table(data_dir),
                                  analysis::Scope::parse(a.scope), a.datasets, a.average_key);
}

inline int cmd_gains(const GainsArgs& a, const std::string& data_dir, std::ostream& out) {
  const auto scope = analysis::Scope::parse(a.scope);
  if (a.tolerance < 0.0) throw ConfigError("--tolerance must be >= 0");
  if (a.common.dry_run) {
    a.tables.property_table(data_dir);
    out << json{{"dry_run", true}, {"scope", scope.name()}, {"behavior", a.behavior}}.dump(2) << "\n";
    return 0;
  }
  json result;
  if (a.behavior) {
    const auto props = a.tables.property_table(data_dir);
    const auto table = analysis::load_alignment_table(a.behavioral.empty() ? fs::path(data_dir) / "behavioral_alignment.csv"
                                                                           : fs::path(a.behavioral));
    const auto column = table.column(a.column);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& m : analysis::resolve_scope(scope, props, table, a.column)) {
      const auto& p = props.at(m);
      if (p.instruction_tuned && p.vanilla_base) pairs.emplace_back(m, *p.vanilla_base);
    }
    if (pairs.empty()) throw DataError("gains: no instruction-tuned pairs in scope");
    const auto rep = behavior::behav_gain_report(column, pairs, a.tolerance);
    result = behavior::to_json(rep);
    result["not_improved"] = rep.not_improved();
    result["dataset"] = a.column;
    if (!a.common.out.empty()) detail::write_text(fs::path(a.common.out) / "behavior_gains.json", result.dump(2) + "\n");
  } else {
    const auto rep = build_gains(a, data_dir);
    result = analysis::to_json(rep);
    if (!a.common.out.empty()) {
      analysis::emit_report({}, rep, analysis::ReportFormat::csv, a.common.out);
      detail::write_text(fs::path(a.common.out) / "gains.json", result.dump(2) + "\n");
    }
  }
  out << result.dump(2) << "\n";
  return 0;
}

struct CeilingArgs {
  Common common;
  PipelineFlags pipe;
  std::string bundle;
  std::string estimator = "inter_subject";
};

inline int cmd_ceiling(const CeilingArgs& a, std::ostream& out) {
  detail::require(a.bundle, "--bundle");
  const auto est = detail::parse_enum<encoding::CeilingEstimator>(a.estimator, "ceiling estimator");
  if (a.common.threads < 1) throw ConfigError("--threads must be >= 1");
  const auto bundle = load_dataset_bundle(a.bundle);
  auto cfg = a.pipe.build(bundle.meta);
  cfg.threads = a.common.threads;
  if (a.common.dry_run) {
    out << json{{"dry_run", true}, {"config", cfg}, {"estimator", a.estimator}, {"subjects", bundle.meta.subjects().size()}}.dump(2) << "\n";
    return 0;
  }
  const auto c = est == encoding::CeilingEstimator::reference ? encoding::reference_ceiling(bundle.meta.dataset_id)
                                                              : encoding::ceiling_estimate(encoding::view_of(bundle), est, cfg);
  const std::string text = json(c).dump(2) + "\n";
  if (!a.common.out.empty()) detail::write_text(fs::path(a.common.out) / "ceiling.json", text);
  out << text;
  return 0;
}

struct SynthArgs {
  Common common;
  std::string kind = "brain";
  std::string preset = "wehbe";
  std::uint64_t seed = 0;
  std::map<std::string, std::string> values;  // numeric overrides, as given
  synthbench::BehaviorSynthConfig behavior;
};

inline synthbench::SynthConfig build_synth_config(const SynthArgs& a) {
  synthbench::SynthConfig c;
  if (a.preset == "wehbe") c = synthbench::SynthConfig::wehbe_shaped();
  else if (a.preset == "blank") c = synthbench::SynthConfig::blank_shaped();
  else if (a.preset == "pereira") c = synthbench::SynthConfig::pereira_shaped();
  else if (a.preset != "custom") throw ConfigError("unknown synth preset '" + a.preset + "'");
  json j = json::object();
  for (const auto& [k, v] : a.values) {
    if (k == "dataset_id" || k == "granularity") {
      j[k] = v;
    } else if (k == "shared_weights") {
      j[k] = v == "true" || v == "1";
    } else {
      try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        if (k == "sigma" || k == "tr_s" || k == "nuisance_scale") j[k] = d;
        else if (k == "lag") j[k] = static_cast<int>(d);
        else {
          if (d < 0 || d != std::floor(d)) throw std::invalid_argument(v);
          j[k] = static_cast<std::size_t>(d);
        }
      } catch (const std::exception&) {
        throw ConfigError("invalid value '" + v + "' for --" + k);
      }
    }
  }
  if (j.contains("granularity")) {
    const auto g = detail::parse_enum<RowSemantics>(j["granularity"].get<std::string>(), "granularity");
    j["granularity"] = g;
  }
  synthbench::merge_json(c, j);
  c.validate();
  return c;
}

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  detail::require(a.common.out, "--out");
  const fs::path dir = a.common.out;
  if (a.kind == "behavior") {
    a.behavior.validate();
    if (a.common.dry_run) {
      out << json{{"dry_run", true}, {"kind", "behavior"}, {"words", a.behavior.words}}.dump(2) << "\n";
      return 0;
    }
    const auto data = synthbench::gen_behavior(a.behavior, a.seed);
    behavior::write_reading_times(data.rts, dir / "rts");
    behavior::write_track(data.track, dir / "surprisal");
    const json truth{{"seed", a.seed}, {"intercept", a.behavior.intercept}, {"slope", a.behavior.slope},
                     {"sigma", a.behavior.sigma}, {"missing", a.behavior.missing}};
    brainalign::detail::write_json_file(dir / "truth.json", truth);
    out << json{{"out", dir.string()}, {"kind", "behavior"}, {"truth", truth}}.dump(2) << "\n";
    return 0;
  }
  if (a.kind != "brain") throw ConfigError("unknown synth kind '" + a.kind + "'");
  const auto cfg = build_synth_config(a);
  if (a.common.dry_run) {
    out << json{{"dry_run", true}, {"config", cfg}, {"attainable_r", synthbench::attainable_r(cfg)}}.dump(2) << "\n";
    return 0;
  }
  const auto data = synthbench::gen_synthetic(cfg, a.seed);
  synthbench::write_synthetic(data, dir);
  out << json{{"out", dir.string()}, {"kind", "brain"}, {"rows", data.responses.rows()}, {"cols", data.responses.cols()},
              {"layers", data.layers.size()}, {"attainable_r", data.truth.attainable_r}}
             .dump(2)
      << "\n";
  return 0;
}

struct ReportArgs {
  Common common;
  CorrelateArgs correlate;
  GainsArgs gains;
  std::string input;
  bool no_gains = false;
};

inline int cmd_report(ReportArgs a, const std::string& data_dir, std::ostream& out) {
  detail::require(a.common.out, "--out");
  std::vector<analysis::ReportFormat> formats;
  for (const auto& f : a.correlate.formats) formats.push_back(analysis::parse_format(f));
  if (formats.empty()) formats = {analysis::ReportFormat::markdown, analysis::ReportFormat::json, analysis::ReportFormat::csv};

  std::vector<analysis::CorrelationLedger> ledgers;
  std::optional<analysis::GainReport> gains;
  if (!a.input.empty()) {
    const json j = brainalign::detail::read_json_file(a.input);
    try {
      for (const auto& l : j.at("ledgers")) ledgers.push_back(analysis::ledger_from_json(l));
      if (j.contains("gains") && !j["gains"].is_null()) gains = analysis::gain_report_from_json(j["gains"]);
    } catch (const json::exception& e) {
      throw DataError("report input " + a.input + ": " + e.what());
    }
  } else {
    a.gains.tables = a.correlate.tables;
    if (a.common.dry_run) return cmd_correlate(a.correlate, data_dir, out);
    ledgers = build_ledgers(a.correlate, data_dir);
    if (!a.no_gains) gains = build_gains(a.gains, data_dir);
  }
  if (a.common.dry_run) {
    out << json{{"dry_run", true}, {"ledgers", ledgers.size()}, {"gains", gains.has_value()}}.dump(2) << "\n";
    return 0;
  }
  json files = json::array();
  for (auto f : formats)
    for (const auto& p : analysis::emit_report(ledgers, gains, f, a.common.out)) files.push_back(p.string());
  out << json{{"files", files}}.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Brain and behavioral alignment of language-model representations"};
  app.name("brainalign");
  app.require_subcommand(1);
  std::string data_dir = BRAINALIGN_DATA_DIR;
  app.add_option("--data-dir", data_dir, "Directory holding the bundled reference tables");

  BrainAlignArgs brain;
  auto* s_brain = app.add_subcommand("brain-align", "Score layer features against a response bundle");
  brain.common.add_to(*s_brain);
  brain.pipe.add_to(*s_brain);
  s_brain->add_option("--bundle", brain.bundle, "Dataset bundle directory");
  s_brain->add_option("--features", brain.features, "Directory of per-layer feature matrices");
  s_brain->add_option("--model", brain.model, "Model name recorded in the score");
  s_brain->add_option("--metric", brain.metric, "linear, cka or rsa");
  s_brain->add_option("--ceiling", brain.ceiling, "none, inter_subject, split_half or reference");

  BehavAlignArgs behav;
  auto* s_behav = app.add_subcommand("behav-align", "Correlate word surprisal with reading times");
  behav.common.add_to(*s_behav, false);
  s_behav->add_option("--rts", behav.rts, "Reading-time bundle directory");
  s_behav->add_option("--surprisal", behav.surprisal, "Token surprisal track (file stem)");
  s_behav->add_option("--model", behav.model, "Model name recorded in the score");
  s_behav->add_option("--dataset", behav.dataset, "Dataset name recorded in the score");
  s_behav->add_flag("--include-first-word", behav.include_first_word, "Keep the first word of each story");
  s_behav->add_flag("--per-participant", behav.per_participant, "Also report one correlation per participant");
  s_behav->add_option("--aggregation", behav.aggregation, "mean or median over participants");

  CorrelateArgs corr;
  auto* s_corr = app.add_subcommand("correlate", "Correlate alignment with model properties");
  corr.common.add_to(*s_corr, false);
  corr.tables.add_to(*s_corr);
  s_corr->add_option("--predictors", corr.predictors, "Predictor columns")->delimiter(',');
  s_corr->add_option("--scope", corr.scopes, "instruction-tuned, all-models, family:<f> or models:a,b (repeatable)");
  s_corr->add_option("--dataset", corr.dataset, "Alignment column to correlate");
  s_corr->add_option("--q", corr.q, "FDR level");
  s_corr->add_flag("--allow-mixed-families", corr.allow_mixed_families, "Pool NWP loss across model families");
  s_corr->add_option("--format", corr.formats, "markdown, json or csv (repeatable)");

  GainsArgs gains;
  auto* s_gains = app.add_subcommand("gains", "Instruction-tuning gains over vanilla bases");
  gains.common.add_to(*s_gains, false);
  gains.tables.add_to(*s_gains);
  s_gains->add_option("--scope", gains.scope, "Model scope");
  s_gains->add_option("--datasets", gains.datasets, "Per-dataset columns (default: all but the average)")->delimiter(',');
  s_gains->add_option("--average-key", gains.average_key, "Cross-dataset average column");
  s_gains->add_flag("--behavior", gains.behavior, "Compare behavioral alignment instead");
  s_gains->add_option("--behavioral", gains.behavioral, "Behavioral alignment CSV");
  s_gains->add_option("--column", gains.column, "Behavioral column");
  s_gains->add_option("--tolerance", gains.tolerance, "Behavioral |delta| treated as unchanged");

  CeilingArgs ceil;
  auto* s_ceil = app.add_subcommand("ceiling", "Estimate a dataset noise ceiling");
  ceil.common.add_to(*s_ceil);
  ceil.pipe.add_to(*s_ceil);
  s_ceil->add_option("--bundle", ceil.bundle, "Dataset bundle directory");
  s_ceil->add_option("--estimator", ceil.estimator, "inter_subject, split_half or reference");

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a planted synthetic bundle");
  synth.common.add_to(*s_synth, false);
  s_synth->add_option("--kind", synth.kind, "brain or behavior");
  s_synth->add_option("--preset", synth.preset, "wehbe, blank, pereira or custom");
  s_synth->add_option("--seed", synth.seed, "RNG seed");
  for (const char* name : {"dataset_id", "granularity", "words", "trs", "sentences", "sentences_per_passage", "k", "nuisance",
                           "nuisance_scale", "units", "subjects", "runs", "lag", "tr_s", "layers", "signal_layer", "shared_weights"}) {
    std::string flag = std::string("--") + name;
    std::replace(flag.begin(), flag.end(), '_', '-');
    s_synth->add_option_function<std::string>(flag, [&synth, key = std::string(name)](const std::string& v) { synth.values[key] = v; },
                                              "Override synthetic " + std::string(name));
  }
  s_synth->add_option_function<double>("--sigma", [&synth](double v) {
    synth.values["sigma"] = analysis::detail::fmt("%.17g", v);
    synth.behavior.sigma = v;
  }, "Noise sd (relative for brain data, ms for behavior)");
  s_synth->add_option("--participants", synth.behavior.participants, "Behavior: participant count");
  s_synth->add_option("--stories", synth.behavior.stories, "Behavior: story count");
  s_synth->add_option("--behavior-words", synth.behavior.words, "Behavior: word count");
  s_synth->add_option("--slope", synth.behavior.slope, "Behavior: ms per nat");
  s_synth->add_option("--intercept", synth.behavior.intercept, "Behavior: baseline ms");
  s_synth->add_option("--missing", synth.behavior.missing, "Behavior: missing-reading fraction");

  ReportArgs report;
  auto* s_report = app.add_subcommand("report", "Render ledgers and gains as markdown, JSON and CSV plot data");
  report.common.add_to(*s_report, false);
  report.correlate.tables.add_to(*s_report);
  s_report->add_option("--input", report.input, "report.json to re-render instead of recomputing");
  s_report->add_option("--predictors", report.correlate.predictors, "Predictor columns")->delimiter(',');
  s_report->add_option("--scope", report.correlate.scopes, "Model scope (repeatable)");
  s_report->add_option("--dataset", report.correlate.dataset, "Alignment column to correlate");
  s_report->add_option("--format", report.correlate.formats, "markdown, json or csv (repeatable)");
  s_report->add_flag("--no-gains", report.no_gains, "Skip the instruction-tuning gain section");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    detail::diagnostic(err, "config_error", 2, e.what());
    return 2;
  }

  try {
    const std::pair<CLI::App*, std::string> sources[] = {
        {s_brain, brain.common.config}, {s_behav, behav.common.config}, {s_corr, corr.common.config},
        {s_gains, gains.common.config}, {s_ceil, ceil.common.config}, {s_synth, synth.common.config},
        {s_report, report.common.config}};
    for (const auto& [sub, path] : sources)
      if (sub->parsed()) detail::apply_config(*sub, path);

    if (s_brain->parsed()) return cmd_brain_align(brain, out);
    if (s_behav->parsed()) return cmd_behav_align(behav, out);
    if (s_corr->parsed()) return cmd_correlate(corr, data_dir, out);
    if (s_gains->parsed()) return cmd_gains(gains, data_dir, out);
    if (s_ceil->parsed()) return cmd_ceiling(ceil, out);
    if (s_synth->parsed()) return cmd_synth(synth, out);
    if (s_report->parsed()) {
      report.gains.scope = report.correlate.scopes.empty() ? "instruction-tuned" : report.correlate.scopes.front();
      return cmd_report(report, data_dir, out);
    }
  } catch (const Error& e) {
    detail::diagnostic(err, e.kind(), e.exit_code(), e.what());
    return e.exit_code();
  } catch (const CLI::Error& e) {
    detail::diagnostic(err, "config_error", 2, e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    detail::diagnostic(err, "data_error", 3, e.what());
    return 3;
  } catch (const std::exception& e) {
    detail::diagnostic(err, "internal_error", 1, e.what());
    return 1;
  }
  return 0;
}

}  // namespace brainalign::cli
