#pragma once

// Cross-validated encoding models: features -> (PCA) -> TR downsampling ->
// lagged design -> ridge with inner lambda selection -> held-out predictions,
// scored per unit by Pearson r and aggregated per subject. Also the layer
// sweep, noise ceilings and ceiling normalization.

#include "brainalign/common.hpp"
#include "brainalign/numstats.hpp"
#include "brainalign/temporal.hpp"
#include "brainalign/tensor_io.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace brainalign::encoding {

enum class Aggregation { mean, median };
NLOHMANN_JSON_SERIALIZE_ENUM(Aggregation, {{Aggregation::mean, "mean"}, {Aggregation::median, "median"}})

struct PipelineConfig {
  std::string dataset = "custom";
  std::optional<int> pca_k = 10;
  std::optional<temporal::LagConfig> lag = temporal::LagConfig{};
  temporal::GroupKey fold_key = temporal::GroupKey::run;
  int n_folds = 0;  // 0: one fold per group
  int trim = 10;
  std::vector<double> lambda_grid = numstats::default_lambda_grid();
  int inner_folds = 3;
  Aggregation aggregation = Aggregation::mean;
  temporal::EmptyTrPolicy empty_tr = temporal::EmptyTrPolicy::carry_forward;
  int threads = 1;

  static PipelineConfig wehbe2014() {
    PipelineConfig c;
    c.dataset = "wehbe2014";
    return c;
  }

  static PipelineConfig blank2014() {
    PipelineConfig c;
    c.dataset = "blank2014";
    c.fold_key = temporal::GroupKey::story;
    c.trim = 0;
    return c;
  }

  static PipelineConfig pereira2018() {
    PipelineConfig c;
    c.dataset = "pereira2018";
    c.pca_k.reset();
    c.lag.reset();
    c.fold_key = temporal::GroupKey::passage;
    c.n_folds = 5;
    c.trim = 0;
    return c;
  }

  static PipelineConfig for_dataset(const std::string& name) {
    if (name == "wehbe2014") return wehbe2014();
    if (name == "blank2014") return blank2014();
    if (name == "pereira2018" || name == "pereira2018_exp2" || name == "pereira2018_exp3") {
      auto c = pereira2018();
      c.dataset = name;
      return c;
    }
    if (name == "custom") return PipelineConfig{};
    throw ConfigError("unknown dataset preset '" + name + "'");
  }

  /// Default for a dataset of this granularity when no preset is named.
  static PipelineConfig for_granularity(RowSemantics g) {
    if (g == RowSemantics::tr) return PipelineConfig{};
    auto c = pereira2018();
    c.dataset = "custom";
    return c;
  }

  void validate() const {
    if (pca_k && *pca_k < 1) throw ConfigError("pca must be >= 1");
    if (lag && lag->n_delays < 1) throw ConfigError("lags must be >= 1");
    if (trim < 0) throw ConfigError("trim must be >= 0");
    if (n_folds < 0 || n_folds == 1) throw ConfigError("n_folds must be 0 (one per group) or >= 2");
    if (lambda_grid.empty()) throw ConfigError("lambda grid is empty");
    for (double l : lambda_grid)
      if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda grid values must be finite and >= 0");
    if (inner_folds < 2) throw ConfigError("inner_folds must be >= 2");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

inline void to_json(json& j, const PipelineConfig& c) {
  j = json{{"dataset", c.dataset},
           {"pca", c.pca_k ? json(*c.pca_k) : json(nullptr)},
           {"lags", c.lag ? json(c.lag->n_delays) : json(nullptr)},
           {"pad_policy", c.lag ? c.lag->pad_policy : temporal::PadPolicy::zero_pad},
           {"folds", c.fold_key},
           {"n_folds", c.n_folds},
           {"trim", c.trim},
           {"lambda_grid", c.lambda_grid},
           {"inner_folds", c.inner_folds},
           {"aggregation", c.aggregation},
           {"empty_tr", c.empty_tr}};
}

namespace detail {

/// Enum from its JSON string; unknown strings are a ConfigError rather than
/// the serializer's silent fallback to the first enumerator.
template <class E>
E checked_enum(const json& j, const char* key) {
  const E e = j.get<E>();
  if (json(e) != j) throw ConfigError(std::string("pipeline config: invalid value ") + j.dump() + " for '" + key + "'");
  return e;
}

}  // namespace detail

/// Applies keys present in `j` on top of `c`.
inline void merge_json(PipelineConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
  try {
    if (j.contains("pca")) {
      if (j["pca"].is_null()) c.pca_k.reset(); else c.pca_k = j["pca"].get<int>();
    }
    if (j.contains("lags")) {
      if (j["lags"].is_null()) {
        c.lag.reset();
      } else {
        if (!c.lag) c.lag = temporal::LagConfig{};
        c.lag->n_delays = j["lags"].get<int>();
      }
    }
    if (j.contains("pad_policy") && c.lag) c.lag->pad_policy = detail::checked_enum<temporal::PadPolicy>(j["pad_policy"], "pad_policy");
    if (j.contains("folds")) c.fold_key = detail::checked_enum<temporal::GroupKey>(j["folds"], "folds");
    if (j.contains("n_folds")) c.n_folds = j["n_folds"].get<int>();
    if (j.contains("trim")) c.trim = j["trim"].get<int>();
    if (j.contains("lambda_grid")) c.lambda_grid = j["lambda_grid"].get<std::vector<double>>();
    if (j.contains("inner_folds")) c.inner_folds = j["inner_folds"].get<int>();
    if (j.contains("aggregation")) c.aggregation = detail::checked_enum<Aggregation>(j["aggregation"], "aggregation");
    if (j.contains("empty_tr")) c.empty_tr = detail::checked_enum<temporal::EmptyTrPolicy>(j["empty_tr"], "empty_tr");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dataset view: responses plus the row labels the pipeline needs.

struct DatasetView {
  Matrix responses;
  ResponseMeta meta;
  StimulusTimeline timeline;

  RowSemantics granularity() const { return meta.granularity; }
  Eigen::Index rows() const { return responses.rows(); }

  /// Run label per response row; empty when rows carry no run structure.
  std::vector<int> runs() const {
    switch (meta.granularity) {
      case RowSemantics::tr: return timeline.tr_runs();
      case RowSemantics::word: {
        std::vector<int> r;
        for (const auto& w : timeline.words) r.push_back(w.run_id);
        return r;
      }
      case RowSemantics::sentence: return {};
    }
    return {};
  }

  std::vector<int> groups(temporal::GroupKey key) const {
    if (meta.granularity == RowSemantics::sentence) {
      if (timeline.sentences.empty()) throw DataError("sentence-granularity data needs sentence groups in the timeline");
      return timeline.sentence_passages();
    }
    if (key == temporal::GroupKey::passage) throw ConfigError("passage folds need sentence-granularity data");
    auto r = runs();
    if (r.empty()) throw DataError("no run labels for fold grouping");
    return r;
  }
};

inline DatasetView view_of(const DatasetBundle& b) {
  return DatasetView{b.responses.values, b.meta, b.timeline};
}

// ---------------------------------------------------------------------------
// Cross-validated prediction

struct CvPrediction {
  Matrix predicted;           // NaN on rows that were never scored
  RowMask scored;             // rows predicted by a held-out model
  temporal::FoldPlan plan;
  std::vector<Vector> lambdas;  // selected lambda per fold and response column
  std::vector<std::string> warnings;
};

/// Held-out predictions for every unmasked row. PCA and lambda selection are
/// fit on the training folds only. Features are either one row per response
/// row, or (for TR data) one row per timeline word, downsampled per fold.
inline CvPrediction fit_predict_cv(const Matrix& features, const DatasetView& data, const PipelineConfig& cfg) {
  cfg.validate();
  if (!features.allFinite()) throw DataError("fit_predict_cv: non-finite features");
  if (!data.responses.allFinite()) throw DataError("fit_predict_cv: non-finite responses");
  if (static_cast<std::size_t>(data.responses.cols()) != data.meta.units.size())
    throw DataError("fit_predict_cv: responses and meta disagree on unit count");

  const auto n_rows = static_cast<std::size_t>(data.rows());
  const bool word_level = data.granularity() == RowSemantics::tr && !data.timeline.words.empty() &&
                          static_cast<std::size_t>(features.rows()) == data.timeline.words.size() &&
                          static_cast<std::size_t>(features.rows()) != n_rows;
  if (!word_level && static_cast<std::size_t>(features.rows()) != n_rows)
    throw DataError("fit_predict_cv: " + std::to_string(features.rows()) + " feature rows do not match " +
                    std::to_string(n_rows) + " response rows or the timeline word count");

  CvPrediction out;
  const auto runs = data.runs();
  out.plan = temporal::make_fold_plan(data.groups(cfg.fold_key), cfg.fold_key, cfg.n_folds, cfg.trim);

  RowMask keep(n_rows, true);
  if (!runs.empty() && cfg.trim > 0) {
    auto trimmed = temporal::trim_run_edges(out.plan, runs);
    keep = std::move(trimmed.keep);
    out.warnings = std::move(trimmed.warnings);
  }
  if (cfg.lag && cfg.lag->pad_policy == temporal::PadPolicy::drop) {
    const auto starts = temporal::detail::run_starts(runs, n_rows);
    for (std::size_t t = 0; t < n_rows; ++t)
      if (t < starts[t] + static_cast<std::size_t>(cfg.lag->n_delays)) keep[t] = false;
  }

  std::vector<std::size_t> word_tr;
  if (word_level) word_tr = temporal::assign_words_to_trs(data.timeline);

  const int folds = out.plan.n_folds();
  out.predicted = Matrix::Constant(data.responses.rows(), data.responses.cols(), std::numeric_limits<double>::quiet_NaN());
  out.scored.assign(n_rows, false);
  out.lambdas.assign(static_cast<std::size_t>(folds), Vector());
  std::vector<std::vector<Eigen::Index>> test_rows(static_cast<std::size_t>(folds));
  std::vector<Matrix> fold_pred(static_cast<std::size_t>(folds));

  brainalign::detail::parallel_for(static_cast<std::size_t>(folds), cfg.threads, [&](std::size_t fi) {
    const int f = static_cast<int>(fi);
    std::vector<Eigen::Index> train, test;
    for (std::size_t r = 0; r < n_rows; ++r) {
      if (!keep[r]) continue;
      (out.plan.fold_of_row[r] == f ? test : train).push_back(static_cast<Eigen::Index>(r));
    }
    if (train.size() < 2) throw DataError("fit_predict_cv: fold " + std::to_string(f) + " has no training rows");
    if (test.empty()) return;

    Matrix x = features;
    if (cfg.pca_k) {
      std::vector<Eigen::Index> fit_rows;
      if (word_level) {
        for (std::size_t w = 0; w < word_tr.size(); ++w)
          if (out.plan.fold_of_row[word_tr[w]] != f) fit_rows.push_back(static_cast<Eigen::Index>(w));
      } else {
        fit_rows = train;
      }
      const auto pca = numstats::pca_fit(brainalign::detail::select_rows(features, fit_rows), *cfg.pca_k);
      x = numstats::pca_transform(pca, features);
    }
    if (word_level) x = temporal::words_to_trs(x, data.timeline, cfg.empty_tr);
    if (cfg.lag) {
      auto lag = *cfg.lag;
      lag.pad_policy = temporal::PadPolicy::zero_pad;  // dropped rows are already masked
      x = temporal::lag_concat(x, lag, runs).design;
    }

    const Matrix x_train = brainalign::detail::select_rows(x, train);
    const Matrix y_train = brainalign::detail::select_rows(data.responses, train);
    const Vector lambdas = numstats::ridge_select_lambda(x_train, y_train, cfg.lambda_grid, cfg.inner_folds);
    const auto model = numstats::RidgeSolver(x_train, y_train).fit(lambdas);
    fold_pred[fi] = model.predict(brainalign::detail::select_rows(x, test));
    out.lambdas[fi] = lambdas;
    test_rows[fi] = std::move(test);
  });

  for (std::size_t f = 0; f < test_rows.size(); ++f) {
    for (std::size_t i = 0; i < test_rows[f].size(); ++i) {
      out.predicted.row(test_rows[f][i]) = fold_pred[f].row(static_cast<Eigen::Index>(i));
      out.scored[static_cast<std::size_t>(test_rows[f][i])] = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scores

struct AlignmentScore {
  std::string model;
  int layer = -1;
  std::string dataset;
  std::string metric = "linear";
  std::vector<double> per_unit_r;
  std::vector<bool> degenerate;
  std::vector<std::string> subjects;
  std::vector<double> per_subject;
  double overall = 0.0;
  std::optional<double> normalized;
  double mad = 0.0;
};

inline void to_json(json& j, const AlignmentScore& s) {
  json subjects = json::array();
  for (std::size_t i = 0; i < s.per_subject.size(); ++i)
    subjects.push_back({{"subject", i < s.subjects.size() ? s.subjects[i] : std::to_string(i)}, {"score", s.per_subject[i]}});
  j = json{{"model", s.model},
           {"layer", s.layer},
           {"dataset", s.dataset},
           {"metric", s.metric},
           {"overall", s.overall},
           {"normalized", s.normalized ? json(*s.normalized) : json(nullptr)},
           {"per_subject", subjects},
           {"mad", s.mad}};
}

inline void from_json(const json& j, AlignmentScore& s) {
  s.model = j.value("model", std::string{});
  s.layer = j.value("layer", -1);
  s.dataset = j.value("dataset", std::string{});
  s.metric = j.value("metric", std::string("linear"));
  s.overall = j.at("overall").get<double>();
  if (j.contains("normalized") && !j["normalized"].is_null()) s.normalized = j["normalized"].get<double>();
  s.mad = j.value("mad", 0.0);
  s.subjects.clear();
  s.per_subject.clear();
  for (const auto& e : j.value("per_subject", json::array())) {
    s.subjects.push_back(e.at("subject").get<std::string>());
    s.per_subject.push_back(e.at("score").get<double>());
  }
}

/// Fills per_subject, overall and mad from per_unit_r.
inline void aggregate_scores(AlignmentScore& score, const ResponseMeta& meta, Aggregation agg = Aggregation::mean) {
  if (score.per_unit_r.size() != meta.units.size()) throw DataError("aggregate: unit count mismatch");
  score.subjects = meta.subjects();
  if (score.subjects.empty()) throw DataError("aggregate: no units");
  const auto idx = meta.subject_index();
  std::vector<std::vector<double>> by_subject(score.subjects.size());
  for (std::size_t u = 0; u < idx.size(); ++u) by_subject[idx[u]].push_back(score.per_unit_r[u]);
  auto reduce = [agg](const std::vector<double>& v) {
    if (agg == Aggregation::median) return numstats::median(v);
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  score.per_subject.clear();
  for (const auto& v : by_subject) score.per_subject.push_back(reduce(v));
  score.overall = reduce(score.per_subject);
  score.mad = numstats::median_abs_dev(score.per_subject);
}

/// Per-unit Pearson r between predicted and actual over the scored rows.
inline AlignmentScore score_alignment(const Matrix& predicted, const Matrix& actual, const ResponseMeta& meta,
                                      const RowMask& scored = {}, Aggregation agg = Aggregation::mean) {
  if (predicted.rows() != actual.rows() || predicted.cols() != actual.cols())
    throw DataError("score_alignment: predicted and actual shapes differ");
  if (static_cast<std::size_t>(actual.cols()) != meta.units.size())
    throw DataError("score_alignment: meta does not match response columns");
  if (!scored.empty() && scored.size() != static_cast<std::size_t>(actual.rows()))
    throw DataError("score_alignment: row mask length mismatch");
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < actual.rows(); ++r)
    if (scored.empty() || scored[static_cast<std::size_t>(r)]) rows.push_back(r);
  if (rows.empty()) throw DataError("score_alignment: all rows masked");

  const Matrix p = brainalign::detail::select_rows(predicted, rows);
  const Matrix a = brainalign::detail::select_rows(actual, rows);
  AlignmentScore score;
  score.dataset = meta.dataset_id;
  score.per_unit_r.resize(static_cast<std::size_t>(a.cols()));
  score.degenerate.resize(static_cast<std::size_t>(a.cols()));
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const auto res = numstats::pearson(Vector(p.col(c)), Vector(a.col(c)));
    score.per_unit_r[static_cast<std::size_t>(c)] = res.r;
    score.degenerate[static_cast<std::size_t>(c)] = res.degenerate;
  }
  aggregate_scores(score, meta, agg);
  return score;
}

inline AlignmentScore score_layer(const Matrix& features, const DatasetView& data, const PipelineConfig& cfg) {
  const auto cv = fit_predict_cv(features, data, cfg);
  auto s = score_alignment(cv.predicted, data.responses, data.meta, cv.scored, cfg.aggregation);
  s.dataset = data.meta.dataset_id.empty() ? cfg.dataset : data.meta.dataset_id;
  return s;
}

struct LayerSweep {
  AlignmentScore best;
  std::size_t best_layer = 0;
  std::vector<double> curve;
  std::vector<AlignmentScore> per_layer;
};

/// Scores every layer and keeps the highest overall; ties go to the
/// shallower layer.
inline LayerSweep layer_sweep(const std::vector<Matrix>& layers, const DatasetView& data, PipelineConfig cfg) {
  if (layers.empty()) throw DataError("layer_sweep: empty layer list");
  LayerSweep out;
  out.per_layer.resize(layers.size());
  const int outer = cfg.threads;
  // Parallelism goes to layers; each layer's folds run serially.
  cfg.threads = 1;
  brainalign::detail::parallel_for(layers.size(), outer, [&](std::size_t l) {
    out.per_layer[l] = score_layer(layers[l], data, cfg);
    out.per_layer[l].layer = static_cast<int>(l);
  });
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.curve.push_back(out.per_layer[l].overall);
    if (out.per_layer[l].overall > out.per_layer[out.best_layer].overall) out.best_layer = l;
  }
  out.best = out.per_layer[out.best_layer];
  return out;
}

/// Averages separately scored experiments (e.g. the two Pereira experiments).
inline AlignmentScore combine_experiments(const std::vector<AlignmentScore>& parts, const std::string& dataset) {
  if (parts.empty()) throw DataError("combine_experiments: nothing to combine");
  AlignmentScore out;
  out.dataset = dataset;
  out.model = parts.front().model;
  out.layer = parts.front().layer;
  out.metric = parts.front().metric;
  double sum = 0.0;
  for (const auto& p : parts) {
    sum += p.overall;
    out.per_subject.insert(out.per_subject.end(), p.per_subject.begin(), p.per_subject.end());
    for (const auto& s : p.subjects) out.subjects.push_back(p.dataset + ":" + s);
  }
  out.overall = sum / static_cast<double>(parts.size());
  out.mad = numstats::median_abs_dev(out.per_subject);
  return out;
}

// ---------------------------------------------------------------------------
// Noise ceilings

enum class CeilingEstimator { inter_subject, split_half, reference };
NLOHMANN_JSON_SERIALIZE_ENUM(CeilingEstimator, {{CeilingEstimator::inter_subject, "inter_subject"},
                                                {CeilingEstimator::split_half, "split_half"},
                                                {CeilingEstimator::reference, "reference"}})

struct CeilingEstimate {
  std::string dataset_id;
  double ceiling = 0.0;
  std::string estimator;
  std::vector<std::string> subjects;
  std::vector<double> per_subject;
};

inline void to_json(json& j, const CeilingEstimate& c) {
  j = json{{"dataset", c.dataset_id}, {"ceiling", c.ceiling}, {"estimator", c.estimator},
           {"subjects", c.subjects}, {"per_subject", c.per_subject}};
}

/// Published ceilings for the bundled datasets.
inline CeilingEstimate reference_ceiling(const std::string& dataset) {
  static const std::map<std::string, double> table{
      {"pereira2018", 0.359}, {"blank2014", 0.210}, {"wehbe2014", 0.104}, {"futrell2018", 0.858}};
  auto it = table.find(dataset);
  if (it == table.end()) throw ConfigError("no reference ceiling for dataset '" + dataset + "'");
  return CeilingEstimate{dataset, it->second, "reference", {}, {}};
}

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace detail

/// inter_subject: each subject is predicted from the other subjects'
/// responses with the same fold plan (no PCA, no lags); the ceiling is the
/// mean over subjects. split_half: runs are treated as repeated
/// presentations; odd and even runs are averaged, correlated per unit and
/// Spearman-Brown corrected.
inline CeilingEstimate ceiling_estimate(const DatasetView& data, CeilingEstimator estimator, PipelineConfig cfg = {}) {
  CeilingEstimate out;
  out.dataset_id = data.meta.dataset_id;
  out.subjects = data.meta.subjects();
  const auto subj_of_unit = data.meta.subject_index();

  if (estimator == CeilingEstimator::reference) return reference_ceiling(data.meta.dataset_id);

  if (estimator == CeilingEstimator::inter_subject) {
    out.estimator = "inter_subject";
    if (out.subjects.size() < 2) throw DataError("ceiling: inter-subject estimator needs >= 2 subjects");
    cfg.pca_k.reset();
    cfg.lag.reset();
    out.per_subject.resize(out.subjects.size());
    const int outer = cfg.threads;
    cfg.threads = 1;
    brainalign::detail::parallel_for(out.subjects.size(), outer, [&](std::size_t s) {
      std::vector<Eigen::Index> own, others;
      for (std::size_t u = 0; u < subj_of_unit.size(); ++u)
        (subj_of_unit[u] == s ? own : others).push_back(static_cast<Eigen::Index>(u));
      const Matrix x = data.responses(Eigen::all, others);
      DatasetView target{data.responses(Eigen::all, own), {}, data.timeline};
      target.meta.dataset_id = data.meta.dataset_id;
      target.meta.granularity = data.meta.granularity;
      for (auto u : own) target.meta.units.push_back(data.meta.units[static_cast<std::size_t>(u)]);
      const auto cv = fit_predict_cv(x, target, cfg);
      const auto score = score_alignment(cv.predicted, target.responses, target.meta, cv.scored, cfg.aggregation);
      out.per_subject[s] = score.overall;
    });
  } else {
    out.estimator = "split_half";
    const auto runs = data.runs();
    const auto segs = temporal::detail::segments(runs);
    if (segs.size() < 2) throw DataError("ceiling: split-half estimator needs >= 2 runs");
    const std::size_t len = segs.front().second - segs.front().first;
    for (const auto& [b, e] : segs)
      if (e - b != len) throw DataError("ceiling: split-half needs equal-length (repeated) runs");
    Matrix odd = Matrix::Zero(static_cast<Eigen::Index>(len), data.responses.cols());
    Matrix even = odd;
    std::size_t n_odd = 0, n_even = 0;
    for (std::size_t k = 0; k < segs.size(); ++k) {
      const auto block = data.responses.middleRows(static_cast<Eigen::Index>(segs[k].first), static_cast<Eigen::Index>(len));
      if (k % 2 == 0) { even += block; ++n_even; } else { odd += block; ++n_odd; }
    }
    even /= static_cast<double>(n_even);
    odd /= static_cast<double>(n_odd);
    std::vector<std::vector<double>> by_subject(out.subjects.size());
    for (Eigen::Index c = 0; c < data.responses.cols(); ++c) {
      const double r = numstats::pearson(Vector(even.col(c)), Vector(odd.col(c))).r;
      const double sb = r <= -1.0 ? -1.0 : 2.0 * r / (1.0 + r);
      by_subject[subj_of_unit[static_cast<std::size_t>(c)]].push_back(sb);
    }
    for (const auto& v : by_subject) out.per_subject.push_back(detail::mean_of(v));
  }
  out.ceiling = std::min(1.0, detail::mean_of(out.per_subject));
  return out;
}

/// normalized = overall / ceiling. Values above 1 are kept.
inline AlignmentScore normalize_by_ceiling(AlignmentScore score, const CeilingEstimate& ceiling) {
  if (!(ceiling.ceiling > 0.0)) throw NumericalError("normalize_by_ceiling: ceiling must be > 0");
  score.normalized = score.overall / ceiling.ceiling;
  return score;
}

}  // namespace brainalign::encoding
