#pragma once

// Statistics over per-model tables: correlations between alignment and model
// properties with joint FDR adjustment, instruction-tuning gains, and
// report / plot-data emission.

#include "brainalign/common.hpp"
#include "brainalign/encoding.hpp"
#include "brainalign/numstats.hpp"
#include "brainalign/tensor_io.hpp"

#include <boost/tokenizer.hpp>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace brainalign::analysis {

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  using Tok = boost::tokenizer<boost::escaped_list_separator<char>>;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Tok tok(line);
    rows.emplace_back(tok.begin(), tok.end());
  }
  if (rows.empty()) throw DataError("empty CSV " + path.string());
  return rows;
}

inline std::optional<double> parse_optional(const std::string& s, const std::string& where) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("not a number '" + s + "' in " + where);
  }
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model properties

inline const std::vector<std::string>& benchmark_columns() {
  static const std::vector<std::string> cols{
      "mmlu_overall", "mmlu_stem", "mmlu_humanities", "mmlu_social_sciences", "mmlu_others",
      "bbh_overall", "bbh_algorithmic", "bbh_language", "bbh_world_knowledge", "bbh_multilingual", "bbh_others"};
  return cols;
}

struct ModelProperties {
  std::string model;
  std::string family;
  double params = 0.0;
  int layers = 0;
  bool instruction_tuned = false;
  std::optional<std::string> vanilla_base;
  std::optional<double> nwp_loss;
  std::map<std::string, double> benchmarks;
  bool mmlu_near_random = false;
  bool bbh_near_random = false;

  double log10_params() const { return std::log10(params); }
};

class ModelPropertyTable {
public:
  ModelPropertyTable() = default;
  explicit ModelPropertyTable(std::vector<ModelProperties> rows) : rows_(std::move(rows)) { validate(); }

  const std::vector<ModelProperties>& rows() const { return rows_; }

  const ModelProperties* find(const std::string& model) const {
    for (const auto& r : rows_)
      if (r.model == model) return &r;
    return nullptr;
  }

  const ModelProperties& at(const std::string& model) const {
    const auto* r = find(model);
    if (!r) throw DataError("model '" + model + "' not in property table");
    return *r;
  }

  /// (instruction-tuned, vanilla base) for every tuned model with a base.
  std::vector<std::pair<std::string, std::string>> pairs() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& r : rows_)
      if (r.instruction_tuned && r.vanilla_base) out.emplace_back(r.model, *r.vanilla_base);
    return out;
  }

  void validate() const {
    std::set<std::string> names;
    for (const auto& r : rows_) {
      if (!names.insert(r.model).second) throw DataError("property table: duplicate model " + r.model);
      if (!(r.params > 0.0)) throw DataError("property table: parameter count must be > 0 for " + r.model);
      for (const auto& [k, v] : r.benchmarks)
        if (!(v >= 0.0 && v <= 1.0)) throw DataError("property table: " + k + " outside [0,1] for " + r.model);
    }
    for (const auto& r : rows_) {
      std::set<std::string> chain{r.model};
      const ModelProperties* cur = &r;
      while (cur->vanilla_base) {
        const auto* next = find(*cur->vanilla_base);
        if (!next) throw DataError("property table: " + cur->model + " pairs with unknown base " + *cur->vanilla_base);
        if (!chain.insert(next->model).second) throw DataError("property table: pairing cycle through " + r.model);
        cur = next;
      }
    }
  }

private:
  std::vector<ModelProperties> rows_;
};

inline ModelPropertyTable load_model_properties(const fs::path& path) {
  const auto rows = detail::read_csv(path);
  const auto& header = rows.front();
  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  for (const char* req : {"model", "family", "params", "is_instruction_tuned"})
    if (!col(req)) throw DataError("property table: missing column " + std::string(req));

  std::vector<ModelProperties> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto get = [&](const std::string& name) -> std::string {
      const auto c = col(name);
      return c && *c < row.size() ? row[*c] : std::string{};
    };
    const std::string where = path.string() + " row " + std::to_string(r);
    ModelProperties m;
    m.model = get("model");
    m.family = get("family");
    m.params = detail::parse_optional(get("params"), where).value_or(0.0);
    m.layers = static_cast<int>(detail::parse_optional(get("layers"), where).value_or(0.0));
    m.instruction_tuned = get("is_instruction_tuned") == "1" || get("is_instruction_tuned") == "true";
    if (!get("vanilla_base").empty()) m.vanilla_base = get("vanilla_base");
    m.nwp_loss = detail::parse_optional(get("nwp_loss"), where);
    for (const auto& b : benchmark_columns())
      if (auto v = detail::parse_optional(get(b), where)) m.benchmarks[b] = *v;
    m.mmlu_near_random = get("mmlu_near_random") == "1";
    m.bbh_near_random = get("bbh_near_random") == "1";
    out.push_back(std::move(m));
  }
  return ModelPropertyTable(std::move(out));
}

// ---------------------------------------------------------------------------
// Alignment tables: model x dataset overall scores

struct AlignmentTable {
  std::vector<std::string> datasets;
  std::vector<std::string> models;  // file order
  std::map<std::string, std::map<std::string, double>> scores;

  bool has(const std::string& model, const std::string& dataset) const {
    auto it = scores.find(model);
    return it != scores.end() && it->second.count(dataset);
  }

  double get(const std::string& model, const std::string& dataset) const {
    if (!has(model, dataset)) throw DataError("no " + dataset + " score for model '" + model + "'");
    return scores.at(model).at(dataset);
  }

  void set(const std::string& model, const std::string& dataset, double v) {
    if (std::find(models.begin(), models.end(), model) == models.end()) models.push_back(model);
    if (std::find(datasets.begin(), datasets.end(), dataset) == datasets.end()) datasets.push_back(dataset);
    scores[model][dataset] = v;
  }

  std::map<std::string, double> column(const std::string& dataset) const {
    std::map<std::string, double> out;
    for (const auto& m : models)
      if (has(m, dataset)) out[m] = get(m, dataset);
    return out;
  }
};

inline AlignmentTable load_alignment_table(const fs::path& path) {
  const auto rows = detail::read_csv(path);
  const auto& header = rows.front();
  if (header.empty() || header[0] != "model") throw DataError("alignment table: first column must be 'model'");
  AlignmentTable t;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    for (std::size_t c = 1; c < header.size() && c < rows[r].size(); ++c)
      if (auto v = detail::parse_optional(rows[r][c], path.string())) t.set(rows[r][0], header[c], *v);
  }
  t.datasets.assign(header.begin() + 1, header.end());
  return t;
}

inline AlignmentTable alignment_table_from_scores(const std::vector<encoding::AlignmentScore>& scores) {
  AlignmentTable t;
  for (const auto& s : scores) t.set(s.model, s.dataset, s.overall);
  return t;
}

// ---------------------------------------------------------------------------
// Scopes

struct Scope {
  enum class Kind { instruction_tuned, all_models, family, models };
  Kind kind = Kind::instruction_tuned;
  std::string family;
  std::vector<std::string> models;

  /// "instruction-tuned", "all-models", "family:<name>" or "models:a,b,c".
  static Scope parse(const std::string& s) {
    Scope sc;
    if (s == "instruction-tuned") return sc;
    if (s == "all-models") {
      sc.kind = Kind::all_models;
      return sc;
    }
    if (s.rfind("family:", 0) == 0) {
      sc.kind = Kind::family;
      sc.family = s.substr(7);
      return sc;
    }
    if (s.rfind("models:", 0) == 0) {
      sc.kind = Kind::models;
      std::stringstream ss(s.substr(7));
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) sc.models.push_back(item);
      if (sc.models.empty()) throw ConfigError("scope: empty model list");
      return sc;
    }
    throw ConfigError("unknown scope '" + s + "'");
  }

  static Scope of_models(std::vector<std::string> m) {
    Scope sc;
    sc.kind = Kind::models;
    sc.models = std::move(m);
    return sc;
  }

  std::string name() const {
    switch (kind) {
      case Kind::instruction_tuned: return "instruction-tuned";
      case Kind::all_models: return "all-models";
      case Kind::family: return "family:" + family;
      case Kind::models: {
        std::string s = "models:";
        for (std::size_t i = 0; i < models.size(); ++i) s += (i ? "," : "") + models[i];
        return s;
      }
    }
    return "";
  }
};

/// Models in scope that have a score on `dataset`, in alignment-table order.
/// The instruction-tuned scope drops models with near-random MMLU scores.
inline std::vector<std::string> resolve_scope(const Scope& scope, const ModelPropertyTable& props,
                                              const AlignmentTable& scores, const std::string& dataset) {
  std::vector<std::string> out;
  if (scope.kind == Scope::Kind::models) {
    for (const auto& m : scope.models) {
      props.at(m);
      if (!scores.has(m, dataset)) throw DataError("scope: model '" + m + "' has no " + dataset + " alignment score");
      out.push_back(m);
    }
    return out;
  }
  for (const auto& m : scores.models) {
    if (!scores.has(m, dataset)) continue;
    const auto* p = props.find(m);
    if (!p) continue;
    switch (scope.kind) {
      case Scope::Kind::instruction_tuned:
        if (p->instruction_tuned && !p->mmlu_near_random) out.push_back(m);
        break;
      case Scope::Kind::all_models: out.push_back(m); break;
      case Scope::Kind::family:
        if (p->family == scope.family) out.push_back(m);
        break;
      case Scope::Kind::models: break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Predictors

inline const std::map<std::string, std::string>& predictor_display_names() {
  static const std::map<std::string, std::string> names{
      {"mmlu_overall", "MMLU, Overall Score"},
      {"mmlu_stem", "MMLU, STEM"},
      {"mmlu_humanities", "MMLU, Humanities"},
      {"mmlu_social_sciences", "MMLU, Social Sciences"},
      {"mmlu_others", "MMLU, Others"},
      {"bbh_overall", "BBH, Overall score"},
      {"bbh_algorithmic", "BBH, Algorithmic reasoning"},
      {"bbh_language", "BBH, Language understanding"},
      {"bbh_world_knowledge", "BBH, World knowledge"},
      {"bbh_multilingual", "BBH, Multilingual reasoning"},
      {"bbh_others", "BBH, Others"},
      {"log10_params", "Model size (log10 parameters)"},
      {"nwp_loss", "Next-word prediction loss"},
      {"alignment", "Brain alignment"}};
  return names;
}

inline void check_predictor(const std::string& name) {
  if (!predictor_display_names().count(name)) throw ConfigError("unknown predictor '" + name + "'");
}

inline std::optional<double> predictor_value(const ModelProperties& p, const std::string& name, double alignment) {
  check_predictor(name);
  if (name == "alignment") return alignment;
  if (name == "log10_params") return p.log10_params();
  if (name == "nwp_loss") return p.nwp_loss;
  auto it = p.benchmarks.find(name);
  if (it == p.benchmarks.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Ledger

struct ScatterPoint {
  std::string model;
  double x = 0.0;  // predictor
  double y = 0.0;  // alignment
};

struct LedgerRow {
  std::string predictor;
  std::string display;
  numstats::CorrelationResult result;
  std::string scope;
  std::string dataset;
  std::vector<ScatterPoint> points;
  bool significant = false;
};

struct CorrelationLedger {
  std::string dataset;
  std::string scope;
  double q = 0.05;
  std::vector<LedgerRow> rows;
};

inline LedgerRow correlate_one(const AlignmentTable& scores, const ModelPropertyTable& props, const std::string& predictor,
                               const std::vector<std::string>& models, const std::string& dataset, const std::string& scope_name) {
  check_predictor(predictor);
  if (models.size() < 4) throw DataError("correlation needs >= 4 models in scope (have " + std::to_string(models.size()) + ")");
  LedgerRow row;
  row.predictor = predictor;
  row.display = predictor_display_names().at(predictor);
  row.scope = scope_name;
  row.dataset = dataset;
  std::vector<double> x, y;
  for (const auto& m : models) {
    const double a = scores.get(m, dataset);
    const auto v = predictor_value(props.at(m), predictor, a);
    if (!v) throw DataError("missing predictor value '" + predictor + "' for model '" + m + "'");
    x.push_back(*v);
    y.push_back(a);
    row.points.push_back({m, *v, a});
  }
  row.result = numstats::pearson(x, y);
  return row;
}

/// One Pearson row per predictor over the scoped models, p-values adjusted
/// jointly across the ledger.
inline CorrelationLedger correlate_properties(const AlignmentTable& scores, const ModelPropertyTable& props,
                                              const std::vector<std::string>& predictors, const Scope& scope = {},
                                              const std::string& dataset = "average", double q = 0.05) {
  if (predictors.empty()) throw ConfigError("correlate_properties: no predictors");
  for (const auto& p : predictors) check_predictor(p);
  CorrelationLedger ledger;
  ledger.dataset = dataset;
  ledger.scope = scope.name();
  ledger.q = q;
  const auto models = resolve_scope(scope, props, scores, dataset);
  for (const auto& p : predictors) ledger.rows.push_back(correlate_one(scores, props, p, models, dataset, ledger.scope));
  std::vector<double> raw;
  for (const auto& r : ledger.rows) raw.push_back(r.result.p_raw);
  const auto adj = numstats::fdr_bh(raw, q);
  for (std::size_t i = 0; i < ledger.rows.size(); ++i) {
    ledger.rows[i].result.p_adjusted = adj.adjusted[i];
    ledger.rows[i].significant = adj.significant[i];
  }
  return ledger;
}

/// Alignment vs log10(parameter count).
inline LedgerRow size_correlation(const AlignmentTable& scores, const ModelPropertyTable& props, const Scope& scope = {},
                                  const std::string& dataset = "average") {
  return correlate_one(scores, props, "log10_params", resolve_scope(scope, props, scores, dataset), dataset, scope.name());
}

/// Alignment vs NWP loss. Losses are not comparable across families, so a
/// scope spanning several families requires allow_mixed_families.
inline LedgerRow nwp_correlation(const AlignmentTable& scores, const ModelPropertyTable& props, const Scope& scope,
                                 const std::string& dataset = "average", bool allow_mixed_families = false) {
  const auto models = resolve_scope(scope, props, scores, dataset);
  std::set<std::string> families;
  for (const auto& m : models) families.insert(props.at(m).family);
  if (families.size() > 1 && !allow_mixed_families)
    throw ConfigError("nwp_correlation: scope mixes model families; pass an explicit override to pool them");
  return correlate_one(scores, props, "nwp_loss", models, dataset, scope.name());
}

// ---------------------------------------------------------------------------
// Instruction-tuning gains

struct DatasetGain {
  double vanilla = 0.0;
  double tuned = 0.0;
  double percent = 0.0;  // 100 (tuned - vanilla) / vanilla
};

struct PairGain {
  std::string tuned;
  std::string vanilla;
  std::map<std::string, DatasetGain> by_dataset;
};

struct GainReport {
  std::vector<std::string> datasets;  // per-dataset columns, then the average key
  std::string average_key = "average";
  std::vector<PairGain> pairs;
  std::map<std::string, double> mean_percent;  // over pairs, per dataset (and average_key)
  double overall_percent = 0.0;                // mean over pairs on the average column
};

/// Percent change of each tuned model over its vanilla base on each dataset
/// and on the cross-dataset average. When the table has no average column,
/// the per-pair average is the mean of the dataset scores.
inline GainReport it_gain_report(const AlignmentTable& scores, const ModelPropertyTable& props, const Scope& scope = {},
                                 std::vector<std::string> datasets = {}, const std::string& average_key = "average") {
  GainReport rep;
  rep.average_key = average_key;
  if (datasets.empty())
    for (const auto& d : scores.datasets)
      if (d != average_key) datasets.push_back(d);
  if (datasets.empty()) throw DataError("it_gain_report: no datasets");
  rep.datasets = datasets;

  const std::string probe = datasets.front();
  std::vector<std::string> tuned_models;
  for (const auto& m : resolve_scope(scope, props, scores, probe))
    if (props.at(m).instruction_tuned) tuned_models.push_back(m);
  if (tuned_models.empty()) throw DataError("it_gain_report: no instruction-tuned models in scope");

  auto pct = [](double v, double t) {
    if (!(v > 0.0)) throw NumericalError("it_gain_report: vanilla score must be > 0 for a percent change");
    return 100.0 * (t - v) / v;
  };
  for (const auto& t : tuned_models) {
    const auto& p = props.at(t);
    if (!p.vanilla_base) throw DataError("it_gain_report: missing pair member for " + t);
    PairGain g{t, *p.vanilla_base, {}};
    double sv = 0.0, st = 0.0;
    for (const auto& d : datasets) {
      if (!scores.has(g.vanilla, d) || !scores.has(t, d)) throw DataError("it_gain_report: missing pair member score on " + d + " for " + t);
      const double v = scores.get(g.vanilla, d), tv = scores.get(t, d);
      g.by_dataset[d] = {v, tv, pct(v, tv)};
      sv += v;
      st += tv;
    }
    double av = sv / static_cast<double>(datasets.size());
    double at = st / static_cast<double>(datasets.size());
    if (scores.has(t, average_key) && scores.has(g.vanilla, average_key)) {
      av = scores.get(g.vanilla, average_key);
      at = scores.get(t, average_key);
    }
    g.by_dataset[average_key] = {av, at, pct(av, at)};
    rep.pairs.push_back(std::move(g));
  }
  auto keys = datasets;
  keys.push_back(average_key);
  for (const auto& d : keys) {
    double s = 0.0;
    for (const auto& g : rep.pairs) s += g.by_dataset.at(d).percent;
    rep.mean_percent[d] = s / static_cast<double>(rep.pairs.size());
  }
  rep.overall_percent = rep.mean_percent.at(average_key);
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization and reports

inline json to_json(const numstats::CorrelationResult& r) {
  return json{{"r", r.r}, {"p_raw", r.p_raw}, {"p_adjusted", r.p_adjusted}, {"n", r.n}, {"degenerate", r.degenerate}};
}

inline numstats::CorrelationResult correlation_from_json(const json& j) {
  numstats::CorrelationResult r;
  r.r = j.at("r").get<double>();
  r.p_raw = j.at("p_raw").get<double>();
  r.p_adjusted = j.at("p_adjusted").get<double>();
  r.n = j.at("n").get<std::size_t>();
  r.degenerate = j.value("degenerate", false);
  return r;
}

inline json to_json(const LedgerRow& row) {
  json pts = json::array();
  for (const auto& p : row.points) pts.push_back({{"model", p.model}, {"x", p.x}, {"y", p.y}});
  return json{{"predictor", row.predictor}, {"display", row.display}, {"result", to_json(row.result)},
              {"scope", row.scope}, {"dataset", row.dataset}, {"significant", row.significant}, {"points", pts}};
}

inline LedgerRow ledger_row_from_json(const json& j) {
  LedgerRow row;
  row.predictor = j.at("predictor").get<std::string>();
  row.display = j.at("display").get<std::string>();
  row.result = correlation_from_json(j.at("result"));
  row.scope = j.at("scope").get<std::string>();
  row.dataset = j.at("dataset").get<std::string>();
  row.significant = j.at("significant").get<bool>();
  for (const auto& p : j.at("points")) row.points.push_back({p.at("model").get<std::string>(), p.at("x").get<double>(), p.at("y").get<double>()});
  return row;
}

inline json to_json(const CorrelationLedger& l) {
  json rows = json::array();
  for (const auto& r : l.rows) rows.push_back(to_json(r));
  return json{{"dataset", l.dataset}, {"scope", l.scope}, {"q", l.q}, {"rows", rows}};
}

inline CorrelationLedger ledger_from_json(const json& j) {
  CorrelationLedger l;
  l.dataset = j.at("dataset").get<std::string>();
  l.scope = j.at("scope").get<std::string>();
  l.q = j.at("q").get<double>();
  for (const auto& r : j.at("rows")) l.rows.push_back(ledger_row_from_json(r));
  return l;
}

inline json to_json(const GainReport& g) {
  json pairs = json::array();
  for (const auto& p : g.pairs) {
    json by = json::object();
    for (const auto& [d, v] : p.by_dataset) by[d] = {{"vanilla", v.vanilla}, {"tuned", v.tuned}, {"percent", v.percent}};
    pairs.push_back({{"tuned", p.tuned}, {"vanilla", p.vanilla}, {"by_dataset", by}});
  }
  return json{{"datasets", g.datasets}, {"average_key", g.average_key}, {"pairs", pairs},
              {"mean_percent", g.mean_percent}, {"overall_percent", g.overall_percent}};
}

inline GainReport gain_report_from_json(const json& j) {
  GainReport g;
  g.datasets = j.at("datasets").get<std::vector<std::string>>();
  g.average_key = j.at("average_key").get<std::string>();
  for (const auto& p : j.at("pairs")) {
    PairGain pg{p.at("tuned").get<std::string>(), p.at("vanilla").get<std::string>(), {}};
    for (const auto& [d, v] : p.at("by_dataset").items())
      pg.by_dataset[d] = {v.at("vanilla").get<double>(), v.at("tuned").get<double>(), v.at("percent").get<double>()};
    g.pairs.push_back(std::move(pg));
  }
  g.mean_percent = j.at("mean_percent").get<std::map<std::string, double>>();
  g.overall_percent = j.at("overall_percent").get<double>();
  return g;
}

/// Table-style adjusted p-value band.
inline std::string format_p(double p) {
  if (p < 0.0005) return "< 0.0005";
  if (p < 0.005) return "< 0.005";
  return detail::fmt("%.2f", p);
}

inline std::string stars(double p_adjusted) {
  if (p_adjusted < 0.001) return "***";
  if (p_adjusted < 0.01) return "**";
  if (p_adjusted < 0.05) return "*";
  return "";
}

enum class ReportFormat { markdown, json, csv };

inline ReportFormat parse_format(const std::string& s) {
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + s + "'");
}

inline std::string render_markdown(const std::vector<CorrelationLedger>& ledgers, const std::optional<GainReport>& gains) {
  std::ostringstream md;
  for (const auto& l : ledgers) {
    md << "## Correlation with alignment (" << l.dataset << ", " << l.scope << ")\n\n";
    md << "| Predictor | r | Adjusted p | n | Sig. |\n";
    md << "|---|---:|---:|---:|:---:|\n";
    for (const auto& r : l.rows)
      md << "| " << r.display << " | " << detail::fmt("%.3f", r.result.r) << " | " << format_p(r.result.p_adjusted) << " | "
         << r.result.n << " | " << stars(r.result.p_adjusted) << " |\n";
    md << "\n";
  }
  if (gains) {
    md << "## Instruction-tuning gains (mean percent change over " << gains->pairs.size() << " pairs)\n\n";
    md << "| Dataset | Mean gain (%) |\n|---|---:|\n";
    auto keys = gains->datasets;
    keys.push_back(gains->average_key);
    for (const auto& d : keys) md << "| " << d << " | " << detail::fmt("%+.2f", gains->mean_percent.at(d)) << " |\n";
    md << "\n";
  }
  return md.str();
}

namespace detail {

// "<dataset>_<scope>" with characters outside [A-Za-z0-9_-] replaced.
inline std::string file_tag(const CorrelationLedger& l) {
  std::string tag = l.dataset + "_" + l.scope;
  for (char& c : tag)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return tag;
}

}  // namespace detail

/// Writes the report into out_dir and returns the files written.
/// markdown: report.md; json: report.json; csv: ledger, per-predictor
/// scatter (predictor vs alignment) and vanilla-vs-tuned scatter files.
inline std::vector<fs::path> emit_report(const std::vector<CorrelationLedger>& ledgers, const std::optional<GainReport>& gains,
                                         ReportFormat format, const fs::path& out_dir) {
  if (ledgers.empty() && !gains) throw DataError("emit_report: nothing to report");
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto write = [&](const fs::path& name, const std::string& text) {
    const fs::path p = out_dir / name;
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
    written.push_back(p);
  };
  switch (format) {
    case ReportFormat::markdown: write("report.md", render_markdown(ledgers, gains)); break;
    case ReportFormat::json: {
      json j{{"ledgers", json::array()}};
      for (const auto& l : ledgers) j["ledgers"].push_back(to_json(l));
      j["gains"] = gains ? to_json(*gains) : json(nullptr);
      write("report.json", j.dump(2) + "\n");
      break;
    }
    case ReportFormat::csv: {
      for (const auto& l : ledgers) {
        std::ostringstream led;
        led << "predictor,display,r,p_raw,p_adjusted,n,significant\n";
        for (const auto& r : l.rows) {
          led << r.predictor << ",\"" << r.display << "\"," << detail::fmt("%.6f", r.result.r) << ","
              << detail::fmt("%.6g", r.result.p_raw) << "," << detail::fmt("%.6g", r.result.p_adjusted) << "," << r.result.n << ","
              << (r.significant ? 1 : 0) << "\n";
          std::ostringstream sc;
          sc << "model,x,y\n";
          for (const auto& p : r.points) sc << p.model << "," << detail::fmt("%.6f", p.x) << "," << detail::fmt("%.6f", p.y) << "\n";
          write("scatter_" + detail::file_tag(l) + "_" + r.predictor + ".csv", sc.str());
        }
        write("ledger_" + detail::file_tag(l) + ".csv", led.str());
      }
      if (gains) {
        std::ostringstream sc;
        sc << "dataset,tuned,vanilla,x_vanilla,y_tuned,percent\n";
        auto keys = gains->datasets;
        keys.push_back(gains->average_key);
        for (const auto& d : keys)
          for (const auto& p : gains->pairs) {
            const auto& g = p.by_dataset.at(d);
            sc << d << "," << p.tuned << "," << p.vanilla << "," << detail::fmt("%.6f", g.vanilla) << ","
               << detail::fmt("%.6f", g.tuned) << "," << detail::fmt("%.4f", g.percent) << "\n";
          }
        write("gains_scatter.csv", sc.str());
      }
      break;
    }
  }
  return written;
}

}  // namespace brainalign::analysis
