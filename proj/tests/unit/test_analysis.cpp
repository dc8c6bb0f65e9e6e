#include "brainalign/analysis.hpp"
#include "helpers.hpp"

#include <fstream>
#include <sstream>

using namespace brainalign;
using namespace brainalign::analysis;
using testutil::scratch_dir;

namespace {

struct Bundled {
  ModelPropertyTable props;
  AlignmentTable brain;
};

const Bundled& bundled() {
  static const Bundled b{load_model_properties(fs::path(testutil::data_dir()) / "model_properties.csv"),
                         load_alignment_table(fs::path(testutil::data_dir()) / "brain_alignment.csv")};
  return b;
}

// Textbook two-pass Pearson, independent of numstats.
double oracle_r(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ModelProperties model(std::string name, std::string family, double params, double nwp = 1.0) {
  ModelProperties m;
  m.model = std::move(name);
  m.family = std::move(family);
  m.params = params;
  m.instruction_tuned = true;
  m.nwp_loss = nwp;
  return m;
}

}  // namespace

TEST(Tables, BundledShapes) {
  const auto& b = bundled();
  EXPECT_EQ(b.props.rows().size(), 33u);
  EXPECT_EQ(b.brain.models.size(), 33u);
  EXPECT_EQ(b.brain.datasets, (std::vector<std::string>{"pereira2018", "blank2014", "wehbe2014", "average"}));
  EXPECT_DOUBLE_EQ(b.brain.get("vicuna-13b", "average"), 0.229);
  EXPECT_EQ(b.props.at("stable-vicuna-13b").vanilla_base, std::optional<std::string>("llama-13b"));
  EXPECT_THROW(b.props.at("nope"), DataError);
  EXPECT_THROW(b.brain.get("nope", "average"), DataError);
}

TEST(Tables, ValidationErrors) {
  auto a = model("a", "f", 1e6);
  auto dup = a;
  EXPECT_THROW(ModelPropertyTable({a, dup}), DataError);
  auto bad = model("b", "f", 0.0);
  EXPECT_THROW(ModelPropertyTable({bad}), DataError);
  auto orphan = model("c", "f", 1e6);
  orphan.vanilla_base = "ghost";
  EXPECT_THROW(ModelPropertyTable({orphan}), DataError);
  auto x = model("x", "f", 1e6), y = model("y", "f", 1e6);
  x.vanilla_base = "y";
  y.vanilla_base = "x";
  EXPECT_THROW(ModelPropertyTable({x, y}), DataError);
  auto score = model("s", "f", 1e6);
  score.benchmarks["mmlu_overall"] = 1.5;
  EXPECT_THROW(ModelPropertyTable({score}), DataError);

  const auto dir = scratch_dir();
  std::ofstream(dir / "t.csv") << "name,d\nm,0.1\n";
  EXPECT_THROW(load_alignment_table(dir / "t.csv"), DataError);
  std::ofstream(dir / "u.csv") << "model,d\nm,abc\n";
  EXPECT_THROW(load_alignment_table(dir / "u.csv"), DataError);
}

TEST(Scope, ParseAndResolve) {
  EXPECT_EQ(Scope::parse("family:t5").name(), "family:t5");
  EXPECT_EQ(Scope::parse("models:a,b").models, (std::vector<std::string>{"a", "b"}));
  EXPECT_THROW(Scope::parse("everything"), ConfigError);
  EXPECT_THROW(Scope::parse("models:"), ConfigError);

  const auto& b = bundled();
  const auto it = resolve_scope({}, b.props, b.brain, "average");
  EXPECT_EQ(it.size(), 17u);
  EXPECT_EQ(it.front(), "flan-t5-small");
  for (const auto& m : it) EXPECT_EQ(m.rfind("gpt2", 0), std::string::npos) << m;
  EXPECT_EQ(resolve_scope(Scope::parse("all-models"), b.props, b.brain, "average").size(), 33u);
  EXPECT_EQ(resolve_scope(Scope::parse("family:llama"), b.props, b.brain, "average").size(), 8u);
  EXPECT_THROW(resolve_scope(Scope::parse("models:flan-t5-xl,ghost"), b.props, b.brain, "average"), DataError);
}

TEST(CorrelateProperties, BundledBenchmarkCorrelations) {
  const auto& b = bundled();
  const auto ledger = correlate_properties(b.brain, b.props, {"mmlu_overall", "bbh_overall"});
  ASSERT_EQ(ledger.rows.size(), 2u);
  const auto& mmlu = ledger.rows[0];
  const auto& bbh = ledger.rows[1];
  EXPECT_EQ(mmlu.result.n, 17u);
  EXPECT_NEAR(mmlu.result.r, 0.809, 0.03);
  EXPECT_NEAR(bbh.result.r, 0.384, 0.05);
  EXPECT_LT(mmlu.result.p_adjusted, 0.0005);
  EXPECT_EQ(format_p(mmlu.result.p_adjusted), "< 0.0005");
  EXPECT_TRUE(mmlu.significant);
  EXPECT_FALSE(bbh.significant);

  std::vector<double> x, y;
  for (const auto& p : mmlu.points) {
    x.push_back(b.props.at(p.model).benchmarks.at("mmlu_overall"));
    y.push_back(b.brain.get(p.model, "average"));
  }
  EXPECT_NEAR(mmlu.result.r, oracle_r(x, y), 1e-12);

  // BH over two p-values: the larger raw p is unchanged, the smaller doubles (capped by it).
  EXPECT_DOUBLE_EQ(bbh.result.p_adjusted, bbh.result.p_raw);
  EXPECT_DOUBLE_EQ(mmlu.result.p_adjusted, std::min(2.0 * mmlu.result.p_raw, bbh.result.p_raw));
}

TEST(CorrelateProperties, AlignmentPredictorIsOne) {
  const auto& b = bundled();
  const auto l = correlate_properties(b.brain, b.props, {"alignment"});
  EXPECT_NEAR(l.rows[0].result.r, 1.0, 1e-12);
}

TEST(CorrelateProperties, Errors) {
  const auto& b = bundled();
  EXPECT_THROW(correlate_properties(b.brain, b.props, {"iq"}), ConfigError);
  EXPECT_THROW(correlate_properties(b.brain, b.props, {}), ConfigError);
  // Vanilla models carry no MMLU score.
  EXPECT_THROW(correlate_properties(b.brain, b.props, {"mmlu_overall"}, Scope::parse("all-models")), DataError);
  EXPECT_THROW(correlate_properties(b.brain, b.props, {"alignment"}, Scope::parse("models:t5-xl,flan-t5-xl")), DataError);
}

TEST(SizeCorrelation, BundledScopes) {
  const auto& b = bundled();
  const auto it = size_correlation(b.brain, b.props);
  EXPECT_NEAR(it.result.r, 0.95, 0.03);
  const auto all = size_correlation(b.brain, b.props, Scope::parse("all-models"));
  EXPECT_GT(all.result.r, 0.85);

  auto point = [&](const std::string& m) {
    for (const auto& p : all.points)
      if (p.model == m) return p;
    throw std::runtime_error("missing " + m);
  };
  EXPECT_GT(point("vicuna-13b").y, point("llama-33b").y);
  EXPECT_DOUBLE_EQ(point("llama-33b").x, std::log10(33e9));
}

TEST(SizeCorrelation, EqualSizesAreDegenerate) {
  ModelPropertyTable props({model("a", "f", 1e9), model("b", "f", 1e9), model("c", "f", 1e9), model("d", "f", 1e9)});
  AlignmentTable t;
  for (auto [m, v] : std::vector<std::pair<std::string, double>>{{"a", 0.1}, {"b", 0.2}, {"c", 0.3}, {"d", 0.5}}) t.set(m, "average", v);
  const auto row = size_correlation(t, props);
  EXPECT_TRUE(row.result.degenerate);
  EXPECT_DOUBLE_EQ(row.result.r, 0.0);
}

TEST(NwpCorrelation, SyntheticAndBundled) {
  ModelPropertyTable props({model("a", "f", 1e9, 3.0), model("b", "f", 1e9, 2.0), model("c", "f", 1e9, 1.0), model("d", "f", 1e9, 0.5)});
  AlignmentTable t;
  for (auto [m, v] : std::vector<std::pair<std::string, double>>{{"a", 0.1}, {"b", 0.2}, {"c", 0.3}, {"d", 0.35}}) t.set(m, "average", v);
  EXPECT_NEAR(nwp_correlation(t, props, {}).result.r, -1.0, 1e-12);

  ModelPropertyTable flat({model("a", "f", 1e9, 2.0), model("b", "f", 1e9, 2.0), model("c", "f", 1e9, 2.0), model("d", "f", 1e9, 2.0)});
  EXPECT_TRUE(nwp_correlation(t, flat, {}).result.degenerate);

  const auto& b = bundled();
  EXPECT_THROW(nwp_correlation(b.brain, b.props, {}), ConfigError);
  const auto pooled = nwp_correlation(b.brain, b.props, {}, "average", true);
  EXPECT_EQ(pooled.result.n, 17u);
  // The bundled loss column pools two families with different loss scales;
  // the pooled value comes out positive on these tables.
  EXPECT_NEAR(pooled.result.r, 0.545, 0.01);
}

TEST(GainReport, BundledMeans) {
  const auto& b = bundled();
  const auto rep = it_gain_report(b.brain, b.props);
  EXPECT_EQ(rep.pairs.size(), 17u);
  EXPECT_NEAR(rep.mean_percent.at("pereira2018"), 6.9, 1.5);
  EXPECT_NEAR(rep.mean_percent.at("blank2014"), 8.0, 1.5);
  EXPECT_NEAR(rep.mean_percent.at("wehbe2014"), 3.8, 1.5);
  EXPECT_NEAR(rep.overall_percent, 6.2, 1.5);

  const auto& small = rep.pairs.front();
  EXPECT_EQ(small.tuned, "flan-t5-small");
  // (0.153 - 0.135) / 0.135
  EXPECT_NEAR(small.by_dataset.at("average").percent, 100.0 * 0.018 / 0.135, 1e-9);
  EXPECT_NEAR(small.by_dataset.at("average").percent, 13.3, 0.5);

  double sum = 0.0;
  for (const auto& p : rep.pairs) {
    const double v = b.brain.get(p.vanilla, "wehbe2014"), t = b.brain.get(p.tuned, "wehbe2014");
    sum += 100.0 * (t - v) / v;
  }
  EXPECT_NEAR(rep.mean_percent.at("wehbe2014"), sum / 17.0, 1e-9);
}

TEST(GainReport, AverageFallbackAndErrors) {
  auto v = model("v", "f", 1e9);
  v.instruction_tuned = false;
  auto t = model("t", "f", 1e9);
  t.vanilla_base = "v";
  ModelPropertyTable props({v, t});
  AlignmentTable s;
  s.set("v", "d1", 0.1);
  s.set("v", "d2", 0.3);
  s.set("t", "d1", 0.2);
  s.set("t", "d2", 0.2);
  const auto rep = it_gain_report(s, props, Scope::parse("all-models"));
  EXPECT_NEAR(rep.mean_percent.at("d1"), 100.0, 1e-9);
  EXPECT_NEAR(rep.overall_percent, 0.0, 1e-9);  // mean of datasets is 0.2 for both

  s.set("v", "d1", 0.0);
  EXPECT_THROW(it_gain_report(s, props, Scope::parse("all-models")), NumericalError);
  AlignmentTable missing;
  missing.set("t", "d1", 0.2);
  missing.set("v", "d2", 0.2);
  EXPECT_THROW(it_gain_report(missing, props, Scope::parse("all-models"), {"d1"}), DataError);
}

// -------------------------------------------------------------- report

TEST(Report, MarkdownRow) {
  const auto& b = bundled();
  const auto ledger = correlate_properties(b.brain, b.props, {"mmlu_overall", "bbh_overall"});
  const auto md = render_markdown({ledger}, it_gain_report(b.brain, b.props));
  const auto pos = md.find("| MMLU, Overall Score | 0.8");
  ASSERT_NE(pos, std::string::npos) << md;
  EXPECT_NE(md.find("| < 0.0005 | 17 | *** |", pos), std::string::npos) << md;
  EXPECT_NE(md.find("| BBH, Overall score | 0.3"), std::string::npos);
  EXPECT_NE(md.find("| average | +"), std::string::npos);
}

TEST(Report, PValueBandsAndStars) {
  EXPECT_EQ(format_p(0.0001), "< 0.0005");
  EXPECT_EQ(format_p(0.004), "< 0.005");
  EXPECT_EQ(format_p(0.18), "0.18");
  EXPECT_EQ(stars(0.0009), "***");
  EXPECT_EQ(stars(0.009), "**");
  EXPECT_EQ(stars(0.049), "*");
  EXPECT_EQ(stars(0.05), "");
  EXPECT_THROW(parse_format("xlsx"), ConfigError);
  EXPECT_EQ(parse_format("md"), ReportFormat::markdown);
}

TEST(Report, JsonRoundTripAndDeterminism) {
  const auto& b = bundled();
  const auto ledger = correlate_properties(b.brain, b.props, {"mmlu_overall", "bbh_overall", "log10_params"});
  const auto gains = it_gain_report(b.brain, b.props);
  const auto dir = scratch_dir();
  emit_report({ledger}, gains, ReportFormat::json, dir / "a");
  emit_report({ledger}, gains, ReportFormat::json, dir / "b");
  const auto text = slurp(dir / "a" / "report.json");
  EXPECT_EQ(text, slurp(dir / "b" / "report.json"));

  const json j = json::parse(text);
  const auto back = ledger_from_json(j["ledgers"][0]);
  ASSERT_EQ(back.rows.size(), 3u);
  EXPECT_DOUBLE_EQ(back.rows[0].result.r, ledger.rows[0].result.r);
  EXPECT_EQ(back.rows[2].points.size(), 17u);
  const auto g = gain_report_from_json(j["gains"]);
  EXPECT_DOUBLE_EQ(g.overall_percent, gains.overall_percent);
  EXPECT_EQ(render_markdown({back}, g), render_markdown({ledger}, gains));
}

TEST(Report, CsvFiles) {
  const auto& b = bundled();
  const auto it = correlate_properties(b.brain, b.props, {"log10_params"});
  const auto all = correlate_properties(b.brain, b.props, {"log10_params"}, Scope::parse("all-models"));
  const auto dir = scratch_dir();
  const auto files = emit_report({it, all}, it_gain_report(b.brain, b.props), ReportFormat::csv, dir);
  EXPECT_EQ(files.size(), 5u);
  const auto scatter = slurp(dir / "scatter_average_all-models_log10_params.csv");
  EXPECT_EQ(scatter.rfind("model,x,y\n", 0), 0u);
  EXPECT_NE(scatter.find("vicuna-13b,10.113943,0.229000"), std::string::npos) << scatter;
  EXPECT_NE(scatter.find("llama-33b,10.518514,0.227000"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "ledger_average_instruction-tuned.csv"));
  const auto gains = slurp(dir / "gains_scatter.csv");
  EXPECT_NE(gains.find("average,flan-t5-small,t5-small,0.135000,0.153000,13.3333"), std::string::npos) << gains;
  EXPECT_THROW(emit_report({}, std::nullopt, ReportFormat::csv, dir), DataError);
}
