#include "brainalign/encoding.hpp"
#include "brainalign/synthbench.hpp"
#include "helpers.hpp"

#include <cstring>
#include <numeric>
#include <random>

using namespace brainalign;
using namespace brainalign::encoding;
using testutil::randn;

namespace {

synthbench::SynthConfig small_cfg(double sigma) {
  auto c = synthbench::SynthConfig::wehbe_shaped();
  c.trs = 400;
  c.words = 1600;
  c.sigma = sigma;
  c.units = 8;
  return c;
}

ResponseMeta meta_for(std::vector<std::string> subjects_of_units) {
  ResponseMeta m;
  m.granularity = RowSemantics::tr;
  for (std::size_t i = 0; i < subjects_of_units.size(); ++i)
    m.units.push_back({"u" + std::to_string(i), subjects_of_units[i], UnitKind::voxel});
  return m;
}

// n TR rows in `runs` equal runs, features one row per TR.
DatasetView tr_view(Matrix responses, std::size_t runs) {
  DatasetView v;
  const auto n = static_cast<std::size_t>(responses.rows());
  for (std::size_t i = 0; i < n; ++i) v.timeline.trs.push_back({i, 2.0 * static_cast<double>(i), static_cast<int>(i * runs / n)});
  v.meta = meta_for(std::vector<std::string>(static_cast<std::size_t>(responses.cols()), "s0"));
  v.responses = std::move(responses);
  return v;
}

}  // namespace

TEST(FitPredictCv, NoiselessPlantedMapRecovered) {
  const auto data = synthbench::gen_synthetic(small_cfg(0.0), 3);
  const auto s = score_layer(data.layers[0], data.view(), PipelineConfig::wehbe2014());
  for (double r : s.per_unit_r) EXPECT_GE(r, 0.999);
}

TEST(FitPredictCv, WehbePlanCoversEveryUnmaskedRowOnce) {
  const auto data = synthbench::gen_synthetic(small_cfg(1.0), 4);
  const auto cv = fit_predict_cv(data.layers[0], data.view(), PipelineConfig::wehbe2014());
  EXPECT_EQ(cv.plan.n_folds(), 4);
  // 4 runs of 100 TRs, 10 trimmed at each end.
  EXPECT_EQ(brainalign::detail::count_true(cv.scored), 320u);
  for (std::size_t r = 0; r < cv.scored.size(); ++r) {
    const auto in_run = r % 100;
    EXPECT_EQ(cv.scored[r], in_run >= 10 && in_run < 90) << r;
    EXPECT_EQ(std::isnan(cv.predicted(static_cast<Eigen::Index>(r), 0)), !cv.scored[r]);
  }
  EXPECT_EQ(cv.lambdas.size(), 4u);
}

TEST(FitPredictCv, ShuffledResponsesScoreNearZero) {
  double sum = 0.0;
  for (unsigned seed = 0; seed < 5; ++seed) {
    const Matrix x = randn(500, 20, seed);
    Matrix y = randn(500, 10, 100 + seed);
    auto v = tr_view(y, 5);
    auto cfg = PipelineConfig::wehbe2014();
    const auto s = score_layer(x, v, cfg);
    EXPECT_LT(std::fabs(s.overall), 0.1);
    sum += s.overall;
  }
  EXPECT_LT(std::fabs(sum / 5.0), 0.1);
}

TEST(FitPredictCv, RejectsBadInputs) {
  const auto data = synthbench::gen_synthetic(small_cfg(1.0), 5);
  Matrix bad = data.layers[0];
  bad(3, 2) = std::nan("");
  EXPECT_THROW(fit_predict_cv(bad, data.view(), PipelineConfig::wehbe2014()), DataError);
  EXPECT_THROW(fit_predict_cv(Matrix::Ones(7, 3), data.view(), PipelineConfig::wehbe2014()), DataError);
  auto cfg = PipelineConfig::wehbe2014();
  cfg.n_folds = 1;
  EXPECT_THROW(fit_predict_cv(data.layers[0], data.view(), cfg), ConfigError);
}

TEST(FitPredictCv, DeterministicAcrossThreadCounts) {
  const auto data = synthbench::gen_synthetic(small_cfg(1.0), 6);
  auto cfg = PipelineConfig::wehbe2014();
  cfg.threads = 1;
  const auto a = fit_predict_cv(data.layers[0], data.view(), cfg);
  cfg.threads = 4;
  const auto b = fit_predict_cv(data.layers[0], data.view(), cfg);
  ASSERT_EQ(a.predicted.size(), b.predicted.size());
  EXPECT_EQ(std::memcmp(a.predicted.data(), b.predicted.data(), sizeof(double) * static_cast<std::size_t>(a.predicted.size())), 0);
}

TEST(FitPredictCv, ScoreNonIncreasingInNoise) {
  std::vector<double> mean_by_sigma;
  for (double sigma : {0.0, 0.5, 1.0, 2.0}) {
    double sum = 0.0;
    for (unsigned seed = 0; seed < 3; ++seed) {
      const auto data = synthbench::gen_synthetic(small_cfg(sigma), 20 + seed);
      sum += score_layer(data.layers[0], data.view(), PipelineConfig::wehbe2014()).overall;
    }
    mean_by_sigma.push_back(sum / 3.0);
  }
  for (std::size_t i = 1; i < mean_by_sigma.size(); ++i) EXPECT_LE(mean_by_sigma[i], mean_by_sigma[i - 1] + 0.02);
  // 240 training rows for 40 lagged columns lose some signal to estimation error.
  EXPECT_LT(mean_by_sigma[2], synthbench::attainable_r(1.0) + 0.02);
  EXPECT_GT(mean_by_sigma[2], synthbench::attainable_r(1.0) - 0.1);
}

// ------------------------------------------------------------ scoring

TEST(ScoreAlignment, IdentityAndNegation) {
  const Matrix a = randn(30, 4, 9);
  const auto meta = meta_for({"s0", "s0", "s1", "s1"});
  const auto s = score_alignment(a, a, meta);
  EXPECT_NEAR(s.overall, 1.0, 1e-12);
  EXPECT_NEAR(s.mad, 0.0, 1e-12);
  EXPECT_NEAR(score_alignment(-a, a, meta).overall, -1.0, 1e-12);
}

TEST(ScoreAlignment, HandAggregatedSubjects) {
  AlignmentScore s;
  s.per_unit_r = {1.0, 0.0, 0.5};
  aggregate_scores(s, meta_for({"a", "a", "b"}));
  ASSERT_EQ(s.per_subject.size(), 2u);
  EXPECT_DOUBLE_EQ(s.per_subject[0], 0.5);
  EXPECT_DOUBLE_EQ(s.per_subject[1], 0.5);
  EXPECT_DOUBLE_EQ(s.overall, 0.5);
  EXPECT_DOUBLE_EQ(s.mad, 0.0);

  aggregate_scores(s, meta_for({"a", "a", "b"}), Aggregation::median);
  EXPECT_DOUBLE_EQ(s.overall, 0.5);
}

TEST(ScoreAlignment, MaskAndShapeErrors) {
  const Matrix a = randn(10, 2, 1);
  const auto meta = meta_for({"s0", "s0"});
  EXPECT_THROW(score_alignment(a, a, meta, RowMask(10, false)), DataError);
  EXPECT_THROW(score_alignment(a, a.leftCols(1), meta), DataError);
  EXPECT_THROW(score_alignment(a, a, meta_for({"s0"})), DataError);

  Matrix p = a;
  p.col(1).setConstant(3.0);
  const auto s = score_alignment(p, a, meta);
  EXPECT_TRUE(s.degenerate[1]);
  EXPECT_DOUBLE_EQ(s.per_unit_r[1], 0.0);
}

TEST(ScoreAlignment, JsonRecord) {
  AlignmentScore s;
  s.model = "m";
  s.layer = 3;
  s.dataset = "d";
  s.per_unit_r = {0.2, 0.4};
  aggregate_scores(s, meta_for({"x", "y"}));
  const json j = s;
  for (const char* k : {"model", "layer", "dataset", "overall", "normalized", "per_subject", "mad"}) EXPECT_TRUE(j.contains(k)) << k;
  const auto back = j.get<AlignmentScore>();
  EXPECT_DOUBLE_EQ(back.overall, s.overall);
  EXPECT_EQ(back.subjects, s.subjects);
  EXPECT_FALSE(back.normalized.has_value());
}

// --------------------------------------------------------- layer sweep

TEST(LayerSweep, PlantedSignalLayerWins) {
  auto cfg = small_cfg(1.0);
  cfg.layers = 3;
  cfg.signal_layer = 1;
  const auto data = synthbench::gen_synthetic(cfg, 11);
  const auto sweep = layer_sweep(data.layers, data.view(), PipelineConfig::wehbe2014());
  EXPECT_EQ(sweep.best_layer, 1u);
  ASSERT_EQ(sweep.curve.size(), 3u);
  EXPECT_EQ(sweep.best.layer, 1);
  EXPECT_DOUBLE_EQ(sweep.best.overall, *std::max_element(sweep.curve.begin(), sweep.curve.end()));
}

TEST(LayerSweep, SingleAndDuplicatedLayers) {
  const auto data = synthbench::gen_synthetic(small_cfg(1.0), 12);
  const auto cfg = PipelineConfig::wehbe2014();
  const auto one = layer_sweep({data.layers[0]}, data.view(), cfg);
  EXPECT_EQ(one.best_layer, 0u);

  const Matrix weak = randn(data.layers[0].rows(), data.layers[0].cols(), 77);
  const auto dup = layer_sweep({weak, data.layers[0], data.layers[0]}, data.view(), cfg);
  EXPECT_EQ(dup.best_layer, 1u);
  EXPECT_DOUBLE_EQ(dup.curve[1], dup.curve[2]);
  EXPECT_DOUBLE_EQ(dup.best.overall, one.best.overall);

  // Reordering layers moves the argmax with the layer, not the score.
  const auto rev = layer_sweep({data.layers[0], weak}, data.view(), cfg);
  EXPECT_EQ(rev.best_layer, 0u);
  EXPECT_DOUBLE_EQ(rev.best.overall, one.best.overall);

  EXPECT_THROW(layer_sweep({}, data.view(), cfg), DataError);
}

// ------------------------------------------------------------ ceilings

TEST(Ceiling, DuplicatedSubjectsNearOne) {
  auto cfg = small_cfg(0.0);
  cfg.subjects = 2;
  const auto data = synthbench::gen_synthetic(cfg, 13);
  const auto c = ceiling_estimate(data.view(), CeilingEstimator::inter_subject);
  EXPECT_EQ(c.estimator, "inter_subject");
  EXPECT_GT(c.ceiling, 0.99);
  EXPECT_LE(c.ceiling, 1.0);
}

TEST(Ceiling, IndependentNoiseNearZero) {
  auto v = tr_view(randn(400, 12, 14), 4);
  v.meta = meta_for({"a", "a", "a", "a", "b", "b", "b", "b", "c", "c", "c", "c"});
  const auto c = ceiling_estimate(v, CeilingEstimator::inter_subject, PipelineConfig::wehbe2014());
  EXPECT_LT(std::fabs(c.ceiling), 0.1);
  EXPECT_EQ(c.per_subject.size(), 3u);
}

TEST(Ceiling, SplitHalfOnRepeatedRuns) {
  const Matrix block = randn(50, 6, 15);
  Matrix y(200, 6);
  for (int r = 0; r < 4; ++r) y.middleRows(50 * r, 50) = block + 0.01 * randn(50, 6, 16 + r);
  auto v = tr_view(y, 4);
  const auto c = ceiling_estimate(v, CeilingEstimator::split_half);
  EXPECT_GT(c.ceiling, 0.99);

  // Independent runs: the half correlations hover around zero.
  auto w = tr_view(randn(200, 40, 21), 4);
  EXPECT_LT(std::fabs(ceiling_estimate(w, CeilingEstimator::split_half).ceiling), 0.15);

  auto single = tr_view(randn(50, 2, 1), 1);
  EXPECT_THROW(ceiling_estimate(single, CeilingEstimator::split_half), DataError);
  EXPECT_THROW(ceiling_estimate(single, CeilingEstimator::inter_subject), DataError);
}

TEST(Ceiling, ReferenceConstants) {
  EXPECT_DOUBLE_EQ(reference_ceiling("pereira2018").ceiling, 0.359);
  EXPECT_DOUBLE_EQ(reference_ceiling("blank2014").ceiling, 0.210);
  EXPECT_DOUBLE_EQ(reference_ceiling("wehbe2014").ceiling, 0.104);
  EXPECT_DOUBLE_EQ(reference_ceiling("futrell2018").ceiling, 0.858);
  EXPECT_THROW(reference_ceiling("nope"), ConfigError);
}

TEST(Normalize, Examples) {
  AlignmentScore s;
  s.overall = 0.104;
  EXPECT_NEAR(*normalize_by_ceiling(s, reference_ceiling("wehbe2014")).normalized, 1.0, 1e-12);
  CeilingEstimate one{"x", 1.0, "reference", {}, {}};
  EXPECT_DOUBLE_EQ(*normalize_by_ceiling(s, one).normalized, 0.104);

  // Normalized 1.08 on Wehbe corresponds to raw 1.08 * 0.104.
  s.overall = 1.08 * 0.104;
  EXPECT_NEAR(*normalize_by_ceiling(s, reference_ceiling("wehbe2014")).normalized, 1.08, 1e-12);

  CeilingEstimate zero{"x", 0.0, "reference", {}, {}};
  EXPECT_THROW(normalize_by_ceiling(s, zero), NumericalError);
}

// -------------------------------------------------------------- config

TEST(PipelineConfigJson, PresetsAndMerge) {
  const auto w = PipelineConfig::wehbe2014();
  EXPECT_EQ(*w.pca_k, 10);
  EXPECT_EQ(w.lag->n_delays, 4);
  EXPECT_EQ(w.trim, 10);
  const auto p = PipelineConfig::for_dataset("pereira2018_exp3");
  EXPECT_FALSE(p.pca_k.has_value());
  EXPECT_FALSE(p.lag.has_value());
  EXPECT_EQ(p.n_folds, 5);
  EXPECT_THROW(PipelineConfig::for_dataset("zzz"), ConfigError);

  PipelineConfig c;
  merge_json(c, json{{"pca", nullptr}, {"lags", 2}, {"folds", "story"}, {"aggregation", "median"}});
  EXPECT_FALSE(c.pca_k.has_value());
  EXPECT_EQ(c.lag->n_delays, 2);
  EXPECT_EQ(c.fold_key, temporal::GroupKey::story);
  EXPECT_EQ(c.aggregation, Aggregation::median);
  EXPECT_EQ(json(c)["folds"], "story");

  EXPECT_THROW(merge_json(c, json{{"folds", "runs"}}), ConfigError);
  EXPECT_THROW(merge_json(c, json{{"aggregation", "max"}}), ConfigError);
  EXPECT_THROW(merge_json(c, json{{"trim", "ten"}}), ConfigError);
  EXPECT_THROW(merge_json(c, json::array()), ConfigError);
}

TEST(CombineExperiments, AveragesParts) {
  AlignmentScore a, b;
  a.overall = 0.2;
  a.dataset = "e2";
  a.per_subject = {0.2};
  a.subjects = {"s"};
  b.overall = 0.4;
  b.dataset = "e3";
  b.per_subject = {0.4};
  b.subjects = {"s"};
  const auto c = combine_experiments({a, b}, "pereira2018");
  EXPECT_DOUBLE_EQ(c.overall, 0.3);
  EXPECT_EQ(c.subjects, (std::vector<std::string>{"e2:s", "e3:s"}));
}
