#include "brainalign/analysis.hpp"
#include "brainalign/behavior.hpp"
#include "brainalign/synthbench.hpp"
#include "helpers.hpp"

#include <numeric>

using namespace brainalign;
using namespace brainalign::behavior;
using testutil::scratch_dir;

namespace {

TokenSurprisalTrack track(std::vector<double> s, std::vector<std::uint32_t> w, std::size_t words) {
  return {std::move(s), std::move(w), words};
}

ReadingTimeTable table(const std::vector<double>& rt, int stories = 1) {
  ReadingTimeTable t;
  t.rts.resize(static_cast<Eigen::Index>(rt.size()), 1);
  for (std::size_t i = 0; i < rt.size(); ++i) {
    t.rts(static_cast<Eigen::Index>(i), 0) = rt[i];
    t.words.push_back("w" + std::to_string(i));
    t.story_ids.push_back(static_cast<int>(i * static_cast<std::size_t>(stories) / rt.size()));
  }
  return t;
}

}  // namespace

TEST(WordSurprisal, IdentityMapAndSummation) {
  EXPECT_EQ(word_surprisal(track({1.0, 2.0, 3.0}, {0, 1, 2}, 3)), (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_EQ(word_surprisal(track({1.5, 0.5}, {0, 0}, 1)), (std::vector<double>{2.0}));
}

TEST(WordSurprisal, ConservesTotal) {
  const auto data = synthbench::gen_behavior({}, 3);
  const auto ws = word_surprisal(data.track);
  const double tokens = std::accumulate(data.track.surprisal.begin(), data.track.surprisal.end(), 0.0);
  const double words = std::accumulate(ws.begin(), ws.end(), 0.0);
  EXPECT_NEAR(words, tokens, 1e-9 * tokens);
  EXPECT_EQ(ws.size(), data.track.word_count);
}

TEST(WordSurprisal, RejectsBrokenMaps) {
  EXPECT_THROW(word_surprisal(track({1.0, 1.0}, {0, 2}, 3)), DataError);   // word 1 has no token
  EXPECT_THROW(word_surprisal(track({1.0, 1.0}, {0, 1}, 3)), DataError);   // trailing word without tokens
  EXPECT_THROW(word_surprisal(track({1.0, 1.0, 1.0}, {0, 1, 0}, 2)), DataError);  // non-contiguous
  EXPECT_THROW(word_surprisal(track({-1.0}, {0}, 1)), DataError);
  EXPECT_THROW(word_surprisal(track({1.0}, {0, 0}, 1)), DataError);
}

TEST(Track, FileRoundTrip) {
  const auto dir = scratch_dir();
  const auto t = track({0.25, 1.5, 3.0, 0.125}, {0, 0, 1, 2}, 3);
  write_track(t, dir / "s");
  const auto back = read_track(dir / "s.json");
  EXPECT_EQ(back.surprisal, t.surprisal);
  EXPECT_EQ(back.word_of_token, t.word_of_token);
  EXPECT_EQ(back.word_count, 3u);
  fs::resize_file(dir / "s.word_index.u32", 12);
  EXPECT_THROW(read_track(dir / "s"), DataError);
}

TEST(BehavAlign, AffineReadingTimesGiveOne) {
  const std::vector<double> s{1, 4, 2, 8, 5, 7};
  std::vector<double> rt;
  for (double v : s) rt.push_back(200.0 + 15.0 * v);
  BehaviorOptions opt;
  opt.include_first_word = true;
  EXPECT_NEAR(behav_align(s, table(rt), opt).r, 1.0, 1e-12);
}

TEST(BehavAlign, ConstantSurprisalIsDegenerate) {
  const auto res = behav_align(std::vector<double>(6, 2.0), table({1, 2, 3, 4, 5, 6}));
  EXPECT_TRUE(res.degenerate);
  EXPECT_DOUBLE_EQ(res.r, 0.0);
}

TEST(BehavAlign, FirstWordOfEachStoryMasked) {
  // The first words would break the linear relation if included.
  const std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<double> rt{900, 240, 260, 280, 900, 320, 340, 360};
  const auto t = table(rt, 2);
  const auto masked = behav_align(s, t);
  EXPECT_NEAR(masked.r, 1.0, 1e-12);
  EXPECT_EQ(masked.n, 6u);
  BehaviorOptions opt;
  opt.include_first_word = true;
  EXPECT_LT(behav_align(s, t, opt).r, 0.9);
}

TEST(BehavAlign, AllNanParticipantChangesNothing) {
  const auto data = synthbench::gen_behavior({.words = 200, .participants = 4, .sigma = 20.0}, 5);
  const auto ws = word_surprisal(data.track);
  const double base = behav_align(ws, data.rts).r;
  auto wider = data.rts;
  wider.rts.conservativeResize(Eigen::NoChange, 5);
  wider.rts.col(4).setConstant(std::nan(""));
  EXPECT_DOUBLE_EQ(behav_align(ws, wider).r, base);
  EXPECT_EQ(behav_align_per_participant(ws, wider).size(), 4u);
}

TEST(BehavAlign, MedianAggregationAndLengthErrors) {
  ReadingTimeTable t = table({1, 2, 3, 4});
  t.rts.conservativeResize(Eigen::NoChange, 3);
  t.rts.col(1) << 10, 20, 30, 40;
  t.rts.col(2) << 2, 3, 4, 5;
  BehaviorOptions opt;
  opt.aggregation = ParticipantAggregation::median;
  opt.include_first_word = true;
  const auto agg = aggregate_rts(t, opt);
  EXPECT_EQ(agg, (std::vector<double>{2, 3, 4, 5}));
  EXPECT_THROW(behav_align({1, 2, 3}, t), DataError);
}

TEST(ReadingTimes, FutrellShapedBundle) {
  const auto dir = scratch_dir();
  const auto data = synthbench::gen_behavior({.words = 10256, .participants = 179, .stories = 10, .missing = 0.1}, 6);
  write_reading_times(data.rts, dir);
  const auto back = load_reading_times(dir);
  EXPECT_EQ(back.rts.rows(), 10256);
  EXPECT_EQ(back.rts.cols(), 179);
  EXPECT_EQ(back.story_ids.back(), 9);
  EXPECT_TRUE(back.rts.hasNaN());
  EXPECT_GT(behav_align(word_surprisal(data.track), back).r, 0.9);
}

// ---------------------------------------------------------- gain report

TEST(BehavGainReport, IdenticalScoresUnchanged) {
  const auto rep = behav_gain_report({{"a", 0.3}, {"b", 0.3}, {"c", 0.3}}, {{"b", "a"}, {"c", "a"}});
  EXPECT_EQ(rep.unchanged, 2u);
  EXPECT_EQ(rep.not_improved(), 2u);
}

TEST(BehavGainReport, BundledPairSpotChecks) {
  const auto dir = testutil::data_dir();
  const auto props = analysis::load_model_properties(fs::path(dir) / "model_properties.csv");
  const auto scores = analysis::load_alignment_table(fs::path(dir) / "behavioral_alignment.csv").column("futrell2018");
  const auto rep = behav_gain_report(scores, props.pairs());
  auto find = [&](const std::string& tuned) {
    for (const auto& p : rep.pairs)
      if (p.tuned == tuned) return p;
    throw std::runtime_error("pair not found: " + tuned);
  };
  const auto t5 = find("flan-t5-base");
  EXPECT_EQ(t5.vanilla, "t5-base");
  EXPECT_NEAR(t5.delta, -0.181, 1e-9);
  EXPECT_EQ(t5.verdict, Verdict::degraded);
  const auto g = find("gpt2-xl-alpaca");
  EXPECT_NEAR(g.delta, 0.018, 1e-9);
  EXPECT_EQ(g.verdict, Verdict::improved);

  EXPECT_EQ(rep.pairs.size(), 21u);
  EXPECT_EQ(rep.improved, 9u);
  EXPECT_GE(rep.not_improved() * 2, rep.pairs.size());
  EXPECT_THROW(behav_gain_report(scores, {{"flan-t5-base", "missing"}}), DataError);
}

TEST(BehavGainReport, ToleranceBoundary) {
  const auto rep = behav_gain_report({{"v", 0.300}, {"t", 0.305}, {"u", 0.294}}, {{"t", "v"}, {"u", "v"}});
  EXPECT_EQ(rep.pairs[0].verdict, Verdict::unchanged);
  EXPECT_EQ(rep.pairs[1].verdict, Verdict::degraded);
  const json j = to_json(rep);
  EXPECT_EQ(j["pairs"][1]["verdict"], "degraded");
}
