#include "brainalign/cli.hpp"
#include "helpers.hpp"

#include <fstream>
#include <sstream>

using namespace brainalign;
using testutil::scratch_dir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
  json j() const { return json::parse(out); }
  json diag() const { return json::parse(err); }
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "brainalign");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small four-run bundle with one planted layer.
fs::path small_bundle(const fs::path& dir, const std::string& sigma) {
  const auto r = run({"synth", "--preset", "custom", "--trs", "240", "--words", "960", "--units", "6", "--layers", "2",
                      "--signal-layer", "1", "--sigma", sigma, "--seed", "3", "--out", dir.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

}  // namespace

TEST(Cli, DryRunEchoesConfig) {
  const auto dir = small_bundle(scratch_dir() / "b", "1");
  const auto r = run({"brain-align", "--bundle", dir.string(), "--features", (dir / "features").string(), "--dataset", "wehbe2014",
                      "--pca", "10", "--lags", "4", "--folds", "run", "--trim", "10", "--dry-run"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = r.j();
  EXPECT_TRUE(j["dry_run"].get<bool>());
  EXPECT_EQ(j["config"]["pca"], 10);
  EXPECT_EQ(j["config"]["lags"], 4);
  EXPECT_EQ(j["config"]["folds"], "run");
  EXPECT_EQ(j["config"]["trim"], 10);
  EXPECT_EQ(j["bundle"]["rows"], 240);
  EXPECT_EQ(j["bundle"]["cols"], 6);
  EXPECT_EQ(j["layers"].size(), 2u);
  EXPECT_EQ(j["layers"][0]["rows"], 960);
}

TEST(Cli, ExitCodes) {
  const auto missing = run({"brain-align", "--bundle", (scratch_dir() / "none").string(), "--features", "x"});
  EXPECT_EQ(missing.code, 3);
  EXPECT_EQ(missing.diag()["error"], "data_error");
  EXPECT_EQ(missing.diag()["exit_code"], 3);

  const auto pred = run({"correlate", "--predictors", "shoe_size"});
  EXPECT_EQ(pred.code, 2);
  EXPECT_EQ(pred.diag()["error"], "config_error");

  EXPECT_EQ(run({"brain-align", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"synth", "--preset", "huge", "--out", (scratch_dir() / "s").string()}).code, 2);
  EXPECT_EQ(run({"synth", "--trs", "many", "--out", (scratch_dir() / "s").string()}).code, 2);
  EXPECT_EQ(run({"correlate", "--format", "pdf"}).code, 2);
  EXPECT_EQ(run({"ceiling", "--bundle", "x", "--estimator", "guess"}).code, 2);
}

TEST(Cli, SynthIsDeterministic) {
  const auto dir = scratch_dir();
  small_bundle(dir / "a", "1");
  small_bundle(dir / "b", "1");
  for (const char* f : {"responses.f32", "meta.json", "timeline.json", "truth.json", "features/layer_01.f32"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST(Cli, BrainAlignRecoversCleanSignal) {
  const auto root = scratch_dir();
  const auto dir = small_bundle(root / "b", "0");
  const auto out = root / "out";
  const auto r = run({"brain-align", "--bundle", dir.string(), "--features", (dir / "features").string(), "--model", "toy",
                      "--out", out.string(), "--threads", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = r.j();
  EXPECT_GE(j["overall"].get<double>(), 0.99);
  EXPECT_EQ(j["layer"], 1);
  EXPECT_EQ(j["model"], "toy");
  EXPECT_EQ(j["layer_curve"].size(), 2u);
  EXPECT_TRUE(fs::exists(out / "score.json"));
  EXPECT_EQ(slurp(out / "layer_curve.csv").rfind("layer,name,score\n", 0), 0u);

  const auto cka = run({"brain-align", "--bundle", dir.string(), "--features", (dir / "features").string(), "--metric", "cka"});
  ASSERT_EQ(cka.code, 0) << cka.err;
  EXPECT_EQ(cka.j()["metric"], "cka");
}

TEST(Cli, ConfigFileFlagsWin) {
  const auto root = scratch_dir();
  const auto dir = small_bundle(root / "b", "1");
  const auto cfg = root / "cfg.json";
  std::ofstream(cfg) << R"({"pca": "5", "trim": 3, "lambda_grid": [1, 10]})";
  const auto r = run({"brain-align", "--bundle", dir.string(), "--features", (dir / "features").string(), "--config", cfg.string(),
                      "--trim", "7", "--dry-run"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = r.j();
  EXPECT_EQ(j["config"]["pca"], 5);
  EXPECT_EQ(j["config"]["trim"], 7);
  EXPECT_EQ(j["config"]["lambda_grid"], (json{1.0, 10.0}));

  std::ofstream(cfg) << R"({"colour": "blue"})";
  EXPECT_EQ(run({"brain-align", "--bundle", dir.string(), "--features", "f", "--config", cfg.string()}).code, 2);
}

TEST(Cli, BehavAlignAffineAndDegenerate) {
  const auto dir = scratch_dir();
  const auto s = run({"synth", "--kind", "behavior", "--sigma", "0", "--behavior-words", "400", "--participants", "3", "--out",
                      dir.string()});
  ASSERT_EQ(s.code, 0) << s.err;
  const auto r = run({"behav-align", "--rts", (dir / "rts").string(), "--surprisal", (dir / "surprisal").string(), "--model", "toy"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(r.j()["r"].get<double>(), 1.0, 1e-9);
  EXPECT_FALSE(r.j()["degenerate"].get<bool>());

  const auto flat = dir / "flat";
  const auto rts = behavior::load_reading_times(dir / "rts");
  behavior::TokenSurprisalTrack t;
  for (std::size_t w = 0; w < rts.words.size(); ++w) {
    t.surprisal.push_back(2.0);
    t.word_of_token.push_back(static_cast<std::uint32_t>(w));
  }
  t.word_count = rts.words.size();
  behavior::write_track(t, flat);
  const auto d = run({"behav-align", "--rts", (dir / "rts").string(), "--surprisal", flat.string()});
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_TRUE(d.j()["degenerate"].get<bool>());
  EXPECT_EQ(d.j()["r"], 0.0);
}

TEST(Cli, CorrelateTwoScopes) {
  const auto out = scratch_dir();
  const auto r = run({"correlate", "--scope", "instruction-tuned", "--scope", "all-models", "--predictors", "log10_params,alignment",
                      "--out", out.string(), "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = r.j();
  ASSERT_EQ(j["ledgers"].size(), 2u);
  EXPECT_TRUE(fs::exists(out / "ledger_average_instruction-tuned.csv"));
  EXPECT_TRUE(fs::exists(out / "ledger_average_all-models.csv"));
  EXPECT_EQ(run({"correlate", "--predictors", "nwp_loss"}).code, 2);
  EXPECT_EQ(run({"correlate", "--predictors", "nwp_loss", "--allow-mixed-families"}).code, 0);
}

TEST(Cli, GainsAndReport) {
  const auto g = run({"gains"});
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_FALSE(g.out.empty());

  // The default scope drops the near-random gpt2 models.
  const auto b = run({"gains", "--behavior"});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(b.j()["pairs"].size(), 17u);
  EXPECT_EQ(b.j()["not_improved"], 10);
  const auto all = run({"gains", "--behavior", "--scope", "all-models"});
  ASSERT_EQ(all.code, 0) << all.err;
  EXPECT_EQ(all.j()["pairs"].size(), 21u);
  EXPECT_EQ(all.j()["not_improved"], 12);

  const auto out = scratch_dir();
  const auto r = run({"report", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "report.md"));
  EXPECT_TRUE(fs::exists(out / "report.json"));
  EXPECT_TRUE(fs::exists(out / "gains_scatter.csv"));

  const auto again = run({"report", "--input", (out / "report.json").string(), "--format", "markdown", "--out", (out / "re").string()});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(out / "report.md"), slurp(out / "re" / "report.md"));
  EXPECT_EQ(run({"report"}).code, 2);
}

TEST(Cli, Ceiling) {
  const auto dir = scratch_dir() / "b";
  const auto s = run({"synth", "--preset", "custom", "--trs", "240", "--words", "960", "--units", "6", "--subjects", "2",
                      "--sigma", "0", "--out", dir.string()});
  ASSERT_EQ(s.code, 0) << s.err;
  const auto r = run({"ceiling", "--bundle", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(r.j()["ceiling"].get<double>(), 0.99);
  EXPECT_EQ(r.j()["subjects"].size(), 2u);
  // no reference value exists for a synthetic dataset id
  EXPECT_EQ(run({"ceiling", "--bundle", dir.string(), "--estimator", "reference"}).code, 2);
}
