#pragma once

// Planted linear stimulus-response systems with known attainable scores.

#include "brainalign/behavior.hpp"
#include "brainalign/common.hpp"
#include "brainalign/encoding.hpp"
#include "brainalign/temporal.hpp"
#include "brainalign/tensor_io.hpp"

#include <Eigen/QR>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace brainalign::synthbench {

struct SynthConfig {
  std::string dataset_id = "synthetic";
  RowSemantics granularity = RowSemantics::tr;
  std::size_t words = 5176;
  std::size_t trs = 1351;
  std::size_t sentences = 384;  // sentence granularity only
  std::size_t sentences_per_passage = 4;
  std::size_t k = 10;           // signal dimensions
  std::size_t nuisance = 0;     // extra low-variance feature dimensions
  double nuisance_scale = 0.3;
  std::size_t units = 12;       // per subject
  std::size_t subjects = 1;
  std::size_t runs = 4;
  int lag = 2;                  // planted delay in TRs
  double sigma = 1.0;           // noise sd relative to unit signal sd
  double tr_s = 2.0;
  std::size_t layers = 1;
  std::size_t signal_layer = 0;
  bool shared_weights = true;   // same planted map for every subject

  static SynthConfig wehbe_shaped() { return SynthConfig{}; }

  static SynthConfig blank_shaped() {
    SynthConfig c;
    c.dataset_id = "blank2014";
    c.trs = 1317;
    c.words = 4 * 1317;
    c.runs = 8;
    c.subjects = 5;
    c.units = 12;
    return c;
  }

  static SynthConfig pereira_shaped() {
    SynthConfig c;
    c.dataset_id = "pereira2018_exp2";
    c.granularity = RowSemantics::sentence;
    c.sentences = 384;
    c.words = 384 * 8;
    c.units = 12195;
    c.lag = 0;
    return c;
  }

  std::size_t rows() const { return granularity == RowSemantics::sentence ? sentences : trs; }
  std::size_t feature_dims() const { return k + nuisance; }

  void validate() const {
    if (k == 0 || units == 0 || subjects == 0 || layers == 0) throw ConfigError("synth: counts must be positive");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("synth: sigma must be finite and >= 0");
    if (signal_layer >= layers) throw ConfigError("synth: signal layer out of range");
    if (lag < 0 || lag > 4) throw ConfigError("synth: lag must be in 0..4");
    if (!(tr_s > 0.0)) throw ConfigError("synth: TR length must be > 0");
    if (granularity == RowSemantics::word) throw ConfigError("synth: granularity must be tr or sentence");
    if (granularity == RowSemantics::tr) {
      if (trs == 0 || runs == 0 || words == 0) throw ConfigError("synth: counts must be positive");
      if (runs > trs) throw DataError("synth: more runs than TRs");
      if (words < runs) throw DataError("synth: fewer words than runs");
      if (trs / runs <= static_cast<std::size_t>(lag)) throw DataError("synth: runs shorter than the planted lag");
    } else {
      if (sentences < 2 || sentences_per_passage == 0) throw ConfigError("synth: need >= 2 sentences");
      if (words < sentences) throw DataError("synth: fewer words than sentences");
    }
  }
};

inline void to_json(json& j, const SynthConfig& c) {
  j = json{{"dataset_id", c.dataset_id}, {"granularity", c.granularity}, {"words", c.words}, {"trs", c.trs},
           {"sentences", c.sentences}, {"sentences_per_passage", c.sentences_per_passage}, {"k", c.k},
           {"nuisance", c.nuisance}, {"nuisance_scale", c.nuisance_scale}, {"units", c.units}, {"subjects", c.subjects},
           {"runs", c.runs}, {"lag", c.lag}, {"sigma", c.sigma}, {"tr_s", c.tr_s}, {"layers", c.layers},
           {"signal_layer", c.signal_layer}, {"shared_weights", c.shared_weights}};
}

/// Applies keys present in `j` on top of `c`.
inline void merge_json(SynthConfig& c, const json& j) {
  try {
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("dataset_id", c.dataset_id);
    take("granularity", c.granularity);
    take("words", c.words);
    take("trs", c.trs);
    take("sentences", c.sentences);
    take("sentences_per_passage", c.sentences_per_passage);
    take("k", c.k);
    take("nuisance", c.nuisance);
    take("nuisance_scale", c.nuisance_scale);
    take("units", c.units);
    take("subjects", c.subjects);
    take("runs", c.runs);
    take("lag", c.lag);
    take("sigma", c.sigma);
    take("tr_s", c.tr_s);
    take("layers", c.layers);
    take("signal_layer", c.signal_layer);
    take("shared_weights", c.shared_weights);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
}

/// Correlation between the planted signal and the noisy response when the
/// signal has unit variance.
inline double attainable_r(double sigma) { return 1.0 / std::sqrt(1.0 + sigma * sigma); }
inline double attainable_r(const SynthConfig& cfg) { return attainable_r(cfg.sigma); }

struct SynthTruth {
  std::uint64_t seed = 0;
  int lag = 0;
  double sigma = 0.0;
  double attainable_r = 1.0;
  std::size_t signal_layer = 0;
  std::vector<Matrix> weights;  // per subject, k x units (before signal scaling)
  std::vector<double> layer_mix;
};

inline json to_json(const SynthTruth& t, const SynthConfig& cfg) {
  json w = json::array();
  for (const auto& m : t.weights) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row;
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(row);
    }
    w.push_back(rows);
  }
  return json{{"seed", t.seed}, {"lag", t.lag}, {"sigma", t.sigma}, {"attainable_r", t.attainable_r},
              {"signal_layer", t.signal_layer}, {"layer_mix", t.layer_mix}, {"weights", w}, {"config", cfg}};
}

struct SynthData {
  SynthConfig config;
  Matrix responses;
  ResponseMeta meta;
  StimulusTimeline timeline;
  std::vector<Matrix> layers;  // word rows (tr granularity) or sentence rows
  Matrix signal;               // noiseless standardized response
  SynthTruth truth;

  encoding::DatasetView view() const { return {responses, meta, timeline}; }
};

namespace detail {

using Rng = boost::random::mt19937_64;

inline Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  boost::random::normal_distribution<double> nd(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = nd(rng);
  return m;
}

inline Matrix random_rotation(Rng& rng, Eigen::Index d) {
  const Matrix g = gaussian(rng, d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR();
  for (Eigen::Index i = 0; i < d; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  return q;
}

/// Even split of n items into parts; the first n % parts get one extra.
inline std::vector<std::size_t> split_counts(std::size_t n, std::size_t parts) {
  std::vector<std::size_t> out(parts, n / parts);
  for (std::size_t i = 0; i < n % parts; ++i) ++out[i];
  return out;
}

inline StimulusTimeline tr_timeline(const SynthConfig& cfg) {
  StimulusTimeline t;
  const auto tr_per_run = split_counts(cfg.trs, cfg.runs);
  const auto w_per_run = split_counts(cfg.words, cfg.runs);
  std::size_t tr_index = 0, w_index = 0;
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    const double start = cfg.tr_s * static_cast<double>(tr_index);
    for (std::size_t i = 0; i < tr_per_run[r]; ++i, ++tr_index)
      t.trs.push_back({tr_index, cfg.tr_s * static_cast<double>(tr_index), static_cast<int>(r)});
    const double span = cfg.tr_s * static_cast<double>(tr_per_run[r]);
    const double step = span / static_cast<double>(w_per_run[r]);
    for (std::size_t i = 0; i < w_per_run[r]; ++i, ++w_index)
      t.words.push_back({w_index, "w" + std::to_string(w_index), start + step * static_cast<double>(i), static_cast<int>(r)});
  }
  return t;
}

inline StimulusTimeline sentence_timeline(const SynthConfig& cfg) {
  StimulusTimeline t;
  const auto w_per_sentence = split_counts(cfg.words, cfg.sentences);
  std::size_t w_index = 0;
  for (std::size_t s = 0; s < cfg.sentences; ++s) {
    const int passage = static_cast<int>(s / cfg.sentences_per_passage);
    SentenceGroup g{static_cast<int>(s), {}, passage};
    for (std::size_t i = 0; i < w_per_sentence[s]; ++i, ++w_index) {
      t.words.push_back({w_index, "w" + std::to_string(w_index), static_cast<double>(w_index), passage});
      g.word_indices.push_back(w_index);
    }
    t.sentences.push_back(std::move(g));
  }
  return t;
}

/// Row t takes row t - lag of the same run, zero before the run start.
inline Matrix shift_within_runs(const Matrix& x, int lag, const std::vector<int>& runs) {
  if (lag == 0) return x;
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  const auto starts = temporal::detail::run_starts(runs, static_cast<std::size_t>(x.rows()));
  for (std::size_t t = 0; t < static_cast<std::size_t>(x.rows()); ++t)
    if (t >= starts[t] + static_cast<std::size_t>(lag)) out.row(static_cast<Eigen::Index>(t)) = x.row(static_cast<Eigen::Index>(t) - lag);
  return out;
}

}  // namespace detail

/// Responses are a lagged linear map of the signal layer's features, scaled
/// to unit variance per unit, plus N(0, sigma^2) noise. Seed-deterministic.
inline SynthData gen_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  detail::Rng rng(seed);
  SynthData out;
  out.config = cfg;
  const bool tr = cfg.granularity == RowSemantics::tr;
  out.timeline = tr ? detail::tr_timeline(cfg) : detail::sentence_timeline(cfg);
  out.timeline.validate();

  const auto d = static_cast<Eigen::Index>(cfg.feature_dims());
  const auto k = static_cast<Eigen::Index>(cfg.k);
  const auto feat_rows = static_cast<Eigen::Index>(tr ? cfg.words : cfg.sentences);
  Matrix x = detail::gaussian(rng, feat_rows, d);
  if (cfg.nuisance > 0) x.rightCols(d - k) *= cfg.nuisance_scale;

  // Planted map, per subject.
  const auto v = static_cast<Eigen::Index>(cfg.units);
  const Matrix shared = detail::gaussian(rng, k, v);
  for (std::size_t s = 0; s < cfg.subjects; ++s)
    out.truth.weights.push_back(cfg.shared_weights || s == 0 ? shared : detail::gaussian(rng, k, v));

  Matrix driver = x.leftCols(k);
  std::vector<int> runs;
  if (tr) {
    driver = temporal::words_to_trs(driver, out.timeline, temporal::EmptyTrPolicy::carry_forward);
    runs = out.timeline.tr_runs();
    driver = detail::shift_within_runs(driver, cfg.lag, runs);
  }

  const auto n = static_cast<Eigen::Index>(cfg.rows());
  out.signal.resize(n, v * static_cast<Eigen::Index>(cfg.subjects));
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    Matrix sig = driver * out.truth.weights[s];
    for (Eigen::Index c = 0; c < v; ++c) {
      auto col = sig.col(c);
      col.array() -= col.mean();
      const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n));
      if (sd > 0.0) col /= sd;
    }
    out.signal.middleCols(static_cast<Eigen::Index>(s) * v, v) = sig;
  }
  out.responses = out.signal + detail::gaussian(rng, n, out.signal.cols(), cfg.sigma);

  out.meta.dataset_id = cfg.dataset_id;
  out.meta.granularity = cfg.granularity;
  for (std::size_t s = 0; s < cfg.subjects; ++s)
    for (std::size_t u = 0; u < cfg.units; ++u) {
      char id[64];
      std::snprintf(id, sizeof id, "s%02zu_v%05zu", s, u);
      char subj[16];
      std::snprintf(subj, sizeof subj, "s%02zu", s);
      out.meta.units.push_back({id, subj, UnitKind::voxel});
    }

  // Layers other than the signal layer are rotated and contaminated copies,
  // increasingly so with distance from the signal layer.
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const double dist = std::fabs(static_cast<double>(l) - static_cast<double>(cfg.signal_layer));
    const double mix = std::min(0.95, 0.35 * dist);
    out.truth.layer_mix.push_back(mix);
    if (l == cfg.signal_layer) {
      out.layers.push_back(x);
      continue;
    }
    const Matrix rot = detail::random_rotation(rng, d);
    const Matrix noise = detail::gaussian(rng, feat_rows, d);
    out.layers.push_back((std::sqrt(1.0 - mix * mix) * x + mix * noise) * rot);
  }

  out.truth.seed = seed;
  out.truth.lag = cfg.lag;
  out.truth.sigma = cfg.sigma;
  out.truth.attainable_r = attainable_r(cfg);
  out.truth.signal_layer = cfg.signal_layer;
  return out;
}

/// <dir>/{responses,meta,timeline}, <dir>/features/layer_XX and <dir>/truth.json.
inline void write_synthetic(const SynthData& data, const fs::path& dir) {
  write_dataset_bundle(data.responses, data.meta, data.timeline, dir);
  const auto sem = data.config.granularity == RowSemantics::tr ? RowSemantics::word : RowSemantics::sentence;
  fs::create_directories(dir / "features");
  for (std::size_t l = 0; l < data.layers.size(); ++l) {
    char name[32];
    std::snprintf(name, sizeof name, "layer_%02zu", l);
    const auto& m = data.layers[l];
    write_matrix(m, {name, MatrixRole::features, m.rows(), m.cols(), sem, "float32", false}, dir / "features" / name);
  }
  brainalign::detail::write_json_file(dir / "truth.json", to_json(data.truth, data.config));
}

// ---------------------------------------------------------------------------
// Behavioral synthetic data

struct BehaviorSynthConfig {
  std::size_t words = 1000;
  std::size_t participants = 10;
  std::size_t stories = 4;
  std::size_t max_tokens_per_word = 3;
  double intercept = 250.0;  // ms
  double slope = 12.0;       // ms per nat
  double sigma = 0.0;        // ms
  double missing = 0.0;      // fraction of readings set to NaN

  void validate() const {
    if (words < 3 || participants == 0 || stories == 0 || max_tokens_per_word == 0)
      throw ConfigError("behavior synth: counts must be positive (>= 3 words)");
    if (!(sigma >= 0.0) || !(missing >= 0.0 && missing < 1.0)) throw ConfigError("behavior synth: bad sigma or missing fraction");
  }
};

struct BehaviorSynthData {
  behavior::TokenSurprisalTrack track;
  behavior::ReadingTimeTable rts;
};

/// RT(word, participant) = intercept + slope * word surprisal + noise.
inline BehaviorSynthData gen_behavior(const BehaviorSynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  detail::Rng rng(seed);
  boost::random::uniform_int_distribution<std::size_t> ntok(1, cfg.max_tokens_per_word);
  boost::random::normal_distribution<double> nd(0.0, 1.0);
  BehaviorSynthData out;
  out.track.word_count = cfg.words;
  for (std::size_t w = 0; w < cfg.words; ++w) {
    const std::size_t n = ntok(rng);
    for (std::size_t t = 0; t < n; ++t) {
      out.track.surprisal.push_back(1.0 + 3.0 * std::fabs(nd(rng)));
      out.track.word_of_token.push_back(static_cast<std::uint32_t>(w));
    }
  }
  const auto ws = behavior::word_surprisal(out.track);
  const auto per_story = detail::split_counts(cfg.words, cfg.stories);
  std::size_t w = 0;
  for (std::size_t s = 0; s < cfg.stories; ++s)
    for (std::size_t i = 0; i < per_story[s]; ++i, ++w) {
      out.rts.words.push_back("w" + std::to_string(w));
      out.rts.story_ids.push_back(static_cast<int>(s));
    }
  out.rts.rts.resize(static_cast<Eigen::Index>(cfg.words), static_cast<Eigen::Index>(cfg.participants));
  boost::random::uniform_int_distribution<std::uint64_t> coin(0, 999999);
  for (Eigen::Index r = 0; r < out.rts.rts.rows(); ++r)
    for (Eigen::Index p = 0; p < out.rts.rts.cols(); ++p) {
      double v = cfg.intercept + cfg.slope * ws[static_cast<std::size_t>(r)] + cfg.sigma * nd(rng);
      if (cfg.missing > 0.0 && static_cast<double>(coin(rng)) < cfg.missing * 1e6) v = std::nan("");
      out.rts.rts(r, p) = v;
    }
  return out;
}

}  // namespace brainalign::synthbench
