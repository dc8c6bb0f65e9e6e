#pragma once

// Behavioral alignment: word surprisal from token surprisals, correlated with
// per-word human reading times.

#include "brainalign/common.hpp"
#include "brainalign/numstats.hpp"
#include "brainalign/tensor_io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace brainalign::behavior {

/// Token surprisals in nats with a token -> word map. Tokens of one word are
/// contiguous and every word owns at least one token.
struct TokenSurprisalTrack {
  std::vector<double> surprisal;
  std::vector<std::uint32_t> word_of_token;
  std::size_t word_count = 0;

  void validate() const {
    if (surprisal.size() != word_of_token.size()) throw DataError("surprisal track: token and map lengths differ");
    if (surprisal.empty() || word_count == 0) throw DataError("surprisal track: empty");
    for (std::size_t t = 0; t < surprisal.size(); ++t) {
      if (!(surprisal[t] >= 0.0) || !std::isfinite(surprisal[t])) throw DataError("surprisal track: token " + std::to_string(t) + " has invalid surprisal");
      const auto w = word_of_token[t];
      if (w >= word_count) throw DataError("surprisal track: token " + std::to_string(t) + " mapped to no word");
      const std::uint32_t prev = t == 0 ? 0 : word_of_token[t - 1];
      if ((t == 0 && w != 0) || (t > 0 && w != prev && w != prev + 1))
        throw DataError("surprisal track: token spans are not contiguous at token " + std::to_string(t));
    }
    if (word_of_token.back() + 1 != word_count) throw DataError("surprisal track: words without tokens");
  }
};

inline std::vector<double> word_surprisal(const TokenSurprisalTrack& track) {
  track.validate();
  std::vector<double> out(track.word_count, 0.0);
  for (std::size_t t = 0; t < track.surprisal.size(); ++t) out[track.word_of_token[t]] += track.surprisal[t];
  return out;
}

// File format: <stem>.json {name, tokens, words, surprisal_payload, word_index_payload}
// plus <stem>.surprisal.f32 (float32 LE) and <stem>.word_index.u32 (uint32 LE).
inline void write_track(const TokenSurprisalTrack& track, const fs::path& stem_in, const std::string& name = "surprisal") {
  track.validate();
  const fs::path stem = detail::stem_path(stem_in);
  const std::string base = stem.filename().string();
  std::vector<std::uint32_t> s(track.surprisal.size());
  std::vector<std::uint32_t> w(track.word_of_token.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = detail::to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(track.surprisal[i])));
    w[i] = detail::to_little_endian(track.word_of_token[i]);
  }
  auto dump = [](const fs::path& p, const std::vector<std::uint32_t>& v) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
  };
  dump(detail::with_ext(stem, ".surprisal.f32"), s);
  dump(detail::with_ext(stem, ".word_index.u32"), w);
  detail::write_json_file(detail::with_ext(stem, ".json"),
                          json{{"name", name},
                               {"tokens", track.surprisal.size()},
                               {"words", track.word_count},
                               {"surprisal_payload", base + ".surprisal.f32"},
                               {"word_index_payload", base + ".word_index.u32"}});
}

inline TokenSurprisalTrack read_track(const fs::path& stem_in) {
  const fs::path stem = detail::stem_path(stem_in);
  const json j = detail::read_json_file(detail::with_ext(stem, ".json"));
  TokenSurprisalTrack track;
  std::size_t tokens = 0;
  fs::path s_path, w_path;
  try {
    tokens = j.at("tokens").get<std::size_t>();
    track.word_count = j.at("words").get<std::size_t>();
    s_path = stem.parent_path() / j.at("surprisal_payload").get<std::string>();
    w_path = stem.parent_path() / j.at("word_index_payload").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(std::string("surprisal track manifest: ") + e.what());
  }
  auto load = [tokens](const fs::path& p) {
    std::error_code ec;
    const auto size = fs::file_size(p, ec);
    if (ec) throw DataError("missing payload " + p.string());
    if (size < tokens * 4) throw DataError("truncated payload: " + p.string());
    if (size > tokens * 4) throw DataError("manifest/payload size conflict: " + p.string());
    std::vector<std::uint32_t> v(tokens);
    std::ifstream in(p, std::ios::binary);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(tokens * 4));
    for (auto& x : v) x = detail::to_little_endian(x);
    return v;
  };
  const auto s = load(s_path);
  track.word_of_token = load(w_path);
  track.surprisal.resize(tokens);
  for (std::size_t i = 0; i < tokens; ++i) track.surprisal[i] = static_cast<double>(std::bit_cast<float>(s[i]));
  track.validate();
  return track;
}

/// Per-word, per-participant reading times in ms; NaN marks a missing reading.
struct ReadingTimeTable {
  Matrix rts;
  std::vector<std::string> words;
  std::vector<int> story_ids;

  void validate() const {
    if (static_cast<std::size_t>(rts.rows()) != words.size() || words.size() != story_ids.size())
      throw DataError("reading times: table rows, word texts and story ids disagree");
  }
};

/// Reads <dir>/rts.{json,f32} (word x participant, nan_allowed) and
/// <dir>/timeline.json, whose word run_id is the story id.
inline ReadingTimeTable load_reading_times(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("reading-time bundle not found: " + dir.string());
  const auto m = read_matrix(dir / "rts");
  if (m.manifest.row_semantics != RowSemantics::word) throw DataError("reading times must have row_semantics=word");
  const auto timeline = read_timeline(dir / "timeline.json");
  check_rows_against_timeline(m.manifest.rows, RowSemantics::word, timeline, "reading times");
  ReadingTimeTable t;
  t.rts = m.values;
  for (const auto& w : timeline.words) {
    t.words.push_back(w.text);
    t.story_ids.push_back(w.run_id);
  }
  return t;
}

inline void write_reading_times(const ReadingTimeTable& t, const fs::path& dir) {
  t.validate();
  fs::create_directories(dir);
  StimulusTimeline tl;
  for (std::size_t i = 0; i < t.words.size(); ++i) tl.words.push_back({i, t.words[i], static_cast<double>(i), t.story_ids[i]});
  write_matrix(t.rts, {"rts", MatrixRole::responses, t.rts.rows(), t.rts.cols(), RowSemantics::word, "float32", true}, dir / "rts");
  write_timeline(tl, dir / "timeline.json");
}

enum class ParticipantAggregation { mean, median };

struct BehaviorOptions {
  bool include_first_word = false;
  ParticipantAggregation aggregation = ParticipantAggregation::mean;
};

/// Per-word participant aggregate over non-NaN readings (NaN when none), with
/// the first word of each story masked unless include_first_word.
inline std::vector<double> aggregate_rts(const ReadingTimeTable& rts, const BehaviorOptions& opt = {}) {
  rts.validate();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> out(rts.words.size(), nan);
  for (Eigen::Index w = 0; w < rts.rts.rows(); ++w) {
    std::vector<double> valid;
    for (Eigen::Index p = 0; p < rts.rts.cols(); ++p)
      if (!std::isnan(rts.rts(w, p))) valid.push_back(rts.rts(w, p));
    if (valid.empty()) continue;
    if (opt.aggregation == ParticipantAggregation::median) {
      out[static_cast<std::size_t>(w)] = numstats::median(valid);
    } else {
      double s = 0.0;
      for (double v : valid) s += v;
      out[static_cast<std::size_t>(w)] = s / static_cast<double>(valid.size());
    }
  }
  if (!opt.include_first_word)
    for (std::size_t w = 0; w < out.size(); ++w)
      if (w == 0 || rts.story_ids[w] != rts.story_ids[w - 1]) out[w] = nan;
  return out;
}

inline numstats::CorrelationResult behav_align(const std::vector<double>& surprisal, const ReadingTimeTable& rts,
                                               const BehaviorOptions& opt = {}) {
  if (surprisal.size() != rts.words.size())
    throw DataError("behav_align: " + std::to_string(surprisal.size()) + " surprisal values for " +
                    std::to_string(rts.words.size()) + " words");
  const auto mean_rt = aggregate_rts(rts, opt);
  std::size_t valid = 0;
  for (std::size_t w = 0; w < mean_rt.size(); ++w) valid += (!std::isnan(mean_rt[w]) && !std::isnan(surprisal[w])) ? 1 : 0;
  if (valid < 3) throw DataError("behav_align: fewer than 3 words with reading times");
  return numstats::pearson(surprisal, mean_rt);
}

/// Alternative mode: one correlation per participant (participants with
/// fewer than 3 readings are skipped).
inline std::vector<numstats::CorrelationResult> behav_align_per_participant(const std::vector<double>& surprisal,
                                                                           const ReadingTimeTable& rts,
                                                                           const BehaviorOptions& opt = {}) {
  if (surprisal.size() != rts.words.size()) throw DataError("behav_align: surprisal length mismatch");
  std::vector<numstats::CorrelationResult> out;
  for (Eigen::Index p = 0; p < rts.rts.cols(); ++p) {
    ReadingTimeTable one{rts.rts.col(p), rts.words, rts.story_ids};
    const auto col = aggregate_rts(one, opt);
    std::size_t valid = 0;
    for (double v : col) valid += std::isnan(v) ? 0 : 1;
    if (valid < 3) continue;
    out.push_back(numstats::pearson(surprisal, col));
  }
  return out;
}

enum class Verdict { improved, unchanged, degraded };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::improved: return "improved";
    case Verdict::unchanged: return "unchanged";
    case Verdict::degraded: return "degraded";
  }
  return "unchanged";
}

struct PairDelta {
  std::string tuned;
  std::string vanilla;
  double tuned_score = 0.0;
  double vanilla_score = 0.0;
  double delta = 0.0;
  Verdict verdict = Verdict::unchanged;
};

struct BehaviorGainReport {
  std::vector<PairDelta> pairs;
  std::size_t improved = 0;
  std::size_t unchanged = 0;
  std::size_t degraded = 0;

  std::size_t not_improved() const { return unchanged + degraded; }
};

/// pairs: (instruction-tuned model, vanilla base). |delta| <= tolerance is "unchanged".
inline BehaviorGainReport behav_gain_report(const std::map<std::string, double>& scores,
                                            const std::vector<std::pair<std::string, std::string>>& pairs,
                                            double tolerance = 0.005) {
  BehaviorGainReport rep;
  for (const auto& [tuned, vanilla] : pairs) {
    auto it = scores.find(tuned);
    auto vb = scores.find(vanilla);
    if (it == scores.end() || vb == scores.end())
      throw DataError("behav_gain_report: unpaired model (" + tuned + " / " + vanilla + ")");
    PairDelta d{tuned, vanilla, it->second, vb->second, it->second - vb->second, Verdict::unchanged};
    // Slack absorbs binary representation of 3-decimal table values.
    if (d.delta > tolerance + 1e-9) d.verdict = Verdict::improved;
    else if (d.delta < -tolerance - 1e-9) d.verdict = Verdict::degraded;
    switch (d.verdict) {
      case Verdict::improved: ++rep.improved; break;
      case Verdict::unchanged: ++rep.unchanged; break;
      case Verdict::degraded: ++rep.degraded; break;
    }
    rep.pairs.push_back(d);
  }
  return rep;
}

inline json to_json(const BehaviorGainReport& rep) {
  json pairs = json::array();
  for (const auto& p : rep.pairs)
    pairs.push_back({{"tuned", p.tuned}, {"vanilla", p.vanilla}, {"tuned_score", p.tuned_score},
                     {"vanilla_score", p.vanilla_score}, {"delta", p.delta}, {"verdict", verdict_name(p.verdict)}});
  return json{{"pairs", pairs}, {"improved", rep.improved}, {"unchanged", rep.unchanged}, {"degraded", rep.degraded}};
}

}  // namespace brainalign::behavior
