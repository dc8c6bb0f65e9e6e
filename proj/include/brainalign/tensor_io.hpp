#pragma once

// Interchange formats. A matrix is a pair of files sharing a stem:
//   <stem>.json  manifest {name, role, rows, cols, row_semantics, element_type, nan_allowed}
//   <stem>.f32   row-major little-endian float32 payload
// Timelines and response metadata are plain JSON documents of records.

#include "brainalign/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace brainalign {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class MatrixRole { features, responses, predictions };
enum class RowSemantics { word, sentence, tr };
enum class UnitKind { voxel, roi, participant };

NLOHMANN_JSON_SERIALIZE_ENUM(MatrixRole, {{MatrixRole::features, "features"},
                                          {MatrixRole::responses, "responses"},
                                          {MatrixRole::predictions, "predictions"}})
NLOHMANN_JSON_SERIALIZE_ENUM(RowSemantics, {{RowSemantics::word, "word"},
                                            {RowSemantics::sentence, "sentence"},
                                            {RowSemantics::tr, "tr"}})
NLOHMANN_JSON_SERIALIZE_ENUM(UnitKind, {{UnitKind::voxel, "voxel"},
                                        {UnitKind::roi, "roi"},
                                        {UnitKind::participant, "participant"}})

inline std::string to_string(RowSemantics s) { return json(s).get<std::string>(); }

struct MatrixManifest {
  std::string name;
  MatrixRole role = MatrixRole::features;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  RowSemantics row_semantics = RowSemantics::word;
  std::string element_type = "float32";
  bool nan_allowed = false;

  bool operator==(const MatrixManifest&) const = default;
};

inline void to_json(json& j, const MatrixManifest& m) {
  j = json{{"name", m.name},
           {"role", m.role},
           {"rows", m.rows},
           {"cols", m.cols},
           {"row_semantics", m.row_semantics},
           {"element_type", m.element_type},
           {"nan_allowed", m.nan_allowed}};
}

namespace detail {

template <class E>
E parse_enum(const json& j, const char* key, std::initializer_list<const char*> allowed) {
  const auto s = j.at(key).get<std::string>();
  if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return s == a; }) == allowed.end())
    throw DataError(std::string("manifest: invalid ") + key + " '" + s + "'");
  return j.at(key).get<E>();
}

}  // namespace detail

inline void from_json(const json& j, MatrixManifest& m) {
  m.name = j.at("name").get<std::string>();
  m.role = detail::parse_enum<MatrixRole>(j, "role", {"features", "responses", "predictions"});
  m.rows = j.at("rows").get<std::int64_t>();
  m.cols = j.at("cols").get<std::int64_t>();
  m.row_semantics = detail::parse_enum<RowSemantics>(j, "row_semantics", {"word", "sentence", "tr"});
  m.element_type = j.at("element_type").get<std::string>();
  m.nan_allowed = j.value("nan_allowed", false);
}

struct LoadedMatrix {
  Matrix values;
  MatrixManifest manifest;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> nan_mask;  // true where the payload held NaN
  bool has_nan() const { return nan_mask.size() > 0 && nan_mask.any(); }
};

namespace detail {

inline fs::path stem_path(const fs::path& p) {
  const auto ext = p.extension();
  if (ext == ".json" || ext == ".f32") return fs::path(p).replace_extension();
  return p;
}

inline fs::path with_ext(const fs::path& stem, const char* ext) { return fs::path(stem.string() + ext); }

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

inline json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

inline void write_json_file(const fs::path& p, const json& j) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + p.string());
}

inline void validate_values(const Matrix& m, const MatrixManifest& man) {
  const bool nan_ok = man.nan_allowed && man.role == MatrixRole::responses;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];
    if (std::isnan(v)) {
      if (!nan_ok) throw DataError("NaN policy violation in '" + man.name + "' (NaN allowed only in responses with nan_allowed)");
    } else if (!std::isfinite(v)) {
      throw DataError("non-finite value in '" + man.name + "'");
    }
  }
}

}  // namespace detail

/// Writes `<stem>.json` and `<stem>.f32`. Values are narrowed to float32.
inline void write_matrix(const Matrix& m, const MatrixManifest& manifest, const fs::path& path) {
  if (manifest.rows < 1 || manifest.cols < 1) throw DataError("write_matrix: rows and cols must be >= 1");
  if (manifest.rows != m.rows() || manifest.cols != m.cols())
    throw DataError("write_matrix: dimension mismatch (manifest " + std::to_string(manifest.rows) + "x" +
                    std::to_string(manifest.cols) + ", matrix " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + ")");
  if (manifest.element_type != "float32") throw DataError("write_matrix: element_type must be float32");
  detail::validate_values(m, manifest);

  const fs::path stem = detail::stem_path(path);
  std::vector<std::uint32_t> payload(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      payload[k++] = detail::to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));

  std::ofstream out(detail::with_ext(stem, ".f32"), std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("write_matrix: cannot write " + detail::with_ext(stem, ".f32").string());
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
  if (!out) throw DataError("write_matrix: write failed");
  detail::write_json_file(detail::with_ext(stem, ".json"), json(manifest));
}

inline MatrixManifest read_manifest(const fs::path& path) {
  const json j = detail::read_json_file(detail::with_ext(detail::stem_path(path), ".json"));
  MatrixManifest man;
  try {
    man = j.get<MatrixManifest>();
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  if (man.rows < 1 || man.cols < 1) throw DataError("manifest: rows and cols must be >= 1");
  if (man.element_type != "float32") throw DataError("manifest: unsupported element_type '" + man.element_type + "'");
  return man;
}

inline LoadedMatrix read_matrix(const fs::path& path) {
  const fs::path stem = detail::stem_path(path);
  LoadedMatrix out;
  out.manifest = read_manifest(stem);
  const auto& man = out.manifest;

  const fs::path payload_path = detail::with_ext(stem, ".f32");
  std::error_code ec;
  const auto size = fs::file_size(payload_path, ec);
  if (ec) throw DataError("missing payload " + payload_path.string());
  const auto expected = static_cast<std::uintmax_t>(man.rows) * static_cast<std::uintmax_t>(man.cols) * 4u;
  if (size < expected) throw DataError("truncated payload: " + payload_path.string());
  if (size > expected) throw DataError("manifest/payload size conflict: " + payload_path.string());

  std::vector<std::uint32_t> raw(static_cast<std::size_t>(man.rows * man.cols));
  std::ifstream in(payload_path, std::ios::binary);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));
  if (!in) throw DataError("truncated payload: " + payload_path.string());

  out.values.resize(man.rows, man.cols);
  out.nan_mask.resize(man.rows, man.cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < man.rows; ++r) {
    for (Eigen::Index c = 0; c < man.cols; ++c) {
      const float f = std::bit_cast<float>(detail::to_little_endian(raw[k++]));
      out.values(r, c) = static_cast<double>(f);
      out.nan_mask(r, c) = std::isnan(f);
    }
  }
  detail::validate_values(out.values, man);
  return out;
}

// ---------------------------------------------------------------------------
// Stimulus timeline

struct WordRecord {
  std::size_t index = 0;
  std::string text;
  double onset_s = 0.0;
  int run_id = 0;
};

struct TrRecord {
  std::size_t index = 0;
  double onset_s = 0.0;
  int run_id = 0;
};

struct SentenceGroup {
  int sentence_id = 0;
  std::vector<std::size_t> word_indices;
  int passage_id = 0;
};

inline void to_json(json& j, const WordRecord& w) {
  j = json{{"index", w.index}, {"text", w.text}, {"onset_s", w.onset_s}, {"run_id", w.run_id}};
}
inline void from_json(const json& j, WordRecord& w) {
  w.index = j.at("index").get<std::size_t>();
  w.text = j.value("text", std::string{});
  w.onset_s = j.at("onset_s").get<double>();
  w.run_id = j.at("run_id").get<int>();
}
inline void to_json(json& j, const TrRecord& t) {
  j = json{{"index", t.index}, {"onset_s", t.onset_s}, {"run_id", t.run_id}};
}
inline void from_json(const json& j, TrRecord& t) {
  t.index = j.at("index").get<std::size_t>();
  t.onset_s = j.at("onset_s").get<double>();
  t.run_id = j.at("run_id").get<int>();
}
inline void to_json(json& j, const SentenceGroup& s) {
  j = json{{"sentence_id", s.sentence_id}, {"word_indices", s.word_indices}, {"passage_id", s.passage_id}};
}
inline void from_json(const json& j, SentenceGroup& s) {
  s.sentence_id = j.at("sentence_id").get<int>();
  s.word_indices = j.value("word_indices", std::vector<std::size_t>{});
  s.passage_id = j.value("passage_id", 0);
}

struct StimulusTimeline {
  std::vector<WordRecord> words;
  std::vector<TrRecord> trs;
  std::vector<SentenceGroup> sentences;

  std::size_t word_count() const { return words.size(); }
  std::size_t tr_count() const { return trs.size(); }

  std::vector<int> tr_runs() const {
    std::vector<int> r;
    r.reserve(trs.size());
    for (const auto& t : trs) r.push_back(t.run_id);
    return r;
  }

  std::vector<int> sentence_passages() const {
    std::vector<int> p;
    p.reserve(sentences.size());
    for (const auto& s : sentences) p.push_back(s.passage_id);
    return p;
  }

  /// Throws DataError on any violated invariant.
  void validate() const {
    auto check_sequence = [](const auto& recs, const char* what) {
      std::map<int, double> last_onset;
      std::set<int> closed_runs;
      int current = 0;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        if (r.index != i) throw DataError(std::string("timeline: ") + what + " index " + std::to_string(r.index) + " out of order");
        if (!std::isfinite(r.onset_s)) throw DataError(std::string("timeline: non-finite ") + what + " onset");
        if (i > 0 && r.run_id != current) {
          closed_runs.insert(current);
          if (closed_runs.count(r.run_id)) throw DataError(std::string("timeline: ") + what + " run " + std::to_string(r.run_id) + " is not contiguous");
        }
        current = r.run_id;
        auto it = last_onset.find(r.run_id);
        if (it != last_onset.end() && r.onset_s < it->second)
          throw DataError(std::string("timeline: ") + what + " onsets decrease within run " + std::to_string(r.run_id));
        last_onset[r.run_id] = r.onset_s;
      }
    };
    check_sequence(words, "word");
    check_sequence(trs, "tr");

    if (!trs.empty()) {
      std::set<int> runs;
      for (const auto& t : trs) runs.insert(t.run_id);
      for (const auto& w : words)
        if (!runs.count(w.run_id)) throw DataError("timeline: word " + std::to_string(w.index) + " maps to unknown run " + std::to_string(w.run_id));
    }

    std::vector<bool> used(words.size(), false);
    for (const auto& s : sentences) {
      for (std::size_t k = 0; k < s.word_indices.size(); ++k) {
        const auto wi = s.word_indices[k];
        if (wi >= words.size()) throw DataError("timeline: sentence " + std::to_string(s.sentence_id) + " references missing word");
        if (used[wi]) throw DataError("timeline: word " + std::to_string(wi) + " belongs to two sentences");
        if (k > 0 && wi != s.word_indices[k - 1] + 1) throw DataError("timeline: sentence " + std::to_string(s.sentence_id) + " words not contiguous");
        used[wi] = true;
      }
    }
  }
};

inline void to_json(json& j, const StimulusTimeline& t) {
  j = json{{"words", t.words}, {"trs", t.trs}, {"sentences", t.sentences}};
}
inline void from_json(const json& j, StimulusTimeline& t) {
  t.words = j.value("words", std::vector<WordRecord>{});
  t.trs = j.value("trs", std::vector<TrRecord>{});
  t.sentences = j.value("sentences", std::vector<SentenceGroup>{});
}

// ---------------------------------------------------------------------------
// Response metadata

struct UnitRecord {
  std::string unit_id;
  std::string subject_id;
  UnitKind kind = UnitKind::voxel;
};

inline void to_json(json& j, const UnitRecord& u) {
  j = json{{"unit_id", u.unit_id}, {"subject_id", u.subject_id}, {"kind", u.kind}};
}
inline void from_json(const json& j, UnitRecord& u) {
  u.unit_id = j.at("unit_id").get<std::string>();
  u.subject_id = j.at("subject_id").get<std::string>();
  u.kind = detail::parse_enum<UnitKind>(j, "kind", {"voxel", "roi", "participant"});
}

struct ResponseMeta {
  std::string dataset_id;
  RowSemantics granularity = RowSemantics::tr;
  std::vector<UnitRecord> units;

  /// Subject ids in order of first appearance.
  std::vector<std::string> subjects() const {
    std::vector<std::string> out;
    for (const auto& u : units)
      if (std::find(out.begin(), out.end(), u.subject_id) == out.end()) out.push_back(u.subject_id);
    return out;
  }

  /// Per-unit index into subjects().
  std::vector<std::size_t> subject_index() const {
    const auto subs = subjects();
    std::vector<std::size_t> idx;
    idx.reserve(units.size());
    for (const auto& u : units)
      idx.push_back(static_cast<std::size_t>(std::find(subs.begin(), subs.end(), u.subject_id) - subs.begin()));
    return idx;
  }

  void validate() const {
    for (const auto& u : units)
      if (u.subject_id.empty()) throw DataError("meta: unit '" + u.unit_id + "' has no subject");
  }
};

inline void to_json(json& j, const ResponseMeta& m) {
  j = json{{"dataset_id", m.dataset_id}, {"granularity", m.granularity}, {"units", m.units}};
}
inline void from_json(const json& j, ResponseMeta& m) {
  m.dataset_id = j.value("dataset_id", std::string{});
  m.granularity = detail::parse_enum<RowSemantics>(j, "granularity", {"word", "sentence", "tr"});
  m.units = j.at("units").get<std::vector<UnitRecord>>();
}

inline StimulusTimeline read_timeline(const fs::path& p) {
  try {
    auto t = detail::read_json_file(p).get<StimulusTimeline>();
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw DataError("timeline " + p.string() + ": " + e.what());
  }
}

inline ResponseMeta read_meta(const fs::path& p) {
  try {
    auto m = detail::read_json_file(p).get<ResponseMeta>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw DataError("meta " + p.string() + ": " + e.what());
  }
}

inline void write_timeline(const StimulusTimeline& t, const fs::path& p) { detail::write_json_file(p, json(t)); }
inline void write_meta(const ResponseMeta& m, const fs::path& p) { detail::write_json_file(p, json(m)); }

// ---------------------------------------------------------------------------
// Dataset bundles: <dir>/responses.{json,f32}, <dir>/meta.json, <dir>/timeline.json

struct DatasetBundle {
  LoadedMatrix responses;
  ResponseMeta meta;
  StimulusTimeline timeline;
};

/// Number of rows a matrix of the given semantics must have under this timeline.
inline std::size_t expected_rows(const StimulusTimeline& t, RowSemantics s) {
  switch (s) {
    case RowSemantics::word: return t.words.size();
    case RowSemantics::sentence: return t.sentences.size();
    case RowSemantics::tr: return t.trs.size();
  }
  return 0;
}

inline void check_rows_against_timeline(std::int64_t rows, RowSemantics s, const StimulusTimeline& t, const std::string& what) {
  const auto want = expected_rows(t, s);
  if (static_cast<std::size_t>(rows) != want)
    throw DataError(what + ": " + std::to_string(rows) + " rows but timeline has " + std::to_string(want) + " " +
                    to_string(s) + " records (dimension mismatch)");
}

inline void validate_bundle(const DatasetBundle& b) {
  const auto& man = b.responses.manifest;
  if (man.role != MatrixRole::responses) throw DataError("bundle: responses matrix has wrong role");
  if (man.row_semantics != b.meta.granularity) throw DataError("bundle: meta granularity disagrees with responses manifest");
  if (static_cast<std::size_t>(man.cols) != b.meta.units.size())
    throw DataError("bundle: responses have " + std::to_string(man.cols) + " columns but meta lists " +
                    std::to_string(b.meta.units.size()) + " units");
  check_rows_against_timeline(man.rows, man.row_semantics, b.timeline, "bundle responses");
}

inline DatasetBundle load_dataset_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("bundle directory not found: " + dir.string());
  for (const char* f : {"responses.json", "responses.f32", "meta.json", "timeline.json"})
    if (!fs::exists(dir / f)) throw DataError("bundle: missing file " + (dir / f).string());
  DatasetBundle b;
  b.responses = read_matrix(dir / "responses");
  b.meta = read_meta(dir / "meta.json");
  b.timeline = read_timeline(dir / "timeline.json");
  validate_bundle(b);
  return b;
}

inline void write_dataset_bundle(const Matrix& responses, const ResponseMeta& meta, const StimulusTimeline& timeline,
                                 const fs::path& dir, bool nan_allowed = false) {
  fs::create_directories(dir);
  MatrixManifest man{"responses", MatrixRole::responses, responses.rows(), responses.cols(), meta.granularity, "float32", nan_allowed};
  DatasetBundle probe{{responses, man, {}}, meta, timeline};
  timeline.validate();
  meta.validate();
  validate_bundle(probe);
  write_matrix(responses, man, dir / "responses");
  write_meta(meta, dir / "meta.json");
  write_timeline(timeline, dir / "timeline.json");
}

/// All feature manifests in a directory, ordered by file name (= layer order).
inline std::vector<LoadedMatrix> load_layer_features(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("feature directory not found: " + dir.string());
  std::vector<fs::path> stems;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") stems.push_back(detail::stem_path(e.path()));
  std::sort(stems.begin(), stems.end());
  std::vector<LoadedMatrix> layers;
  for (const auto& s : stems) {
    if (!fs::exists(detail::with_ext(s, ".f32"))) continue;
    auto m = read_matrix(s);
    if (m.manifest.role == MatrixRole::features) layers.push_back(std::move(m));
  }
  if (layers.empty()) throw DataError("no feature matrices in " + dir.string());
  return layers;
}

}  // namespace brainalign
