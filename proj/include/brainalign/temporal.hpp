#pragma once

// Stimulus-to-response alignment: word features onto the TR grid, lagged
// designs for the hemodynamic delay, run-edge trimming, and the averaging
// steps used for sentence- and ROI-level datasets.

#include "brainalign/common.hpp"
#include "brainalign/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace brainalign::temporal {

enum class EmptyTrPolicy { carry_forward, zero };
enum class PadPolicy { zero_pad, drop };
enum class GroupKey { run, passage, story };

NLOHMANN_JSON_SERIALIZE_ENUM(PadPolicy, {{PadPolicy::zero_pad, "zero_pad"}, {PadPolicy::drop, "drop"}})
NLOHMANN_JSON_SERIALIZE_ENUM(GroupKey, {{GroupKey::run, "run"}, {GroupKey::passage, "passage"}, {GroupKey::story, "story"}})
NLOHMANN_JSON_SERIALIZE_ENUM(EmptyTrPolicy, {{EmptyTrPolicy::carry_forward, "carry_forward"}, {EmptyTrPolicy::zero, "zero"}})

struct LagConfig {
  int n_delays = 4;
  PadPolicy pad_policy = PadPolicy::zero_pad;
};

namespace detail {

// [begin, end) row ranges of consecutive equal labels.
inline std::vector<std::pair<std::size_t, std::size_t>> segments(const std::vector<int>& labels) {
  std::vector<std::pair<std::size_t, std::size_t>> segs;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= labels.size(); ++i) {
    if (i == labels.size() || labels[i] != labels[start]) {
      if (i > start) segs.emplace_back(start, i);
      start = i;
    }
  }
  return segs;
}

// Start row of the run containing each row.
inline std::vector<std::size_t> run_starts(const std::vector<int>& runs, std::size_t rows) {
  std::vector<std::size_t> start(rows, 0);
  if (runs.empty()) return start;
  for (const auto& [b, e] : segments(runs))
    for (std::size_t i = b; i < e; ++i) start[i] = b;
  return start;
}

inline double median_tr_spacing(const StimulusTimeline& t) {
  std::vector<double> gaps;
  for (std::size_t i = 1; i < t.trs.size(); ++i)
    if (t.trs[i].run_id == t.trs[i - 1].run_id) gaps.push_back(t.trs[i].onset_s - t.trs[i - 1].onset_s);
  if (gaps.empty()) return std::numeric_limits<double>::infinity();
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
  return gaps[gaps.size() / 2];
}

}  // namespace detail

/// TR row that each word falls into: the TR of the word's run whose window
/// [onset(t), onset(t+1)) contains the word onset. The final TR of a run
/// spans one median TR spacing.
inline std::vector<std::size_t> assign_words_to_trs(const StimulusTimeline& timeline) {
  if (timeline.trs.empty()) throw DataError("words_to_trs: timeline has no TR grid");
  std::map<int, std::vector<std::size_t>> run_trs;
  for (std::size_t i = 0; i < timeline.trs.size(); ++i) run_trs[timeline.trs[i].run_id].push_back(i);
  const double spacing = detail::median_tr_spacing(timeline);

  std::vector<std::size_t> out(timeline.words.size());
  for (std::size_t w = 0; w < timeline.words.size(); ++w) {
    const auto& word = timeline.words[w];
    auto it = run_trs.find(word.run_id);
    if (it == run_trs.end()) throw DataError("words_to_trs: word " + std::to_string(w) + " outside all TR windows (unknown run)");
    const auto& rows = it->second;
    auto pos = std::upper_bound(rows.begin(), rows.end(), word.onset_s,
                                [&](double onset, std::size_t r) { return onset < timeline.trs[r].onset_s; });
    if (pos == rows.begin())
      throw DataError("words_to_trs: word " + std::to_string(w) + " precedes the first TR of its run (outside all TR windows)");
    const std::size_t tr = *(pos - 1);
    if (pos == rows.end() && word.onset_s >= timeline.trs[tr].onset_s + spacing)
      throw DataError("words_to_trs: word " + std::to_string(w) + " falls after the last TR of its run (outside all TR windows)");
    out[w] = tr;
  }
  return out;
}

/// Averages word-level rows into TR rows. TRs without words carry the
/// previous TR of the same run forward; a run's leading empty TRs are zero.
inline Matrix words_to_trs(const Matrix& word_feats, const StimulusTimeline& timeline,
                           EmptyTrPolicy policy = EmptyTrPolicy::carry_forward) {
  if (static_cast<std::size_t>(word_feats.rows()) != timeline.words.size())
    throw DataError("words_to_trs: " + std::to_string(word_feats.rows()) + " feature rows but timeline has " +
                    std::to_string(timeline.words.size()) + " words");
  const auto assignment = assign_words_to_trs(timeline);
  const auto n_tr = static_cast<Eigen::Index>(timeline.trs.size());
  Matrix out = Matrix::Zero(n_tr, word_feats.cols());
  std::vector<std::size_t> count(timeline.trs.size(), 0);
  for (std::size_t w = 0; w < assignment.size(); ++w) {
    out.row(static_cast<Eigen::Index>(assignment[w])) += word_feats.row(static_cast<Eigen::Index>(w));
    ++count[assignment[w]];
  }
  for (Eigen::Index t = 0; t < n_tr; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    if (count[ut] > 0) {
      out.row(t) /= static_cast<double>(count[ut]);
    } else if (policy == EmptyTrPolicy::carry_forward && t > 0 && timeline.trs[ut - 1].run_id == timeline.trs[ut].run_id) {
      out.row(t) = out.row(t - 1);
    }
  }
  return out;
}

struct LaggedDesign {
  Matrix design;                         // rows x (n_delays * k)
  std::vector<std::size_t> source_rows;  // input row of each output row
};

/// Row t holds [X[t-1], X[t-2], ..., X[t-n_delays]]. Slots reaching before
/// the start of t's run are zero (zero_pad) or the row is dropped (drop).
/// `runs` labels each row with its run; empty means a single run.
inline LaggedDesign lag_concat(const Matrix& x, const LagConfig& cfg, const std::vector<int>& runs = {}) {
  if (cfg.n_delays < 1) throw ConfigError("lag_concat: n_delays must be >= 1");
  if (cfg.n_delays > x.rows())
    throw DataError("lag_concat: n_delays=" + std::to_string(cfg.n_delays) + " exceeds " + std::to_string(x.rows()) + " rows");
  if (!runs.empty() && runs.size() != static_cast<std::size_t>(x.rows()))
    throw DataError("lag_concat: run labels do not match row count");

  const auto rows = static_cast<std::size_t>(x.rows());
  const auto starts = detail::run_starts(runs, rows);
  const Eigen::Index k = x.cols();
  LaggedDesign out;
  for (std::size_t t = 0; t < rows; ++t) {
    const bool complete = t >= starts[t] + static_cast<std::size_t>(cfg.n_delays);
    if (cfg.pad_policy == PadPolicy::drop && !complete) continue;
    out.source_rows.push_back(t);
  }
  out.design = Matrix::Zero(static_cast<Eigen::Index>(out.source_rows.size()), k * cfg.n_delays);
  for (std::size_t o = 0; o < out.source_rows.size(); ++o) {
    const std::size_t t = out.source_rows[o];
    for (int j = 0; j < cfg.n_delays; ++j) {
      const auto lag = static_cast<std::size_t>(j + 1);
      if (t < starts[t] + lag) break;
      out.design.block(static_cast<Eigen::Index>(o), j * k, 1, k) = x.row(static_cast<Eigen::Index>(t - lag));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Folds and trimming

struct FoldPlan {
  std::vector<int> fold_of_row;
  GroupKey key = GroupKey::run;
  int trim = 10;

  int n_folds() const {
    return fold_of_row.empty() ? 0 : *std::max_element(fold_of_row.begin(), fold_of_row.end()) + 1;
  }
  RowMask in_fold(int f) const {
    RowMask m(fold_of_row.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = fold_of_row[i] == f;
    return m;
  }
};

/// Assigns whole groups to folds. With n_folds == 0 each group is its own
/// fold; otherwise groups go round-robin in order of first appearance.
inline FoldPlan make_fold_plan(const std::vector<int>& groups, GroupKey key, int n_folds = 0, int trim = 10) {
  if (groups.empty()) throw DataError("fold plan: no rows");
  if (trim < 0) throw ConfigError("fold plan: trim must be >= 0");
  std::vector<int> order;
  std::map<int, int> rank;
  for (int g : groups)
    if (rank.emplace(g, static_cast<int>(order.size())).second) order.push_back(g);
  const int n_groups = static_cast<int>(order.size());
  if (n_folds < 0) throw ConfigError("fold plan: n_folds must be >= 0");
  if (n_folds == 0) n_folds = n_groups;
  if (n_folds < 2) throw ConfigError("fold plan: need at least 2 folds (found " + std::to_string(n_groups) + " groups)");
  if (n_folds > n_groups)
    throw ConfigError("fold plan: " + std::to_string(n_folds) + " folds requested but only " + std::to_string(n_groups) + " groups");
  FoldPlan plan;
  plan.key = key;
  plan.trim = trim;
  plan.fold_of_row.reserve(groups.size());
  for (int g : groups) plan.fold_of_row.push_back(rank.at(g) % n_folds);
  return plan;
}

struct TrimResult {
  RowMask keep;
  std::vector<std::string> warnings;
};

/// Drops plan.trim rows at both ends of every run.
inline TrimResult trim_run_edges(const FoldPlan& plan, const std::vector<int>& runs) {
  if (plan.trim < 0) throw ConfigError("trim_run_edges: trim must be >= 0");
  if (runs.size() != plan.fold_of_row.size()) throw DataError("trim_run_edges: run labels do not match fold plan rows");
  TrimResult out;
  out.keep.assign(runs.size(), true);
  const auto trim = static_cast<std::size_t>(plan.trim);
  for (const auto& [b, e] : detail::segments(runs)) {
    const std::size_t len = e - b;
    if (len < 2 * trim)
      out.warnings.push_back("run " + std::to_string(runs[b]) + " has " + std::to_string(len) + " rows, shorter than 2*trim=" +
                             std::to_string(2 * trim) + "; fully masked");
    for (std::size_t i = b; i < e; ++i) out.keep[i] = (i >= b + trim) && (i + trim < e);
  }
  return out;
}

inline TrimResult trim_run_edges(const FoldPlan& plan, const StimulusTimeline& timeline) {
  return trim_run_edges(plan, timeline.tr_runs());
}

// ---------------------------------------------------------------------------
// Averaging

/// One output row per group: the mean of that group's scan rows. Groups must
/// partition the scan rows.
inline Matrix sentence_average(const Matrix& responses, const std::vector<std::vector<std::size_t>>& groups) {
  std::vector<int> seen(static_cast<std::size_t>(responses.rows()), 0);
  Matrix out(static_cast<Eigen::Index>(groups.size()), responses.cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw DataError("sentence_average: empty group " + std::to_string(g));
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(responses.cols());
    for (std::size_t r : groups[g]) {
      if (r >= seen.size()) throw DataError("sentence_average: scan row " + std::to_string(r) + " out of range");
      ++seen[r];
      acc += responses.row(static_cast<Eigen::Index>(r));
    }
    out.row(static_cast<Eigen::Index>(g)) = acc / static_cast<double>(groups[g].size());
  }
  for (std::size_t r = 0; r < seen.size(); ++r)
    if (seen[r] != 1) throw DataError("sentence_average: groups do not partition scan rows (row " + std::to_string(r) + ")");
  return out;
}

struct RoiAverage {
  Matrix values;
  ResponseMeta meta;
};

/// Averages voxel columns into ROI columns. roi_of_voxel[c] is the ROI of
/// column c, or -1 when the voxel belongs to none.
inline RoiAverage roi_average(const Matrix& responses, const ResponseMeta& meta, const std::vector<int>& roi_of_voxel, int n_rois) {
  if (roi_of_voxel.size() != static_cast<std::size_t>(responses.cols()) || meta.units.size() != roi_of_voxel.size())
    throw DataError("roi_average: roi map, meta and responses disagree on voxel count");
  if (n_rois < 1) throw ConfigError("roi_average: need at least one ROI");
  RoiAverage out;
  out.values = Matrix::Zero(responses.rows(), n_rois);
  out.meta.dataset_id = meta.dataset_id;
  out.meta.granularity = meta.granularity;
  out.meta.units.resize(static_cast<std::size_t>(n_rois));
  std::vector<std::size_t> members(static_cast<std::size_t>(n_rois), 0);
  for (std::size_t c = 0; c < roi_of_voxel.size(); ++c) {
    const int roi = roi_of_voxel[c];
    if (roi < 0) continue;
    if (roi >= n_rois) throw DataError("roi_average: ROI id " + std::to_string(roi) + " out of range");
    auto& unit = out.meta.units[static_cast<std::size_t>(roi)];
    if (members[static_cast<std::size_t>(roi)] == 0) {
      unit.subject_id = meta.units[c].subject_id;
    } else if (unit.subject_id != meta.units[c].subject_id) {
      throw DataError("roi_average: ROI " + std::to_string(roi) + " mixes subjects");
    }
    out.values.col(roi) += responses.col(static_cast<Eigen::Index>(c));
    ++members[static_cast<std::size_t>(roi)];
  }
  for (int r = 0; r < n_rois; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    if (members[ur] == 0) throw DataError("roi_average: empty ROI " + std::to_string(r));
    out.values.col(r) /= static_cast<double>(members[ur]);
    out.meta.units[ur].unit_id = "roi_" + std::to_string(r);
    out.meta.units[ur].kind = UnitKind::roi;
  }
  return out;
}

}  // namespace brainalign::temporal
