#pragma once

// Representational similarity metrics: linear CKA and RSA over
// representational dissimilarity matrices.

#include "brainalign/common.hpp"
#include "brainalign/encoding.hpp"
#include "brainalign/numstats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace brainalign::simmetrics {

enum class RdmDistance { correlation, euclidean };
enum class Comparator { spearman, pearson };

struct RsaConfig {
  RdmDistance distance = RdmDistance::correlation;
  Comparator comparator = Comparator::spearman;
};

/// Fractional ranks (1-based, ties averaged).
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline numstats::CorrelationResult spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return numstats::pearson(rx, ry);
}

/// ||Yc' Xc||_F^2 / (||Xc' Xc||_F ||Yc' Yc||_F), computed through the n x n
/// Gram matrices so wide inputs stay cheap.
inline double linear_cka(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw DataError("linear_cka: row counts differ");
  if (x.rows() < 3) throw DataError("linear_cka: need at least 3 rows");
  const Matrix xc = x.rowwise() - x.colwise().mean();
  const Matrix yc = y.rowwise() - y.colwise().mean();
  const Matrix kx = xc * xc.transpose();
  const Matrix ky = yc * yc.transpose();
  const double nx = kx.norm();
  const double ny = ky.norm();
  if (nx <= 1e-300 || ny <= 1e-300 || nx <= 1e-24 * x.squaredNorm() || ny <= 1e-24 * y.squaredNorm())
    throw DataError("linear_cka: zero-variance input");
  // trace(Kx Ky) = ||Yc' Xc||_F^2
  return std::clamp((kx.cwiseProduct(ky)).sum() / (nx * ny), 0.0, 1.0);
}

/// Strict upper triangle of the n x n dissimilarity matrix, row-major.
inline std::vector<double> rdm_upper(const Matrix& x, RdmDistance distance) {
  const Eigen::Index n = x.rows();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  if (distance == RdmDistance::correlation) {
    Matrix z = x.colwise() - x.rowwise().mean();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = z.row(i).norm();
      if (norm <= 1e-12 * std::max(1.0, x.row(i).cwiseAbs().maxCoeff()) || x.cols() < 2)
        throw DataError("rsa: constant row " + std::to_string(i) + " makes correlation distance undefined");
      z.row(i) /= norm;
    }
    const Matrix c = z * z.transpose();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) out.push_back(1.0 - c(i, j));
  } else {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) out.push_back((x.row(i) - x.row(j)).norm());
  }
  return out;
}

inline double compare_rdms(const std::vector<double>& a, const std::vector<double>& b, Comparator comparator) {
  const auto res = comparator == Comparator::spearman ? spearman(a, b) : numstats::pearson(a, b);
  if (res.degenerate) throw DataError("rsa: dissimilarity matrix has zero variance");
  return res.r;
}

inline double rsa_score(const Matrix& x, const Matrix& y, const RsaConfig& cfg = {}) {
  if (x.rows() != y.rows()) throw DataError("rsa_score: row counts differ");
  if (x.rows() < 4) throw DataError("rsa_score: need at least 4 rows");
  return compare_rdms(rdm_upper(x, cfg.distance), rdm_upper(y, cfg.distance), cfg.comparator);
}

enum class Metric { linear, cka, rsa };

inline Metric parse_metric(const std::string& s) {
  if (s == "linear") return Metric::linear;
  if (s == "cka") return Metric::cka;
  if (s == "rsa") return Metric::rsa;
  throw ConfigError("unknown metric '" + s + "' (expected linear, cka or rsa)");
}

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::linear: return "linear";
    case Metric::cka: return "cka";
    case Metric::rsa: return "rsa";
  }
  return "linear";
}

/// CKA or RSA between features and each subject's responses, aggregated like
/// a linear-predictivity score. Features must already be at response rows.
inline encoding::AlignmentScore score_similarity(const Matrix& features, const Matrix& responses, const ResponseMeta& meta,
                                                 Metric metric, const RsaConfig& rsa = {}) {
  if (metric == Metric::linear) throw ConfigError("score_similarity: use the encoding pipeline for linear predictivity");
  if (features.rows() != responses.rows()) throw DataError("score_similarity: features and responses row counts differ");
  encoding::AlignmentScore score;
  score.dataset = meta.dataset_id;
  score.metric = metric_name(metric);
  score.subjects = meta.subjects();
  const auto idx = meta.subject_index();
  for (std::size_t s = 0; s < score.subjects.size(); ++s) {
    std::vector<Eigen::Index> cols;
    for (std::size_t u = 0; u < idx.size(); ++u)
      if (idx[u] == s) cols.push_back(static_cast<Eigen::Index>(u));
    const Matrix y = responses(Eigen::all, cols);
    score.per_subject.push_back(metric == Metric::cka ? linear_cka(features, y) : rsa_score(features, y, rsa));
  }
  double sum = 0.0;
  for (double v : score.per_subject) sum += v;
  score.overall = sum / static_cast<double>(score.per_subject.size());
  score.mad = numstats::median_abs_dev(score.per_subject);
  return score;
}

}  // namespace brainalign::simmetrics
