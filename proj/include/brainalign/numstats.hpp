#pragma once

// Numerical kernels shared by the encoding and analysis layers: PCA, ridge
// regression with a reusable spectral factorization, Pearson correlation with
// t-distribution p-values, Benjamini-Hochberg adjustment and MAD.

#include "brainalign/common.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace brainalign::numstats {

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  Vector mean;                // d
  Matrix components;          // d x k, orthonormal columns
  Vector explained_variance;  // k, non-increasing
  double total_variance = 0.0;

  Eigen::Index input_dims() const { return components.rows(); }
  Eigen::Index output_dims() const { return components.cols(); }

  Vector explained_variance_ratio() const {
    if (total_variance <= 0.0) return Vector::Zero(explained_variance.size());
    return explained_variance / total_variance;
  }
};

/// Fits a rank-k PCA through the thin SVD of the column-centered input.
/// Each component is sign-normalized so its largest-magnitude loading is
/// positive (first index wins on ties).
inline PcaModel pca_fit(const Matrix& x, Eigen::Index k) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 2 || d < 1) throw DataError("pca_fit: need at least 2 rows and 1 column");
  if (k < 1 || k > std::min(n - 1, d))
    throw ConfigError("pca_fit: k=" + std::to_string(k) + " outside [1, min(n-1, d)=" +
                      std::to_string(std::min(n - 1, d)) + "]");
  if (!x.allFinite()) throw DataError("pca_fit: non-finite input");

  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - model.mean.transpose();

  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double denom = static_cast<double>(n - 1);

  model.components = svd.matrixV().leftCols(k);
  model.explained_variance = s.head(k).array().square() / denom;
  model.total_variance = s.array().square().sum() / denom;

  for (Eigen::Index c = 0; c < k; ++c) {
    auto col = model.components.col(c);
    const double peak = col.cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < d; ++r) {
      if (std::abs(col(r)) >= peak * (1.0 - 1e-12)) {
        if (col(r) < 0.0) col = -col;
        break;
      }
    }
  }
  return model;
}

inline Matrix pca_transform(const PcaModel& model, const Matrix& x) {
  if (x.cols() != model.input_dims())
    throw DataError("pca_transform: input has " + std::to_string(x.cols()) + " columns, model expects " +
                    std::to_string(model.input_dims()));
  return (x.rowwise() - model.mean.transpose()) * model.components;
}

// ---------------------------------------------------------------------------
// Ridge regression

struct RidgeModel {
  Matrix weights;     // p x v
  Vector intercepts;  // v
  Vector lambda;      // v, one strength per response column

  Matrix predict(const Matrix& x) const {
    if (x.cols() != weights.rows()) throw DataError("RidgeModel::predict: feature dimension mismatch");
    return (x * weights).rowwise() + intercepts.transpose();
  }
};

/// Spectral factorization of a centered design. Solves
/// (Xc'Xc + lambda I) W = Xc'Yc for any number of lambdas from one
/// eigendecomposition: of Xc'Xc when n > p, of the Gram matrix Xc Xc' otherwise.
/// In both cases W = basis * diag(1 / (s + lambda)) * coef.
class RidgeSolver {
public:
  RidgeSolver(const Matrix& x, const Matrix& y) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (n < 2) throw DataError("ridge: need at least 2 samples");
    if (y.rows() != n) throw DataError("ridge: X and Y row counts differ");
    if (p < 1 || y.cols() < 1) throw DataError("ridge: empty design or response");
    if (!x.allFinite() || !y.allFinite()) throw DataError("ridge: non-finite input");

    x_mean_ = x.colwise().mean().transpose();
    y_mean_ = y.colwise().mean().transpose();
    const Matrix xc = x.rowwise() - x_mean_.transpose();
    const Matrix yc = y.rowwise() - y_mean_.transpose();

    dual_ = n <= p;
    if (!dual_) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(xc.transpose() * xc);
      eigenvalues_ = eig.eigenvalues().cwiseMax(0.0);
      basis_ = eig.eigenvectors();
      coef_ = basis_.transpose() * (xc.transpose() * yc);
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(xc * xc.transpose());
      eigenvalues_ = eig.eigenvalues().cwiseMax(0.0);
      const Matrix& u = eig.eigenvectors();
      basis_ = xc.transpose() * u;
      coef_ = u.transpose() * yc;
    }
    const double top = eigenvalues_.size() ? eigenvalues_.maxCoeff() : 0.0;
    cutoff_ = static_cast<double>(std::max(n, p)) * std::numeric_limits<double>::epsilon() * top;
    rank_ = (eigenvalues_.array() > cutoff_).count();
    required_rank_ = std::min(n - 1, p);
  }

  bool uses_gram_form() const { return dual_; }
  Eigen::Index rank() const { return rank_; }
  bool full_rank() const { return rank_ >= required_rank_ && rank_ > 0; }
  Eigen::Index responses() const { return coef_.cols(); }

  RidgeModel fit(double lambda) const { return fit(Vector::Constant(coef_.cols(), lambda)); }

  RidgeModel fit(const Vector& lambda) const {
    if (lambda.size() != coef_.cols()) throw ConfigError("ridge: one lambda per response column required");
    RidgeModel model;
    model.lambda = lambda;
    model.weights.resize(basis_.rows(), coef_.cols());
    for (Eigen::Index j = 0; j < coef_.cols(); ++j)
      model.weights.col(j) = basis_ * shrinkage(lambda(j)).cwiseProduct(coef_.col(j));
    model.intercepts = y_mean_ - model.weights.transpose() * x_mean_;
    return model;
  }

  /// Held-out predictions for each lambda of a shared grid, one basis
  /// projection reused across the grid. Calls sink(grid_index, predictions).
  template <class Sink>
  void predict_grid(const Matrix& x_new, std::span<const double> grid, Sink&& sink) const {
    const Matrix projected = (x_new.rowwise() - x_mean_.transpose()) * basis_;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (grid[g] == 0.0 && !full_rank()) {
        sink(g, static_cast<const Matrix*>(nullptr));
        continue;
      }
      const Matrix scaled = shrinkage(grid[g]).asDiagonal() * coef_;
      const Matrix pred = (projected * scaled).rowwise() + y_mean_.transpose();
      sink(g, &pred);
    }
  }

private:
  Vector shrinkage(double lambda) const {
    if (lambda < 0.0 || !std::isfinite(lambda)) throw ConfigError("ridge: lambda must be finite and >= 0");
    if (lambda == 0.0 && !full_rank())
      throw NumericalError("ridge: rank-deficient design with lambda=0 (rank " + std::to_string(rank_) +
                           " < " + std::to_string(required_rank_) + ")");
    Vector f(eigenvalues_.size());
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) {
      const double s = eigenvalues_(i);
      f(i) = (lambda == 0.0 && s <= cutoff_) ? 0.0 : 1.0 / (s + lambda);
    }
    return f;
  }

  bool dual_ = false;
  Vector x_mean_, y_mean_;
  Vector eigenvalues_;
  Matrix basis_;
  Matrix coef_;
  double cutoff_ = 0.0;
  Eigen::Index rank_ = 0;
  Eigen::Index required_rank_ = 0;
};

inline RidgeModel ridge_fit(const Matrix& x, const Matrix& y, double lambda) {
  if (lambda < 0.0 || !std::isfinite(lambda)) throw ConfigError("ridge_fit: lambda must be finite and >= 0");
  return RidgeSolver(x, y).fit(lambda);
}

inline RidgeModel ridge_fit(const Matrix& x, const Matrix& y, const Vector& lambda) {
  return RidgeSolver(x, y).fit(lambda);
}

inline std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int e = -3; e <= 6; ++e) grid.push_back(std::pow(10.0, e));
  return grid;
}

/// Per-column lambda chosen by contiguous-block inner cross-validation on
/// mean squared error. Ties go to the larger lambda.
inline Vector ridge_select_lambda(const Matrix& x, const Matrix& y, std::vector<double> grid, int folds = 3) {
  if (grid.empty()) throw ConfigError("ridge_select_lambda: empty lambda grid");
  for (double g : grid)
    if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("ridge_select_lambda: grid values must be finite and >= 0");
  if (folds < 2) throw ConfigError("ridge_select_lambda: need at least 2 folds");
  const Eigen::Index n = x.rows();
  if (n < folds) throw DataError("ridge_select_lambda: fewer samples than folds");
  if (y.rows() != n) throw DataError("ridge_select_lambda: X and Y row counts differ");

  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const Eigen::Index v = y.cols();
  if (grid.size() == 1) return Vector::Constant(v, grid.front());

  Matrix sse = Matrix::Zero(static_cast<Eigen::Index>(grid.size()), v);
  for (int f = 0; f < folds; ++f) {
    const Eigen::Index lo = n * f / folds;
    const Eigen::Index hi = n * (f + 1) / folds;
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < n; ++i) (i >= lo && i < hi ? test : train).push_back(i);
    if (train.size() < 2 || test.empty()) continue;
    const Matrix ytest = detail::select_rows(y, test);
    RidgeSolver solver(detail::select_rows(x, train), detail::select_rows(y, train));
    solver.predict_grid(detail::select_rows(x, test), grid, [&](std::size_t g, const Matrix* pred) {
      const auto gi = static_cast<Eigen::Index>(g);
      if (pred == nullptr) {
        sse.row(gi).setConstant(std::numeric_limits<double>::infinity());
        return;
      }
      sse.row(gi) += (*pred - ytest).colwise().squaredNorm();
    });
  }

  Vector chosen(v);
  for (Eigen::Index j = 0; j < v; ++j) {
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
      const double cand = sse(static_cast<Eigen::Index>(g), j);
      const double cur = sse(static_cast<Eigen::Index>(best), j);
      if (cand <= cur * (1.0 + 1e-12) || (std::isinf(cur) && !std::isinf(cand))) best = g;
    }
    chosen(j) = grid[best];
  }
  return chosen;
}

// ---------------------------------------------------------------------------
// Correlation and multiple comparisons

struct CorrelationResult {
  double r = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  std::size_t n = 0;
  bool degenerate = false;  // zero variance in an input; r reported as 0
};

/// Two-sided p-value of a Pearson r under the t-distribution with n-2 df.
inline double pearson_p_value(double r, std::size_t n) {
  if (n < 3) return 1.0;
  const double ar = std::min(1.0, std::abs(r));
  if (ar >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = ar * std::sqrt(df / ((1.0 - ar) * (1.0 + ar)));
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

/// Pearson correlation with pairwise NaN removal. Zero-variance inputs give
/// r = 0, p = 1 and set the degenerate flag.
inline CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw DataError("pearson: length mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) continue;
    sx += x[i];
    sy += y[i];
    ++n;
  }
  if (n < 3) throw DataError("pearson: fewer than 3 valid pairs");
  const double mx = sx / static_cast<double>(n);
  const double my = sy / static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0, qx = 0.0, qy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) continue;
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
    qx += x[i] * x[i];
    qy += y[i] * y[i];
  }
  CorrelationResult res;
  res.n = n;
  // Relative threshold: catches constants whose mean is not exactly representable.
  if (sxx <= 1e-24 * qx || syy <= 1e-24 * qy || sxx == 0.0 || syy == 0.0) {
    res.degenerate = true;
    return res;
  }
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  res.p_raw = pearson_p_value(res.r, n);
  res.p_adjusted = res.p_raw;
  return res;
}

inline CorrelationResult pearson(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  return pearson(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                 std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

inline CorrelationResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(std::span<const double>(x), std::span<const double>(y));
}

struct FdrResult {
  std::vector<double> adjusted;
  std::vector<bool> significant;
};

/// Benjamini-Hochberg step-up adjustment: adjusted_(i) = min_{j >= i} p_(j) m / j,
/// capped at 1, reported in input order.
inline FdrResult fdr_bh(std::span<const double> p, double q = 0.05) {
  if (p.empty()) throw DataError("fdr_bh: empty input");
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("fdr_bh: p-values must lie in [0, 1]");
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

  FdrResult out;
  out.adjusted.assign(m, 1.0);
  out.significant.assign(m, false);
  double running = 1.0;
  for (std::size_t rank = m; rank >= 1; --rank) {
    const std::size_t idx = order[rank - 1];
    running = std::min(running, p[idx] * static_cast<double>(m) / static_cast<double>(rank));
    out.adjusted[idx] = std::min(1.0, running);
  }
  for (std::size_t i = 0; i < m; ++i) out.significant[i] = out.adjusted[i] <= q;
  return out;
}

inline FdrResult fdr_bh(const std::vector<double>& p, double q = 0.05) {
  return fdr_bh(std::span<const double>(p), q);
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median: empty input");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

inline double median_abs_dev(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  const double m = median(v);
  for (double& x : v) x = std::abs(x - m);
  return median(std::move(v));
}

inline double median_abs_dev(const std::vector<double>& values) {
  return median_abs_dev(std::span<const double>(values));
}

}  // namespace brainalign::numstats
