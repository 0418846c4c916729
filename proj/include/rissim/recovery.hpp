#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rissim/channel.hpp"

namespace rissim {

struct SpConfig {
  int sparsity = 1;
  int max_iterations = 50;
  // Relative stop: iteration ends once ||residual|| <= tolerance * ||delta_y||.
  double residual_tolerance = 1e-12;
  // Score candidate columns by |a_q^H r| / ||a_q|| instead of the raw inner
  // product, so closer (stronger) units do not crowd out distant ones.
  bool normalize_correlations = true;
};

// Sparse estimate of the per-unit scattering change.
struct DifferenceImage {
  CVector delta_sigma_hat;              // length Q; zero off the support
  std::vector<int> support;             // ascending unit indices, |support| <= sparsity
  double residual_norm = 0.0;
  int iterations = 0;
  std::vector<double> residual_history;  // accepted iterates; never increases
};

namespace detail {

// Minimum-norm least squares with a relative rank threshold, so rank-deficient
// column subsets degrade gracefully instead of blowing up.
inline CVector solve_min_norm(const CMatrix& a, const CVector& rhs) {
  Eigen::CompleteOrthogonalDecomposition<CMatrix> cod;
  cod.setThreshold(1e-10);
  cod.compute(a);
  return cod.solve(rhs);
}

inline CMatrix gather_columns(const CMatrix& a, std::span<const int> indices) {
  CMatrix sub(a.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i)
    sub.col(static_cast<Eigen::Index>(i)) = a.col(indices[i]);
  return sub;
}

// Indices of the s largest scores, ties resolved toward the lower index;
// returned ascending.
inline std::vector<int> largest_scores(const RVector& score, int s) {
  std::vector<int> idx(static_cast<std::size_t>(score.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + s, idx.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });
  idx.resize(static_cast<std::size_t>(s));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

inline CVector least_squares_on_support(const CMatrix& a, const CVector& y,
                                        std::span<const int> support) {
  if (y.size() != a.rows())
    throw std::invalid_argument("least_squares_on_support: rhs length != row count");
  for (int q : support)
    if (q < 0 || q >= a.cols())
      throw std::invalid_argument("least_squares_on_support: column index " +
                                  std::to_string(q) + " out of range");
  if (support.empty()) return CVector(0);
  return detail::solve_min_norm(detail::gather_columns(a, support), y);
}

inline CVector least_squares_on_support(const SensingMatrix& a, const CVector& y,
                                        std::span<const int> support) {
  return least_squares_on_support(a.entries, y, support);
}

// Subspace-pursuit solver bound to one sensing matrix.  Construction takes a
// thin QR once; every recover() then works on the k x Q reduced system
// (k = min(rows, Q)), which leaves all least-squares minimizers —  and hence
// the recovered image — unchanged while cutting the per-trial cost by the
// row/column ratio.
class SpSolver {
 public:
  explicit SpSolver(const CMatrix& a) : qr_(a), rows_(a.rows()), cols_(a.cols()) {
    const Eigen::Index k = std::min(rows_, cols_);
    r_factor_ = CMatrix::Zero(k, cols_);
    for (Eigen::Index j = 0; j < cols_; ++j)
      for (Eigen::Index i = 0; i <= std::min(j, k - 1); ++i)
        r_factor_(i, j) = qr_.matrixQR()(i, j);
    column_norms_.resize(cols_);
    for (Eigen::Index j = 0; j < cols_; ++j) {
      column_norms_[j] = a.col(j).norm();
      if (!(column_norms_[j] > 0.0))
        throw std::invalid_argument("SpSolver: sensing matrix column " + std::to_string(j) +
                                    " is zero");
    }
  }

  explicit SpSolver(const SensingMatrix& a) : SpSolver(a.entries) {}

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }

  DifferenceImage recover(const CVector& delta_y, const SpConfig& cfg) const {
    if (delta_y.size() != rows_)
      throw std::invalid_argument("sp_recover: measurement length " +
                                  std::to_string(delta_y.size()) + " != matrix rows " +
                                  std::to_string(rows_));
    if (cfg.sparsity < 1 || cfg.sparsity > std::min(rows_, cols_))
      throw std::invalid_argument("sp_recover: sparsity " + std::to_string(cfg.sparsity) +
                                  " outside [1, " + std::to_string(std::min(rows_, cols_)) + "]");
    if (cfg.max_iterations < 0)
      throw std::invalid_argument("sp_recover: max_iterations must be >= 0");
    if (!(cfg.residual_tolerance >= 0.0))
      throw std::invalid_argument("sp_recover: residual_tolerance must be >= 0");

    DifferenceImage image;
    image.delta_sigma_hat = CVector::Zero(cols_);
    const double norm_dy = delta_y.norm();
    if (norm_dy == 0.0) {
      image.residual_history.push_back(0.0);
      return image;
    }

    // Reduce once: with A = Q R, ||delta_y - A x||^2 splits into the in-span
    // part ||z - R x||^2 plus a constant tail.
    const Eigen::Index k = r_factor_.rows();
    const CVector rotated = qr_.householderQ().adjoint() * delta_y;
    const CVector z = rotated.head(k);
    const double tail_sq = rows_ > k ? rotated.tail(rows_ - k).squaredNorm() : 0.0;
    const double stop_at = cfg.residual_tolerance * norm_dy;

    // Correlation scores against the current residual; A^H r == R^H (z - R_S x).
    const auto scores = [&](const CVector& reduced_residual) {
      RVector s = (r_factor_.adjoint() * reduced_residual).cwiseAbs();
      if (cfg.normalize_correlations) s = s.cwiseQuotient(column_norms_);
      return s;
    };
    const auto solve_on = [&](const std::vector<int>& support) {
      return detail::solve_min_norm(detail::gather_columns(r_factor_, support), z);
    };
    const auto reduced_residual_of = [&](const std::vector<int>& support, const CVector& x) {
      return CVector(z - detail::gather_columns(r_factor_, support) * x);
    };

    std::vector<int> support = detail::largest_scores(scores(z), cfg.sparsity);
    CVector x = solve_on(support);
    CVector residual = reduced_residual_of(support, x);
    double residual_norm = std::sqrt(residual.squaredNorm() + tail_sq);
    image.residual_history.push_back(residual_norm);

    for (int it = 1; it <= cfg.max_iterations && residual_norm > stop_at; ++it) {
      image.iterations = it;
      const std::vector<int> candidates = detail::largest_scores(scores(residual), cfg.sparsity);
      std::vector<int> merged;
      std::set_union(support.begin(), support.end(), candidates.begin(), candidates.end(),
                     std::back_inserter(merged));
      const CVector on_merged = solve_on(merged);
      RVector magnitudes(static_cast<Eigen::Index>(merged.size()));
      for (std::size_t i = 0; i < merged.size(); ++i)
        magnitudes[static_cast<Eigen::Index>(i)] = std::abs(on_merged[static_cast<Eigen::Index>(i)]);
      // Prune back to `sparsity` entries; positions in `merged` are ascending,
      // so the tie rule stays "lowest unit index wins".
      const std::vector<int> kept = detail::largest_scores(magnitudes, cfg.sparsity);
      std::vector<int> pruned(kept.size());
      for (std::size_t i = 0; i < kept.size(); ++i)
        pruned[i] = merged[static_cast<std::size_t>(kept[i])];
      const CVector x_pruned = solve_on(pruned);
      const CVector r_pruned = reduced_residual_of(pruned, x_pruned);
      const double norm_pruned = std::sqrt(r_pruned.squaredNorm() + tail_sq);
      if (!(norm_pruned < residual_norm)) break;  // no progress: keep the best iterate
      support = std::move(pruned);
      x = x_pruned;
      residual = r_pruned;
      residual_norm = norm_pruned;
      image.residual_history.push_back(residual_norm);
    }

    image.support = std::move(support);
    for (std::size_t i = 0; i < image.support.size(); ++i)
      image.delta_sigma_hat[image.support[i]] = x[static_cast<Eigen::Index>(i)];
    image.residual_norm = residual_norm;
    return image;
  }

 private:
  Eigen::HouseholderQR<CMatrix> qr_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  CMatrix r_factor_;      // min(rows, cols) x cols upper-trapezoidal factor
  RVector column_norms_;  // of the original matrix's columns
};

inline DifferenceImage sp_recover(const CMatrix& a, const CVector& delta_y,
                                  const SpConfig& cfg) {
  return SpSolver(a).recover(delta_y, cfg);
}

inline DifferenceImage sp_recover(const SensingMatrix& a, const CVector& delta_y,
                                  const SpConfig& cfg) {
  return sp_recover(a.entries, delta_y, cfg);
}

}  // namespace rissim
