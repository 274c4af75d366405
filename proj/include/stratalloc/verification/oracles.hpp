#pragma once

// Reference computations used only by the tests and the acceptance suite.
// Each one is written from the defining formula with plain loops and shares
// no code path with the library routine it checks.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stratalloc/random.hpp"
#include "stratalloc/strata_model.hpp"

namespace stratalloc::oracle {

/// Distinct (row, col) pairs, row >= col, in column-major order.
inline std::vector<std::pair<int, int>> lower_pairs(int G) {
  std::vector<std::pair<int, int>> out;
  for (int col = 0; col < G; ++col)
    for (int row = col; row < G; ++row) out.emplace_back(row, col);
  return out;
}

/// Duplication matrix from its definition: column p is vec(E_ij + E_ji) for
/// the p-th distinct pair (E_ii once).
inline Eigen::MatrixXd duplication_by_definition(int G) {
  const auto pairs = lower_pairs(G);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(G * G, static_cast<int>(pairs.size()));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(G, G);
    e(i, j) = 1.0;
    e(j, i) = 1.0;
    D.col(static_cast<int>(p)) = Eigen::Map<const Eigen::VectorXd>(e.data(), G * G);
  }
  return D;
}

/// Moore-Penrose inverse by complete orthogonal decomposition.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a) {
  return a.completeOrthogonalDecomposition().pseudoInverse();
}

/// Transpose of a column-major m x n matrix, as a vector.
inline Eigen::VectorXd vec_of_transpose(const Eigen::MatrixXd& c) {
  Eigen::MatrixXd t = c.transpose();
  return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

/// Cov(vech Cov^) entry by entry:
///   sum_h a_h^2 n_h/(n_h-1)^2 (m4[(ij),(kl)] - s_ij s_kl),
///   a_h = W_h^2/n_h - W_h/N.
inline Eigen::MatrixXd cov_vech_cov_by_sums(const SurveyDesign& d, const std::vector<double>& n) {
  const int G = static_cast<int>(d.strata.front().covariance.dim());
  const auto pairs = lower_pairs(G);
  const int k = static_cast<int>(pairs.size());
  double N = 0.0;
  for (const auto& s : d.strata) N += static_cast<double>(s.population_size);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
  for (std::size_t h = 0; h < d.strata.size(); ++h) {
    const auto& s = d.strata[h];
    const double W = static_cast<double>(s.population_size) / N;
    const double a = W * W / n[h] - W / N;
    const double f = a * a * n[h] / ((n[h] - 1.0) * (n[h] - 1.0));
    const Eigen::MatrixXd m4 = s.m4_vech->to_dense();
    for (int p = 0; p < k; ++p) {
      for (int q = 0; q < k; ++q) {
        const double sp = s.covariance(pairs[static_cast<std::size_t>(p)].first, pairs[static_cast<std::size_t>(p)].second);
        const double sq = s.covariance(pairs[static_cast<std::size_t>(q)].first, pairs[static_cast<std::size_t>(q)].second);
        out(p, q) += f * (m4(p, q) - sp * sq);
      }
    }
  }
  return out;
}

/// Variance of the trace as the double sum over strata and characteristics
/// of the scalar kernels a_h^2 n_h/(n_h-1)^2 (m4_hj - s_hj^4).
inline double trace_variance_by_sums(const SurveyDesign& d, const std::vector<double>& n) {
  const int G = static_cast<int>(d.strata.front().covariance.dim());
  const auto pairs = lower_pairs(G);
  double N = 0.0;
  for (const auto& s : d.strata) N += static_cast<double>(s.population_size);
  double total = 0.0;
  for (std::size_t h = 0; h < d.strata.size(); ++h) {
    const auto& s = d.strata[h];
    const double W = static_cast<double>(s.population_size) / N;
    const double a = W * W / n[h] - W / N;
    for (int j = 0; j < G; ++j) {
      int p = 0;
      while (pairs[static_cast<std::size_t>(p)] != std::make_pair(j, j)) ++p;
      const double m4 = (*s.m4_vech)(p, p);
      const double s2 = s.covariance(j, j);
      total += a * a * n[h] / ((n[h] - 1.0) * (n[h] - 1.0)) * (m4 - s2 * s2);
    }
  }
  return total;
}

/// Fourth moment of a scalar sample about its mean, divisor rows.
inline double scalar_fourth_moment(const std::vector<double>& y) {
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double m = 0.0;
  for (double v : y) m += std::pow(v - mean, 4);
  return m / static_cast<double>(y.size());
}

/// Continuous optimum of sum_h (W_h^2/n_h) sum_j s_hjj subject to
/// sum n_h = n: n_h proportional to N_h sqrt(sum_j s_hjj).
inline std::vector<double> trace_closed_form(const SurveyDesign& d, long total_n) {
  std::vector<double> w;
  for (const auto& s : d.strata) {
    double t = 0.0;
    for (Index j = 0; j < s.covariance.dim(); ++j) t += s.covariance(j, j);
    w.push_back(static_cast<double>(s.population_size) * std::sqrt(t));
  }
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v *= static_cast<double>(total_n) / sum;
  return w;
}

/// Random symmetric PSD G x G matrix B B' / G with B standard normal.
inline SymmetricMatrix random_psd(Index G, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd b(G, G + 1);
  for (Index i = 0; i < b.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j) b(i, j) = rng.normal();
  return SymmetricMatrix::symmetrize(scale * b * b.transpose() / static_cast<double>(G));
}

/// Random design whose strata carry the moments (divisor = rows) of a random
/// raw sample, so every fourth-moment kernel is PSD.
inline SurveyDesign random_design(std::size_t H, Index G, Rng& rng, long max_N = 60, long pilot = 12) {
  SurveyDesign d;
  for (std::size_t h = 0; h < H; ++h) {
    const long N = pilot + static_cast<long>(rng.below(static_cast<std::uint64_t>(std::max<long>(max_N - pilot, 1))));
    Eigen::MatrixXd y(pilot, G);
    const double scale = 0.5 + 3.0 * rng.uniform();
    for (Index i = 0; i < y.rows(); ++i)
      for (Index j = 0; j < G; ++j) y(i, j) = scale * rng.normal() + (j > 0 ? 0.5 * y(i, j - 1) : 0.0);
    StratumSummary s = summarize_pilot(std::to_string(h + 1), N, y);
    s.covariance = population_covariance(y);
    d.strata.push_back(std::move(s));
  }
  return d;
}

}  // namespace stratalloc::oracle
