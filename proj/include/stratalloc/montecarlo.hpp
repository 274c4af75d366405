#pragma once

// Finite-population simple random sampling without replacement: moment
// checks for vech Xi and the sample mean, Hajek-type condition diagnostics,
// and synthesis of populations that reproduce a target covariance exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "stratalloc/errors.hpp"
#include "stratalloc/matrix_kit.hpp"
#include "stratalloc/parallel.hpp"
#include "stratalloc/random.hpp"
#include "stratalloc/strata_model.hpp"

namespace stratalloc {

struct SimConfig {
  long reps = 10000;
  std::uint64_t seed = 1;
  long n = 2;
  Matrix population;  ///< N x G, one stratum
  int workers = 1;
};

struct MomentReport {
  std::string quantity;  ///< "vech Xi" or "mean"
  long reps = 0;
  std::uint64_t seed = 0;
  long n = 0;
  long N = 0;
  Vector empirical_mean;
  SymmetricMatrix empirical_cov;
  Vector theoretical_mean;
  SymmetricMatrix theoretical_cov;  ///< the form without finite-population factor
  SymmetricMatrix alternative_cov;  ///< finite-population form
  Vector mean_se;
  Vector mean_z;
  SymmetricMatrix cov_se;
  SymmetricMatrix cov_z;  ///< against theoretical_cov
  SymmetricMatrix alternative_cov_z;  ///< against alternative_cov
  Vector skewness;
  Vector excess_kurtosis;
  double skewness_se = 0.0;
  double kurtosis_se = 0.0;
  double max_identity_residual = 0.0;  ///< relative; vech Xi only
  bool census = false;

  double max_abs_mean_z() const { return mean_z.size() ? mean_z.cwiseAbs().maxCoeff() : 0.0; }
  static double max_abs(const SymmetricMatrix& m) { return m.lower().size() ? m.lower().cwiseAbs().maxCoeff() : 0.0; }
  double max_abs_cov_z() const { return max_abs(cov_z); }
  double max_abs_alternative_cov_z() const { return max_abs(alternative_cov_z); }
};

/// Uniform n-subset of the rows, without replacement (partial Fisher-Yates).
inline Matrix srswor(const Matrix& population, long n, Rng& rng) {
  const long N = static_cast<long>(population.rows());
  if (n < 1 || n > N) throw DimensionError("srswor: need 1 <= n <= N, got n = " + std::to_string(n));
  std::vector<Index> idx(static_cast<std::size_t>(N));
  std::iota(idx.begin(), idx.end(), Index{0});
  Matrix out(n, population.cols());
  for (long i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(N - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    out.row(i) = population.row(idx[static_cast<std::size_t>(i)]);
  }
  return out;
}

/// vech of (1/(n-1)) sum_i (y_i - Ybar)(y_i - Ybar)' about the population mean.
inline Vector xi_statistic(const Matrix& sample, const Vector& pop_mean) {
  if (sample.rows() < 2) throw DimensionError("xi_statistic: need at least 2 rows");
  const Matrix c = sample.rowwise() - pop_mean.transpose();
  return vech(SymmetricMatrix::symmetrize(c.transpose() * c / static_cast<double>(sample.rows() - 1)));
}

namespace detail {

/// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline constexpr long kChunk = 250;

/// Runs `reps` draws in fixed chunks, each with its own stream; the row r of
/// the result holds the statistic of draw r independent of the worker count.
inline Matrix simulate_draws(const SimConfig& cfg, Index width,
                             const std::function<void(const Matrix&, Vector&, double&)>& stat,
                             double& max_residual) {
  const long N = static_cast<long>(cfg.population.rows());
  if (cfg.reps < 1) throw DimensionError("reps must be >= 1");
  if (cfg.n < 2 || cfg.n > N) throw DimensionError("need 2 <= n <= N");
  Matrix draws(cfg.reps, width);
  const auto chunks = static_cast<std::size_t>((cfg.reps + kChunk - 1) / kChunk);
  std::vector<double> residuals(chunks, 0.0);
  parallel_for(chunks, cfg.workers, [&](std::size_t c) {
    Rng rng(cfg.seed, c);
    std::vector<Index> idx(static_cast<std::size_t>(N));
    std::iota(idx.begin(), idx.end(), Index{0});
    Matrix sample(cfg.n, cfg.population.cols());
    Vector out(width);
    const long first = static_cast<long>(c) * kChunk;
    const long last = std::min(cfg.reps, first + kChunk);
    for (long r = first; r < last; ++r) {
      for (long i = 0; i < cfg.n; ++i) {
        const auto j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(N - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
        sample.row(i) = cfg.population.row(idx[static_cast<std::size_t>(i)]);
      }
      double res = 0.0;
      stat(sample, out, res);
      draws.row(r) = out.transpose();
      residuals[c] = std::max(residuals[c], res);
    }
  });
  max_residual = residuals.empty() ? 0.0 : *std::max_element(residuals.begin(), residuals.end());
  return draws;
}

/// Differences below the rounding floor of `scale` score 0 (census draws).
inline double z_score(double diff, double se, double scale) {
  if (std::abs(diff) <= 1e-12 * scale) return 0.0;
  if (se > 0.0) return diff / se;
  return std::copysign(std::numeric_limits<double>::infinity(), diff);
}

/// Empirical moments, standard errors and shape statistics of the rows.
inline void summarize_draws(const Matrix& draws, MomentReport& r) {
  const Index R = draws.rows(), k = draws.cols();
  const double reps = static_cast<double>(R);
  r.empirical_mean.resize(k);
  for (Index a = 0; a < k; ++a) {
    CompensatedSum s;
    for (Index i = 0; i < R; ++i) s.add(draws(i, a));
    r.empirical_mean[a] = s.value() / reps;
  }
  const Matrix c = draws.rowwise() - r.empirical_mean.transpose();
  r.empirical_cov = SymmetricMatrix(k);
  r.cov_se = SymmetricMatrix(k);
  r.mean_se.resize(k);
  r.skewness.resize(k);
  r.excess_kurtosis.resize(k);
  for (Index b = 0; b < k; ++b) {
    for (Index a = b; a < k; ++a) {
      CompensatedSum s, s2;
      for (Index i = 0; i < R; ++i) {
        const double w = c(i, a) * c(i, b);
        s.add(w);
        s2.add(w * w);
      }
      const double mean_w = s.value() / reps;
      r.empirical_cov(a, b) = R > 1 ? s.value() / (reps - 1.0) : 0.0;
      const double var_w = std::max(s2.value() / reps - mean_w * mean_w, 0.0);
      r.cov_se(a, b) = R > 1 ? std::sqrt(var_w / reps) * reps / (reps - 1.0) : 0.0;
    }
  }
  for (Index a = 0; a < k; ++a) {
    CompensatedSum m2, m3, m4;
    for (Index i = 0; i < R; ++i) {
      const double d = c(i, a);
      m2.add(d * d);
      m3.add(d * d * d);
      m4.add(d * d * d * d);
    }
    const double v = m2.value() / reps;
    r.mean_se[a] = R > 1 ? std::sqrt(r.empirical_cov(a, a) / reps) : 0.0;
    const bool flat = !(v > 1e-24 * std::max(1.0, r.empirical_mean[a] * r.empirical_mean[a]));
    r.skewness[a] = flat ? 0.0 : (m3.value() / reps) / std::pow(v, 1.5);
    r.excess_kurtosis[a] = flat ? 0.0 : (m4.value() / reps) / (v * v) - 3.0;
  }
  r.skewness_se = std::sqrt(6.0 / reps);
  r.kurtosis_se = std::sqrt(24.0 / reps);
}

inline void score(MomentReport& r) {
  const Index k = r.empirical_mean.size();
  r.mean_z.resize(k);
  for (Index a = 0; a < k; ++a)
    r.mean_z[a] = z_score(r.empirical_mean[a] - r.theoretical_mean[a], r.mean_se[a],
                          std::abs(r.theoretical_mean[a]));
  r.cov_z = SymmetricMatrix(k);
  r.alternative_cov_z = SymmetricMatrix(k);
  const double mean_scale = r.theoretical_mean.cwiseAbs().maxCoeff();
  const double scale = std::max(r.theoretical_cov.lower().cwiseAbs().maxCoeff(), mean_scale * mean_scale);
  for (Index b = 0; b < k; ++b) {
    for (Index a = b; a < k; ++a) {
      const double emp = r.empirical_cov(a, b);
      const double se = r.cov_se(a, b);
      r.cov_z(a, b) = z_score(emp - r.theoretical_cov(a, b), se, scale);
      r.alternative_cov_z(a, b) = z_score(emp - r.alternative_cov(a, b), se, scale);
    }
  }
}

}  // namespace detail

/// Empirical moments of vech Xi under repeated SRSWOR draws, against
///   E    = n/(n-1) vech S
///   Cov  = n/(n-1)^2 (M4 - vech S vech' S)
/// with S and M4 population moments (divisor N). The exact finite-population
/// covariance carries the extra factor (N-n)/(N-1) and is reported as the
/// alternative.
inline MomentReport verify_lemma1_moments(const SimConfig& cfg) {
  const Matrix& Y = cfg.population;
  const long N = static_cast<long>(Y.rows());
  const Index G = Y.cols();
  const double n = static_cast<double>(cfg.n);
  const Vector pop_mean = column_mean(Y);
  const SymmetricMatrix S = population_covariance(Y);
  const SymmetricMatrix M4 = fourth_moment_vech(Y);
  const Vector vs = vech(S);

  MomentReport r;
  r.quantity = "vech Xi";
  r.reps = cfg.reps;
  r.seed = cfg.seed;
  r.n = cfg.n;
  r.N = N;
  r.census = cfg.n == N;
  double residual = 0.0;
  const Matrix draws = detail::simulate_draws(
      cfg, vech_size(G),
      [&](const Matrix& sample, Vector& out, double& res) {
        const Vector xi = xi_statistic(sample, pop_mean);
        out = xi;
        // s = Xi - n/(n-1) (ybar - Ybar)(ybar - Ybar)'
        const Vector d = column_mean(sample) - pop_mean;
        const Vector rhs = xi - n / (n - 1.0) * vech(SymmetricMatrix::symmetrize(d * d.transpose()));
        const Vector lhs = vech(sample_covariance(sample));
        const double scale = std::max(xi.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
        res = (lhs - rhs).cwiseAbs().maxCoeff() / scale;
      },
      residual);
  r.max_identity_residual = residual;
  detail::summarize_draws(draws, r);
  r.theoretical_mean = n / (n - 1.0) * vs;
  const Matrix kernel = M4.to_dense() - vs * vs.transpose();
  r.theoretical_cov = SymmetricMatrix::symmetrize(n / ((n - 1.0) * (n - 1.0)) * kernel);
  const double fpc = N > 1 ? (static_cast<double>(N) - n) / (static_cast<double>(N) - 1.0) : 0.0;
  r.alternative_cov = r.theoretical_cov * fpc;
  detail::score(r);
  return r;
}

/// Empirical moments of the sample mean, against S as the literal limiting
/// covariance and the finite-population form (1/n - 1/N) N/(N-1) S.
inline MomentReport verify_mean_clt(const SimConfig& cfg) {
  const Matrix& Y = cfg.population;
  const long N = static_cast<long>(Y.rows());
  const double n = static_cast<double>(cfg.n), Nd = static_cast<double>(N);
  MomentReport r;
  r.quantity = "mean";
  r.reps = cfg.reps;
  r.seed = cfg.seed;
  r.n = cfg.n;
  r.N = N;
  r.census = cfg.n == N;
  double unused = 0.0;
  const Matrix draws = detail::simulate_draws(
      cfg, Y.cols(),
      [](const Matrix& sample, Vector& out, double& res) {
        out = column_mean(sample);
        res = 0.0;
      },
      unused);
  detail::summarize_draws(draws, r);
  r.theoretical_mean = column_mean(Y);
  const SymmetricMatrix S = population_covariance(Y);
  r.theoretical_cov = S;
  r.alternative_cov = S * ((1.0 / n - 1.0 / Nd) * Nd / (Nd - 1.0));
  detail::score(r);
  return r;
}

struct HajekReport {
  double lhs = 0.0;  ///< lambda' (M4 - vech S vech' S) lambda
  double rhs_max = 0.0;  ///< max_alpha lambda_alpha^2 [M4 - vech S vech' S]_{alpha alpha}
  Index rhs_argmax = 0;
  double ratio = 0.0;  ///< lhs / rhs_max; the condition holds iff ratio >= epsilon
  double epsilon = 0.0;
  bool satisfied = false;
  bool degenerate = false;  ///< M4 - vech S vech' S == 0
  /// Per characteristic: top-n sum of [(y - Ybar)^2 - S^2]^2 over N [m4 - S^4].
  std::vector<double> squared_deviation_ratio;
  /// Per characteristic: top-n sum of (y - Ybar)^2 over N S^2.
  std::vector<double> deviation_ratio;
};

namespace detail {

/// Sum of the n largest entries of a nonnegative vector.
inline double top_sum(std::vector<double> terms, long n) {
  const auto m = static_cast<std::size_t>(std::clamp<long>(n, 0, static_cast<long>(terms.size())));
  std::nth_element(terms.begin(), terms.begin() + static_cast<std::ptrdiff_t>(m) - (m > 0 ? 1 : 0), terms.end(),
                   std::greater<>());
  std::sort(terms.begin(), terms.begin() + static_cast<std::ptrdiff_t>(m), std::greater<>());
  CompensatedSum s;
  for (std::size_t i = 0; i < m; ++i) s.add(terms[i]);
  return s.value();
}

inline double total_sum(const std::vector<double>& terms) {
  CompensatedSum s;
  for (double t : terms) s.add(t);
  return s.value();
}

}  // namespace detail

inline HajekReport hajek_condition_report(const Matrix& population, long n, const Vector& lambda, double epsilon) {
  const Index G = population.cols();
  const Index k = vech_size(G);
  const long N = static_cast<long>(population.rows());
  if (lambda.size() != k) throw DimensionError("lambda must have G(G+1)/2 entries");
  if (n < 1 || n > N) throw DimensionError("hajek: need 1 <= n <= N");
  const SymmetricMatrix S = population_covariance(population);
  const Vector vs = vech(S);
  const Matrix kernel = fourth_moment_vech(population).to_dense() - vs * vs.transpose();
  HajekReport r;
  r.epsilon = epsilon;
  const double scale = std::max(kernel.cwiseAbs().maxCoeff(), 0.0);
  const double vscale = vs.cwiseAbs().maxCoeff();
  r.degenerate = !(scale > 1e-13 * std::max(vscale * vscale, std::numeric_limits<double>::min()));
  r.lhs = lambda.dot(kernel * lambda);
  for (Index a = 0; a < k; ++a) {
    const double term = lambda[a] * lambda[a] * kernel(a, a);
    if (a == 0 || term > r.rhs_max) {
      r.rhs_max = term;
      r.rhs_argmax = a;
    }
  }
  r.ratio = r.degenerate || r.rhs_max <= 0.0 ? std::numeric_limits<double>::quiet_NaN() : r.lhs / r.rhs_max;
  r.satisfied = !r.degenerate && r.ratio >= epsilon;

  const Vector mean = column_mean(population);
  for (Index j = 0; j < G; ++j) {
    std::vector<double> sq(static_cast<std::size_t>(N)), dev(static_cast<std::size_t>(N));
    for (long i = 0; i < N; ++i) {
      const double d = population(i, j) - mean[j];
      dev[static_cast<std::size_t>(i)] = d * d;
      const double e = d * d - S(j, j);
      sq[static_cast<std::size_t>(i)] = e * e;
    }
    const double sq_total = detail::total_sum(sq);  // = N (m4 - S^4)
    const double dev_total = detail::total_sum(dev);  // = N S^2
    r.squared_deviation_ratio.push_back(sq_total > 0.0 ? detail::top_sum(sq, n) / sq_total
                                                       : std::numeric_limits<double>::quiet_NaN());
    r.deviation_ratio.push_back(dev_total > 0.0 ? detail::top_sum(dev, n) / dev_total
                                                : std::numeric_limits<double>::quiet_NaN());
  }
  return r;
}

enum class Distribution { gaussian, lognormal };

inline std::string_view to_string(Distribution d) { return d == Distribution::gaussian ? "gaussian" : "lognormal"; }

/// N x G population whose covariance (divisor N) equals `target` up to
/// rounding: raw draws are centered and mapped by T^{1/2} C^{-1/2}.
inline Matrix synthesize_population(const SymmetricMatrix& target, long N, Distribution dist, Rng& rng) {
  const Index G = target.dim();
  if (!is_positive_semidefinite(target)) throw ValidationError("synthesis target covariance is not PSD");
  if (N <= G) throw DimensionError("synthesis needs N > G");
  Matrix z(N, G);
  for (long i = 0; i < N; ++i)
    for (Index j = 0; j < G; ++j) z(i, j) = dist == Distribution::gaussian ? rng.normal() : std::exp(rng.normal());
  z = z.rowwise() - z.colwise().mean();
  const Matrix c = z.transpose() * z / static_cast<double>(N);
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  if (es.eigenvalues().minCoeff() <= 0.0) throw DimensionError("synthesis draw is degenerate");
  const Matrix inv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                          es.eigenvectors().transpose();
  Matrix y = z * inv_sqrt * psd_sqrt(target);
  y = y.rowwise() - y.colwise().mean();
  return y;
}

/// Replaces the fourth moments of every stratum with those of a synthesized
/// population of size N_h matching s_h; stratum h uses stream h of `seed`.
inline FinitePopulation synthesize_moments(SurveyDesign& design, Distribution dist, std::uint64_t seed,
                                           int workers = 1) {
  FinitePopulation pop;
  pop.strata.resize(design.size());
  parallel_for(design.size(), workers, [&](std::size_t h) {
    auto& s = design.strata[h];
    Rng rng(seed, 0x5A570000ULL + h);
    pop.strata[h] = synthesize_population(s.covariance, s.population_size, dist, rng);
    s.m4_vech = fourth_moment_vech(pop.strata[h]);
    s.m4_vec = fourth_moment_vec(pop.strata[h]);
  });
  return pop;
}

}  // namespace stratalloc
