#pragma once

// Survey design types and the moment formulas of the stratified estimator
// of the covariance matrix of the mean, Cov^(y_ST)(n).
//
// Divisor conventions:
//   * StratumSummary::covariance (s_h) is a pilot sample covariance with
//     divisor pilot_n - 1, or the population values themselves when no pilot
//     size is recorded.
//   * Fourth moments (m4_vech, m4_vec) and population covariances use the
//     divisor of the data they were computed from (N_h, or the pilot size).
//   * The n passed to every formula below is the decision allocation, never
//     the pilot size frozen inside the summary.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <compare>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "stratalloc/errors.hpp"
#include "stratalloc/matrix_kit.hpp"

namespace stratalloc {

struct StratumSummary {
  std::string id;
  long population_size = 0;  ///< N_h
  SymmetricMatrix covariance;  ///< s_h, G x G
  std::optional<SymmetricMatrix> m4_vech;  ///< k x k, k = G(G+1)/2
  std::optional<Matrix> m4_vec;  ///< G^2 x G^2; only the determinant models need it
  std::optional<long> pilot_size;  ///< empty: population values used as pilot statistics

  Index characteristics() const { return covariance.dim(); }
};

/// Sum of n_h fixed: sum n_h == total_n.
struct SampleSizeBudget {
  long total_n = 0;
};

/// Linear cost: sum c_h n_h + c0 == C.
struct CostBudget {
  std::vector<double> costs;
  double fixed_cost = 0.0;  ///< c0
  double total_cost = 0.0;  ///< C
};

using Budget = std::variant<std::monostate, SampleSizeBudget, CostBudget>;

struct SurveyDesign {
  std::vector<StratumSummary> strata;
  std::vector<std::string> characteristic_names;  ///< may be empty
  Budget budget;

  std::size_t size() const { return strata.size(); }
  Index characteristics() const { return strata.empty() ? 0 : strata.front().characteristics(); }
  long population_size() const {
    long total = 0;
    for (const auto& s : strata) total += s.population_size;
    return total;
  }
  bool has_vech_moments() const {
    return std::all_of(strata.begin(), strata.end(), [](const auto& s) { return s.m4_vech.has_value(); });
  }
  bool has_vec_moments() const {
    return std::all_of(strata.begin(), strata.end(), [](const auto& s) { return s.m4_vec.has_value(); });
  }
  /// Characteristic index by name or by 1-based number; -1 when not found.
  Index characteristic_index(const std::string& key) const {
    for (std::size_t j = 0; j < characteristic_names.size(); ++j)
      if (characteristic_names[j] == key) return static_cast<Index>(j);
    try {
      std::size_t pos = 0;
      const long v = std::stol(key, &pos);
      if (pos == key.size() && v >= 1 && v <= characteristics()) return static_cast<Index>(v - 1);
    } catch (const std::exception&) {
    }
    return -1;
  }
  std::string characteristic_name(Index j) const {
    if (j < static_cast<Index>(characteristic_names.size())) return characteristic_names[j];
    return "y" + std::to_string(j + 1);
  }
};

/// Integer sample sizes n_h, one per stratum.
class Allocation {
 public:
  Allocation() = default;
  explicit Allocation(std::vector<long> n) : n_(std::move(n)) {}
  Allocation(std::initializer_list<long> n) : n_(n) {}

  std::size_t size() const { return n_.size(); }
  long operator[](std::size_t h) const { return n_[h]; }
  long& operator[](std::size_t h) { return n_[h]; }
  const std::vector<long>& values() const { return n_; }
  auto begin() const { return n_.begin(); }
  auto end() const { return n_.end(); }
  long total() const {
    long t = 0;
    for (long v : n_) t += v;
    return t;
  }
  std::vector<double> as_real() const { return {n_.begin(), n_.end()}; }

  friend bool operator==(const Allocation&, const Allocation&) = default;
  friend auto operator<=>(const Allocation& a, const Allocation& b) { return a.n_ <=> b.n_; }

 private:
  std::vector<long> n_;
};

inline std::string to_string(const Allocation& n) {
  std::ostringstream os;
  os << '(';
  for (std::size_t h = 0; h < n.size(); ++h) os << (h ? ", " : "") << n[h];
  os << ')';
  return os.str();
}

/// Raw N_h x G unit values per stratum.
struct FinitePopulation {
  std::vector<Matrix> strata;
};

// ---------------------------------------------------------------------------
// Validation

inline void validate(const SurveyDesign& design) {
  if (design.strata.empty()) throw ValidationError("design has no strata");
  const Index G = design.characteristics();
  const Index k = vech_size(G);
  std::vector<std::string> problems;
  const auto fail = [&](const StratumSummary& s, const std::string& what) {
    problems.push_back("stratum '" + s.id + "': " + what);
  };
  const DuplicationMatrix dup = duplication(std::max<Index>(G, 1));
  for (std::size_t a = 0; a < design.strata.size(); ++a) {
    const auto& s = design.strata[a];
    for (std::size_t b = 0; b < a; ++b)
      if (design.strata[b].id == s.id) fail(s, "duplicate stratum id");
    if (s.population_size < 2) fail(s, "N_h must be >= 2");
    if (s.characteristics() != G || G < 1) {
      fail(s, "covariance dimension differs from the first stratum");
      continue;
    }
    if (!s.covariance.lower().allFinite()) fail(s, "non-finite covariance entry");
    else if (!is_positive_semidefinite(s.covariance)) fail(s, "covariance is not positive semidefinite");
    if (s.pilot_size && (*s.pilot_size < 2 || *s.pilot_size > s.population_size))
      fail(s, "pilot size must lie in [2, N_h]");
    if (s.m4_vech) {
      if (s.m4_vech->dim() != k) fail(s, "m4_vech must be k x k with k = G(G+1)/2");
      else if (!s.m4_vech->lower().allFinite()) fail(s, "non-finite m4_vech entry");
    }
    if (s.m4_vec) {
      if (s.m4_vec->rows() != G * G || s.m4_vec->cols() != G * G) {
        fail(s, "m4_vec must be G^2 x G^2");
      } else if (s.m4_vech && s.m4_vech->dim() == k) {
        const Matrix sandwiched = dup.Dpinv * (*s.m4_vec) * dup.Dpinv.transpose();
        const Matrix ref = s.m4_vech->to_dense();
        const double scale = std::max(ref.norm(), 1e-300);
        if ((sandwiched - ref).norm() > 1e-8 * scale) fail(s, "m4_vec is inconsistent with m4_vech");
      }
    }
  }
  if (const auto* cb = std::get_if<CostBudget>(&design.budget)) {
    if (cb->costs.size() != design.size()) problems.push_back("budget: cost vector length differs from H");
    double minimum = cb->fixed_cost;
    for (double c : cb->costs) {
      if (!(c > 0.0)) problems.push_back("budget: costs must be positive");
      minimum += 2.0 * c;
    }
    if (!(cb->total_cost > minimum)) problems.push_back("budget: C must exceed c0 + sum 2 c_h");
  } else if (const auto* sb = std::get_if<SampleSizeBudget>(&design.budget)) {
    if (sb->total_n < 2 * static_cast<long>(design.size()) || sb->total_n > design.population_size())
      problems.push_back("budget: total_n must lie in [2H, N]");
  }
  if (!problems.empty()) {
    std::string msg = "invalid design:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
}

inline void check_allocation(const SurveyDesign& design, std::span<const double> n) {
  if (n.size() != design.size()) {
    throw DimensionError("allocation has " + std::to_string(n.size()) + " entries, design has " +
                          std::to_string(design.size()) + " strata");
  }
  for (std::size_t h = 0; h < n.size(); ++h) {
    const double N_h = static_cast<double>(design.strata[h].population_size);
    if (!(n[h] >= 2.0 && n[h] <= N_h)) {
      throw InfeasibleError("n_" + std::to_string(h + 1) + " = " + std::to_string(n[h]) +
                            " outside [2, " + std::to_string(design.strata[h].population_size) + "]");
    }
  }
}

// ---------------------------------------------------------------------------
// Estimators over a (possibly real-valued) allocation

/// W_h = N_h / N.
inline Vector weights(const SurveyDesign& design) {
  const double N = static_cast<double>(design.population_size());
  Vector w(static_cast<Index>(design.size()));
  for (std::size_t h = 0; h < design.size(); ++h)
    w[static_cast<Index>(h)] = static_cast<double>(design.strata[h].population_size) / N;
  return w;
}

namespace detail {

/// W^2/n - W/N, the factor multiplying s_h in Cov^(y_ST).
inline double damage(double W, double N, double n) { return W * W / n - W / N; }

inline double expectation_factor(double W, double N, double n) {
  return damage(W, N, n) * n / (n - 1.0);
}

inline double variance_factor(double W, double N, double n) {
  const double a = damage(W, N, n);
  return a * a * n / ((n - 1.0) * (n - 1.0));
}

inline std::vector<Index> all_characteristics(Index G) {
  std::vector<Index> out(static_cast<std::size_t>(G));
  for (Index j = 0; j < G; ++j) out[static_cast<std::size_t>(j)] = j;
  return out;
}

/// Scalar fourth moment of characteristic j and the squared variance.
inline double scalar_kurtosis_kernel(const StratumSummary& s, Index j) {
  if (!s.m4_vech) throw MomentInputError("stratum '" + s.id + "' lacks fourth moments");
  const Index G = s.characteristics();
  const Index p = vech_index(j, j, G);
  const double m4 = (*s.m4_vech)(p, p);
  const double s2 = s.covariance(j, j);
  if (m4 < s2 * s2) {
    throw MomentInputError("stratum '" + s.id + "', characteristic " + std::to_string(j + 1) +
                           ": fourth moment " + std::to_string(m4) + " below squared variance " +
                           std::to_string(s2 * s2));
  }
  return m4 - s2 * s2;
}

}  // namespace detail

/// Cov^(y_ST)(n) = sum_h (W_h^2/n_h) s_h - sum_h (W_h/N) s_h.
inline SymmetricMatrix cov_yst_hat(const SurveyDesign& design, std::span<const double> n) {
  check_allocation(design, n);
  const double N = static_cast<double>(design.population_size());
  const Vector W = weights(design);
  SymmetricMatrix out(design.characteristics());
  for (std::size_t h = 0; h < design.size(); ++h)
    out += detail::damage(W[static_cast<Index>(h)], N, n[h]) * design.strata[h].covariance;
  return out;
}

/// Plug-in E(vech Cov^(y_ST)) = sum_h (W_h^2/n_h - W_h/N) n_h/(n_h-1) vech s_h.
inline Vector expected_vech_cov(const SurveyDesign& design, std::span<const double> n) {
  check_allocation(design, n);
  const double N = static_cast<double>(design.population_size());
  const Vector W = weights(design);
  Vector out = Vector::Zero(vech_size(design.characteristics()));
  for (std::size_t h = 0; h < design.size(); ++h)
    out += detail::expectation_factor(W[static_cast<Index>(h)], N, n[h]) * vech(design.strata[h].covariance);
  return out;
}

/// Plug-in Cov(vech Cov^(y_ST))
///   = sum_h (W_h^2/n_h - W_h/N)^2 n_h/(n_h-1)^2 (m4_h - vech s_h vech' s_h).
inline SymmetricMatrix cov_vech_cov(const SurveyDesign& design, std::span<const double> n) {
  check_allocation(design, n);
  const double N = static_cast<double>(design.population_size());
  const Vector W = weights(design);
  const Index k = vech_size(design.characteristics());
  Matrix out = Matrix::Zero(k, k);
  for (std::size_t h = 0; h < design.size(); ++h) {
    const auto& s = design.strata[h];
    if (!s.m4_vech) throw MomentInputError("stratum '" + s.id + "' lacks m4_vech");
    const Vector v = vech(s.covariance);
    out += detail::variance_factor(W[static_cast<Index>(h)], N, n[h]) *
           (s.m4_vech->to_dense() - v * v.transpose());
  }
  return SymmetricMatrix::symmetrize(out);
}

/// Per-stratum summand of trace_expectation, restricted to `chars`.
inline double trace_expectation_term(const StratumSummary& s, double W, double N, double n,
                                     std::span<const Index> chars) {
  double diag = 0.0;
  for (Index j : chars) diag += s.covariance(j, j);
  return detail::expectation_factor(W, N, n) * diag;
}

/// Per-stratum summand of trace_variance, restricted to `chars`.
inline double trace_variance_term(const StratumSummary& s, double W, double N, double n,
                                  std::span<const Index> chars) {
  double kernel = 0.0;
  for (Index j : chars) kernel += detail::scalar_kurtosis_kernel(s, j);
  return detail::variance_factor(W, N, n) * kernel;
}

/// sum_j sum_h (W_h^2/n_h - W_h/N) n_h/(n_h-1) s^2_hj over the selected characteristics.
inline double trace_expectation(const SurveyDesign& design, std::span<const double> n,
                                std::span<const Index> chars) {
  check_allocation(design, n);
  const double N = static_cast<double>(design.population_size());
  const Vector W = weights(design);
  double total = 0.0;
  for (std::size_t h = 0; h < design.size(); ++h)
    total += trace_expectation_term(design.strata[h], W[static_cast<Index>(h)], N, n[h], chars);
  return total;
}

inline double trace_expectation(const SurveyDesign& design, std::span<const double> n) {
  const auto chars = detail::all_characteristics(design.characteristics());
  return trace_expectation(design, n, chars);
}

/// sum_j sum_h (W_h^2/n_h - W_h/N)^2 n_h/(n_h-1)^2 (m4_hj - (s^2_hj)^2).
/// Only the diagonal variances enter; cross-characteristic covariances of
/// the diagonal are not part of this criterion.
inline double trace_variance(const SurveyDesign& design, std::span<const double> n,
                             std::span<const Index> chars) {
  check_allocation(design, n);
  const double N = static_cast<double>(design.population_size());
  const Vector W = weights(design);
  double total = 0.0;
  for (std::size_t h = 0; h < design.size(); ++h)
    total += trace_variance_term(design.strata[h], W[static_cast<Index>(h)], N, n[h], chars);
  return total;
}

inline double trace_variance(const SurveyDesign& design, std::span<const double> n) {
  const auto chars = detail::all_characteristics(design.characteristics());
  return trace_variance(design, n, chars);
}

// Integer-allocation conveniences.
inline SymmetricMatrix cov_yst_hat(const SurveyDesign& d, const Allocation& n) { return cov_yst_hat(d, n.as_real()); }
inline Vector expected_vech_cov(const SurveyDesign& d, const Allocation& n) { return expected_vech_cov(d, n.as_real()); }
inline SymmetricMatrix cov_vech_cov(const SurveyDesign& d, const Allocation& n) { return cov_vech_cov(d, n.as_real()); }
inline double trace_expectation(const SurveyDesign& d, const Allocation& n) { return trace_expectation(d, n.as_real()); }
inline double trace_variance(const SurveyDesign& d, const Allocation& n) { return trace_variance(d, n.as_real()); }

// ---------------------------------------------------------------------------
// Moments of unit-level data (rows are units, columns characteristics)

inline Vector column_mean(const Matrix& y) { return y.colwise().mean().transpose(); }

/// Covariance with divisor rows (population convention).
inline SymmetricMatrix population_covariance(const Matrix& y) {
  if (y.rows() < 1) throw DimensionError("population_covariance: no rows");
  const Matrix c = y.rowwise() - y.colwise().mean();
  return SymmetricMatrix::symmetrize(c.transpose() * c / static_cast<double>(y.rows()));
}

/// Covariance with divisor rows - 1 (sample convention).
inline SymmetricMatrix sample_covariance(const Matrix& y) {
  if (y.rows() < 2) throw DimensionError("sample_covariance: need at least 2 rows");
  const Matrix c = y.rowwise() - y.colwise().mean();
  return SymmetricMatrix::symmetrize(c.transpose() * c / static_cast<double>(y.rows() - 1));
}

/// (1/rows) Dpinv [sum_i (u_i u_i') (x) (u_i u_i')] Dpinv', u_i = y_i - mean.
/// Computed as the mean outer product of vech(u_i u_i'), which is the same
/// matrix since Dpinv vec(u u') = vech(u u').
inline SymmetricMatrix fourth_moment_vech(const Matrix& y) {
  if (y.rows() < 2) throw DimensionError("fourth_moment_vech: need at least 2 rows");
  const Index G = y.cols();
  const Index k = vech_size(G);
  const Matrix c = y.rowwise() - y.colwise().mean();
  Matrix a(y.rows(), k);
  for (Index j = 0; j < G; ++j)
    for (Index i = j; i < G; ++i) a.col(vech_index(i, j, G)) = c.col(i).cwiseProduct(c.col(j));
  return SymmetricMatrix::symmetrize(a.transpose() * a / static_cast<double>(y.rows()));
}

/// (1/rows) sum_i (u_i u_i') (x) (u_i u_i').
inline Matrix fourth_moment_vec(const Matrix& y) {
  if (y.rows() < 2) throw DimensionError("fourth_moment_vec: need at least 2 rows");
  const Index G = y.cols();
  const Matrix c = y.rowwise() - y.colwise().mean();
  // vec(u u') = u (x) u; the sum of (uu') (x) (uu') equals the sum of
  // (u (x) u)(u (x) u)'.
  Matrix a(y.rows(), G * G);
  for (Index j = 0; j < G; ++j)
    for (Index i = 0; i < G; ++i) a.col(i + j * G) = c.col(i).cwiseProduct(c.col(j));
  Matrix out = a.transpose() * a / static_cast<double>(y.rows());
  return 0.5 * (out + out.transpose());
}

/// Summary of a pilot sample: s_h with divisor rows - 1, fourth moments with
/// divisor rows; pilot size frozen.
inline StratumSummary summarize_pilot(std::string id, long population_size, const Matrix& pilot) {
  StratumSummary s;
  s.id = std::move(id);
  s.population_size = population_size;
  s.covariance = sample_covariance(pilot);
  s.m4_vech = fourth_moment_vech(pilot);
  s.m4_vec = fourth_moment_vec(pilot);
  s.pilot_size = static_cast<long>(pilot.rows());
  return s;
}

// ---------------------------------------------------------------------------
// Determinant model

/// N = sum_h (W_h^2/n_h - W_h/N)^2 n_h/(n_h-1)^2 (m4vec_h - vec s_h vec' s_h).
/// Every column lies in the span of vec of symmetric matrices, so N has rank
/// at most G(G+1)/2 < G^2 and |N| vanishes up to rounding.
inline Matrix det_model_N(const SurveyDesign& design, std::span<const double> n) {
  check_allocation(design, n);
  const double N = static_cast<double>(design.population_size());
  const Vector W = weights(design);
  const Index G = design.characteristics();
  Matrix out = Matrix::Zero(G * G, G * G);
  for (std::size_t h = 0; h < design.size(); ++h) {
    const auto& s = design.strata[h];
    if (!s.m4_vec) throw MomentInputError("stratum '" + s.id + "' lacks m4_vec");
    const Vector v = vec(s.covariance);
    out += detail::variance_factor(W[static_cast<Index>(h)], N, n[h]) * (*s.m4_vec - v * v.transpose());
  }
  return 0.5 * (out + out.transpose());
}

inline Matrix det_model_N(const SurveyDesign& d, const Allocation& n) { return det_model_N(d, n.as_real()); }

struct DeterminantMoments {
  double det_N = 0.0;  ///< |N| after clamping at zero
  bool clamped = false;  ///< raw determinant was negative
  double expectation = 0.0;  ///< of the centered determinant statistic
  double variance = 0.0;
};

/// Moments of the centered determinant statistic as functions of |N|:
///   E = |N|^{1/4} (-1/sqrt(pi)) (G(1/2) - G(3/2))
///   V = |N|^{1/2} [(2/sqrt(pi)) (G(1/2) - G(3/2) + G(5/2)/2) - (1/pi) (G(1/2) - G(3/2))^2]
inline DeterminantMoments determinant_moments(double det_N) {
  DeterminantMoments m;
  m.clamped = det_N < 0.0;
  m.det_N = std::max(det_N, 0.0);
  const double pi = std::numbers::pi;
  const double g12 = std::tgamma(0.5), g32 = std::tgamma(1.5), g52 = std::tgamma(2.5);
  m.expectation = std::pow(m.det_N, 0.25) * (-1.0 / std::sqrt(pi)) * (g12 - g32);
  m.variance = std::sqrt(m.det_N) *
               ((2.0 / std::sqrt(pi)) * (g12 - g32 + g52 / 2.0) - (g12 - g32) * (g12 - g32) / pi);
  return m;
}

inline DeterminantMoments determinant_moments(const SurveyDesign& design, std::span<const double> n) {
  if (design.characteristics() != 2) {
    throw UnsupportedModelError("determinant stochastic models require G == 2, got G = " +
                                std::to_string(design.characteristics()));
  }
  return determinant_moments(det_model_N(design, n).determinant());
}

inline double det_expectation(const SurveyDesign& d, std::span<const double> n) { return determinant_moments(d, n).expectation; }
inline double det_variance(const SurveyDesign& d, std::span<const double> n) { return determinant_moments(d, n).variance; }
inline double det_expectation(const SurveyDesign& d, const Allocation& n) { return det_expectation(d, n.as_real()); }
inline double det_variance(const SurveyDesign& d, const Allocation& n) { return det_variance(d, n.as_real()); }

/// g_Z(z) = (1/sqrt 2) exp(z) [1 - erf(sqrt(2z))], z >= 0.
inline double det_density(double z) {
  if (!(z >= 0.0)) throw DimensionError("det_density: z must be >= 0");
  if (z > 300.0) {
    // exp(z) erfc(sqrt(2z)) with the asymptotic series of erfc, avoiding
    // overflow of exp(z) times underflow of erfc.
    const double x2 = 2.0 * z;
    const double series = 1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2);
    return std::exp(-z) / std::sqrt(std::numbers::pi * x2) * series / std::numbers::sqrt2;
  }
  return std::exp(z) * std::erfc(std::sqrt(2.0 * z)) / std::numbers::sqrt2;
}

/// Integral of det_density over [0, upper] by adaptive Gauss-Kronrod.
/// The density as displayed is not normalized: the mass on [0, inf) is
/// 1 - 1/sqrt(2).
inline double det_density_mass(double upper = 50.0) {
  using boost::math::quadrature::gauss_kronrod;
  double error = 0.0;
  return gauss_kronrod<double, 31>::integrate(det_density, 0.0, upper, 20, 1e-14, &error);
}

}  // namespace stratalloc
