#pragma once

// Scalar objectives over allocations for the deterministic value-function
// model and the stochastic modified E-, E-, V- and P-models, plus the
// single-characteristic Neyman baseline.

#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stratalloc/errors.hpp"
#include "stratalloc/matrix_kit.hpp"
#include "stratalloc/strata_model.hpp"

namespace stratalloc {

enum class ValueFunction { trace, determinant, lambda_max, lambda_min };

enum class StochasticModel { deterministic, modified_e, e, v, p };

inline std::string_view to_string(ValueFunction f) {
  switch (f) {
    case ValueFunction::trace: return "trace";
    case ValueFunction::determinant: return "det";
    case ValueFunction::lambda_max: return "lambda-max";
    case ValueFunction::lambda_min: return "lambda-min";
  }
  return "?";
}

inline std::string_view to_string(StochasticModel m) {
  switch (m) {
    case StochasticModel::deterministic: return "deterministic";
    case StochasticModel::modified_e: return "modified-e";
    case StochasticModel::e: return "e";
    case StochasticModel::v: return "v";
    case StochasticModel::p: return "p";
  }
  return "?";
}

inline std::optional<ValueFunction> parse_value_function(std::string_view s) {
  if (s == "trace") return ValueFunction::trace;
  if (s == "det" || s == "determinant") return ValueFunction::determinant;
  if (s == "lambda-max") return ValueFunction::lambda_max;
  if (s == "lambda-min") return ValueFunction::lambda_min;
  return std::nullopt;
}

inline std::optional<StochasticModel> parse_model(std::string_view s) {
  if (s == "deterministic") return StochasticModel::deterministic;
  if (s == "modified-e") return StochasticModel::modified_e;
  if (s == "e") return StochasticModel::e;
  if (s == "v") return StochasticModel::v;
  if (s == "p") return StochasticModel::p;
  return std::nullopt;
}

struct ModelSpec {
  StochasticModel model = StochasticModel::deterministic;
  ValueFunction value_fn = ValueFunction::trace;
  double k1 = 1.0;
  double k2 = 0.0;
  std::optional<double> tau;
  /// Characteristics entering a trace; empty means all of them.
  std::vector<Index> characteristics;

  /// (k1, k2) actually used: E fixes (1, 0) and V fixes (0, 1).
  std::pair<double, double> effective_weights() const {
    switch (model) {
      case StochasticModel::e: return {1.0, 0.0};
      case StochasticModel::v: return {0.0, 1.0};
      default: return {k1, k2};
    }
  }
};

/// Deterministic evaluator over allocations. Objectives that are a sum of
/// per-stratum terms expose them through term(), which the solver uses for
/// bounds; evaluate() then equals the in-order sum of the terms.
class Objective {
 public:
  using Evaluator = std::function<double(std::span<const double>)>;
  using Term = std::function<double(std::size_t, double)>;

  Objective(std::shared_ptr<const SurveyDesign> design, ModelSpec spec, Evaluator eval, Term term = {})
      : design_(std::move(design)), spec_(std::move(spec)), eval_(std::move(eval)), term_(std::move(term)) {}

  double evaluate(std::span<const double> n) const { return eval_(n); }
  double evaluate(const Allocation& n) const {
    const auto real = n.as_real();
    return eval_(real);
  }
  double operator()(std::span<const double> n) const { return eval_(n); }

  bool separable() const { return static_cast<bool>(term_); }
  double term(std::size_t h, double n_h) const { return term_(h, n_h); }

  const SurveyDesign& design() const { return *design_; }
  const ModelSpec& spec() const { return spec_; }

 private:
  std::shared_ptr<const SurveyDesign> design_;
  ModelSpec spec_;
  Evaluator eval_;
  Term term_;
};

namespace detail {

inline std::vector<Index> resolve_characteristics(const SurveyDesign& design, const ModelSpec& spec) {
  if (spec.characteristics.empty()) return all_characteristics(design.characteristics());
  for (Index j : spec.characteristics)
    if (j < 0 || j >= design.characteristics())
      throw DimensionError("characteristic index " + std::to_string(j) + " out of range");
  return spec.characteristics;
}

inline void require_scalar_moments(const SurveyDesign& design, std::span<const Index> chars) {
  for (const auto& s : design.strata)
    for (Index j : chars) scalar_kurtosis_kernel(s, j);
}

inline Objective make_separable(std::shared_ptr<const SurveyDesign> design, ModelSpec spec,
                                Objective::Term term) {
  auto eval = [design, term](std::span<const double> n) {
    check_allocation(*design, n);
    double total = 0.0;
    for (std::size_t h = 0; h < n.size(); ++h) total += term(h, n[h]);
    return total;
  };
  return Objective(design, std::move(spec), std::move(eval), std::move(term));
}

}  // namespace detail

inline Objective build_objective(const SurveyDesign& source, ModelSpec spec) {
  auto design = std::make_shared<const SurveyDesign>(source);
  const auto chars = detail::resolve_characteristics(*design, spec);
  const double N = static_cast<double>(design->population_size());
  const Vector W = weights(*design);
  const bool restricted = !spec.characteristics.empty();

  if (spec.model == StochasticModel::deterministic) {
    switch (spec.value_fn) {
      case ValueFunction::trace: {
        auto term = [design, W, N, chars](std::size_t h, double n_h) {
          double diag = 0.0;
          for (Index j : chars) diag += design->strata[h].covariance(j, j);
          return detail::damage(W[static_cast<Index>(h)], N, n_h) * diag;
        };
        return detail::make_separable(design, std::move(spec), term);
      }
      case ValueFunction::determinant:
      case ValueFunction::lambda_max:
      case ValueFunction::lambda_min: {
        if (restricted) throw UnsupportedModelError("characteristic selection applies to the trace only");
        const ValueFunction f = spec.value_fn;
        auto eval = [design, f](std::span<const double> n) {
          const SymmetricMatrix c = cov_yst_hat(*design, n);
          if (f == ValueFunction::determinant) return c.to_dense().determinant();
          return f == ValueFunction::lambda_max ? max_eigenvalue(c) : min_eigenvalue(c);
        };
        return Objective(design, std::move(spec), std::move(eval));
      }
    }
  }

  if (spec.value_fn == ValueFunction::lambda_max || spec.value_fn == ValueFunction::lambda_min) {
    throw UnsupportedModelError("stochastic models are only available for the trace and determinant");
  }

  if (spec.model == StochasticModel::p && !spec.tau) {
    throw UnsupportedModelError("the P-model requires an aspiration level tau");
  }

  if (spec.value_fn == ValueFunction::trace) {
    if (spec.model == StochasticModel::p) {
      detail::require_scalar_moments(*design, chars);
      const double tau = *spec.tau;
      auto eval = [design, chars, tau](std::span<const double> n) {
        return (tau - trace_expectation(*design, n, chars)) / std::sqrt(trace_variance(*design, n, chars));
      };
      return Objective(design, std::move(spec), std::move(eval));
    }
    const auto [k1, k2] = spec.effective_weights();
    if (!(k1 >= 0.0 && k2 >= 0.0 && k1 + k2 > 0.0)) {
      throw UnsupportedModelError("modified E-model needs k1, k2 >= 0 with k1 + k2 > 0");
    }
    if (k2 == 0.0) {
      const double scale = k1;
      auto term = [design, W, N, chars, scale](std::size_t h, double n_h) {
        return scale * trace_expectation_term(design->strata[h], W[static_cast<Index>(h)], N, n_h, chars);
      };
      return detail::make_separable(design, std::move(spec), term);
    }
    detail::require_scalar_moments(*design, chars);
    auto eval = [design, chars, k1 = k1, k2 = k2](std::span<const double> n) {
      const double sd = std::sqrt(trace_variance(*design, n, chars));
      if (k1 == 0.0) return k2 * sd;
      return k1 * trace_expectation(*design, n, chars) + k2 * sd;
    };
    return Objective(design, std::move(spec), std::move(eval));
  }

  // Determinant value function, stochastic models.
  if (restricted) throw UnsupportedModelError("characteristic selection applies to the trace only");
  if (design->characteristics() != 2) {
    throw UnsupportedModelError("determinant stochastic models require G == 2");
  }
  if (!design->has_vec_moments()) {
    throw MomentInputError("determinant stochastic models need m4_vec for every stratum");
  }
  if (spec.model == StochasticModel::p) {
    const double tau = *spec.tau;
    auto eval = [design, tau](std::span<const double> n) {
      return tau * std::pow(determinant_moments(*design, n).det_N, 0.25);
    };
    return Objective(design, std::move(spec), std::move(eval));
  }
  const auto [k1, k2] = spec.effective_weights();
  if (!(k1 >= 0.0 && k2 >= 0.0 && k1 + k2 > 0.0)) {
    throw UnsupportedModelError("modified E-model needs k1, k2 >= 0 with k1 + k2 > 0");
  }
  auto eval = [design, k1 = k1, k2 = k2](std::span<const double> n) {
    const DeterminantMoments m = determinant_moments(*design, n);
    return k1 * m.expectation + k2 * std::sqrt(m.variance);
  };
  return Objective(design, std::move(spec), std::move(eval));
}

// ---------------------------------------------------------------------------
// Integerization and the Neyman baseline

/// Largest-remainder rounding of `target` to integers in [lower_h, upper_h]
/// summing to `total`. Ties go to the lowest stratum index.
inline Allocation apportion(std::span<const double> target, long total, std::span<const long> lower,
                            std::span<const long> upper) {
  const std::size_t H = target.size();
  long lo_sum = 0, hi_sum = 0;
  for (std::size_t h = 0; h < H; ++h) {
    lo_sum += lower[h];
    hi_sum += upper[h];
  }
  if (total < lo_sum || total > hi_sum) {
    throw InfeasibleError("cannot apportion " + std::to_string(total) + " within the stratum bounds");
  }
  std::vector<long> n(H);
  std::vector<double> remainder(H);
  long assigned = 0;
  for (std::size_t h = 0; h < H; ++h) {
    const double f = std::floor(target[h]);
    n[h] = std::clamp(static_cast<long>(f), lower[h], upper[h]);
    remainder[h] = target[h] - f;
    assigned += n[h];
  }
  std::vector<std::size_t> order(H);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  while (assigned < total) {
    for (std::size_t h : order) {
      if (assigned == total) break;
      if (n[h] < upper[h]) {
        ++n[h];
        ++assigned;
      }
    }
  }
  while (assigned > total) {
    for (auto it = order.rbegin(); it != order.rend() && assigned > total; ++it) {
      if (n[*it] > lower[*it]) {
        --n[*it];
        --assigned;
      }
    }
  }
  return Allocation(std::move(n));
}

/// Continuous minimizer of sum W_h^2 s^2_hj / n_h under sum n_h = total_n and
/// 2 <= n_h <= N_h: n_h proportional to N_h s_hj, with bound-violating strata
/// fixed at their bound and the remainder redistributed.
inline std::vector<double> neyman_continuous(const SurveyDesign& design, Index j, long total_n) {
  const std::size_t H = design.size();
  if (j < 0 || j >= design.characteristics()) throw DimensionError("characteristic index out of range");
  if (total_n < 2 * static_cast<long>(H) || total_n > design.population_size()) {
    throw InfeasibleError("total_n must lie in [2H, N]");
  }
  std::vector<double> x(H, 0.0);
  std::vector<int> fixed(H, 0);  // 0 free, -1 at lower bound, +1 at upper bound
  for (;;) {
    double free_weight = 0.0, remaining = static_cast<double>(total_n);
    std::size_t free_count = 0;
    for (std::size_t h = 0; h < H; ++h) {
      if (fixed[h] == 0) {
        free_weight += static_cast<double>(design.strata[h].population_size) *
                       std::sqrt(design.strata[h].covariance(j, j));
        ++free_count;
      } else {
        remaining -= x[h];
      }
    }
    if (free_count == 0) break;
    for (std::size_t h = 0; h < H; ++h) {
      if (fixed[h] != 0) continue;
      const double c = static_cast<double>(design.strata[h].population_size) *
                       std::sqrt(design.strata[h].covariance(j, j));
      x[h] = free_weight > 0.0 ? remaining * c / free_weight : remaining / static_cast<double>(free_count);
    }
    bool changed = false;
    for (std::size_t h = 0; h < H; ++h) {
      if (fixed[h] == 0 && x[h] > static_cast<double>(design.strata[h].population_size)) {
        x[h] = static_cast<double>(design.strata[h].population_size);
        fixed[h] = 1;
        changed = true;
      }
    }
    if (changed) continue;
    for (std::size_t h = 0; h < H; ++h) {
      if (fixed[h] == 0 && x[h] < 2.0) {
        x[h] = 2.0;
        fixed[h] = -1;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return x;
}

inline Allocation neyman_allocation(const SurveyDesign& design, Index j, long total_n) {
  const auto x = neyman_continuous(design, j, total_n);
  std::vector<long> lower(design.size(), 2), upper;
  for (const auto& s : design.strata) upper.push_back(s.population_size);
  return apportion(x, total_n, lower, upper);
}

/// Per-characteristic estimated variances: the diagonal of Cov^(y_ST)(n).
inline Vector variance_report(const SurveyDesign& design, const Allocation& n) {
  const SymmetricMatrix c = cov_yst_hat(design, n);
  Vector out(c.dim());
  for (Index j = 0; j < c.dim(); ++j) out[j] = c(j, j);
  return out;
}

}  // namespace stratalloc
