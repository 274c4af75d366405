#pragma once

// Integer allocation solver: projected-gradient continuous relaxation,
// integer local search, branch-and-bound with Lagrangian bounds for
// separable objectives whose terms are verified convex, and an exhaustive
// oracle for small lattices.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stratalloc/errors.hpp"
#include "stratalloc/objectives.hpp"
#include "stratalloc/parallel.hpp"
#include "stratalloc/random.hpp"
#include "stratalloc/strata_model.hpp"

namespace stratalloc {

enum class Relation { equality, at_most };

/// One linear constraint a'n (relation) b plus bounds lower_h <= n_h <= upper_h.
struct ConstraintSet {
  std::vector<double> coefficients;
  double rhs = 0.0;
  Relation relation = Relation::equality;
  std::vector<long> lower;
  std::vector<long> upper;
  /// For at_most: also require rhs - a'n < max_slack.
  std::optional<double> max_slack;

  std::size_t size() const { return coefficients.size(); }

  bool unit_coefficients() const {
    return std::all_of(coefficients.begin(), coefficients.end(), [](double a) { return a == 1.0; });
  }

  double activity(const Allocation& n) const {
    double s = 0.0;
    for (std::size_t h = 0; h < n.size(); ++h) s += coefficients[h] * static_cast<double>(n[h]);
    return s;
  }

  double slack(const Allocation& n) const { return rhs - activity(n); }

  bool within_bounds(const Allocation& n) const {
    if (n.size() != size()) return false;
    for (std::size_t h = 0; h < n.size(); ++h)
      if (n[h] < lower[h] || n[h] > upper[h]) return false;
    return true;
  }

  bool feasible(const Allocation& n) const {
    if (!within_bounds(n)) return false;
    if (relation == Relation::equality) {
      if (unit_coefficients()) return static_cast<double>(n.total()) == rhs;
      return std::abs(activity(n) - rhs) <= 1e-9 * std::max(1.0, std::abs(rhs));
    }
    const double s = slack(n);
    if (s < -1e-9 * std::max(1.0, std::abs(rhs))) return false;
    return !max_slack || s < *max_slack;
  }

  /// sum n_h = total_n with 2 <= n_h <= N_h.
  static ConstraintSet total_size(const SurveyDesign& design, long total_n) {
    ConstraintSet c;
    c.coefficients.assign(design.size(), 1.0);
    c.rhs = static_cast<double>(total_n);
    c.relation = Relation::equality;
    c.lower.assign(design.size(), 2);
    for (const auto& s : design.strata) c.upper.push_back(s.population_size);
    return c;
  }

  /// c'n + c0 <= C with slack below min c_h; exact equality is generally
  /// unattainable on the integer lattice.
  static ConstraintSet cost(const SurveyDesign& design, const CostBudget& b) {
    ConstraintSet c;
    c.coefficients = b.costs;
    c.rhs = b.total_cost - b.fixed_cost;
    c.relation = Relation::at_most;
    c.max_slack = *std::min_element(b.costs.begin(), b.costs.end());
    c.lower.assign(design.size(), 2);
    for (const auto& s : design.strata) c.upper.push_back(s.population_size);
    return c;
  }

  static ConstraintSet from_design(const SurveyDesign& design) {
    if (const auto* s = std::get_if<SampleSizeBudget>(&design.budget)) return total_size(design, s->total_n);
    if (const auto* c = std::get_if<CostBudget>(&design.budget)) return cost(design, *c);
    throw InfeasibleError("design carries no budget");
  }
};

struct SolveOptions {
  long max_nodes = 1'000'000;
  double rel_tol = 1e-12;  ///< branch-and-bound pruning tolerance
  int restarts = 4;
  std::uint64_t seed = 1;
  int parallel_workers = 1;
};

enum class IncumbentSource { relaxation_rounding, local_search, branch_and_bound, enumeration };

inline std::string_view to_string(IncumbentSource s) {
  switch (s) {
    case IncumbentSource::relaxation_rounding: return "relaxation-rounding";
    case IncumbentSource::local_search: return "local-search";
    case IncumbentSource::branch_and_bound: return "branch-and-bound";
    case IncumbentSource::enumeration: return "enumeration";
  }
  return "?";
}

struct SolveReport {
  Allocation allocation;
  double objective_value = 0.0;
  /// (incumbent - bound) / |incumbent|; +inf when no valid bound exists.
  double bound_gap = std::numeric_limits<double>::infinity();
  long nodes_explored = 0;
  double wall_seconds = 0.0;
  Vector per_characteristic_variances;
  IncumbentSource source = IncumbentSource::relaxation_rounding;
  std::string method_trace;
  double start_value = std::numeric_limits<double>::quiet_NaN();  ///< rounded relaxation
  double slack = 0.0;  ///< rhs - a'n
  std::vector<double> relaxation;
};

namespace detail {

inline double tie_tolerance(double a, double b) { return 1e-12 * std::max(std::abs(a), std::abs(b)); }

/// Strict improvement beyond the tie tolerance.
inline bool improves(double candidate, double incumbent) {
  if (std::isnan(candidate)) return false;
  if (std::isnan(incumbent)) return true;
  if (std::isinf(incumbent) || std::isinf(candidate)) return candidate < incumbent;
  return candidate < incumbent - tie_tolerance(candidate, incumbent);
}

/// Objective value with non-finite or failing evaluations mapped to +inf.
inline double safe_value(const Objective& obj, std::span<const double> x) {
  try {
    const double v = obj.evaluate(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

inline double safe_value(const Objective& obj, const Allocation& n) {
  const auto x = n.as_real();
  return safe_value(obj, x);
}

inline void require_nonempty(const ConstraintSet& c) {
  const std::size_t H = c.size();
  if (H == 0 || c.lower.size() != H || c.upper.size() != H) throw InfeasibleError("malformed constraint set");
  double lo = 0.0, hi = 0.0;
  for (std::size_t h = 0; h < H; ++h) {
    if (c.lower[h] > c.upper[h]) throw InfeasibleError("empty bounds for stratum " + std::to_string(h + 1));
    if (!(c.coefficients[h] > 0.0)) throw InfeasibleError("constraint coefficients must be positive");
    lo += c.coefficients[h] * static_cast<double>(c.lower[h]);
    hi += c.coefficients[h] * static_cast<double>(c.upper[h]);
  }
  const double tol = 1e-9 * std::max(1.0, std::abs(c.rhs));
  if (c.rhs < lo - tol) throw InfeasibleError("budget below the cost of the lower bounds");
  if (c.relation == Relation::equality && c.rhs > hi + tol) {
    throw InfeasibleError("budget exceeds the cost of a census");
  }
}

/// Euclidean projection onto {lower <= x <= upper, a'x (rel) b}.
inline std::vector<double> project(std::span<const double> y, const ConstraintSet& c) {
  const std::size_t H = y.size();
  std::vector<double> x(H);
  const auto clamp_at = [&](double theta) {
    double s = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
      x[h] = std::clamp(y[h] - theta * c.coefficients[h], static_cast<double>(c.lower[h]),
                        static_cast<double>(c.upper[h]));
      s += c.coefficients[h] * x[h];
    }
    return s;
  };
  if (c.relation == Relation::at_most && clamp_at(0.0) <= c.rhs) return x;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t h = 0; h < H; ++h) {
    lo = std::min(lo, (y[h] - static_cast<double>(c.upper[h])) / c.coefficients[h]);
    hi = std::max(hi, (y[h] - static_cast<double>(c.lower[h])) / c.coefficients[h]);
  }
  if (c.relation == Relation::at_most) lo = std::max(lo, 0.0);
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (clamp_at(mid) > c.rhs) lo = mid;
    else hi = mid;
  }
  clamp_at(0.5 * (lo + hi));
  return x;
}

inline std::vector<double> gradient(const Objective& obj, std::span<const double> x, const ConstraintSet& c) {
  std::vector<double> g(x.size()), probe(x.begin(), x.end());
  for (std::size_t h = 0; h < x.size(); ++h) {
    const double step = 1e-6 * std::max(1.0, std::abs(x[h]));
    const double up = std::min(x[h] + step, static_cast<double>(c.upper[h]));
    const double down = std::max(x[h] - step, static_cast<double>(c.lower[h]));
    if (up == down) {
      g[h] = 0.0;
      continue;
    }
    probe[h] = up;
    const double fu = safe_value(obj, probe);
    probe[h] = down;
    const double fd = safe_value(obj, probe);
    probe[h] = x[h];
    g[h] = (fu - fd) / (up - down);
    if (!std::isfinite(g[h])) g[h] = 0.0;
  }
  return g;
}

struct RelaxationResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
};

/// Projected gradient with Barzilai-Borwein steps and Armijo backtracking.
inline RelaxationResult projected_gradient(const Objective& obj, const ConstraintSet& c,
                                           std::vector<double> x0) {
  RelaxationResult r;
  std::vector<double> x = project(x0, c);
  double fx = safe_value(obj, x);
  if (!std::isfinite(fx)) return r;
  double width = 0.0;
  for (std::size_t h = 0; h < x.size(); ++h) width = std::max(width, static_cast<double>(c.upper[h] - c.lower[h]));
  std::vector<double> g = gradient(obj, x, c);
  double gnorm = 0.0;
  for (double v : g) gnorm = std::max(gnorm, std::abs(v));
  double alpha = gnorm > 0.0 ? 0.1 * std::max(width, 1.0) / gnorm : 1.0;
  int stalled = 0;
  for (int it = 0; it < 20000 && stalled < 3; ++it) {
    std::vector<double> trial(x.size()), xn;
    double fn = fx;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t h = 0; h < x.size(); ++h) trial[h] = x[h] - alpha * g[h];
      xn = project(trial, c);
      double decrease = 0.0;
      for (std::size_t h = 0; h < x.size(); ++h) decrease += g[h] * (xn[h] - x[h]);
      fn = safe_value(obj, xn);
      if (fn <= fx + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    double move = 0.0, scale = 1.0;
    for (std::size_t h = 0; h < x.size(); ++h) {
      move = std::max(move, std::abs(xn[h] - x[h]));
      scale = std::max(scale, std::abs(x[h]));
    }
    const std::vector<double> gn = gradient(obj, xn, c);
    double ss = 0.0, sy = 0.0;
    for (std::size_t h = 0; h < x.size(); ++h) {
      const double s = xn[h] - x[h], y = gn[h] - g[h];
      ss += s * s;
      sy += s * y;
    }
    alpha = sy > 0.0 ? ss / sy : alpha * 2.0;
    stalled = (move <= 1e-11 * scale || std::abs(fx - fn) <= 1e-15 * std::abs(fx)) ? stalled + 1 : 0;
    x = xn;
    fx = fn;
    g = gn;
  }
  r.x = std::move(x);
  r.value = fx;
  return r;
}

inline std::vector<double> proportional_start(const Objective& obj, const ConstraintSet& c) {
  std::vector<double> y(c.size());
  for (std::size_t h = 0; h < c.size(); ++h)
    y[h] = static_cast<double>(obj.design().strata[h].population_size);
  double act = 0.0;
  for (std::size_t h = 0; h < c.size(); ++h) act += c.coefficients[h] * y[h];
  for (double& v : y) v *= c.rhs / act;
  return y;
}

inline std::vector<double> random_start(const ConstraintSet& c, Rng& rng) {
  std::vector<double> y(c.size());
  for (std::size_t h = 0; h < c.size(); ++h)
    y[h] = static_cast<double>(c.lower[h]) + rng.uniform() * static_cast<double>(c.upper[h] - c.lower[h]);
  return y;
}

/// Rounds a continuous point to a feasible lattice point.
inline std::optional<Allocation> round_feasible(std::span<const double> x, const ConstraintSet& c) {
  const std::size_t H = c.size();
  if (c.relation == Relation::equality && c.unit_coefficients()) {
    return apportion(x, static_cast<long>(std::llround(c.rhs)), c.lower, c.upper);
  }
  std::vector<long> n(H);
  std::vector<double> remainder(H);
  for (std::size_t h = 0; h < H; ++h) {
    const double f = std::floor(x[h]);
    n[h] = std::clamp(static_cast<long>(f), c.lower[h], c.upper[h]);
    remainder[h] = x[h] - f;
  }
  Allocation a(n);
  // Drop units while over budget, then add units while affordable:
  // largest remainder first, cheapest next.
  std::vector<std::size_t> order(H);
  for (std::size_t h = 0; h < H; ++h) order[h] = h;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) {
    if (remainder[p] != remainder[q]) return remainder[p] > remainder[q];
    return c.coefficients[p] < c.coefficients[q];
  });
  const double tol = 1e-9 * std::max(1.0, std::abs(c.rhs));
  while (c.slack(a) < -tol) {
    bool moved = false;
    for (auto it = order.rbegin(); it != order.rend() && c.slack(a) < -tol; ++it) {
      if (a[*it] > c.lower[*it]) {
        --a[*it];
        moved = true;
      }
    }
    if (!moved) return std::nullopt;
  }
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t h : order) {
      if (a[h] < c.upper[h] && c.coefficients[h] <= c.slack(a) + tol) {
        ++a[h];
        moved = true;
        break;
      }
    }
  }
  if (!c.feasible(a)) return std::nullopt;
  return a;
}

inline bool lex_less(const Allocation& a, const Allocation& b) { return a < b; }

/// Best-improvement search over exchanges n_h += d, n_g -= d (and single
/// moves +-d for inequality constraints), d over decreasing powers of two.
inline void local_search(const Objective& obj, const ConstraintSet& c, Allocation& n, double& value) {
  const std::size_t H = c.size();
  long width = 1;
  for (std::size_t h = 0; h < H; ++h) width = std::max(width, c.upper[h] - c.lower[h]);
  long step = 1;
  while (step * 4 <= width) step *= 2;
  const bool singles = c.relation == Relation::at_most;
  for (; step >= 1; step /= 2) {
    for (;;) {
      Allocation best = n;
      double best_value = value;
      const auto consider = [&](Allocation& cand) {
        if (!c.feasible(cand)) return;
        const double v = safe_value(obj, cand);
        if (improves(v, best_value)) {
          best_value = v;
          best = cand;
        }
      };
      Allocation cand = n;
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t g = 0; g < H; ++g) {
          if (g == h) continue;
          cand[h] += step;
          cand[g] -= step;
          consider(cand);
          cand[h] -= step;
          cand[g] += step;
        }
        if (singles) {
          for (long d : {step, -step}) {
            cand[h] += d;
            consider(cand);
            cand[h] -= d;
          }
        }
      }
      if (best == n) break;
      n = best;
      value = best_value;
    }
  }
}

/// Moves to lexicographically smaller neighbours whose value stays within
/// the tie tolerance of `anchor`.
inline void canonicalize_ties(const Objective& obj, const ConstraintSet& c, Allocation& n, double& value,
                              double anchor) {
  const std::size_t H = c.size();
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t g = 0; g < H && !moved; ++g) {
      for (std::size_t h = g + 1; h < H && !moved; ++h) {
        Allocation cand = n;
        --cand[g];
        ++cand[h];
        if (!c.feasible(cand)) continue;
        const double v = safe_value(obj, cand);
        if (std::isfinite(v) && v <= anchor + tie_tolerance(v, anchor)) {
          n = cand;
          value = v;
          moved = true;
        }
      }
      if (c.relation == Relation::at_most && !moved) {
        Allocation cand = n;
        --cand[g];
        if (c.feasible(cand)) {
          const double v = safe_value(obj, cand);
          if (std::isfinite(v) && v <= anchor + tie_tolerance(v, anchor)) {
            n = cand;
            value = v;
            moved = true;
          }
        }
      }
    }
  }
}

/// Second differences of each term non-negative over the whole bound range.
inline bool terms_convex(const Objective& obj, const ConstraintSet& c) {
  if (!obj.separable()) return false;
  for (std::size_t h = 0; h < c.size(); ++h) {
    if (c.upper[h] - c.lower[h] < 2) continue;
    double f0 = obj.term(h, static_cast<double>(c.lower[h]));
    double f1 = obj.term(h, static_cast<double>(c.lower[h] + 1));
    for (long x = c.lower[h] + 2; x <= c.upper[h]; ++x) {
      const double f2 = obj.term(h, static_cast<double>(x));
      const double noise = 8.0 * std::numeric_limits<double>::epsilon() *
                           (std::abs(f0) + 2.0 * std::abs(f1) + std::abs(f2));
      if (!std::isfinite(f2) || f2 - 2.0 * f1 + f0 < -noise) return false;
      f0 = f1;
      f1 = f2;
    }
  }
  return true;
}

/// Depth-first branch-and-bound over n_1, n_2, ... for separable convex
/// objectives. The bound of a node is the Lagrangian dual of the remaining
/// strata with integer inner minimization, which is a valid lower bound for
/// any multiplier and convex in the value fixed at the parent.
class SeparableBranchAndBound {
 public:
  SeparableBranchAndBound(const Objective& obj, const ConstraintSet& c, const SolveOptions& opts)
      : obj_(obj), c_(c), opts_(opts), H_(c.size()) {}

  struct Outcome {
    Allocation best;
    double value;
    double root_bound;
    long nodes;
    bool complete;
    bool improved;
  };

  Outcome run(Allocation incumbent, double value) {
    best_ = std::move(incumbent);
    best_value_ = value;
    const auto root = dual_bound(0, c_.rhs);
    nodes_ = 1;
    Outcome out{};
    out.root_bound = root ? root->bound : std::numeric_limits<double>::infinity();
    if (root && !pruned(root->bound)) {
      std::vector<long> prefix;
      explore(prefix, 0.0, c_.rhs, *root);
    }
    out.best = best_;
    out.value = best_value_;
    out.nodes = nodes_;
    out.complete = !exhausted_;
    out.improved = improved_;
    return out;
  }

 private:
  struct Dual {
    double bound;
    std::vector<long> minimizer;  // Lagrangian minimizer of the remaining strata
  };

  double term(std::size_t h, long x) const { return obj_.term(h, static_cast<double>(x)); }

  bool pruned(double bound) const {
    if (!std::isfinite(best_value_)) return false;
    return bound >= best_value_ - opts_.rel_tol * std::abs(best_value_);
  }

  /// argmin over integers x in [lo, hi] of term(h, x) + mu a_h x.
  long inner(std::size_t h, double mu) const {
    long lo = c_.lower[h], hi = c_.upper[h];
    const double a = c_.coefficients[h];
    while (lo < hi) {
      const long mid = lo + (hi - lo) / 2;
      if (term(h, mid + 1) - term(h, mid) + mu * a >= 0.0) hi = mid;
      else lo = mid + 1;
    }
    return lo;
  }

  std::optional<Dual> dual_bound(std::size_t first, double rhs) const {
    double amin = 0.0, amax = 0.0;
    for (std::size_t h = first; h < H_; ++h) {
      amin += c_.coefficients[h] * static_cast<double>(c_.lower[h]);
      amax += c_.coefficients[h] * static_cast<double>(c_.upper[h]);
    }
    const double tol = 1e-9 * std::max(1.0, std::abs(c_.rhs));
    if (rhs < amin - tol) return std::nullopt;
    if (c_.relation == Relation::equality && rhs > amax + tol) return std::nullopt;
    if (c_.max_slack && rhs - amax >= *c_.max_slack) return std::nullopt;

    std::vector<long> x(H_ - first);
    const auto lagrangian = [&](double mu, double& subgrad) {
      double value = -mu * rhs;
      subgrad = -rhs;
      for (std::size_t h = first; h < H_; ++h) {
        const long v = inner(h, mu);
        x[h - first] = v;
        value += term(h, v) + mu * c_.coefficients[h] * static_cast<double>(v);
        subgrad += c_.coefficients[h] * static_cast<double>(v);
      }
      return value;
    };

    double mu_lo = std::numeric_limits<double>::infinity(), mu_hi = -mu_lo;
    for (std::size_t h = first; h < H_; ++h) {
      const double a = c_.coefficients[h];
      if (c_.upper[h] > c_.lower[h]) {
        mu_lo = std::min(mu_lo, -(term(h, c_.upper[h]) - term(h, c_.upper[h] - 1)) / a);
        mu_hi = std::max(mu_hi, -(term(h, c_.lower[h] + 1) - term(h, c_.lower[h])) / a);
      }
    }
    Dual best{-std::numeric_limits<double>::infinity(), {}};
    const auto keep = [&](double v) {
      if (v > best.bound) {
        best.bound = v;
        best.minimizer = x;
      }
    };
    double s = 0.0;
    if (!std::isfinite(mu_lo)) {  // every remaining stratum is fixed by its bounds
      keep(lagrangian(0.0, s));
      return best;
    }
    mu_lo -= 1.0 + std::abs(mu_lo);
    mu_hi += 1.0 + std::abs(mu_hi);
    if (c_.relation == Relation::at_most) {
      keep(lagrangian(0.0, s));
      if (s <= 0.0) return best;
      mu_lo = 0.0;
    }
    keep(lagrangian(mu_lo, s));
    keep(lagrangian(mu_hi, s));
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (mu_lo + mu_hi);
      if (mid <= mu_lo || mid >= mu_hi) break;
      const double v = lagrangian(mid, s);
      keep(v);
      if (s > 0.0) mu_lo = mid;
      else if (s < 0.0) mu_hi = mid;
      else break;
    }
    return best;
  }

  void consider_leaf(const std::vector<long>& full) {
    Allocation cand(full);
    if (!c_.feasible(cand)) return;
    const double v = safe_value(obj_, cand);
    if (improves(v, best_value_)) {
      best_value_ = v;
      best_ = cand;
      improved_ = true;
    }
  }

  void explore(std::vector<long>& prefix, double fixed, double rhs, const Dual& node) {
    if (nodes_++ > opts_.max_nodes) {
      exhausted_ = true;
      return;
    }
    const std::size_t d = prefix.size();
    const double a = c_.coefficients[d];
    if (d + 1 == H_) {
      // Last stratum: every value compatible with the constraint.
      long hi = std::min(c_.upper[d], static_cast<long>(std::floor(rhs / a + 1e-9)));
      long lo = c_.lower[d];
      if (c_.relation == Relation::equality) lo = std::max(lo, static_cast<long>(std::ceil(rhs / a - 1e-9)));
      else if (c_.max_slack) lo = std::max(lo, static_cast<long>(std::floor((rhs - *c_.max_slack) / a)));
      for (long v = hi; v >= lo; --v) {
        prefix.push_back(v);
        consider_leaf(prefix);
        prefix.pop_back();
      }
      return;
    }
    const long center = node.minimizer.front();
    for (int dir : {+1, -1}) {
      double previous = std::numeric_limits<double>::quiet_NaN();
      for (long v = dir > 0 ? center : center - 1; v >= c_.lower[d] && v <= c_.upper[d]; v += dir) {
        if (exhausted_) return;
        const double here = fixed + term(d, v);
        const double rest = rhs - a * static_cast<double>(v);
        const auto child = dual_bound(d + 1, rest);
        const double bound = child ? here + child->bound : std::numeric_limits<double>::infinity();
        if (pruned(bound)) {
          // Past the minimum of a convex function of v: stop this direction.
          if (!child || (!std::isnan(previous) && bound >= previous)) break;
          previous = bound;
          continue;
        }
        previous = bound;
        prefix.push_back(v);
        explore(prefix, here, rest, *child);
        prefix.pop_back();
      }
    }
  }

  const Objective& obj_;
  const ConstraintSet& c_;
  const SolveOptions& opts_;
  std::size_t H_;
  Allocation best_;
  double best_value_ = std::numeric_limits<double>::infinity();
  long nodes_ = 0;
  bool exhausted_ = false;
  bool improved_ = false;
};

}  // namespace detail

/// Multi-start projected-gradient solution of the continuous relaxation.
inline std::vector<double> solve_continuous(const Objective& obj, const ConstraintSet& cons,
                                            const SolveOptions& opts = {}) {
  detail::require_nonempty(cons);
  const std::size_t starts = 1 + static_cast<std::size_t>(std::max(opts.restarts, 0));
  std::vector<detail::RelaxationResult> results(starts);
  parallel_for(starts, opts.parallel_workers, [&](std::size_t i) {
    std::vector<double> x0;
    if (i == 0) {
      x0 = detail::proportional_start(obj, cons);
    } else {
      Rng rng(opts.seed, 0x5eed0000ULL + i);
      x0 = detail::random_start(cons, rng);
    }
    results[i] = detail::projected_gradient(obj, cons, std::move(x0));
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < starts; ++i)
    if (detail::improves(results[i].value, results[best].value)) best = i;
  if (!std::isfinite(results[best].value)) {
    throw InfeasibleError("objective is not finite at any relaxation start");
  }
  return results[best].x;
}

inline SolveReport solve_integer(const Objective& obj, const ConstraintSet& cons, const SolveOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::require_nonempty(cons);
  SolveReport report;
  std::string trace;

  std::vector<double> relaxed;
  try {
    relaxed = solve_continuous(obj, cons, opts);
  } catch (const InfeasibleError&) {
    relaxed = detail::project(detail::proportional_start(obj, cons), cons);
    trace += "relaxation failed, proportional start; ";
  }
  report.relaxation = relaxed;
  auto rounded = detail::round_feasible(relaxed, cons);
  if (!rounded) throw InfeasibleError("no lattice point satisfies the budget constraint");

  Allocation incumbent = *rounded;
  double value = detail::safe_value(obj, incumbent);
  report.start_value = value;
  detail::local_search(obj, cons, incumbent, value);
  report.source = value < report.start_value ? IncumbentSource::local_search : IncumbentSource::relaxation_rounding;
  trace += "relaxation-rounding (" + std::to_string(report.start_value) + ") -> local-search";

  const bool convex = detail::terms_convex(obj, cons);
  if (!convex) {
    // Multi-start integer local search from random feasible points.
    const std::size_t starts = static_cast<std::size_t>(std::max(opts.restarts, 0));
    std::vector<std::optional<std::pair<Allocation, double>>> found(starts);
    parallel_for(starts, opts.parallel_workers, [&](std::size_t i) {
      Rng rng(opts.seed, 0x1e7e0000ULL + i);
      auto start = detail::round_feasible(detail::project(detail::random_start(cons, rng), cons), cons);
      if (!start) return;
      double v = detail::safe_value(obj, *start);
      detail::local_search(obj, cons, *start, v);
      found[i] = std::make_pair(*start, v);
    });
    for (const auto& f : found) {
      if (!f) continue;
      if (detail::improves(f->second, value) ||
          (!detail::improves(value, f->second) && f->first < incumbent)) {
        incumbent = f->first;
        value = f->second;
        report.source = IncumbentSource::local_search;
      }
    }
    trace += " (" + std::to_string(starts + 1) + " starts); no valid bound: objective not verified convex";
    report.bound_gap = std::numeric_limits<double>::infinity();
  } else {
    detail::SeparableBranchAndBound bnb(obj, cons, opts);
    const auto out = bnb.run(incumbent, value);
    report.nodes_explored = out.nodes;
    if (out.improved) {
      incumbent = out.best;
      value = out.value;
      report.source = IncumbentSource::branch_and_bound;
    }
    if (out.complete) {
      report.bound_gap = 0.0;
      trace += " -> branch-and-bound (separable convex terms, optimal, " + std::to_string(out.nodes) + " nodes)";
    } else {
      report.bound_gap = std::isfinite(out.root_bound) && value != 0.0
                             ? std::max(0.0, (value - out.root_bound) / std::abs(value))
                             : std::numeric_limits<double>::infinity();
      trace += " -> branch-and-bound (node budget exhausted after " + std::to_string(out.nodes) + " nodes)";
    }
  }
  detail::canonicalize_ties(obj, cons, incumbent, value, value);

  report.allocation = incumbent;
  report.objective_value = value;
  report.slack = cons.slack(incumbent);
  report.per_characteristic_variances = variance_report(obj.design(), incumbent);
  report.method_trace = trace;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace detail {

template <class Visit>
bool enumerate_lattice(const ConstraintSet& c, std::vector<long>& prefix, double used, Visit&& visit) {
  const std::size_t d = prefix.size();
  const std::size_t H = c.size();
  if (d == H) {
    Allocation a(prefix);
    if (c.feasible(a)) return visit(a);
    return true;
  }
  double rest_lo = 0.0, rest_hi = 0.0;
  for (std::size_t h = d + 1; h < H; ++h) {
    rest_lo += c.coefficients[h] * static_cast<double>(c.lower[h]);
    rest_hi += c.coefficients[h] * static_cast<double>(c.upper[h]);
  }
  const double tol = 1e-9 * std::max(1.0, std::abs(c.rhs));
  for (long v = c.lower[d]; v <= c.upper[d]; ++v) {
    const double now = used + c.coefficients[d] * static_cast<double>(v);
    if (now + rest_lo > c.rhs + tol) break;
    if (c.relation == Relation::equality && now + rest_hi < c.rhs - tol) continue;
    if (c.max_slack && c.rhs - (now + rest_hi) >= *c.max_slack) continue;
    prefix.push_back(v);
    const bool go_on = enumerate_lattice(c, prefix, now, visit);
    prefix.pop_back();
    if (!go_on) return false;
  }
  return true;
}

}  // namespace detail

inline constexpr long kMaxOracleLattice = 1'000'000;

/// Number of feasible lattice points, counting stops at `cap` + 1.
inline long lattice_size(const ConstraintSet& cons, long cap = kMaxOracleLattice) {
  long count = 0;
  std::vector<long> prefix;
  detail::enumerate_lattice(cons, prefix, 0.0, [&](const Allocation&) { return ++count <= cap; });
  return count;
}

/// Global optimum by enumeration; among values within the tie tolerance of
/// the minimum, the lexicographically smallest allocation wins.
inline SolveReport exhaustive_oracle(const Objective& obj, const ConstraintSet& cons) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::require_nonempty(cons);
  const long size = lattice_size(cons);
  if (size > kMaxOracleLattice) throw InfeasibleError("lattice exceeds 10^6 points; oracle refused");
  if (size == 0) throw InfeasibleError("no feasible lattice point");
  std::vector<std::pair<Allocation, double>> points;
  points.reserve(static_cast<std::size_t>(size));
  double minimum = std::numeric_limits<double>::infinity();
  std::vector<long> prefix;
  detail::enumerate_lattice(cons, prefix, 0.0, [&](const Allocation& a) {
    const double v = detail::safe_value(obj, a);
    points.emplace_back(a, v);
    minimum = std::min(minimum, v);
    return true;
  });
  SolveReport report;
  for (const auto& [a, v] : points) {
    if (v <= minimum + detail::tie_tolerance(v, minimum)) {
      report.allocation = a;
      report.objective_value = v;
      break;
    }
  }
  report.bound_gap = 0.0;
  report.nodes_explored = size;
  report.source = IncumbentSource::enumeration;
  report.method_trace = "exhaustive enumeration of " + std::to_string(size) + " lattice points";
  report.slack = cons.slack(report.allocation);
  report.per_characteristic_variances = variance_report(obj.design(), report.allocation);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace stratalloc
