#pragma once

// The ten acceptance criteria. Each returns PASS/FAIL with a detail line;
// tolerances and runtime limits are fixed here.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "stratalloc/commands.hpp"
#include "stratalloc/ingestion.hpp"
#include "stratalloc/matrix_kit.hpp"
#include "stratalloc/montecarlo.hpp"
#include "stratalloc/objectives.hpp"
#include "stratalloc/solver.hpp"
#include "stratalloc/strata_model.hpp"
#include "stratalloc/verification/oracles.hpp"

namespace stratalloc::acceptance {

struct Options {
  std::filesystem::path data_dir = STRATALLOC_DATA_DIR;
  std::uint64_t seed = 20240917;
  int workers = 2;
};

struct Result {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double time_limit = 0.0;  ///< 0: no limit
};

// Published reference values for the bundled timber dataset (n = 1000).
inline const std::vector<long> kNeymanBasalArea{10, 94, 144, 136, 191, 113, 81, 109, 122};
inline const std::vector<long> kNeymanVolume{7, 62, 119, 136, 200, 161, 98, 134, 83};
inline constexpr double kVarBasalAreaAtBasalArea = 5.591, kVarVolumeAtBasalArea = 5441.105;
inline constexpr double kVarBasalAreaAtVolume = 5.953, kVarVolumeAtVolume = 5139.531;
inline constexpr long kTimberStrata = 9, kTimberPopulation = 559605;

inline constexpr double kVarianceRelTol = 0.005;
inline constexpr double kIdentityRelTol = 1e-12;
inline constexpr double kMomentRelTol = 1e-12;
inline constexpr double kMeanZ = 4.0;
inline constexpr double kCovZ = 10.0;
inline constexpr double kDecompositionTol = 1e-12;
inline constexpr double kDetRelTol = 1e-12;
inline constexpr double kMassStability = 1e-9;
inline constexpr double kDamageTol = 1e-10;

namespace detail {

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), std::numeric_limits<double>::min()});
  return std::abs(a - b) / scale;
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min()});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline std::string fmt(double v, int digits = 6) { return stratalloc::detail::fmt(v, digits); }

inline SurveyDesign timber(const Options& o) { return load_summary(o.data_dir / "table1.csv"); }

inline std::string list(const Allocation& a) { return to_string(a); }

}  // namespace detail

inline Result neyman_rows(const Options& o) {
  Result r{1, "Neyman allocations and variances, timber data", true, "", 0.0, 1.0};
  std::ostringstream d;
  const SurveyDesign design = detail::timber(o);
  if (static_cast<long>(design.size()) != kTimberStrata || design.characteristics() != 2 ||
      design.population_size() != kTimberPopulation) {
    r.passed = false;
    d << "ingestion: H=" << design.size() << " G=" << design.characteristics() << " N=" << design.population_size() << "; ";
  }
  const struct {
    Index j;
    const std::vector<long>& expected;
    double var_ba, var_vol;
  } rows[] = {{0, kNeymanBasalArea, kVarBasalAreaAtBasalArea, kVarVolumeAtBasalArea},
              {1, kNeymanVolume, kVarBasalAreaAtVolume, kVarVolumeAtVolume}};
  for (const auto& row : rows) {
    const Allocation n = neyman_allocation(design, row.j, 1000);
    long worst = 0;
    for (std::size_t h = 0; h < n.size(); ++h) worst = std::max(worst, std::abs(n[h] - row.expected[h]));
    const Vector v = variance_report(design, n);
    const Vector vp = variance_report(design, Allocation(row.expected));
    const double err = std::max({detail::rel_err(v[0], row.var_ba), detail::rel_err(v[1], row.var_vol),
                                 detail::rel_err(vp[0], row.var_ba), detail::rel_err(vp[1], row.var_vol)});
    const bool ok = worst <= 1 && err <= kVarianceRelTol;
    r.passed = r.passed && ok;
    d << design.characteristic_name(row.j) << " " << detail::list(n) << " max|dn|=" << worst << " var=("
      << detail::fmt(v[0]) << ", " << detail::fmt(v[1]) << ") rel.err " << detail::fmt(err, 3) << "; ";
  }
  r.detail = d.str();
  return r;
}

inline Result stochastic_consistency(const Options& o) {
  Result r{2, "Stochastic trace models on synthesized fourth moments", true, "", 0.0, 30.0};
  SurveyDesign design = detail::timber(o);
  design.budget = SampleSizeBudget{1000};
  synthesize_moments(design, Distribution::gaussian, o.seed, o.workers);
  const ConstraintSet cons = ConstraintSet::from_design(design);
  SolveOptions opts;
  opts.seed = o.seed;
  opts.parallel_workers = o.workers;
  const auto solve = [&](StochasticModel m, double k1, double k2) {
    ModelSpec spec;
    spec.model = m;
    spec.k1 = k1;
    spec.k2 = k2;
    return solve_integer(build_objective(design, spec), cons, opts);
  };
  const SolveReport e = solve(StochasticModel::e, 1, 0);
  const SolveReport v = solve(StochasticModel::v, 0, 1);
  const SolveReport me10 = solve(StochasticModel::modified_e, 1, 0);
  const SolveReport me01 = solve(StochasticModel::modified_e, 0, 1);
  const bool a = e.allocation == me10.allocation && v.allocation == me01.allocation;
  const double te = trace_expectation(design, e.allocation);
  const double tba = trace_expectation(design, neyman_allocation(design, 0, 1000));
  const double tvol = trace_expectation(design, neyman_allocation(design, 1, 1000));
  const bool b = te <= tba && te <= tvol;
  r.passed = a && b;
  std::ostringstream d;
  d << "E " << detail::list(e.allocation) << (e.allocation == me10.allocation ? " == " : " != ") << "mod-E(1,0); V "
    << detail::list(v.allocation) << (v.allocation == me01.allocation ? " == " : " != ") << "mod-E(0,1); E[tr] "
    << detail::fmt(te, 9) << " vs Neyman-BA " << detail::fmt(tba, 9) << ", Neyman-Vol " << detail::fmt(tvol, 9);
  r.detail = d.str();
  return r;
}

inline Result matrix_identities(const Options& o) {
  Result r{3, "Duplication and commutation identities", true, "", 0.0, 5.0};
  Rng rng(o.seed, 3);
  double worst = 0.0, worst_defn = 0.0, worst_k = 0.0;
  for (Index G = 1; G <= 4; ++G) {
    const DuplicationMatrix dm = duplication(G);
    worst_defn = std::max({worst_defn, detail::rel_err(dm.D, oracle::duplication_by_definition(static_cast<int>(G))),
                           detail::rel_err(dm.Dpinv, oracle::pseudo_inverse(oracle::duplication_by_definition(static_cast<int>(G))))});
    for (int t = 0; t < 200; ++t) {
      Matrix a(G, G);
      for (Index i = 0; i < G; ++i)
        for (Index j = 0; j < G; ++j) a(i, j) = rng.normal() * std::pow(10.0, 3.0 * rng.uniform() - 1.0);
      const Matrix b = a + a.transpose();
      const Vector vc = Eigen::Map<const Vector>(b.data(), b.size());
      Vector vh(vech_size(G));
      for (Index col = 0, p = 0; col < G; ++col)
        for (Index row = col; row < G; ++row) vh[p++] = b(row, col);
      worst = std::max({worst, detail::rel_err(dm.D * vech(b), vc), detail::rel_err(dm.Dpinv * vec(b), vh),
                        detail::rel_err(vech(b), vh)});
    }
  }
  for (int t = 0; t < 100; ++t) {
    const Index m = 1 + static_cast<Index>(rng.below(5)), n = 1 + static_cast<Index>(rng.below(5));
    Matrix c(m, n);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) c(i, j) = rng.normal();
    worst_k = std::max(worst_k, detail::rel_err(commutation(m, n) * vec(c), oracle::vec_of_transpose(c)));
  }
  r.passed = worst <= kIdentityRelTol && worst_defn <= kIdentityRelTol && worst_k <= kIdentityRelTol;
  r.detail = "max rel err: D/Dpinv/vech " + detail::fmt(worst, 3) + ", vs definition " + detail::fmt(worst_defn, 3) +
             ", commutation " + detail::fmt(worst_k, 3);
  return r;
}

inline Result moment_oracle(const Options& o) {
  Result r{4, "Moment formulas against scalar double sums", true, "", 0.0, 5.0};
  Rng rng(o.seed, 4);
  double worst_cov = 0.0, worst_tr = 0.0;
  int checked = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t H = 1 + rng.below(3);
    const SurveyDesign d = oracle::random_design(H, 2, rng);
    std::vector<double> n;
    for (const auto& s : d.strata) n.push_back(2.0 + static_cast<double>(rng.below(static_cast<std::uint64_t>(s.population_size - 1))));
    worst_cov = std::max(worst_cov, detail::rel_err(cov_vech_cov(d, n).to_dense(), oracle::cov_vech_cov_by_sums(d, n)));
    worst_tr = std::max(worst_tr, detail::rel_err(trace_variance(d, n), oracle::trace_variance_by_sums(d, n)));
    ++checked;
  }
  r.passed = worst_cov <= kMomentRelTol && worst_tr <= kMomentRelTol;
  r.detail = std::to_string(checked) + " designs; max rel err cov_vech_cov " + detail::fmt(worst_cov, 3) +
             ", trace_variance " + detail::fmt(worst_tr, 3);
  return r;
}

/// Shared by criteria 5 and 6.
inline MomentReport moment_simulation(const Options& o) {
  const SurveyDesign design = detail::timber(o);
  Rng rng(o.seed, 5);
  SimConfig cfg;
  cfg.population = synthesize_population(design.strata.front().covariance, 2000, Distribution::gaussian, rng);
  cfg.n = 200;
  cfg.reps = 10000;
  cfg.seed = o.seed;
  cfg.workers = o.workers;
  return verify_lemma1_moments(cfg);
}

inline Result moment_simulation_result(const MomentReport& m, double seconds) {
  Result r{5, "Monte Carlo moments of vech Xi (N=2000, n=200, 10^4 reps)", true, "", seconds, 60.0};
  r.passed = m.max_abs_mean_z() < kMeanZ && m.max_abs_cov_z() <= kCovZ;
  r.detail = "max|z| mean " + detail::fmt(m.max_abs_mean_z(), 3) + " (limit 4), cov " + detail::fmt(m.max_abs_cov_z(), 3) +
             " (limit 10); with factor (N-n)/(N-1): cov " + detail::fmt(m.max_abs_alternative_cov_z(), 3);
  return r;
}

inline Result decomposition_result(const MomentReport& m) {
  Result r{6, "Decomposition s = Xi - n/(n-1) (ybar-Ybar)(ybar-Ybar)' on every draw", true, "", 0.0, 0.0};
  r.passed = m.max_identity_residual <= kDecompositionTol;
  r.detail = std::to_string(m.reps) + " draws; max relative residual " + detail::fmt(m.max_identity_residual, 3);
  return r;
}

inline Result solver_oracle(const Options& o) {
  Result r{7, "Integer solver against exhaustive enumeration", true, "", 0.0, 60.0};
  Rng rng(o.seed, 7);
  int matched = 0, total = 0;
  std::string first_failure;
  for (int t = 0; t < 50; ++t) {
    const std::size_t H = 2 + rng.below(2);
    SurveyDesign d = oracle::random_design(H, 2, rng, 13, 4);
    long cap = 0;
    for (const auto& s : d.strata) cap += s.population_size;
    const long lo = 2 * static_cast<long>(H), hi = std::min<long>(20, cap);
    const long total_n = lo + static_cast<long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    d.budget = SampleSizeBudget{total_n};
    const ConstraintSet cons = ConstraintSet::from_design(d);
    for (StochasticModel m : {StochasticModel::deterministic, StochasticModel::e}) {
      ModelSpec spec;
      spec.model = m;
      const Objective obj = build_objective(d, spec);
      SolveOptions opts;
      opts.seed = o.seed + static_cast<std::uint64_t>(t);
      const SolveReport s = solve_integer(obj, cons, opts);
      const SolveReport x = exhaustive_oracle(obj, cons);
      ++total;
      if (s.allocation == x.allocation && s.objective_value == x.objective_value) {
        ++matched;
      } else if (first_failure.empty()) {
        first_failure = "; first mismatch: instance " + std::to_string(t) + " " + std::string(to_string(m)) + " solver " +
                        to_string(s.allocation) + " " + detail::fmt(s.objective_value, 17) + " oracle " +
                        to_string(x.allocation) + " " + detail::fmt(x.objective_value, 17);
      }
    }
  }
  r.passed = matched == total;
  r.detail = std::to_string(matched) + "/" + std::to_string(total) + " runs identical (allocation and value)" + first_failure;
  return r;
}

inline Result determinant_constants(const Options& o) {
  Result r{8, "Determinant-model constants and density", true, "", 0.0, 5.0};
  Rng rng(o.seed, 8);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const SymmetricMatrix m = oracle::random_psd(4, rng, std::pow(10.0, 4.0 * rng.uniform() - 2.0));
    const double det = m.to_dense().determinant();
    const DeterminantMoments dm = determinant_moments(det);
    worst = std::max({worst, detail::rel_err(dm.expectation, -std::pow(std::max(det, 0.0), 0.25) / 2.0),
                      detail::rel_err(dm.variance, 1.5 * std::sqrt(std::max(det, 0.0)))});
  }
  const double at_zero = detail::rel_err(det_density(0.0), 1.0 / std::numbers::sqrt2);
  const double mass1 = det_density_mass(50.0), mass2 = det_density_mass(50.0);
  const double drift = std::abs(mass1 - mass2);
  r.passed = worst <= kDetRelTol && at_zero <= kDetRelTol && drift <= kMassStability;
  r.detail = "max rel err E/Var " + detail::fmt(worst, 3) + "; g(0) rel err " + detail::fmt(at_zero, 3) +
             "; mass on [0,50] = " + detail::fmt(mass1, 15) + " (repeat drift " + detail::fmt(drift, 3) +
             "; 1 - 1/sqrt(2) = " + detail::fmt(1.0 - 1.0 / std::numbers::sqrt2, 15) + ")";
  return r;
}

inline Result monotone_damage(const Options& o) {
  Result r{9, "Covariance estimator decreases in the Loewner order", true, "", 0.0, 10.0};
  Rng rng(o.seed, 9);
  double worst = 0.0;
  int pairs = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t H = 1 + rng.below(4);
    const Index G = 1 + static_cast<Index>(rng.below(4));
    const SurveyDesign d = oracle::random_design(H, G, rng, 200, 8);
    for (int p = 0; p < 100; ++p) {
      std::vector<double> n1, n2;
      bool differ = false;
      for (const auto& s : d.strata) {
        const long a = 2 + static_cast<long>(rng.below(static_cast<std::uint64_t>(s.population_size - 1)));
        const long b = a + static_cast<long>(rng.below(static_cast<std::uint64_t>(s.population_size - a + 1)));
        differ = differ || a != b;
        n1.push_back(static_cast<double>(a));
        n2.push_back(static_cast<double>(b));
      }
      if (!differ) {
        std::size_t h = 0;
        while (h + 1 < d.size() && n1[h] == static_cast<double>(d.strata[h].population_size)) ++h;
        if (n1[h] == static_cast<double>(d.strata[h].population_size)) continue;
        n2[h] = n1[h] + 1.0;
      }
      const SymmetricMatrix diff = cov_yst_hat(d, n1) - cov_yst_hat(d, n2);
      const double norm = cov_yst_hat(d, n1).to_dense().norm();
      worst = std::min(worst, min_eigenvalue(diff) / std::max(norm, std::numeric_limits<double>::min()));
      ++pairs;
    }
  }
  r.passed = worst >= -kDamageTol;
  r.detail = std::to_string(pairs) + " nested pairs; min eigenvalue / norm " + detail::fmt(worst, 3);
  return r;
}

inline Result reproducibility(const Options& o) {
  Result r{10, "Reports reproduce byte for byte (timestamp line excluded)", true, "", 0.0, 0.0};
  std::ostringstream d;
  for (int workers : {1, 4}) {
    for (ReportFormat format : {ReportFormat::text, ReportFormat::json}) {
      SolveConfig s;
      s.data = (o.data_dir / "table1.csv").string();
      s.model = "e";
      s.total_n = 1000;
      s.synthesize = "gaussian";
      s.seed = o.seed;
      s.workers = workers;
      s.format = format;
      s.data_dir = o.data_dir;
      const bool solve_same = strip_timestamp(cmd_solve(s)) == strip_timestamp(cmd_solve(s));
      SimulateConfig m;
      m.kind = "lemma1";
      m.N = 2000;
      m.n = 200;
      m.reps = 2000;
      m.seed = o.seed;
      m.workers = workers;
      m.format = format;
      m.data_dir = o.data_dir;
      const bool sim_same = strip_timestamp(cmd_simulate(m)) == strip_timestamp(cmd_simulate(m));
      r.passed = r.passed && solve_same && sim_same;
      d << "workers=" << workers << " " << (format == ReportFormat::text ? "text" : "json") << ": solve "
        << (solve_same ? "identical" : "DIFFERENT") << ", simulate " << (sim_same ? "identical" : "DIFFERENT") << "; ";
    }
  }
  r.detail = d.str();
  return r;
}

/// Criterion numbers selected by a --only group name.
inline std::vector<int> group(const std::string& name) {
  static const std::map<std::string, std::vector<int>> groups{
      {"all", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}},
      {"ingestion", {1}},
      {"neyman", {1}},
      {"objectives", {2}},
      {"stochastic", {2}},
      {"matrix-kit", {3}},
      {"strata-model", {4, 8, 9}},
      {"moments", {4}},
      {"montecarlo", {5, 6}},
      {"solver", {7}},
      {"determinant", {8}},
      {"damage", {9}},
      {"cli", {10}},
      {"reproducibility", {10}},
  };
  if (const auto it = groups.find(name); it != groups.end()) return it->second;
  try {
    std::size_t pos = 0;
    const int id = std::stoi(name, &pos);
    if (pos == name.size() && id >= 1 && id <= 10) return {id};
  } catch (const std::exception&) {
  }
  throw UsageError("unknown acceptance group '" + name + "'");
}

inline std::string format_line(const Result& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.title << " (" << detail::fmt(r.seconds, 3) << " s";
  if (r.time_limit > 0.0) os << ", limit " << detail::fmt(r.time_limit, 3) << " s";
  os << "): " << r.detail;
  return os.str();
}

/// Runs the selected criteria in order, calling `report` after each.
inline std::vector<Result> run(const Options& o, std::vector<int> ids,
                               const std::function<void(const Result&)>& report = {}) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<Result> out;
  std::optional<MomentReport> sim;
  double sim_seconds = 0.0;
  for (int id : ids) {
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      switch (id) {
        case 1: r = neyman_rows(o); break;
        case 2: r = stochastic_consistency(o); break;
        case 3: r = matrix_identities(o); break;
        case 4: r = moment_oracle(o); break;
        case 5:
        case 6:
          if (!sim) {
            sim = moment_simulation(o);
            sim_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          }
          r = id == 5 ? moment_simulation_result(*sim, sim_seconds) : decomposition_result(*sim);
          break;
        case 7: r = solver_oracle(o); break;
        case 8: r = determinant_constants(o); break;
        case 9: r = monotone_damage(o); break;
        case 10: r = reproducibility(o); break;
        default: throw UsageError("no criterion " + std::to_string(id));
      }
    } catch (const std::exception& e) {
      r.id = id;
      r.title = "criterion raised an error";
      r.passed = false;
      r.detail = e.what();
    }
    if (id != 5 && id != 6) r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.time_limit > 0.0 && r.seconds >= r.time_limit) {
      r.passed = false;
      r.detail += " [runtime limit exceeded]";
    }
    if (report) report(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace stratalloc::acceptance
