#pragma once

// Command implementations behind the stratalloc executable. Each command
// returns its report document as a string; the timestamp and wall time
// share one line so that reruns can be compared with that line removed.

#include <boost/version.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stratalloc/ingestion.hpp"
#include "stratalloc/montecarlo.hpp"
#include "stratalloc/objectives.hpp"
#include "stratalloc/solver.hpp"

namespace stratalloc {

inline constexpr std::string_view kVersion = "1.0.0";

enum class ReportFormat { text, json };

/// Raised for invalid flag combinations; the CLI exits with status 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct SolveConfig {
  std::string data;
  DataMode mode = DataMode::automatic;
  std::string model = "deterministic";
  std::string value_fn = "trace";
  double k1 = 1.0;
  double k2 = 0.0;
  std::optional<double> tau;
  std::vector<std::string> characteristics;
  std::optional<long> total_n;
  std::vector<double> costs;
  double c0 = 0.0;
  std::optional<double> budget;
  std::optional<std::string> synthesize;  ///< gaussian | lognormal
  std::uint64_t seed = 1;
  int workers = 1;
  int restarts = 4;
  long max_nodes = 1'000'000;
  ReportFormat format = ReportFormat::text;
  std::filesystem::path data_dir = STRATALLOC_DATA_DIR;
};

struct SimulateConfig {
  std::string kind = "lemma1";  ///< lemma1 | clt | hajek
  std::string data = "synthesized";
  std::string stratum;  ///< stratum id when --data names a design
  std::optional<long> N;
  long n = 200;
  long reps = 10000;
  Index G = 2;
  std::vector<double> cov;  ///< vech of the target covariance
  std::string distribution = "gaussian";
  std::string lambda = "canonical:1";
  double epsilon = 0.1;
  std::uint64_t seed = 1;
  int workers = 1;
  ReportFormat format = ReportFormat::text;
  std::filesystem::path data_dir = STRATALLOC_DATA_DIR;
};

namespace detail {

inline std::string fmt(double v, int digits = 10) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string timestamp_line(double wall_seconds) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf) + " wall_seconds=" + fmt(wall_seconds, 4);
}

inline std::string versions() {
  return "stratalloc " + std::string(kVersion) + "; eigen " + std::to_string(EIGEN_WORLD_VERSION) + "." +
         std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION) + "; boost " +
         std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000);
}

inline Distribution parse_distribution(const std::string& s) {
  if (s == "gaussian") return Distribution::gaussian;
  if (s == "lognormal") return Distribution::lognormal;
  throw UsageError("unknown distribution '" + s + "' (gaussian | lognormal)");
}

inline std::string join(const std::vector<std::string>& v, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

inline std::string vector_text(const Vector& v) {
  std::string out;
  for (Index i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(v[i]);
  return out;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

/// Text document from ordered key/value lines; the json format emits the same
/// structure through nlohmann::ordered_json.
class Document {
 public:
  explicit Document(std::string title) : title_(std::move(title)) {}

  nlohmann::ordered_json& json() { return json_; }
  std::ostringstream& text() { return text_; }

  std::string render(ReportFormat format, const std::string& stamp) const {
    if (format == ReportFormat::json) {
      nlohmann::ordered_json doc;
      doc["report"] = title_;
      doc["timestamp"] = stamp;
      for (auto it = json_.begin(); it != json_.end(); ++it) doc[it.key()] = it.value();
      return doc.dump(2) + "\n";
    }
    return title_ + "\ntimestamp: " + stamp + "\n" + text_.str();
  }

 private:
  std::string title_;
  nlohmann::ordered_json json_;
  std::ostringstream text_;
};

}  // namespace detail

/// Loads and budgets the design named by the config; synthesizes fourth
/// moments when requested.
inline SurveyDesign prepare_design(const SolveConfig& cfg, std::vector<std::string>& warnings) {
  if (cfg.data.empty()) throw UsageError("--data is required");
  const auto path = resolve_dataset(cfg.data, cfg.data_dir);
  SurveyDesign design = load_design(path, cfg.mode, &warnings);
  const bool cost = !cfg.costs.empty() || cfg.budget;
  if (cfg.total_n && cost) throw UsageError("--total-n excludes --costs/--c0/--budget");
  if (cfg.total_n) {
    design.budget = SampleSizeBudget{*cfg.total_n};
  } else if (cost) {
    if (cfg.costs.size() != design.size() || !cfg.budget) {
      throw UsageError("a cost budget needs --costs with one entry per stratum and --budget");
    }
    design.budget = CostBudget{cfg.costs, cfg.c0, *cfg.budget};
  }
  if (std::holds_alternative<std::monostate>(design.budget)) throw UsageError("no budget: give --total-n or --costs/--budget");
  if (cfg.synthesize) synthesize_moments(design, detail::parse_distribution(*cfg.synthesize), cfg.seed, cfg.workers);
  validate(design);
  return design;
}

inline ModelSpec prepare_spec(const SolveConfig& cfg, const SurveyDesign& design) {
  ModelSpec spec;
  const auto model = parse_model(cfg.model);
  if (!model) throw UsageError("unknown --model '" + cfg.model + "'");
  const auto fn = parse_value_function(cfg.value_fn);
  if (!fn) throw UsageError("unknown --value-fn '" + cfg.value_fn + "'");
  spec.model = *model;
  spec.value_fn = *fn;
  spec.k1 = cfg.k1;
  spec.k2 = cfg.k2;
  spec.tau = cfg.tau;
  if (spec.model == StochasticModel::p && !spec.tau) throw UsageError("--model p requires --tau");
  for (const auto& c : cfg.characteristics) {
    const Index j = design.characteristic_index(c);
    if (j < 0) throw UsageError("unknown characteristic '" + c + "'");
    spec.characteristics.push_back(j);
  }
  if (spec.model != StochasticModel::deterministic && !design.has_vech_moments()) {
    throw UsageError("stochastic models need fourth moments: use a dataset with m4 columns or --synthesize");
  }
  return spec;
}

inline std::string cmd_solve(const SolveConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> warnings;
  const SurveyDesign design = prepare_design(cfg, warnings);
  const ModelSpec spec = prepare_spec(cfg, design);
  const Objective obj = build_objective(design, spec);
  const ConstraintSet cons = ConstraintSet::from_design(design);
  SolveOptions opts;
  opts.seed = cfg.seed;
  opts.parallel_workers = cfg.workers;
  opts.restarts = cfg.restarts;
  opts.max_nodes = cfg.max_nodes;
  const SolveReport r = solve_integer(obj, cons, opts);

  std::vector<std::string> chars;
  for (Index j : spec.characteristics) chars.push_back(design.characteristic_name(j));
  std::string budget;
  if (const auto* b = std::get_if<SampleSizeBudget>(&design.budget)) {
    budget = "total_n=" + std::to_string(b->total_n);
  } else {
    const auto& c = std::get<CostBudget>(design.budget);
    std::vector<std::string> cs;
    for (double v : c.costs) cs.push_back(detail::fmt(v));
    budget = "costs=" + detail::join(cs) + " c0=" + detail::fmt(c.fixed_cost) + " C=" + detail::fmt(c.total_cost);
  }
  const auto [k1, k2] = spec.effective_weights();

  detail::Document doc("stratalloc solve report");
  auto& t = doc.text();
  t << "versions: " << detail::versions() << "\n";
  t << "seed: " << cfg.seed << "\nworkers: " << cfg.workers << "\n";
  t << "config:\n  data: " << cfg.data << "\n  model: " << to_string(spec.model) << "\n  value_fn: "
    << to_string(spec.value_fn) << "\n  k1: " << detail::fmt(k1) << "\n  k2: " << detail::fmt(k2)
    << "\n  tau: " << (spec.tau ? detail::fmt(*spec.tau) : "-") << "\n  characteristics: "
    << (chars.empty() ? "all" : detail::join(chars)) << "\n  budget: " << budget
    << "\n  synthesize: " << cfg.synthesize.value_or("-") << "\n  restarts: " << cfg.restarts << "\n";
  t << "allocation:\n  stratum N_h n_h\n";
  for (std::size_t h = 0; h < design.size(); ++h)
    t << "  " << design.strata[h].id << ' ' << design.strata[h].population_size << ' ' << r.allocation[h] << "\n";
  t << "  total - " << r.allocation.total() << "\n";
  t << "objective_value: " << detail::fmt(r.objective_value, 15) << "\n";
  t << "variances:\n";
  for (Index j = 0; j < design.characteristics(); ++j)
    t << "  " << design.characteristic_name(j) << ' ' << detail::fmt(r.per_characteristic_variances[j]) << "\n";
  t << "solver:\n  source: " << to_string(r.source) << "\n  bound_gap: " << detail::fmt(r.bound_gap)
    << "\n  nodes: " << r.nodes_explored << "\n  start_value: " << detail::fmt(r.start_value, 15)
    << "\n  slack: " << detail::fmt(r.slack) << "\n  method_trace: " << r.method_trace << "\n";
  t << "warnings:" << (warnings.empty() ? " none" : "") << "\n";
  for (const auto& w : warnings) t << "  " << w << "\n";

  auto& j = doc.json();
  j["versions"] = detail::versions();
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["config"] = {{"data", cfg.data},
                 {"model", to_string(spec.model)},
                 {"value_fn", to_string(spec.value_fn)},
                 {"k1", k1},
                 {"k2", k2},
                 {"tau", spec.tau ? nlohmann::ordered_json(*spec.tau) : nlohmann::ordered_json()},
                 {"characteristics", chars},
                 {"budget", budget},
                 {"synthesize", cfg.synthesize ? nlohmann::ordered_json(*cfg.synthesize) : nlohmann::ordered_json()},
                 {"restarts", cfg.restarts}};
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t h = 0; h < design.size(); ++h)
    rows.push_back({{"stratum", design.strata[h].id}, {"N_h", design.strata[h].population_size}, {"n_h", r.allocation[h]}});
  j["allocation"] = rows;
  j["objective_value"] = r.objective_value;
  nlohmann::ordered_json vars;
  for (Index c = 0; c < design.characteristics(); ++c) vars[design.characteristic_name(c)] = r.per_characteristic_variances[c];
  j["variances"] = vars;
  j["solver"] = {{"source", to_string(r.source)},
                 {"bound_gap", std::isfinite(r.bound_gap) ? nlohmann::ordered_json(r.bound_gap) : nlohmann::ordered_json("inf")},
                 {"nodes", r.nodes_explored},
                 {"start_value", r.start_value},
                 {"slack", r.slack},
                 {"method_trace", r.method_trace}};
  j["warnings"] = warnings;

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return doc.render(cfg.format, detail::timestamp_line(wall));
}

namespace detail {

inline std::vector<double> parse_real_list(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const auto& f : split_fields(text)) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc() || ptr != f.data() + f.size()) {
      throw UsageError(std::string(what) + ": not a number: '" + f + "'");
    }
    out.push_back(v);
  }
  return out;
}

/// canonical:a (1-based), random, or an explicit comma-separated vector.
inline Vector parse_lambda(const std::string& text, Index k, Rng& rng) {
  Vector l = Vector::Zero(k);
  if (text.rfind("canonical:", 0) == 0) {
    const long a = std::stol(text.substr(10));
    if (a < 1 || a > k) throw UsageError("--lambda canonical index must be in 1.." + std::to_string(k));
    l[a - 1] = 1.0;
    return l;
  }
  if (text == "random") {
    for (Index a = 0; a < k; ++a) l[a] = rng.normal();
    return l;
  }
  const auto v = parse_real_list(text, "--lambda");
  if (static_cast<Index>(v.size()) != k) throw UsageError("--lambda needs " + std::to_string(k) + " entries");
  for (Index a = 0; a < k; ++a) l[a] = v[static_cast<std::size_t>(a)];
  return l;
}

inline void put_matrix(std::ostringstream& t, const char* name, const SymmetricMatrix& m) {
  t << name << ":\n";
  const Matrix d = m.to_dense();
  for (Index i = 0; i < d.rows(); ++i) {
    t << " ";
    for (Index j = 0; j < d.cols(); ++j) t << ' ' << fmt(d(i, j));
    t << "\n";
  }
}

inline nlohmann::ordered_json matrix_json(const SymmetricMatrix& m) {
  const Matrix d = m.to_dense();
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Index i = 0; i < d.rows(); ++i) rows.push_back(to_std(d.row(i).transpose()));
  return rows;
}

}  // namespace detail

/// Stratum population for simulation: synthesized from --cov and --N, or
/// from the N_h and s_h of one stratum of a design.
inline Matrix simulation_population(const SimulateConfig& cfg, std::string& description) {
  SymmetricMatrix target;
  long N = cfg.N.value_or(2000);
  if (cfg.data == "synthesized") {
    if (cfg.cov.empty()) {
      target = SymmetricMatrix::identity(cfg.G);
    } else {
      const Index G = dim_from_vech_size(static_cast<Index>(cfg.cov.size()));
      if (G < 1) throw UsageError("--cov must hold G(G+1)/2 entries in vech order");
      target = SymmetricMatrix::from_vech(Eigen::Map<const Vector>(cfg.cov.data(), static_cast<Index>(cfg.cov.size())), G);
    }
    description = "synthesized";
  } else {
    const SurveyDesign d = load_design(resolve_dataset(cfg.data, cfg.data_dir));
    const std::string id = cfg.stratum.empty() ? d.strata.front().id : cfg.stratum;
    const auto it = std::find_if(d.strata.begin(), d.strata.end(), [&](const auto& s) { return s.id == id; });
    if (it == d.strata.end()) throw UsageError("stratum '" + id + "' not in " + cfg.data);
    target = it->covariance;
    if (!cfg.N) N = it->population_size;
    description = cfg.data + " stratum " + id;
  }
  Rng rng(cfg.seed, 0xB0B0ULL);
  return synthesize_population(target, N, detail::parse_distribution(cfg.distribution), rng);
}

inline std::string cmd_simulate(const SimulateConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.kind != "lemma1" && cfg.kind != "clt" && cfg.kind != "hajek") {
    throw UsageError("unknown simulation '" + cfg.kind + "' (lemma1 | clt | hajek)");
  }
  std::string source;
  const Matrix pop = simulation_population(cfg, source);
  const long N = static_cast<long>(pop.rows());
  if (cfg.n < 2 || cfg.n > N) throw UsageError("--n must lie in [2, N]");

  detail::Document doc("stratalloc simulate " + cfg.kind + " report");
  auto& t = doc.text();
  auto& j = doc.json();
  t << "versions: " << detail::versions() << "\nseed: " << cfg.seed << "\nworkers: " << cfg.workers << "\n";
  t << "config:\n  population: " << source << "\n  distribution: " << cfg.distribution << "\n  N: " << N
    << "\n  G: " << pop.cols() << "\n  n: " << cfg.n << "\n";
  j["versions"] = detail::versions();
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["config"] = {{"population", source}, {"distribution", cfg.distribution}, {"N", N}, {"G", pop.cols()}, {"n", cfg.n}};

  if (cfg.kind == "hajek") {
    Rng rng(cfg.seed, 0x1A3BDAULL);
    const Vector lambda = detail::parse_lambda(cfg.lambda, vech_size(pop.cols()), rng);
    const HajekReport h = hajek_condition_report(pop, cfg.n, lambda, cfg.epsilon);
    t << "  lambda: " << detail::vector_text(lambda) << "\n  epsilon: " << detail::fmt(cfg.epsilon) << "\n";
    t << "condition:\n  lhs: " << detail::fmt(h.lhs) << "\n  rhs_max: " << detail::fmt(h.rhs_max)
      << " (component " << h.rhs_argmax + 1 << ")\n  ratio: " << detail::fmt(h.ratio)
      << "\n  satisfied: " << (h.satisfied ? "yes" : "no") << "\n  degenerate: " << (h.degenerate ? "yes" : "no") << "\n";
    t << "top_n_ratios:\n  characteristic squared_deviation deviation\n";
    for (std::size_t c = 0; c < h.deviation_ratio.size(); ++c)
      t << "  " << c + 1 << ' ' << detail::fmt(h.squared_deviation_ratio[c]) << ' ' << detail::fmt(h.deviation_ratio[c]) << "\n";
    j["config"]["lambda"] = detail::to_std(lambda);
    j["config"]["epsilon"] = cfg.epsilon;
    j["condition"] = {{"lhs", h.lhs}, {"rhs_max", h.rhs_max}, {"rhs_argmax", h.rhs_argmax + 1},
                      {"ratio", std::isnan(h.ratio) ? nlohmann::ordered_json() : nlohmann::ordered_json(h.ratio)},
                      {"satisfied", h.satisfied}, {"degenerate", h.degenerate}};
    j["squared_deviation_ratio"] = h.squared_deviation_ratio;
    j["deviation_ratio"] = h.deviation_ratio;
  } else {
    SimConfig sc;
    sc.reps = cfg.reps;
    sc.seed = cfg.seed;
    sc.n = cfg.n;
    sc.population = pop;
    sc.workers = cfg.workers;
    const MomentReport m = cfg.kind == "lemma1" ? verify_lemma1_moments(sc) : verify_mean_clt(sc);
    const char* plain = cfg.kind == "lemma1" ? "n/(n-1)^2 (M4 - vech S vech' S)" : "S";
    const char* fpc = cfg.kind == "lemma1" ? "(N-n)/(N-1) n/(n-1)^2 (M4 - vech S vech' S)" : "(1/n - 1/N) N/(N-1) S";
    t << "  reps: " << cfg.reps << "\nquantity: " << m.quantity << "\ncensus: " << (m.census ? "yes" : "no") << "\n";
    t << "empirical_mean: " << detail::vector_text(m.empirical_mean) << "\n";
    t << "theoretical_mean: " << detail::vector_text(m.theoretical_mean) << "\n";
    t << "mean_se: " << detail::vector_text(m.mean_se) << "\n";
    t << "mean_z: " << detail::vector_text(m.mean_z) << "\n";
    detail::put_matrix(t, "empirical_cov", m.empirical_cov);
    detail::put_matrix(t, (std::string("theoretical_cov ") + plain).c_str(), m.theoretical_cov);
    detail::put_matrix(t, (std::string("alternative_cov ") + fpc).c_str(), m.alternative_cov);
    detail::put_matrix(t, "cov_se", m.cov_se);
    detail::put_matrix(t, "cov_z", m.cov_z);
    detail::put_matrix(t, "alternative_cov_z", m.alternative_cov_z);
    t << "max_abs_mean_z: " << detail::fmt(m.max_abs_mean_z()) << "\nmax_abs_cov_z: " << detail::fmt(m.max_abs_cov_z())
      << "\nmax_abs_alternative_cov_z: " << detail::fmt(m.max_abs_alternative_cov_z()) << "\n";
    t << "matches_within_10_se: theoretical=" << (m.max_abs_cov_z() <= 10.0 ? "yes" : "no")
      << " alternative=" << (m.max_abs_alternative_cov_z() <= 10.0 ? "yes" : "no") << "\n";
    t << "skewness: " << detail::vector_text(m.skewness) << " (se " << detail::fmt(m.skewness_se) << ")\n";
    t << "excess_kurtosis: " << detail::vector_text(m.excess_kurtosis) << " (se " << detail::fmt(m.kurtosis_se) << ")\n";
    if (cfg.kind == "lemma1") t << "max_identity_residual: " << detail::fmt(m.max_identity_residual, 4) << "\n";

    j["config"]["reps"] = cfg.reps;
    j["quantity"] = m.quantity;
    j["census"] = m.census;
    j["empirical_mean"] = detail::to_std(m.empirical_mean);
    j["theoretical_mean"] = detail::to_std(m.theoretical_mean);
    j["mean_se"] = detail::to_std(m.mean_se);
    j["mean_z"] = detail::to_std(m.mean_z);
    j["empirical_cov"] = detail::matrix_json(m.empirical_cov);
    j["theoretical_cov"] = {{"form", plain}, {"value", detail::matrix_json(m.theoretical_cov)}};
    j["alternative_cov"] = {{"form", fpc}, {"value", detail::matrix_json(m.alternative_cov)}};
    j["cov_z"] = detail::matrix_json(m.cov_z);
    j["alternative_cov_z"] = detail::matrix_json(m.alternative_cov_z);
    j["skewness"] = detail::to_std(m.skewness);
    j["excess_kurtosis"] = detail::to_std(m.excess_kurtosis);
    j["skewness_se"] = m.skewness_se;
    j["kurtosis_se"] = m.kurtosis_se;
    if (cfg.kind == "lemma1") j["max_identity_residual"] = m.max_identity_residual;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return doc.render(cfg.format, detail::timestamp_line(wall));
}

/// The report without its timestamp line.
inline std::string strip_timestamp(const std::string& report) {
  std::istringstream in(report);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(' ');
    if (first != std::string::npos &&
        (line.compare(first, 10, "timestamp:") == 0 || line.compare(first, 12, "\"timestamp\":") == 0)) {
      continue;
    }
    out += line + "\n";
  }
  return out;
}

}  // namespace stratalloc
