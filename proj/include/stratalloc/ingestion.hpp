#pragma once

// Readers and writers for survey designs. Grammar: docs/formats.md.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stratalloc/errors.hpp"
#include "stratalloc/matrix_kit.hpp"
#include "stratalloc/strata_model.hpp"

namespace stratalloc {

inline constexpr std::string_view kDesignFormat = "stratalloc-design/1";

enum class DataMode { automatic, summary, raw, structured };

inline std::optional<DataMode> parse_data_mode(std::string_view s) {
  if (s == "auto") return DataMode::automatic;
  if (s == "summary") return DataMode::summary;
  if (s == "raw") return DataMode::raw;
  if (s == "json" || s == "structured") return DataMode::structured;
  return std::nullopt;
}

/// Header name of covariance entry (row, col), row >= col, 0-based.
inline std::string covariance_column(Index row, Index col, Index G) {
  if (G < 10) return "s_" + std::to_string(col + 1) + std::to_string(row + 1);
  return "s_" + std::to_string(col + 1) + "_" + std::to_string(row + 1);
}

inline std::string m4_vech_column(Index row, Index col) {
  return "m4_" + std::to_string(col + 1) + "_" + std::to_string(row + 1);
}

inline std::string m4_vec_column(Index row, Index col) {
  return "m4v_" + std::to_string(row + 1) + "_" + std::to_string(col + 1);
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  /// Next non-blank, non-comment line. `#key=value` directives are collected.
  bool next(std::string& line) {
    std::string raw;
    while (std::getline(in_, raw)) {
      ++number_;
      const std::string t = trim(raw);
      if (t.empty()) continue;
      if (t.front() == '#') {
        const auto eq = t.find('=');
        if (eq != std::string::npos) directives_[trim(std::string_view(t).substr(1, eq - 1))] = trim(t.substr(eq + 1));
        continue;
      }
      line = t;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError(source_ + ":" + std::to_string(number_) + ": " + what);
  }

  std::size_t line_number() const { return number_; }
  const std::map<std::string, std::string>& directives() const { return directives_; }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t number_ = 0;
  std::map<std::string, std::string> directives_;
};

inline double parse_real(const LineReader& r, const std::string& field, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    r.fail("field '" + field + "': not a finite number: '" + text + "'");
  }
  return v;
}

inline long parse_count(const LineReader& r, const std::string& field, const std::string& text) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    r.fail("field '" + field + "': not an integer: '" + text + "'");
  }
  return v;
}

inline std::vector<std::string> parse_names(const std::string& list) {
  std::vector<std::string> names;
  for (auto& n : split_fields(list))
    if (!n.empty()) names.push_back(n);
  return names;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Summary table: stratum, N_h, vech-ordered covariance entries, optionally
/// pilot_n and fourth moments.
inline SurveyDesign parse_summary(std::istream& in, const std::string& source = "<summary>") {
  detail::LineReader reader(in, source);
  std::string line;
  if (!reader.next(line)) reader.fail("empty file: header row required");
  const auto header = detail::split_fields(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].empty()) reader.fail("empty column name at position " + std::to_string(c + 1));
    if (!column.emplace(header[c], c).second) reader.fail("duplicate column '" + header[c] + "'");
  }
  for (const char* required : {"stratum", "N_h"})
    if (!column.count(required)) reader.fail(std::string("missing column '") + required + "'");
  Index covariance_columns = 0;
  for (const auto& h : header)
    if (h.rfind("s_", 0) == 0) ++covariance_columns;
  const Index G = dim_from_vech_size(covariance_columns);
  if (G < 1) reader.fail("covariance columns do not form a vech of any dimension");
  const Index k = vech_size(G);

  std::vector<std::pair<Index, Index>> cov_cells;
  for (Index j = 0; j < G; ++j)
    for (Index i = j; i < G; ++i) {
      if (!column.count(covariance_column(i, j, G))) reader.fail("missing column '" + covariance_column(i, j, G) + "'");
      cov_cells.emplace_back(i, j);
    }
  const bool has_m4 = column.count(m4_vech_column(0, 0)) > 0;
  const bool has_m4v = column.count(m4_vec_column(0, 0)) > 0;
  const bool has_pilot = column.count("pilot_n") > 0;
  std::size_t expected = 2 + static_cast<std::size_t>(k) + (has_pilot ? 1 : 0);
  if (has_m4) {
    expected += static_cast<std::size_t>(vech_size(k));
    for (Index b = 0; b < k; ++b)
      for (Index a = b; a < k; ++a)
        if (!column.count(m4_vech_column(a, b))) reader.fail("missing column '" + m4_vech_column(a, b) + "'");
  }
  if (has_m4v) {
    expected += static_cast<std::size_t>(G * G * G * G);
    for (Index a = 0; a < G * G; ++a)
      for (Index b = 0; b < G * G; ++b)
        if (!column.count(m4_vec_column(a, b))) reader.fail("missing column '" + m4_vec_column(a, b) + "'");
  }
  if (header.size() != expected) {
    for (const auto& h : header) {
      bool known = h == "stratum" || h == "N_h" || h == "pilot_n" || h.rfind("s_", 0) == 0 ||
                   (has_m4 && h.rfind("m4_", 0) == 0) || (has_m4v && h.rfind("m4v_", 0) == 0);
      if (!known) reader.fail("unknown column '" + h + "'");
    }
    reader.fail("unexpected column set for G = " + std::to_string(G));
  }

  SurveyDesign design;
  while (reader.next(line)) {
    const auto f = detail::split_fields(line);
    if (f.size() != header.size()) {
      reader.fail("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    }
    const auto field = [&](const std::string& name) -> const std::string& { return f[column.at(name)]; };
    StratumSummary s;
    s.id = field("stratum");
    if (s.id.empty()) reader.fail("field 'stratum' is empty");
    s.population_size = detail::parse_count(reader, "N_h", field("N_h"));
    s.covariance = SymmetricMatrix(G);
    for (const auto& [i, j] : cov_cells) {
      const auto name = covariance_column(i, j, G);
      s.covariance(i, j) = detail::parse_real(reader, name, field(name));
    }
    if (has_pilot) s.pilot_size = detail::parse_count(reader, "pilot_n", field("pilot_n"));
    if (has_m4) {
      SymmetricMatrix m(k);
      for (Index b = 0; b < k; ++b)
        for (Index a = b; a < k; ++a) m(a, b) = detail::parse_real(reader, m4_vech_column(a, b), field(m4_vech_column(a, b)));
      s.m4_vech = m;
    }
    if (has_m4v) {
      Matrix m(G * G, G * G);
      for (Index a = 0; a < G * G; ++a)
        for (Index b = 0; b < G * G; ++b) m(a, b) = detail::parse_real(reader, m4_vec_column(a, b), field(m4_vec_column(a, b)));
      s.m4_vec = m;
    }
    design.strata.push_back(std::move(s));
  }
  if (design.strata.empty()) reader.fail("no stratum rows");
  if (auto it = reader.directives().find("characteristics"); it != reader.directives().end()) {
    design.characteristic_names = detail::parse_names(it->second);
    if (static_cast<Index>(design.characteristic_names.size()) != G) {
      throw ValidationError(source + ": characteristics directive names " +
                            std::to_string(design.characteristic_names.size()) + " columns, G = " + std::to_string(G));
    }
  }
  validate(design);
  return design;
}

inline SurveyDesign load_summary(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  return parse_summary(in, path.string());
}

/// Raw pilot table: stratum, N_h, then one column per characteristic; one
/// row per pilot unit. s_h uses divisor n_h - 1, fourth moments divisor n_h.
inline SurveyDesign parse_raw(std::istream& in, const std::string& source = "<raw>",
                              std::vector<std::string>* warnings = nullptr) {
  detail::LineReader reader(in, source);
  std::string line;
  if (!reader.next(line)) reader.fail("empty file: header row required");
  const auto header = detail::split_fields(line);
  if (header.size() < 3 || header[0] != "stratum" || header[1] != "N_h") {
    reader.fail("header must be 'stratum,N_h,<characteristic>,...'");
  }
  const std::vector<std::string> names(header.begin() + 2, header.end());
  const auto G = static_cast<Index>(names.size());

  struct Pending {
    std::string id;
    long N;
    std::size_t first_line;
    std::vector<std::vector<double>> rows;
  };
  std::vector<Pending> strata;
  std::map<std::string, std::size_t> index;
  while (reader.next(line)) {
    const auto f = detail::split_fields(line);
    if (f.size() != header.size()) {
      reader.fail("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    }
    if (f[0].empty()) reader.fail("field 'stratum' is empty");
    const long N = detail::parse_count(reader, "N_h", f[1]);
    auto [it, fresh] = index.emplace(f[0], strata.size());
    if (fresh) strata.push_back({f[0], N, reader.line_number(), {}});
    auto& p = strata[it->second];
    if (p.N != N) reader.fail("stratum '" + p.id + "': N_h differs from line " + std::to_string(p.first_line));
    std::vector<double> row;
    for (Index j = 0; j < G; ++j) row.push_back(detail::parse_real(reader, names[static_cast<std::size_t>(j)], f[static_cast<std::size_t>(j) + 2]));
    p.rows.push_back(std::move(row));
  }
  if (strata.empty()) reader.fail("no pilot rows");

  SurveyDesign design;
  design.characteristic_names = names;
  for (const auto& p : strata) {
    if (p.rows.size() < 2) {
      throw ValidationError(source + ": stratum '" + p.id + "' has " + std::to_string(p.rows.size()) +
                            " pilot row(s); at least 2 are required");
    }
    Matrix y(static_cast<Index>(p.rows.size()), G);
    for (Index i = 0; i < y.rows(); ++i)
      for (Index j = 0; j < G; ++j) y(i, j) = p.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    StratumSummary s = summarize_pilot(p.id, p.N, y);
    if (warnings) {
      if (s.covariance.lower().cwiseAbs().maxCoeff() == 0.0) {
        warnings->push_back("stratum '" + p.id + "': constant pilot rows, s_h = 0 (degenerate stratum)");
      }
      for (Index j = 0; j < G; ++j) {
        const double m4 = (*s.m4_vech)(vech_index(j, j, G), vech_index(j, j, G));
        const double s2 = s.covariance(j, j);
        if (m4 < s2 * s2) {
          warnings->push_back("stratum '" + p.id + "', characteristic '" + names[static_cast<std::size_t>(j)] +
                              "': m4 < (s^2)^2, variance models will reject this stratum");
        }
      }
    }
    design.strata.push_back(std::move(s));
  }
  validate(design);
  return design;
}

inline SurveyDesign load_raw(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr) {
  std::istringstream in(detail::read_file(path));
  return parse_raw(in, path.string(), warnings);
}

// ---------------------------------------------------------------------------
// Structured document

inline nlohmann::json design_to_json(const SurveyDesign& design) {
  using nlohmann::json;
  json doc;
  doc["format"] = kDesignFormat;
  doc["characteristics"] = design.characteristic_names;
  if (const auto* b = std::get_if<SampleSizeBudget>(&design.budget)) {
    doc["budget"] = {{"total_n", b->total_n}};
  } else if (const auto* c = std::get_if<CostBudget>(&design.budget)) {
    doc["budget"] = {{"costs", c->costs}, {"fixed_cost", c->fixed_cost}, {"total_cost", c->total_cost}};
  }
  json strata = json::array();
  for (const auto& s : design.strata) {
    json j;
    j["id"] = s.id;
    j["N"] = s.population_size;
    if (s.pilot_size) j["pilot_n"] = *s.pilot_size;
    const Vector v = vech(s.covariance);
    j["s"] = std::vector<double>(v.data(), v.data() + v.size());
    if (s.m4_vech) {
      const Vector m = vech(*s.m4_vech);
      j["m4_vech"] = std::vector<double>(m.data(), m.data() + m.size());
    }
    if (s.m4_vec) {
      std::vector<double> rows;
      for (Index a = 0; a < s.m4_vec->rows(); ++a)
        for (Index b = 0; b < s.m4_vec->cols(); ++b) rows.push_back((*s.m4_vec)(a, b));
      j["m4_vec"] = rows;
    }
    strata.push_back(std::move(j));
  }
  doc["strata"] = std::move(strata);
  return doc;
}

inline SurveyDesign design_from_json(const nlohmann::json& doc, const std::string& source = "<json>") {
  const auto fail = [&](const std::string& what) -> void { throw ValidationError(source + ": " + what); };
  if (!doc.is_object()) fail("top level must be an object");
  if (doc.value("format", std::string()) != kDesignFormat) fail("format must be \"" + std::string(kDesignFormat) + "\"");
  SurveyDesign design;
  try {
    if (doc.contains("characteristics")) design.characteristic_names = doc.at("characteristics").get<std::vector<std::string>>();
    if (doc.contains("budget")) {
      const auto& b = doc.at("budget");
      if (b.contains("total_n")) {
        design.budget = SampleSizeBudget{b.at("total_n").get<long>()};
      } else {
        design.budget = CostBudget{b.at("costs").get<std::vector<double>>(), b.value("fixed_cost", 0.0),
                                   b.at("total_cost").get<double>()};
      }
    }
    const auto& strata = doc.at("strata");
    if (!strata.is_array() || strata.empty()) fail("'strata' must be a non-empty array");
    for (std::size_t h = 0; h < strata.size(); ++h) {
      const auto& j = strata[h];
      const std::string where = "strata[" + std::to_string(h) + "]";
      StratumSummary s;
      s.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      s.population_size = j.at("N").get<long>();
      if (j.contains("pilot_n")) s.pilot_size = j.at("pilot_n").get<long>();
      const auto sv = j.at("s").get<std::vector<double>>();
      const Index G = dim_from_vech_size(static_cast<Index>(sv.size()));
      if (G < 1) fail(where + ".s: length " + std::to_string(sv.size()) + " is not G(G+1)/2");
      s.covariance = SymmetricMatrix::from_vech(Eigen::Map<const Vector>(sv.data(), static_cast<Index>(sv.size())), G);
      if (j.contains("m4_vech")) {
        const auto m = j.at("m4_vech").get<std::vector<double>>();
        const Index k = vech_size(G);
        if (static_cast<Index>(m.size()) != vech_size(k)) fail(where + ".m4_vech: expected " + std::to_string(vech_size(k)) + " entries");
        s.m4_vech = SymmetricMatrix::from_vech(Eigen::Map<const Vector>(m.data(), static_cast<Index>(m.size())), k);
      }
      if (j.contains("m4_vec")) {
        const auto m = j.at("m4_vec").get<std::vector<double>>();
        const Index q = G * G;
        if (static_cast<Index>(m.size()) != q * q) fail(where + ".m4_vec: expected " + std::to_string(q * q) + " entries");
        Matrix mm(q, q);
        for (Index a = 0; a < q; ++a)
          for (Index b = 0; b < q; ++b) mm(a, b) = m[static_cast<std::size_t>(a * q + b)];
        s.m4_vec = mm;
      }
      design.strata.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(e.what());
  } catch (const DimensionError& e) {
    fail(e.what());
  }
  validate(design);
  return design;
}

inline SurveyDesign load_design_json(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return design_from_json(doc, path.string());
}

inline void save_design_json(const SurveyDesign& design, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << design_to_json(design).dump(2) << '\n';
}

/// Summary-table text of a design, with every double at 17 significant
/// digits so that parse_summary(export_summary(d)) reproduces d.
inline std::string export_summary(const SurveyDesign& design) {
  const Index G = design.characteristics();
  const Index k = vech_size(G);
  const bool m4 = design.has_vech_moments();
  const bool m4v = design.has_vec_moments();
  const bool pilot = std::all_of(design.strata.begin(), design.strata.end(), [](const auto& s) { return s.pilot_size.has_value(); });
  std::ostringstream os;
  if (!design.characteristic_names.empty()) {
    os << "#characteristics=";
    for (std::size_t j = 0; j < design.characteristic_names.size(); ++j) os << (j ? "," : "") << design.characteristic_names[j];
    os << '\n';
  }
  os << "stratum,N_h";
  for (Index j = 0; j < G; ++j)
    for (Index i = j; i < G; ++i) os << ',' << covariance_column(i, j, G);
  if (pilot) os << ",pilot_n";
  if (m4)
    for (Index b = 0; b < k; ++b)
      for (Index a = b; a < k; ++a) os << ',' << m4_vech_column(a, b);
  if (m4v)
    for (Index a = 0; a < G * G; ++a)
      for (Index b = 0; b < G * G; ++b) os << ',' << m4_vec_column(a, b);
  os << '\n';
  for (const auto& s : design.strata) {
    os << s.id << ',' << s.population_size;
    for (Index j = 0; j < G; ++j)
      for (Index i = j; i < G; ++i) os << ',' << detail::format_real(s.covariance(i, j));
    if (pilot) os << ',' << *s.pilot_size;
    if (m4)
      for (Index b = 0; b < k; ++b)
        for (Index a = b; a < k; ++a) os << ',' << detail::format_real((*s.m4_vech)(a, b));
    if (m4v)
      for (Index a = 0; a < G * G; ++a)
        for (Index b = 0; b < G * G; ++b) os << ',' << detail::format_real((*s.m4_vec)(a, b));
    os << '\n';
  }
  return os.str();
}

/// Resolves a dataset argument: an existing path, or a bare name looked up
/// as <name>, <name>.json, <name>.csv in `data_dir`.
inline std::filesystem::path resolve_dataset(const std::string& name, const std::filesystem::path& data_dir) {
  namespace fs = std::filesystem;
  if (fs::exists(name)) return name;
  for (const char* ext : {"", ".json", ".csv"}) {
    const fs::path p = data_dir / (name + ext);
    if (fs::exists(p)) return p;
  }
  throw ValidationError("dataset '" + name + "' not found");
}

inline SurveyDesign load_design(const std::filesystem::path& path, DataMode mode = DataMode::automatic,
                                std::vector<std::string>* warnings = nullptr) {
  if (mode == DataMode::automatic) mode = path.extension() == ".json" ? DataMode::structured : DataMode::summary;
  switch (mode) {
    case DataMode::raw: return load_raw(path, warnings);
    case DataMode::structured: return load_design_json(path);
    default: return load_summary(path);
  }
}

}  // namespace stratalloc
