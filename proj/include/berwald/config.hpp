#pragma once

// Run configuration: JSON in, validated RunConfig out. Every validation error
// names the offending field by its JSON path.

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "berwald/analysis.hpp"
#include "berwald/errors.hpp"
#include "berwald/expr.hpp"
#include "berwald/metric.hpp"

namespace berwald {

using json = nlohmann::json;

enum class MetricKind : std::uint8_t { Euclidean, Randers, Generic };

inline const char* to_string(MetricKind k) {
  switch (k) {
    case MetricKind::Euclidean: return "euclidean";
    case MetricKind::Randers: return "randers";
    case MetricKind::Generic: return "generic";
  }
  return "?";
}

struct GridSpec {
  std::vector<double> min;
  std::vector<double> max;
  std::vector<int> count;
};

struct RunConfig {
  MetricKind kind = MetricKind::Euclidean;
  int dimension = 3;
  std::vector<std::string> alpha;  ///< n*n row-major expression texts
  std::vector<std::string> beta;   ///< n expression texts
  std::string F;                   ///< generic metric expression

  EnvironmentMode environment = EnvironmentMode::Averaged;
  AnalysisOptions analysis;
  std::vector<int> levels;  ///< convergence study

  std::vector<std::vector<double>> points;
  std::optional<GridSpec> grid;

  std::optional<std::string> json_out;
  std::optional<std::string> csv_out;
  bool timings = false;

  /// Every analysis point: explicit points first, then the grid in
  /// row-major order (last axis fastest).
  std::vector<Vec> all_points() const;
  FinslerMetric build_metric() const;
};

namespace detail {

inline std::string path_join(const std::string& base, const std::string& key) { return base + "." + key; }
inline std::string path_index(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

inline const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
}

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(path_join(path, it.key()), "unknown field");
  }
}

inline double get_double(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
  return v;
}

inline double get_positive(const json& j, const std::string& path) {
  const double v = get_double(j, path);
  if (!(v > 0.0)) throw ConfigError(path, "must be > 0");
  return v;
}

inline int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<int>();
}

inline std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

inline bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

/// Expression given either as text or as a number.
inline std::string get_expr_text(const json& j, const std::string& path, int n, bool allow_y) {
  std::string text;
  if (j.is_number()) {
    std::ostringstream os;
    os.precision(17);
    os << get_double(j, path);
    text = os.str();
  } else {
    text = get_string(j, path);
  }
  try {
    const Expr e = parse_expr(text);
    if (e.max_index(VarKind::X) > n) throw ConfigError(path, "references a coordinate beyond dimension " + std::to_string(n));
    if (!allow_y && e.max_index(VarKind::Y) > 0) throw ConfigError(path, "coefficients may depend on x only");
    if (e.max_index(VarKind::Y) > n) throw ConfigError(path, "references a direction beyond dimension " + std::to_string(n));
  } catch (const ParseError& e) {
    throw ConfigError(path, e.what());
  }
  return text;
}

inline std::vector<double> get_vector(const json& j, const std::string& path, int n) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  if (static_cast<int>(j.size()) != n) throw ConfigError(path, "expected " + std::to_string(n) + " entries");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_double(j[i], path_index(path, i)));
  return out;
}

inline void parse_metric(const json& j, RunConfig& cfg) {
  const std::string path = "metric";
  require_object(j, path);
  reject_unknown(j, path, {"type", "dimension", "alpha", "beta", "F"});
  const json* type = find(j, "type");
  if (type == nullptr) throw ConfigError(path_join(path, "type"), "missing");
  const std::string t = get_string(*type, path_join(path, "type"));
  if (t == "euclidean") {
    cfg.kind = MetricKind::Euclidean;
  } else if (t == "randers") {
    cfg.kind = MetricKind::Randers;
  } else if (t == "generic") {
    cfg.kind = MetricKind::Generic;
  } else {
    throw ConfigError(path_join(path, "type"), "expected one of euclidean, randers, generic");
  }
  if (const json* d = find(j, "dimension")) cfg.dimension = get_int(*d, path_join(path, "dimension"));
  const int n = cfg.dimension;
  if (n < 2 || n > kMaxDimension) {
    throw ConfigError(path_join(path, "dimension"), "must lie in [2, " + std::to_string(kMaxDimension) + "]");
  }
  const auto un = static_cast<std::size_t>(n);

  if (cfg.kind == MetricKind::Randers) {
    cfg.alpha.clear();
    if (const json* a = find(j, "alpha")) {
      const std::string ap = path_join(path, "alpha");
      if (!a->is_array() || a->size() != un) throw ConfigError(ap, "expected " + std::to_string(n) + " rows");
      for (std::size_t r = 0; r < un; ++r) {
        const json& row = (*a)[r];
        const std::string rp = path_index(ap, r);
        if (!row.is_array() || row.size() != un) throw ConfigError(rp, "expected " + std::to_string(n) + " entries");
        for (std::size_t c = 0; c < un; ++c) cfg.alpha.push_back(get_expr_text(row[c], path_index(rp, c), n, false));
      }
      for (std::size_t r = 0; r < un; ++r)
        for (std::size_t c = r + 1; c < un; ++c) {
          if (!structurally_equal(parse_expr(cfg.alpha[r * un + c]), parse_expr(cfg.alpha[c * un + r]))) {
            throw ConfigError(path_index(path_index(ap, r), c), "alpha must be symmetric");
          }
        }
    } else {
      for (std::size_t r = 0; r < un; ++r)
        for (std::size_t c = 0; c < un; ++c) cfg.alpha.emplace_back(r == c ? "1" : "0");
    }
    cfg.beta.assign(un, "0");
    if (const json* b = find(j, "beta")) {
      const std::string bp = path_join(path, "beta");
      if (b->is_array()) {
        if (b->size() != un) throw ConfigError(bp, "expected " + std::to_string(n) + " entries");
        for (std::size_t i = 0; i < un; ++i) cfg.beta[i] = get_expr_text((*b)[i], path_index(bp, i), n, false);
      } else if (b->is_object()) {
        for (auto it = b->begin(); it != b->end(); ++it) {
          const std::string key = it.key();
          const std::string kp = path_join(bp, key);
          int idx = 0;
          if (key.size() < 5 || key.compare(0, 4, "beta") != 0) throw ConfigError(kp, "expected keys beta1 ... beta" + std::to_string(n));
          try {
            std::size_t used = 0;
            idx = std::stoi(key.substr(4), &used);
            if (used != key.size() - 4) idx = 0;
          } catch (const std::exception&) {
            idx = 0;
          }
          if (idx < 1 || idx > n) throw ConfigError(kp, "expected keys beta1 ... beta" + std::to_string(n));
          cfg.beta[static_cast<std::size_t>(idx - 1)] = get_expr_text(it.value(), kp, n, false);
        }
      } else {
        throw ConfigError(bp, "expected an array or an object with keys beta1 ... beta" + std::to_string(n));
      }
    }
    if (find(j, "F") != nullptr) throw ConfigError(path_join(path, "F"), "only valid for generic metrics");
  } else if (cfg.kind == MetricKind::Generic) {
    const json* f = find(j, "F");
    if (f == nullptr) throw ConfigError(path_join(path, "F"), "missing");
    cfg.F = get_expr_text(*f, path_join(path, "F"), n, true);
    if (find(j, "alpha") != nullptr) throw ConfigError(path_join(path, "alpha"), "only valid for randers metrics");
    if (find(j, "beta") != nullptr) throw ConfigError(path_join(path, "beta"), "only valid for randers metrics");
  } else {
    for (const char* key : {"alpha", "beta", "F"}) {
      if (find(j, key) != nullptr) throw ConfigError(path_join(path, key), "not valid for euclidean metrics");
    }
  }
}

}  // namespace detail

inline RunConfig parse_config(const json& root) {
  RunConfig cfg;
  detail::require_object(root, "$");
  detail::reject_unknown(root, "$", {"metric", "environment", "normalize_averaged_metric", "quadrature",
                                     "finite_difference", "tolerances", "solve_path", "points", "grid", "output"});
  const json* metric = detail::find(root, "metric");
  if (metric == nullptr) throw ConfigError("metric", "missing");
  detail::parse_metric(*metric, cfg);
  const int n = cfg.dimension;

  if (const json* e = detail::find(root, "environment")) {
    const std::string v = detail::get_string(*e, "environment");
    if (v == "averaged") {
      cfg.environment = EnvironmentMode::Averaged;
    } else if (v == "explicit_randers_alpha") {
      if (cfg.kind == MetricKind::Generic) throw ConfigError("environment", "explicit_randers_alpha needs a randers or euclidean metric");
      cfg.environment = EnvironmentMode::ExplicitRandersAlpha;
    } else {
      throw ConfigError("environment", "expected averaged or explicit_randers_alpha");
    }
  }
  if (const json* v = detail::find(root, "normalize_averaged_metric")) {
    cfg.analysis.connection.normalize_averaged = detail::get_bool(*v, "normalize_averaged_metric");
  }

  if (const json* q = detail::find(root, "quadrature")) {
    detail::require_object(*q, "quadrature");
    detail::reject_unknown(*q, "quadrature", {"level", "levels"});
    if (const json* l = detail::find(*q, "level")) {
      cfg.analysis.level = detail::get_int(*l, "quadrature.level");
      if (cfg.analysis.level < 1) throw ConfigError("quadrature.level", "must be >= 1");
    }
    if (const json* ls = detail::find(*q, "levels")) {
      if (!ls->is_array() || ls->empty()) throw ConfigError("quadrature.levels", "expected a non-empty array");
      for (std::size_t i = 0; i < ls->size(); ++i) {
        const int v = detail::get_int((*ls)[i], detail::path_index("quadrature.levels", i));
        if (v < 1) throw ConfigError(detail::path_index("quadrature.levels", i), "must be >= 1");
        cfg.levels.push_back(v);
      }
    }
  }
  if (cfg.analysis.level == 0) cfg.analysis.level = default_level(n);
  if (cfg.levels.empty()) cfg.levels = {cfg.analysis.level, 2 * cfg.analysis.level};

  if (const json* f = detail::find(root, "finite_difference")) {
    detail::require_object(*f, "finite_difference");
    detail::reject_unknown(*f, "finite_difference", {"metric_step", "christoffel_derivatives"});
    if (const json* s = detail::find(*f, "metric_step")) {
      cfg.analysis.connection.fd_step = detail::get_positive(*s, "finite_difference.metric_step");
    }
    if (const json* c = detail::find(*f, "christoffel_derivatives")) {
      const std::string v = detail::get_string(*c, "finite_difference.christoffel_derivatives");
      if (v == "symbolic") {
        cfg.analysis.connection.symbolic_alpha_derivatives = true;
      } else if (v == "finite_difference") {
        cfg.analysis.connection.symbolic_alpha_derivatives = false;
      } else {
        throw ConfigError("finite_difference.christoffel_derivatives", "expected symbolic or finite_difference");
      }
    }
  }

  if (const json* t = detail::find(root, "tolerances")) {
    detail::require_object(*t, "tolerances");
    detail::reject_unknown(*t, "tolerances", {"rank_rtol", "residual_threshold", "degeneracy", "ill_conditioned"});
    if (const json* v = detail::find(*t, "rank_rtol")) cfg.analysis.rank.rtol = detail::get_positive(*v, "tolerances.rank_rtol");
    if (const json* v = detail::find(*t, "residual_threshold")) {
      cfg.analysis.residual_threshold = detail::get_positive(*v, "tolerances.residual_threshold");
    }
    if (const json* v = detail::find(*t, "degeneracy")) {
      cfg.analysis.rank.degeneracy_tol = detail::get_positive(*v, "tolerances.degeneracy");
    }
    if (const json* v = detail::find(*t, "ill_conditioned")) {
      cfg.analysis.ill_condition = detail::get_positive(*v, "tolerances.ill_conditioned");
    }
  }

  if (const json* s = detail::find(root, "solve_path")) {
    const std::string v = detail::get_string(*s, "solve_path");
    if (v == "gram") {
      cfg.analysis.path = SolvePath::Gram;
    } else if (v == "orthogonalized") {
      cfg.analysis.path = SolvePath::Orthogonalized;
    } else {
      throw ConfigError("solve_path", "expected gram or orthogonalized");
    }
  }

  if (const json* p = detail::find(root, "points")) {
    if (!p->is_array()) throw ConfigError("points", "expected an array of points");
    for (std::size_t i = 0; i < p->size(); ++i) cfg.points.push_back(detail::get_vector((*p)[i], detail::path_index("points", i), n));
  }
  if (const json* g = detail::find(root, "grid")) {
    detail::require_object(*g, "grid");
    detail::reject_unknown(*g, "grid", {"min", "max", "count"});
    GridSpec spec;
    for (const char* key : {"min", "max", "count"}) {
      if (detail::find(*g, key) == nullptr) throw ConfigError(detail::path_join("grid", key), "missing");
    }
    spec.min = detail::get_vector((*g)["min"], "grid.min", n);
    spec.max = detail::get_vector((*g)["max"], "grid.max", n);
    const json& c = (*g)["count"];
    if (!c.is_array() || static_cast<int>(c.size()) != n) throw ConfigError("grid.count", "expected " + std::to_string(n) + " entries");
    for (std::size_t i = 0; i < c.size(); ++i) {
      const int v = detail::get_int(c[i], detail::path_index("grid.count", i));
      if (v < 1) throw ConfigError(detail::path_index("grid.count", i), "must be >= 1");
      spec.count.push_back(v);
    }
    for (std::size_t i = 0; i < spec.min.size(); ++i) {
      if (spec.max[i] < spec.min[i]) throw ConfigError(detail::path_index("grid.max", i), "must be >= grid.min");
    }
    cfg.grid = std::move(spec);
  }
  if (cfg.points.empty() && !cfg.grid) cfg.points.emplace_back(static_cast<std::size_t>(n), 0.0);

  if (const json* o = detail::find(root, "output")) {
    detail::require_object(*o, "output");
    detail::reject_unknown(*o, "output", {"json", "csv", "timings"});
    if (const json* v = detail::find(*o, "json")) cfg.json_out = detail::get_string(*v, "output.json");
    if (const json* v = detail::find(*o, "csv")) cfg.csv_out = detail::get_string(*v, "output.csv");
    if (const json* v = detail::find(*o, "timings")) cfg.timings = detail::get_bool(*v, "output.timings");
  }

  cfg.build_metric();  // surfaces invalid coefficient expressions early
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(root);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("$", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline FinslerMetric RunConfig::build_metric() const {
  const int n = dimension;
  switch (kind) {
    case MetricKind::Euclidean: return FinslerMetric::euclidean(n, environment);
    case MetricKind::Randers: {
      std::vector<Expr> a;
      std::vector<Expr> b;
      for (const auto& s : alpha) a.push_back(parse_expr(s));
      for (const auto& s : beta) b.push_back(parse_expr(s));
      return FinslerMetric::randers(n, std::move(a), std::move(b), environment);
    }
    case MetricKind::Generic: return FinslerMetric::generic(n, parse_expr(F));
  }
  throw ConfigError("metric.type", "unsupported");
}

inline std::vector<Vec> RunConfig::all_points() const {
  std::vector<Vec> out;
  for (const auto& p : points) out.push_back(Eigen::Map<const Vec>(p.data(), static_cast<Eigen::Index>(p.size())));
  if (grid) {
    const int n = dimension;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    while (true) {
      Vec x(n);
      for (int i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const int c = grid->count[ui];
        x(i) = c == 1 ? grid->min[ui] : grid->min[ui] + (grid->max[ui] - grid->min[ui]) * idx[ui] / (c - 1);
      }
      out.push_back(x);
      int k = n - 1;
      while (k >= 0 && ++idx[static_cast<std::size_t>(k)] == grid->count[static_cast<std::size_t>(k)]) {
        idx[static_cast<std::size_t>(k)] = 0;
        --k;
      }
      if (k < 0) break;
    }
  }
  return out;
}

/// The effective configuration with every default filled in.
inline json config_to_json(const RunConfig& cfg) {
  json m;
  m["type"] = to_string(cfg.kind);
  m["dimension"] = cfg.dimension;
  const auto un = static_cast<std::size_t>(cfg.dimension);
  if (cfg.kind == MetricKind::Randers) {
    json a = json::array();
    for (std::size_t r = 0; r < un; ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < un; ++c) row.push_back(cfg.alpha[r * un + c]);
      a.push_back(row);
    }
    m["alpha"] = a;
    m["beta"] = cfg.beta;
  } else if (cfg.kind == MetricKind::Generic) {
    m["F"] = cfg.F;
  }
  json out;
  out["metric"] = m;
  out["environment"] = to_string(cfg.environment);
  out["normalize_averaged_metric"] = cfg.analysis.connection.normalize_averaged;
  out["quadrature"] = {{"level", cfg.analysis.level}, {"levels", cfg.levels}};
  out["finite_difference"] = {
      {"metric_step", cfg.analysis.connection.fd_step},
      {"christoffel_derivatives", cfg.analysis.connection.symbolic_alpha_derivatives ? "symbolic" : "finite_difference"}};
  json tol = {{"rank_rtol", cfg.analysis.rank.rtol},
              {"degeneracy", cfg.analysis.rank.degeneracy_tol},
              {"ill_conditioned", cfg.analysis.ill_condition}};
  tol["residual_threshold"] = cfg.analysis.residual_threshold ? json(*cfg.analysis.residual_threshold) : json(nullptr);
  out["tolerances"] = tol;
  out["solve_path"] = to_string(cfg.analysis.path);
  out["points"] = cfg.points;
  if (cfg.grid) out["grid"] = {{"min", cfg.grid->min}, {"max", cfg.grid->max}, {"count", cfg.grid->count}};
  json o = json::object();
  if (cfg.json_out) o["json"] = *cfg.json_out;
  if (cfg.csv_out) o["csv"] = *cfg.csv_out;
  o["timings"] = cfg.timings;
  out["output"] = o;
  return out;
}

}  // namespace berwald
