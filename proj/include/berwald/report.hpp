#pragma once

// JSON and CSV rendering of point reports, and the inverse JSON reader.
//
// Torsion components are flat arrays in the order T_12^1, T_13^1, ...,
// T_{n-1,n}^1, T_12^2, ... (upper index outermost, lower pairs
// lexicographic). Matrices are arrays of rows.

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "berwald/analysis.hpp"
#include "berwald/config.hpp"
#include "berwald/errors.hpp"

namespace berwald {

inline constexpr int kReportVersion = 1;

namespace detail {

inline json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i) == 0.0 ? 0.0 : v(i));  // drop negative zero
  return a;
}

inline json mat_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

/// Non-finite doubles are written as null.
inline json num_json(double v) { return std::isfinite(v) ? json(v == 0.0 ? 0.0 : v) : json(nullptr); }

inline Vec json_vec(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline Mat json_mat(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  return m;
}

inline double json_num(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline json torsion_json(const TorsionTensor& t) { return vec_json(t.components()); }

inline FrameTag frame_from_string(const std::string& s) {
  if (s == "orthonormal") return FrameTag::Orthonormal;
  if (s == "original") return FrameTag::Original;
  if (s == "adapted") return FrameTag::Adapted;
  throw Error("unknown frame tag " + s);
}

inline Verdict verdict_from_string(const std::string& s) {
  if (s == "solvable") return Verdict::Solvable;
  if (s == "not_solvable") return Verdict::NotSolvable;
  if (s == "riemannian_degenerate") return Verdict::RiemannianDegenerate;
  throw Error("unknown verdict " + s);
}

}  // namespace detail

inline json point_report_json(const PointReport& r, bool with_timings = false) {
  using detail::mat_json;
  using detail::num_json;
  using detail::vec_json;
  json j;
  j["point"] = vec_json(r.point);
  j["dimension"] = r.dim;
  j["level"] = r.level;
  j["environment"] = to_string(r.environment);
  j["solve_path"] = to_string(r.path);
  if (r.error) {
    j["verdict"] = "error";
    j["error"] = {{"stage", r.error_stage.value_or("unknown")}, {"message", *r.error}};
    return j;
  }
  j["verdict"] = to_string(r.verdict);
  j["derivatives"] = r.analytic_derivatives ? "analytic" : "finite_difference";
  j["gamma"] = mat_json(r.gamma);
  j["frame"] = mat_json(r.frame);
  j["torsion"] = {{"frame", detail::torsion_json(r.torsion_frame)},
                  {"original", detail::torsion_json(r.torsion_original)},
                  {"norm", num_json(r.torsion_frame.norm())}};
  j["coefficients"] = vec_json(r.coefficients);
  j["selection"] = r.selection;
  j["gram"] = {{"matrix", mat_json(r.gram.G)},
               {"singular_values", vec_json(r.gram.singular_values)},
               {"sigma_max", num_json(r.gram.sigma_max)},
               {"scale", num_json(r.gram.scale)},
               {"rank", r.gram.rank},
               {"d", r.gram.d},
               {"big_system_rank", r.gram.big_rank},
               {"basis_rank", r.basis_rank},
               {"rank_identity_holds", r.rank_identity_holds},
               {"maximal_rank", r.gram.maximal_rank},
               {"isometry_bound_ok", r.gram.isometry_bound_ok},
               {"degenerate", r.gram.degenerate},
               {"condition", num_json(r.gram_condition)},
               {"ill_conditioned", r.ill_conditioned}};
  if (!r.selection_diagnostic.empty()) j["gram"]["diagnostic"] = r.selection_diagnostic;
  j["residual"] = {{"rms", num_json(r.residual.rms)},
                   {"max_abs", num_json(r.residual.max_abs)},
                   {"h_norm", num_json(r.residual.h_norm)},
                   {"ratio", num_json(r.residual.ratio)},
                   {"threshold", num_json(r.residual.threshold)}};
  j["flags"] = {{"unique_connection", r.unique_connection}, {"zero_curvature", r.zero_curvature}};
  json iso = json::array();
  for (const Mat& a : r.isometry_directions) iso.push_back(mat_json(a));
  j["isometry_directions"] = iso;
  if (r.torsion_2d) {
    j["surface_closed_form"] = {{"torsion", detail::torsion_json(*r.torsion_2d)},
                                {"max_abs_difference", num_json(r.path_2d_difference.value_or(0.0))}};
  }
  if (r.oracle) {
    const OracleComparison& o = *r.oracle;
    json oj = {{"c_adapted", vec_json(o.c_adapted)},
               {"c_original", vec_json(o.c_original)},
               {"beta_norm", num_json(o.beta_norm)},
               {"solvable", o.solvable},
               {"expected_rank", o.expected_rank},
               {"expected_d", o.expected_d},
               {"rank_matches", o.rank_matches}};
    if (o.torsion_oracle) oj["torsion_oracle"] = detail::torsion_json(*o.torsion_oracle);
    if (o.torsion_numeric) oj["torsion_numeric"] = detail::torsion_json(*o.torsion_numeric);
    if (o.max_abs_difference) oj["max_abs_difference"] = num_json(*o.max_abs_difference);
    if (!o.note.empty()) oj["note"] = o.note;
    j["randers_oracle"] = oj;
  }
  j["warnings"] = r.warnings;
  if (with_timings) {
    j["timings_ms"] = {{"environment", r.timings.environment_ms}, {"directions", r.timings.directions_ms},
                       {"gram", r.timings.gram_ms},               {"solve", r.timings.solve_ms},
                       {"residual", r.timings.residual_ms},       {"total", r.timings.total_ms}};
  }
  return j;
}

/// Inverse of point_report_json.
inline PointReport point_report_from_json(const json& j) {
  using detail::json_mat;
  using detail::json_num;
  using detail::json_vec;
  PointReport r;
  r.point = json_vec(j.at("point"));
  r.dim = j.at("dimension").get<int>();
  r.level = j.at("level").get<int>();
  r.environment = j.at("environment").get<std::string>() == "averaged" ? EnvironmentMode::Averaged
                                                                         : EnvironmentMode::ExplicitRandersAlpha;
  r.path = j.at("solve_path").get<std::string>() == "gram" ? SolvePath::Gram : SolvePath::Orthogonalized;
  if (j.at("verdict").get<std::string>() == "error") {
    r.error = j.at("error").at("message").get<std::string>();
    r.error_stage = j.at("error").at("stage").get<std::string>();
    return r;
  }
  const int n = r.dim;
  r.verdict = detail::verdict_from_string(j.at("verdict").get<std::string>());
  r.analytic_derivatives = j.at("derivatives").get<std::string>() == "analytic";
  r.gamma = json_mat(j.at("gamma"));
  r.frame = json_mat(j.at("frame"));
  r.torsion_frame = TorsionTensor(n, FrameTag::Orthonormal, json_vec(j.at("torsion").at("frame")));
  r.torsion_original = TorsionTensor(n, FrameTag::Original, json_vec(j.at("torsion").at("original")));
  r.coefficients = json_vec(j.at("coefficients"));
  r.selection = j.at("selection").get<std::vector<int>>();
  const json& g = j.at("gram");
  r.gram.n = n;
  r.gram.G = json_mat(g.at("matrix"));
  r.gram.singular_values = json_vec(g.at("singular_values"));
  r.gram.sigma_max = json_num(g.at("sigma_max"));
  r.gram.scale = json_num(g.at("scale"));
  r.gram.rank = g.at("rank").get<int>();
  r.gram.d = g.at("d").get<int>();
  r.gram.big_rank = g.at("big_system_rank").get<int>();
  r.basis_rank = g.at("basis_rank").get<int>();
  r.rank_identity_holds = g.at("rank_identity_holds").get<bool>();
  r.gram.maximal_rank = g.at("maximal_rank").get<bool>();
  r.gram.isometry_bound_ok = g.at("isometry_bound_ok").get<bool>();
  r.gram.degenerate = g.at("degenerate").get<bool>();
  r.gram_condition = json_num(g.at("condition"));
  r.ill_conditioned = g.at("ill_conditioned").get<bool>();
  if (g.contains("diagnostic")) r.selection_diagnostic = g.at("diagnostic").get<std::string>();
  const json& res = j.at("residual");
  r.residual.rms = json_num(res.at("rms"));
  r.residual.max_abs = json_num(res.at("max_abs"));
  r.residual.h_norm = json_num(res.at("h_norm"));
  r.residual.ratio = json_num(res.at("ratio"));
  r.residual.threshold = json_num(res.at("threshold"));
  r.residual.solvable = r.residual.ratio < r.residual.threshold;
  r.unique_connection = j.at("flags").at("unique_connection").get<bool>();
  r.zero_curvature = j.at("flags").at("zero_curvature").get<bool>();
  for (const json& a : j.at("isometry_directions")) r.isometry_directions.push_back(json_mat(a));
  if (j.contains("surface_closed_form")) {
    const json& s = j.at("surface_closed_form");
    r.torsion_2d = TorsionTensor(n, FrameTag::Orthonormal, json_vec(s.at("torsion")));
    r.path_2d_difference = json_num(s.at("max_abs_difference"));
  }
  if (j.contains("randers_oracle")) {
    const json& oj = j.at("randers_oracle");
    OracleComparison o;
    o.c_adapted = json_vec(oj.at("c_adapted"));
    o.c_original = json_vec(oj.at("c_original"));
    o.beta_norm = json_num(oj.at("beta_norm"));
    o.solvable = oj.at("solvable").get<bool>();
    o.expected_rank = oj.at("expected_rank").get<int>();
    o.expected_d = oj.at("expected_d").get<int>();
    o.rank_matches = oj.at("rank_matches").get<bool>();
    if (oj.contains("torsion_oracle")) o.torsion_oracle = TorsionTensor(n, FrameTag::Adapted, json_vec(oj.at("torsion_oracle")));
    if (oj.contains("torsion_numeric")) o.torsion_numeric = TorsionTensor(n, FrameTag::Adapted, json_vec(oj.at("torsion_numeric")));
    if (oj.contains("max_abs_difference")) o.max_abs_difference = json_num(oj.at("max_abs_difference"));
    if (oj.contains("note")) o.note = oj.at("note").get<std::string>();
    r.oracle = std::move(o);
  }
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (j.contains("timings_ms")) {
    const json& t = j.at("timings_ms");
    r.timings = {t.at("environment").get<double>(), t.at("directions").get<double>(), t.at("gram").get<double>(),
                 t.at("solve").get<double>(),       t.at("residual").get<double>(),   t.at("total").get<double>()};
  }
  return r;
}

struct RunSummary {
  int points = 0;
  int solvable = 0;
  int not_solvable = 0;
  int degenerate = 0;
  int errors = 0;
};

inline RunSummary summarize(const std::vector<PointReport>& reports) {
  RunSummary s;
  for (const auto& r : reports) {
    ++s.points;
    if (r.error) {
      ++s.errors;
    } else if (r.verdict == Verdict::Solvable) {
      ++s.solvable;
    } else if (r.verdict == Verdict::NotSolvable) {
      ++s.not_solvable;
    } else {
      ++s.degenerate;
    }
  }
  return s;
}

/// 2 if any point is not solvable, otherwise 1 if any point failed, otherwise 0.
inline int exit_code(const RunSummary& s) {
  if (s.not_solvable > 0) return 2;
  if (s.errors > 0) return 1;
  return 0;
}

inline json run_report_json(const RunConfig& cfg, const std::vector<PointReport>& reports, bool with_timings) {
  json j;
  j["format"] = "berwald-report";
  j["version"] = kReportVersion;
  j["config"] = config_to_json(cfg);
  json pts = json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    json p = point_report_json(reports[i], with_timings);
    p["index"] = i;
    pts.push_back(std::move(p));
  }
  j["points"] = pts;
  const RunSummary s = summarize(reports);
  j["summary"] = {{"points", s.points},
                  {"solvable", s.solvable},
                  {"not_solvable", s.not_solvable},
                  {"riemannian_degenerate", s.degenerate},
                  {"errors", s.errors},
                  {"exit_code", exit_code(s)}};
  return j;
}

inline constexpr const char* kCsvHeader = "index,point,verdict,rank,d,torsion_norm,residual_ratio";

namespace detail {
inline std::string csv_double(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << (v == 0.0 ? 0.0 : v);
  return os.str();
}
}  // namespace detail

/// One line per point; coordinates inside the point column are separated by ';'.
inline void write_csv(std::ostream& out, const std::vector<PointReport>& reports) {
  out << kCsvHeader << '\n';
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const PointReport& r = reports[i];
    out << i << ',';
    for (Eigen::Index k = 0; k < r.point.size(); ++k) out << (k ? ";" : "") << detail::csv_double(r.point(k));
    if (r.error) {
      out << ",error,,,,\n";
      continue;
    }
    out << ',' << to_string(r.verdict) << ',' << r.gram.rank << ',' << r.gram.d << ','
        << detail::csv_double(r.torsion_frame.norm()) << ',' << detail::csv_double(r.residual.ratio) << '\n';
  }
}

}  // namespace berwald
