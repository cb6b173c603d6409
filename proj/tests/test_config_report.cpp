#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "berwald/berwald.hpp"
#include "berwald/config.hpp"
#include "berwald/report.hpp"
#include "berwald/runner.hpp"

using namespace berwald;

namespace {

std::string source_path(const std::string& rel) { return std::string(BERWALD_SOURCE_DIR) + "/" + rel; }

json load_json(const std::string& rel) {
  std::ifstream in(source_path(rel));
  return json::parse(in);
}

// Just enough of JSON Schema for the published report schema.
class SchemaValidator {
 public:
  explicit SchemaValidator(json root) : root_(std::move(root)) {}

  std::vector<std::string> validate(const json& doc) const {
    std::vector<std::string> errors;
    check(root_, doc, "$", errors);
    return errors;
  }

 private:
  const json& resolve(const json& schema) const {
    if (!schema.contains("$ref")) return schema;
    const std::string ref = schema["$ref"];
    const std::string prefix = "#/definitions/";
    return root_["definitions"][ref.substr(prefix.size())];
  }

  static bool type_ok(const std::string& t, const json& v) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    if (t == "number") return v.is_number();
    return false;
  }

  void check(const json& s0, const json& v, const std::string& path, std::vector<std::string>& errors) const {
    const json& s = resolve(s0);
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || type_ok(t, v);
      } else {
        ok = type_ok(s["type"], v);
      }
      if (!ok) {
        errors.push_back(path + ": wrong type");
        return;
      }
    }
    if (s.contains("enum")) {
      bool found = false;
      for (const auto& e : s["enum"]) found = found || e == v;
      if (!found) errors.push_back(path + ": not in enum");
    }
    if (v.is_number()) {
      if (s.contains("minimum") && v.get<double>() < s["minimum"].get<double>()) errors.push_back(path + ": below minimum");
      if (s.contains("maximum") && v.get<double>() > s["maximum"].get<double>()) errors.push_back(path + ": above maximum");
      if (s.contains("exclusiveMinimum") && v.get<double>() <= s["exclusiveMinimum"].get<double>()) {
        errors.push_back(path + ": not above exclusive minimum");
      }
    }
    if (v.is_object()) {
      if (s.contains("required")) {
        for (const auto& r : s["required"]) {
          if (!v.contains(r.get<std::string>())) errors.push_back(path + ": missing " + r.get<std::string>());
        }
      }
      const json props = s.value("properties", json::object());
      for (auto it = v.begin(); it != v.end(); ++it) {
        const std::string sub = path + "." + it.key();
        if (props.contains(it.key())) {
          check(props[it.key()], it.value(), sub, errors);
        } else if (s.contains("additionalProperties")) {
          const json& ap = s["additionalProperties"];
          if (ap.is_boolean()) {
            if (!ap.get<bool>()) errors.push_back(sub + ": not allowed");
          } else {
            check(ap, it.value(), sub, errors);
          }
        }
      }
    }
    if (v.is_array() && s.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) check(s["items"], v[i], path + "[" + std::to_string(i) + "]", errors);
    }
  }

  json root_;
};

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

RunConfig small(const std::string& extra = "") {
  return parse_config_text(R"({"metric": {"type": "randers", "beta": ["0.1*x2", "0", "0.3"]},
                              "environment": "explicit_randers_alpha", "quadrature": {"level": 8}, )" +
                           extra + R"("points": [[0, 0, 0], [0.1, 0.2, 0.3], [0.3, -0.2, 0]]})");
}

PointReport failing_point() {
  return analyze_point_safe(FinslerMetric::generic(3, parse_expr("y1")), Vec::Zero(3), AnalysisOptions{.level = 6});
}

}  // namespace

TEST(Config, Defaults) {
  const RunConfig c = parse_config_text(R"({"metric": {"type": "euclidean"}})");
  EXPECT_EQ(c.dimension, 3);
  EXPECT_EQ(c.analysis.level, 30);
  EXPECT_EQ(c.levels, (std::vector<int>{30, 60}));
  EXPECT_EQ(c.environment, EnvironmentMode::Averaged);
  EXPECT_EQ(c.analysis.path, SolvePath::Gram);
  ASSERT_EQ(c.all_points().size(), 1u);
  EXPECT_EQ(c.all_points()[0], Vec::Zero(3));
  EXPECT_FALSE(c.timings);
}

TEST(Config, SurfaceDefaultLevel) {
  EXPECT_EQ(parse_config_text(R"({"metric": {"type": "euclidean", "dimension": 2}})").analysis.level, 32);
}

TEST(Config, BetaObjectForm) {
  const RunConfig c = parse_config_text(R"({"metric": {"type": "randers", "beta": {"beta3": 0.5}}})");
  EXPECT_EQ(c.beta, (std::vector<std::string>{"0", "0", "0.5"}));
  EXPECT_EQ(c.alpha.size(), 9u);
  const FinslerMetric m = c.build_metric();
  EXPECT_NEAR(eval_F(m, Vec::Zero(3), Vec::Unit(3, 2)), 1.5, 1e-15);
}

TEST(Config, ErrorsNameTheField) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {R"({"metric": {"type": "euclidean"}, "quadrature": {"level": -1}})", "quadrature.level"},
      {R"({"metric": {"type": "finsler"}})", "metric.type"},
      {R"({"metric": {"type": "euclidean", "dimension": 9}})", "metric.dimension"},
      {R"({"metric": {"type": "randers", "beta": ["0", "x4", "0"]}})", "metric.beta[1]"},
      {R"({"metric": {"type": "randers", "beta": ["0", "y1", "0"]}})", "metric.beta[1]"},
      {R"({"metric": {"type": "randers", "beta": {"gamma": 1}}})", "metric.beta.gamma"},
      {R"({"metric": {"type": "randers", "alpha": [["1", "x1", "0"], ["0", "1", "0"], ["0", "0", "1"]]}})",
       "metric.alpha[0][1]"},
      {R"({"metric": {"type": "generic"}})", "metric.F"},
      {R"j({"metric": {"type": "generic", "F": "sqrt(y1^2 + y2^2 + y3^2)"}, "environment": "explicit_randers_alpha"})j",
       "environment"},
      {R"({"metric": {"type": "euclidean"}, "points": [[0, 0]]})", "points[0]"},
      {R"({"metric": {"type": "euclidean"}, "colour": 1})", "$.colour"},
      {R"({"metric": {"type": "euclidean"}, "tolerances": {"rank_rtol": 0}})", "tolerances.rank_rtol"},
      {R"({"metric": )", "$"},
  };
  for (const auto& [text, field] : cases) {
    const std::string got = message_of([&] { parse_config_text(text); });
    EXPECT_EQ(got, field) << text;
  }
}

TEST(Config, GridRowMajor) {
  const RunConfig c = parse_config_text(
      R"({"metric": {"type": "euclidean", "dimension": 2}, "points": [[9, 9]],
          "grid": {"min": [0, 0], "max": [1, 2], "count": [2, 3]}})");
  const auto pts = c.all_points();
  ASSERT_EQ(pts.size(), 7u);
  EXPECT_EQ(pts[0], (Vec(2) << 9, 9).finished());
  EXPECT_EQ(pts[1], (Vec(2) << 0, 0).finished());
  EXPECT_EQ(pts[2], (Vec(2) << 0, 1).finished());
  EXPECT_EQ(pts[3], (Vec(2) << 0, 2).finished());
  EXPECT_EQ(pts[4], (Vec(2) << 1, 0).finished());
}

TEST(Config, EchoParsesBackToSameConfig) {
  const RunConfig c = small();
  const json once = config_to_json(c);
  EXPECT_EQ(config_to_json(parse_config(once)), once);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"euclidean", "randers_constant", "randers_rotating", "randers_nonsolvable", "generic_quartic",
                           "convergence", "surface"}) {
    EXPECT_NO_THROW(load_config(source_path(std::string("configs/") + name + ".json"))) << name;
  }
}

TEST(Report, PointRoundTrip) {
  const RunConfig c = small();
  const auto reports = run_analyze(c, 1);
  for (const auto& r : reports) {
    const json j = point_report_json(r);
    EXPECT_EQ(point_report_json(point_report_from_json(j)), j);
  }
}

TEST(Report, ValidatesAgainstSchema) {
  const SchemaValidator schema(load_json("docs/report.schema.json"));
  RunConfig c = small();
  auto reports = run_analyze(c, 1);
  reports.push_back(failing_point());
  ASSERT_TRUE(reports.back().error);
  for (bool timings : {false, true}) {
    const auto errors = schema.validate(run_report_json(c, reports, timings));
    for (const auto& e : errors) ADD_FAILURE() << e;
  }
  for (const char* name : {"euclidean", "randers_nonsolvable", "surface", "generic_quartic"}) {
    RunConfig s = load_config(source_path(std::string("configs/") + name + ".json"));
    s.analysis.level = 8;
    const auto errors = schema.validate(run_report_json(s, run_analyze(s, 1), false));
    for (const auto& e : errors) ADD_FAILURE() << name << ": " << e;
  }
}

TEST(Report, SchemaRejectsBrokenReports) {
  const SchemaValidator schema(load_json("docs/report.schema.json"));
  const RunConfig c = small();
  json j = run_report_json(c, run_analyze(c, 1), false);
  EXPECT_TRUE(schema.validate(j).empty());
  json bad = j;
  bad["points"][0]["verdict"] = "maybe";
  EXPECT_FALSE(schema.validate(bad).empty());
  bad = j;
  bad["points"][0].erase("dimension");
  EXPECT_FALSE(schema.validate(bad).empty());
  bad = j;
  bad["summary"]["extra"] = 1;
  EXPECT_FALSE(schema.validate(bad).empty());
}

TEST(Report, ByteIdenticalAcrossRunsAndThreads) {
  const RunConfig c = small();
  const std::string a = run_report_json(c, run_analyze(c, 1), false).dump(2);
  const std::string b = run_report_json(c, run_analyze(c, 1), false).dump(2);
  const std::string t = run_report_json(c, run_analyze(c, 3), false).dump(2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, t);
  EXPECT_EQ(a.find("timings_ms"), std::string::npos);
  EXPECT_NE(run_report_json(c, run_analyze(c, 1), true).dump().find("timings_ms"), std::string::npos);
}

TEST(Report, PointsKeepInputOrder) {
  const RunConfig c = small();
  const auto reports = run_analyze(c, 4);
  const auto pts = c.all_points();
  ASSERT_EQ(reports.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(reports[i].point, pts[i]);
}

TEST(Report, SummaryAndExitCode) {
  RunSummary s;
  EXPECT_EQ(exit_code(s), 0);
  s.degenerate = 2;
  EXPECT_EQ(exit_code(s), 0);
  s.errors = 1;
  EXPECT_EQ(exit_code(s), 1);
  s.not_solvable = 1;
  EXPECT_EQ(exit_code(s), 2);
}

TEST(Report, Csv) {
  const RunConfig c = small();
  auto reports = run_analyze(c, 1);
  reports.push_back(failing_point());
  std::ostringstream os;
  write_csv(os, reports);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kCsvHeader);
  std::getline(in, line);
  EXPECT_EQ(line.rfind("0,0;0;0,solvable,2,1,", 0), 0u) << line;
  int rows = 1;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6) << line;
  }
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(last, "3,0;0;0,error,,,,");
}

TEST(Report, NegativeZeroIsNormalized) {
  EXPECT_EQ(json(detail::num_json(-0.0)).dump(), "0.0");
  EXPECT_TRUE(detail::num_json(std::nan("")).is_null());
}

TEST(Runner, ThreadsFromEnvironment) {
  ::setenv("BERWALD_THREADS", "3", 1);
  EXPECT_EQ(worker_count(), 3);
  ::setenv("BERWALD_THREADS", "zero", 1);
  EXPECT_GE(worker_count(), 1);
  ::unsetenv("BERWALD_THREADS");
}

TEST(Convergence, EuclideanExact) {
  RunConfig c = parse_config_text(R"({"metric": {"type": "euclidean"}, "quadrature": {"levels": [10, 20, 40]}})");
  const auto t = run_convergence(c, 1);
  ASSERT_EQ(t.size(), 1u);
  ASSERT_EQ(t[0].rows.size(), 3u);
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_LT(t[0].rows[i].gamma_delta, 1e-12);
    EXPECT_LT(t[0].rows[i].spectrum_delta, 1e-12);
    EXPECT_LT(t[0].rows[i].torsion_delta, 1e-12);
  }
}

TEST(Convergence, RandersShrinks) {
  // Averaged environment, so gamma depends on the quadrature level.
  RunConfig c = parse_config_text(
      R"({"metric": {"type": "randers", "beta": ["0", "0", "0.3"]}, "quadrature": {"levels": [10, 20, 40]}})");
  const auto t = run_convergence(c, 1);
  const auto& rows = t[0].rows;
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_LE(rows[2].gamma_delta, rows[1].gamma_delta);
  EXPECT_LT(rows[2].gamma_delta, 1e-8);
  EXPECT_LT(rows[2].spectrum_delta, 1e-8);
}

TEST(Convergence, GenericQuarticReported) {
  RunConfig c = load_config(source_path("configs/generic_quartic.json"));
  c.points.resize(1);
  const auto t = run_convergence(c, 1);
  ASSERT_EQ(t[0].rows.size(), 3u);
  for (const auto& r : t[0].rows) EXPECT_FALSE(r.error);
  EXPECT_LT(t[0].rows.back().gamma_delta, 1e-6);
  EXPECT_LT(t[0].rows.back().spectrum_delta, 1e-6);
}

TEST(RandersCheck, ShippedConfigs) {
  const auto bad = run_randers_check(load_config(source_path("configs/randers_nonsolvable.json")));
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_FALSE(bad[0].solvable);
  EXPECT_EQ(bad[0].c->original, (Vec(3) << 1, 0, 0).finished());
  const auto good = run_randers_check(load_config(source_path("configs/randers_rotating.json")));
  for (const auto& g : good) EXPECT_TRUE(g.solvable);
  EXPECT_THROW(run_randers_check(load_config(source_path("configs/euclidean.json"))), ConfigError);
}

TEST(Grid, VanishingBetaIsDegenerate) {
  const RunConfig c = parse_config_text(
      R"({"metric": {"type": "randers", "beta": ["0", "0", "0.3*x1"]}, "environment": "explicit_randers_alpha",
          "quadrature": {"level": 10}, "grid": {"min": [-1, 0, 0], "max": [1, 0, 0], "count": [3, 1, 1]}})");
  const auto reports = run_analyze(c, 2);
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_EQ(reports[1].verdict, Verdict::RiemannianDegenerate);
  EXPECT_FALSE(reports[1].oracle);
  EXPECT_EQ(reports[0].verdict, Verdict::NotSolvable);
  EXPECT_EQ(reports[2].verdict, Verdict::NotSolvable);
}
