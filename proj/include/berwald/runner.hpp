#pragma once

// Batch execution over the configured points with a small worker pool.
// Results are stored by input position, so output order never depends on
// scheduling.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "berwald/analysis.hpp"
#include "berwald/config.hpp"
#include "berwald/randers_oracle.hpp"
#include "berwald/report.hpp"

namespace berwald {

/// BERWALD_THREADS if set to a positive integer, otherwise the hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("BERWALD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min(v, 256L));
  }
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

template <class Result, class Fn>
std::vector<Result> parallel_map(std::size_t count, int threads, Fn&& fn) {
  std::vector<Result> out(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) out[i] = fn(i);
  };
  const auto pool = static_cast<std::size_t>(std::max(1, threads));
  if (pool == 1 || count <= 1) {
    work();
    return out;
  }
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < std::min(pool, count); ++t) workers.emplace_back(work);
  for (auto& w : workers) w.join();
  return out;
}

inline std::vector<PointReport> run_analyze(const RunConfig& cfg, int threads = worker_count()) {
  const FinslerMetric metric = cfg.build_metric();
  const std::vector<Vec> pts = cfg.all_points();
  return parallel_map<PointReport>(pts.size(), threads,
                                   [&](std::size_t i) { return analyze_point_safe(metric, pts[i], cfg.analysis); });
}

struct ConvergenceRow {
  int level = 0;
  Mat gamma;
  Vec singular_values;
  double torsion_norm = 0.0;
  double gamma_delta = 0.0;    ///< max change of gamma entries against the previous level, relative to max |gamma|
  double spectrum_delta = 0.0;
  double torsion_delta = 0.0;
  std::optional<std::string> error;
};

struct ConvergenceTable {
  Vec point;
  std::vector<ConvergenceRow> rows;
};

/// Torsion norms below this count as zero when forming relative changes.
inline constexpr double kZeroTorsion = 1e-10;

namespace detail {

inline double rel_change(double now, double before, double floor) {
  return std::abs(now - before) / std::max({std::abs(now), std::abs(before), floor});
}

/// Largest entry change relative to the largest entry of either matrix.
inline double max_rel_change(const Mat& now, const Mat& before, double floor = 1e-300) {
  const double ref = std::max({now.cwiseAbs().maxCoeff(), before.cwiseAbs().maxCoeff(), floor});
  return (now - before).cwiseAbs().maxCoeff() / ref;
}

}  // namespace detail

/// Analyses every point at each configured quadrature level and records the
/// successive relative changes.
inline std::vector<ConvergenceTable> run_convergence(const RunConfig& cfg, int threads = worker_count()) {
  const FinslerMetric metric = cfg.build_metric();
  const std::vector<Vec> pts = cfg.all_points();
  return parallel_map<ConvergenceTable>(pts.size(), threads, [&](std::size_t i) {
    ConvergenceTable t;
    t.point = pts[i];
    for (int level : cfg.levels) {
      AnalysisOptions opts = cfg.analysis;
      opts.level = level;
      const PointReport r = analyze_point_safe(metric, pts[i], opts);
      ConvergenceRow row;
      row.level = level;
      if (r.error) {
        row.error = r.error;
        t.rows.push_back(std::move(row));
        continue;
      }
      row.gamma = r.gamma;
      row.singular_values = r.gram.singular_values;
      row.torsion_norm = r.torsion_frame.norm();
      if (!t.rows.empty() && !t.rows.back().error) {
        const ConvergenceRow& prev = t.rows.back();
        row.gamma_delta = detail::max_rel_change(row.gamma, prev.gamma);
        row.spectrum_delta = detail::max_rel_change(row.singular_values, prev.singular_values,
                                                    opts.rank.degeneracy_tol * r.gram.scale);
        row.torsion_delta = detail::rel_change(row.torsion_norm, prev.torsion_norm, kZeroTorsion);
      }
      t.rows.push_back(std::move(row));
    }
    return t;
  });
}

inline json convergence_json(const RunConfig& cfg, const std::vector<ConvergenceTable>& tables) {
  json j;
  j["format"] = "berwald-convergence";
  j["version"] = kReportVersion;
  j["config"] = config_to_json(cfg);
  json pts = json::array();
  for (const auto& t : tables) {
    json rows = json::array();
    for (const auto& r : t.rows) {
      json row = {{"level", r.level}};
      if (r.error) {
        row["error"] = *r.error;
      } else {
        row["gamma"] = detail::mat_json(r.gamma);
        row["singular_values"] = detail::vec_json(r.singular_values);
        row["torsion_norm"] = detail::num_json(r.torsion_norm);
        row["gamma_delta"] = detail::num_json(r.gamma_delta);
        row["spectrum_delta"] = detail::num_json(r.spectrum_delta);
        row["torsion_delta"] = detail::num_json(r.torsion_delta);
      }
      rows.push_back(row);
    }
    pts.push_back({{"point", detail::vec_json(t.point)}, {"levels", rows}});
  }
  j["points"] = pts;
  return j;
}

struct RandersCheck {
  Vec point;
  std::optional<SolvabilityC> c;
  bool solvable = false;
  std::optional<std::string> error;
};

/// Only the solvability condition, no quadrature.
inline std::vector<RandersCheck> run_randers_check(const RunConfig& cfg, double tol = 1e-10) {
  if (cfg.kind != MetricKind::Randers) throw ConfigError("metric.type", "randers-check needs a randers metric");
  const FinslerMetric metric = cfg.build_metric();
  std::vector<RandersCheck> out;
  for (const Vec& x : cfg.all_points()) {
    RandersCheck rc;
    rc.point = x;
    try {
      rc.c = solvability_C(metric, x);
      rc.solvable = rc.c->adapted.cwiseAbs().maxCoeff() <= tol;
    } catch (const std::exception& e) {
      rc.error = e.what();
    }
    out.push_back(std::move(rc));
  }
  return out;
}

inline json randers_check_json(const RunConfig& cfg, const std::vector<RandersCheck>& checks) {
  json j;
  j["format"] = "berwald-randers-check";
  j["version"] = kReportVersion;
  j["config"] = config_to_json(cfg);
  json pts = json::array();
  for (const auto& c : checks) {
    json p = {{"point", detail::vec_json(c.point)}};
    if (c.error) {
      p["error"] = *c.error;
    } else {
      p["c_adapted"] = detail::vec_json(c.c->adapted);
      p["c_original"] = detail::vec_json(c.c->original);
      p["beta_norm"] = detail::num_json(c.c->beta_norm);
      p["solvable"] = c.solvable;
    }
    pts.push_back(p);
  }
  j["points"] = pts;
  return j;
}

}  // namespace berwald
