#pragma once

// Per-point pipeline: environment metric -> frame -> Christoffel symbols ->
// h* -> Gram matrices -> extremal torsion -> residual check.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "berwald/connection.hpp"
#include "berwald/errors.hpp"
#include "berwald/metric.hpp"
#include "berwald/quadrature.hpp"
#include "berwald/randers_oracle.hpp"
#include "berwald/solver.hpp"
#include "berwald/torsion.hpp"

namespace berwald {

enum class SolvePath : std::uint8_t { Gram, Orthogonalized };

inline const char* to_string(SolvePath p) { return p == SolvePath::Gram ? "gram" : "orthogonalized"; }

inline int default_level(int n) {
  if (n == 2) return 32;
  if (n == 3) return 30;
  return 10;
}

struct AnalysisOptions {
  int level = 0;  ///< 0 picks default_level(n)
  ConnectionOptions connection;
  RankOptions rank;
  std::optional<double> residual_threshold;  ///< unset: 1e-6 with analytic derivatives, 1e-4 otherwise
  double ill_condition = 1e12;
  SolvePath path = SolvePath::Gram;
  bool randers_oracle = true;
  double oracle_c_tol = 1e-10;
};

struct OracleComparison {
  Vec c_adapted;
  Vec c_original;
  double beta_norm = 0.0;
  bool solvable = false;            ///< max |C| below tolerance
  int expected_rank = 0;
  int expected_d = 0;
  bool rank_matches = false;
  std::optional<TorsionTensor> torsion_oracle;   ///< adapted coordinates, n = 3 only
  std::optional<TorsionTensor> torsion_numeric;  ///< numeric torsion in the same coordinates
  std::optional<double> max_abs_difference;
  std::string note;
};

struct Timings {
  double environment_ms = 0.0;
  double directions_ms = 0.0;
  double gram_ms = 0.0;
  double solve_ms = 0.0;
  double residual_ms = 0.0;
  double total_ms = 0.0;
};

struct PointReport {
  Vec point;
  int dim = 0;
  int level = 0;
  EnvironmentMode environment = EnvironmentMode::Averaged;
  SolvePath path = SolvePath::Gram;
  bool analytic_derivatives = false;

  Verdict verdict = Verdict::Solvable;
  std::optional<std::string> error;        ///< set when a stage failed
  std::optional<std::string> error_stage;

  Mat gamma;
  Mat frame;
  TorsionTensor torsion_frame;
  TorsionTensor torsion_original;
  Vec coefficients;
  std::vector<int> selection;
  GramReport gram;
  int basis_rank = 0;
  bool rank_identity_holds = true;
  std::string selection_diagnostic;
  double gram_condition = 1.0;
  bool ill_conditioned = false;
  ResidualStats residual;
  bool unique_connection = false;
  bool zero_curvature = false;
  std::vector<Mat> isometry_directions;    ///< original coordinates
  std::optional<TorsionTensor> torsion_2d;  ///< closed-form surface path, frame coordinates
  std::optional<double> path_2d_difference;
  std::optional<OracleComparison> oracle;
  std::vector<std::string> warnings;
  Timings timings;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <class Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline OracleComparison randers_comparison(const FinslerMetric& m, const Vec& x, const PointReport& rep,
                                           const AnalysisOptions& opts) {
  OracleComparison oc;
  const SolvabilityC c = solvability_C(m, x);
  oc.c_adapted = c.adapted;
  oc.c_original = c.original;
  oc.beta_norm = c.beta_norm;
  const RandersRankPrediction pred = randers_rank_prediction(m.dim());
  oc.expected_rank = pred.rank;
  oc.expected_d = pred.d;
  oc.rank_matches = rep.gram.rank == pred.rank && rep.gram.d == pred.d;
  oc.solvable = c.adapted.cwiseAbs().maxCoeff() <= opts.oracle_c_tol;
  if (m.dim() != 3) {
    oc.note = "closed-form torsion is available for n = 3 only";
    return oc;
  }
  if (!oc.solvable) {
    oc.note = "solvability condition fails; no closed-form torsion";
    return oc;
  }
  oc.torsion_oracle = torsion_3d(m, x, opts.oracle_c_tol);
  oc.torsion_numeric = to_frame(rep.torsion_original, c.frame.R, FrameTag::Adapted);
  oc.max_abs_difference =
      (oc.torsion_oracle->components() - oc.torsion_numeric->components()).cwiseAbs().maxCoeff();
  return oc;
}

}  // namespace detail

/// Full analysis at one point. Failures are raised as StageError carrying the
/// pipeline stage; analyze_point_safe records them in the report instead.
inline PointReport analyze_point(const FinslerMetric& m, const Vec& x, const AnalysisOptions& opts = {}) {
  const auto t_start = detail::Clock::now();
  const int n = m.dim();
  PointReport rep;
  rep.point = x;
  rep.dim = n;
  rep.level = opts.level > 0 ? opts.level : default_level(n);
  rep.environment = m.environment();
  rep.path = opts.path;

  const SphereRule rule = detail::run_stage("quadrature", [&] { return sphere_rule(n, rep.level); });

  auto t0 = detail::Clock::now();
  const PointFrame frame =
      detail::run_stage("environment", [&] { return build_point_frame(m, x, rule, opts.connection); });
  rep.gamma = frame.gamma;
  rep.frame = frame.A;
  if (frame.fd_warning) {
    rep.warnings.push_back("Christoffel finite differences disagree between step h and h/2 (relative " +
                           std::to_string(frame.fd_disagreement) + ")");
  }
  rep.analytic_derivatives = m.is_randers() && (m.environment() == EnvironmentMode::ExplicitRandersAlpha) &&
                             frame.christoffel_symbolic;
  rep.timings.environment_ms = detail::ms_since(t0);

  t0 = detail::Clock::now();
  const LocalMetric lm = m.at(x);
  const DirectionSamples samples = detail::run_stage("directions", [&] { return sample_directions(lm, frame, rule); });
  const HStarField hstar = h_star_field(samples, frame);
  const Mat fvals = f_values(samples);
  rep.timings.directions_ms = detail::ms_since(t0);

  t0 = detail::Clock::now();
  Vec F2 = samples.F.cwiseProduct(samples.F);
  const double scale = integrate_sphere(rule, F2);
  rep.gram = detail::run_stage("gram", [&] { return gram_f(fvals, rule, opts.rank, scale); });
  const Mat Ts = rep.gram.degenerate ? Mat::Zero(torsion_dim(n), torsion_dim(n)) : torsion_map_basis(rep.gram.G, n);
  const SubsystemSelection sel = select_subsystem(Ts, opts.rank.rtol, rep.gram.degenerate ? 0 : rep.gram.big_rank);
  rep.selection = sel.indices;
  rep.basis_rank = sel.svd_rank;
  rep.rank_identity_holds = sel.consistent;
  rep.selection_diagnostic = sel.diagnostic;
  if (!sel.consistent) rep.warnings.push_back(sel.diagnostic);
  rep.zero_curvature = rep.gram.maximal_rank;
  if (!rep.gram.isometry_bound_ok) rep.warnings.push_back("isometry dimension exceeds the bound (n-1)(n-2)/2");
  for (const Mat& a : isometry_directions(rep.gram, opts.rank.rtol)) {
    rep.isometry_directions.push_back(frame.A * a * frame.A_inv);
  }
  rep.timings.gram_ms = detail::ms_since(t0);

  t0 = detail::Clock::now();
  const int m_dim = torsion_dim(n);
  if (rep.gram.degenerate || sel.indices.empty()) {
    rep.verdict = Verdict::RiemannianDegenerate;
    rep.torsion_frame = TorsionTensor(n, FrameTag::Orthonormal);
    rep.coefficients = Vec::Zero(m_dim);
  } else {
    const Vec b = h_inner(fvals, hstar, rule);
    const ExtremalSolution sol = detail::run_stage("solve", [&] {
      if (opts.path == SolvePath::Orthogonalized) {
        ExtremalSolution s = solve_orthogonalized(sel, Ts, b);
        const ExtremalSolution ref = solve_extremal(sel, Ts, b, opts.ill_condition);
        s.gram_condition = ref.gram_condition;
        s.ill_conditioned = ref.ill_conditioned;
        return s;
      }
      return solve_extremal(sel, Ts, b, opts.ill_condition);
    });
    rep.torsion_frame = sol.torsion;
    rep.coefficients = sol.coefficients;
    rep.gram_condition = sol.gram_condition;
    rep.ill_conditioned = sol.ill_conditioned;
    rep.unique_connection = sol.unique_connection;
    if (sol.ill_conditioned) {
      rep.warnings.push_back("Gram matrix of the selected basis images is ill-conditioned (condition " +
                             std::to_string(sol.gram_condition) + ")");
    }
  }
  if (n == 2) {
    const TwoDSolution two = solve_2d(fvals, hstar, rule, opts.rank.degeneracy_tol, scale);
    rep.torsion_2d = two.torsion;
    rep.path_2d_difference = (two.torsion.components() - rep.torsion_frame.components()).cwiseAbs().maxCoeff();
    if (!two.degenerate) rep.unique_connection = true;
  }
  rep.torsion_original = detail::run_stage("solve", [&] { return transform_torsion(rep.torsion_frame, frame.A); });
  rep.timings.solve_ms = detail::ms_since(t0);

  t0 = detail::Clock::now();
  const double threshold = opts.residual_threshold.value_or(rep.analytic_derivatives ? 1e-6 : 1e-4);
  const double f_rms = std::sqrt(std::max(0.0, scale) / rule.weights.sum());
  rep.residual = constraint_residual(fvals, hstar, rep.torsion_frame, rule, threshold, 1e-12 * f_rms);
  if (rep.verdict != Verdict::RiemannianDegenerate) {
    rep.verdict = rep.residual.solvable ? Verdict::Solvable : Verdict::NotSolvable;
  } else if (!rep.residual.solvable) {
    rep.warnings.push_back("quadratic indicatrix but h* does not vanish: the Levi-Civita connection of the "
                           "environment metric is not compatible");
  }
  rep.timings.residual_ms = detail::ms_since(t0);

  if (opts.randers_oracle && m.is_randers() && m.environment() == EnvironmentMode::ExplicitRandersAlpha &&
      lm.randers()->beta.norm() > 0.0) {
    rep.oracle = detail::run_stage("oracle", [&] { return detail::randers_comparison(m, x, rep, opts); });
  }
  rep.timings.total_ms = detail::ms_since(t_start);
  return rep;
}

/// analyze_point with failures captured in the report.
inline PointReport analyze_point_safe(const FinslerMetric& m, const Vec& x, const AnalysisOptions& opts = {}) {
  try {
    return analyze_point(m, x, opts);
  } catch (const StageError& e) {
    PointReport rep;
    rep.point = x;
    rep.dim = m.dim();
    rep.level = opts.level > 0 ? opts.level : default_level(m.dim());
    rep.environment = m.environment();
    rep.path = opts.path;
    rep.error = e.what();
    rep.error_stage = e.stage();
    return rep;
  } catch (const std::exception& e) {
    PointReport rep;
    rep.point = x;
    rep.dim = m.dim();
    rep.level = opts.level > 0 ? opts.level : default_level(m.dim());
    rep.environment = m.environment();
    rep.path = opts.path;
    rep.error = e.what();
    rep.error_stage = "unknown";
    return rep;
  }
}

}  // namespace berwald
