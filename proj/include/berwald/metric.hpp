#pragma once

// Finsler metric models and their pointwise derivatives.
//
// Randers metrics F = sqrt(a_ij(x) y^i y^j) + b_j(x) y^j are handled with
// closed-form y-derivatives and symbolic x-derivatives of the coefficient
// expressions. Generic metrics F(x, y) given as a single expression are
// differentiated with central finite differences only.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "berwald/errors.hpp"
#include "berwald/expr.hpp"

namespace berwald {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr int kMaxDimension = 6;

/// Which Riemannian metric serves as the environment of the torsion problem.
enum class EnvironmentMode : std::uint8_t {
  Averaged,              ///< the averaged metric, integral of g over the indicatrix
  ExplicitRandersAlpha,  ///< gamma := alpha for Randers metrics
};

inline const char* to_string(EnvironmentMode m) {
  return m == EnvironmentMode::Averaged ? "averaged" : "explicit_randers_alpha";
}

struct MetricPartials {
  Vec dF_dy;
  Vec dF_dx;
};

struct FundamentalTensor {
  Mat g;
};

namespace detail {

inline double cbrt_eps() { return std::cbrt(std::numeric_limits<double>::epsilon()); }
inline double sixth_root_eps() { return std::pow(std::numeric_limits<double>::epsilon(), 1.0 / 6.0); }

inline void require_nonzero(const Vec& y) {
  if (y.size() == 0 || y.isZero(0.0)) throw DomainError("direction y must be non-zero");
}

struct RandersExprs {
  std::vector<Expr> alpha;                 // n*n, row-major, symmetric
  std::vector<Expr> beta;                  // n
  std::vector<std::vector<Expr>> d_alpha;  // [k][i*n+j] = d alpha_ij / dx^k
  std::vector<std::vector<Expr>> d_beta;   // [k][j] = d beta_j / dx^k
};

struct GenericExpr {
  Expr F;
};

}  // namespace detail

class LocalMetric;

/// Immutable Finsler metric description. Cheap to copy (shared expressions).
class FinslerMetric {
 public:
  static FinslerMetric randers(int n, std::vector<Expr> alpha_row_major, std::vector<Expr> beta,
                               EnvironmentMode mode = EnvironmentMode::Averaged) {
    check_dimension(n);
    const auto un = static_cast<std::size_t>(n);
    if (alpha_row_major.size() != un * un) throw DimensionError("alpha must have n*n entries");
    if (beta.size() != un) throw DimensionError("beta must have n entries");
    for (std::size_t i = 0; i < un; ++i) {
      for (std::size_t j = i + 1; j < un; ++j) {
        if (!structurally_equal(alpha_row_major[i * un + j], alpha_row_major[j * un + i])) {
          throw InvalidMetricError("alpha must be symmetric (entries " + std::to_string(i + 1) + "," +
                                   std::to_string(j + 1) + " differ)");
        }
      }
    }
    auto data = std::make_shared<detail::RandersExprs>();
    data->alpha = std::move(alpha_row_major);
    data->beta = std::move(beta);
    data->d_alpha.resize(un);
    data->d_beta.resize(un);
    for (int k = 1; k <= n; ++k) {
      auto& da = data->d_alpha[static_cast<std::size_t>(k - 1)];
      auto& db = data->d_beta[static_cast<std::size_t>(k - 1)];
      for (const auto& e : data->alpha) da.push_back(diff_expr(e, k));
      for (const auto& e : data->beta) db.push_back(diff_expr(e, k));
    }
    for (const auto& e : data->alpha) check_only_x(e, n);
    for (const auto& e : data->beta) check_only_x(e, n);
    return FinslerMetric(n, std::move(data), mode);
  }

  /// Randers metric with alpha = identity.
  static FinslerMetric randers_flat(int n, std::vector<Expr> beta, EnvironmentMode mode = EnvironmentMode::Averaged) {
    check_dimension(n);
    std::vector<Expr> alpha;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) alpha.push_back(Expr::constant(i == j ? 1.0 : 0.0));
    return randers(n, std::move(alpha), std::move(beta), mode);
  }

  static FinslerMetric euclidean(int n, EnvironmentMode mode = EnvironmentMode::Averaged) {
    return randers_flat(n, std::vector<Expr>(static_cast<std::size_t>(n), Expr::constant(0.0)), mode);
  }

  static FinslerMetric generic(int n, Expr F) {
    check_dimension(n);
    if (F.max_index(VarKind::X) > n || F.max_index(VarKind::Y) > n) {
      throw DimensionError("F references a coordinate beyond dimension " + std::to_string(n));
    }
    return FinslerMetric(n, std::make_shared<detail::GenericExpr>(detail::GenericExpr{std::move(F)}),
                         EnvironmentMode::Averaged);
  }

  int dim() const noexcept { return n_; }
  EnvironmentMode environment() const noexcept { return mode_; }
  bool is_randers() const noexcept { return std::holds_alternative<RandersPtr>(model_); }

  FinslerMetric with_environment(EnvironmentMode mode) const {
    if (mode == EnvironmentMode::ExplicitRandersAlpha && !is_randers()) {
      throw InvalidMetricError("the explicit alpha environment requires a Randers metric");
    }
    FinslerMetric copy = *this;
    copy.mode_ = mode;
    return copy;
  }

  const detail::RandersExprs* randers_exprs() const noexcept {
    const auto* p = std::get_if<RandersPtr>(&model_);
    return p ? p->get() : nullptr;
  }
  const Expr* generic_F() const noexcept {
    const auto* p = std::get_if<GenericPtr>(&model_);
    return p ? &(*p)->F : nullptr;
  }

  /// Evaluates all x-dependent coefficients at x once; see LocalMetric.
  LocalMetric at(const Vec& x) const;

 private:
  using RandersPtr = std::shared_ptr<const detail::RandersExprs>;
  using GenericPtr = std::shared_ptr<const detail::GenericExpr>;

  template <class P>
  FinslerMetric(int n, P model, EnvironmentMode mode) : n_(n), model_(std::move(model)), mode_(mode) {
    if (mode_ == EnvironmentMode::ExplicitRandersAlpha && !is_randers()) {
      throw InvalidMetricError("the explicit alpha environment requires a Randers metric");
    }
  }

  static void check_dimension(int n) {
    if (n < 2 || n > kMaxDimension) {
      throw DimensionError("dimension must be between 2 and " + std::to_string(kMaxDimension));
    }
  }
  static void check_only_x(const Expr& e, int n) {
    if (e.max_index(VarKind::Y) > 0) throw InvalidMetricError("Randers coefficients may depend on x only");
    if (e.max_index(VarKind::X) > n) throw DimensionError("coefficient references x beyond dimension");
  }

  int n_;
  std::variant<RandersPtr, GenericPtr> model_;
  EnvironmentMode mode_;
};

/// A metric frozen at a base point x. All direction-dependent quantities are
/// evaluated from here.
class LocalMetric {
 public:
  struct RandersAt {
    Mat alpha;
    Vec beta;
    std::vector<Mat> d_alpha;  // [k] = d alpha / dx^k
    Mat d_beta;                // (k, j) = d beta_j / dx^k
  };

  LocalMetric(const FinslerMetric& m, const Vec& x) : metric_(m), x_(x) {
    if (x.size() != m.dim()) throw DimensionError("point has wrong dimension");
    if (const auto* r = m.randers_exprs()) {
      const int n = m.dim();
      const auto un = static_cast<std::size_t>(n);
      std::span<const double> xs(x.data(), un);
      RandersAt ra{Mat(n, n), Vec(n), std::vector<Mat>(un, Mat(n, n)), Mat(n, n)};
      for (int i = 0; i < n; ++i) {
        ra.beta(i) = r->beta[static_cast<std::size_t>(i)].eval(xs);
        for (int j = 0; j < n; ++j) ra.alpha(i, j) = r->alpha[static_cast<std::size_t>(i * n + j)].eval(xs);
      }
      for (int k = 0; k < n; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        for (int j = 0; j < n; ++j) {
          ra.d_beta(k, j) = r->d_beta[uk][static_cast<std::size_t>(j)].eval(xs);
          for (int i = 0; i < n; ++i) {
            ra.d_alpha[uk](i, j) = r->d_alpha[uk][static_cast<std::size_t>(i * n + j)].eval(xs);
          }
        }
      }
      randers_ = std::move(ra);
    }
  }

  int dim() const noexcept { return metric_.dim(); }
  const Vec& point() const noexcept { return x_; }
  const FinslerMetric& metric() const noexcept { return metric_; }
  const RandersAt* randers() const noexcept { return randers_ ? &*randers_ : nullptr; }

  double F(const Vec& y) const {
    detail::require_nonzero(y);
    if (randers_) return alpha_norm(y) + randers_->beta.dot(y);
    return generic_F(x_, y);
  }

  MetricPartials partials(const Vec& y) const {
    detail::require_nonzero(y);
    const int n = dim();
    MetricPartials out{Vec(n), Vec(n)};
    if (randers_) {
      const auto& r = *randers_;
      const double a = alpha_norm(y);
      out.dF_dy = r.alpha * y / a + r.beta;
      for (int k = 0; k < n; ++k) {
        out.dF_dx(k) = y.dot(r.d_alpha[static_cast<std::size_t>(k)] * y) / (2.0 * a) + r.d_beta.row(k).dot(y);
      }
      return out;
    }
    const double hy = detail::cbrt_eps() * std::max(1.0, y.norm());
    const double hx = detail::cbrt_eps() * std::max(1.0, x_.norm());
    Vec yp = y;
    Vec xp = x_;
    for (int k = 0; k < n; ++k) {
      yp(k) = y(k) + hy;
      const double fp = generic_F(x_, yp);
      yp(k) = y(k) - hy;
      const double fm = generic_F(x_, yp);
      yp(k) = y(k);
      out.dF_dy(k) = (fp - fm) / (2.0 * hy);

      xp(k) = x_(k) + hx;
      const double gp = generic_F(xp, y);
      xp(k) = x_(k) - hx;
      const double gm = generic_F(xp, y);
      xp(k) = x_(k);
      out.dF_dx(k) = (gp - gm) / (2.0 * hx);
    }
    return out;
  }

  /// Hessian of E = F^2/2 in y; no definiteness check.
  Mat g(const Vec& y) const {
    detail::require_nonzero(y);
    const int n = dim();
    if (randers_) {
      const auto& r = *randers_;
      const double a = alpha_norm(y);
      const double f = a + r.beta.dot(y);
      const Vec l = r.alpha * y / a;
      const Vec grad = l + r.beta;
      return (f / a) * (r.alpha - l * l.transpose()) + grad * grad.transpose();
    }
    // Fourth-order central differences of E (Richardson on steps h and 2h),
    // h = eps^(1/6) scaling.
    const double h = detail::sixth_root_eps() * std::max(1.0, y.norm());
    auto E = [&](const Vec& v) {
      const double f = generic_F(x_, v);
      return 0.5 * f * f;
    };
    Mat out(n, n);
    Vec v = y;
    const double e0 = E(y);
    auto shifted = [&](int i, double si, int j, double sj) {
      v(i) += si * h;
      v(j) += sj * h;
      const double e = E(v);
      v = y;
      return e;
    };
    for (int i = 0; i < n; ++i) {
      const double d1 = (shifted(i, 1, i, 0) - 2.0 * e0 + shifted(i, -1, i, 0)) / (h * h);
      const double d2 = (shifted(i, 2, i, 0) - 2.0 * e0 + shifted(i, -2, i, 0)) / (4.0 * h * h);
      out(i, i) = (4.0 * d1 - d2) / 3.0;
      for (int j = i + 1; j < n; ++j) {
        const double m1 = (shifted(i, 1, j, 1) - shifted(i, 1, j, -1) - shifted(i, -1, j, 1) + shifted(i, -1, j, -1)) /
                          (4.0 * h * h);
        const double m2 = (shifted(i, 2, j, 2) - shifted(i, 2, j, -2) - shifted(i, -2, j, 2) + shifted(i, -2, j, -2)) /
                          (16.0 * h * h);
        out(i, j) = (4.0 * m1 - m2) / 3.0;
        out(j, i) = out(i, j);
      }
    }
    return out;
  }

 private:
  double alpha_norm(const Vec& y) const {
    const double q = y.dot(randers_->alpha * y);
    if (!(q > 0.0)) throw InvalidMetricError("alpha is not positive definite at the queried point");
    return std::sqrt(q);
  }

  double generic_F(const Vec& x, const Vec& y) const {
    const auto un = static_cast<std::size_t>(dim());
    return metric_.generic_F()->eval(std::span<const double>(x.data(), un), std::span<const double>(y.data(), un));
  }

  FinslerMetric metric_;
  Vec x_;
  std::optional<RandersAt> randers_;
};

inline LocalMetric FinslerMetric::at(const Vec& x) const { return LocalMetric(*this, x); }

inline double eval_F(const FinslerMetric& m, const Vec& x, const Vec& y) { return m.at(x).F(y); }

inline MetricPartials partials_F(const FinslerMetric& m, const Vec& x, const Vec& y) { return m.at(x).partials(y); }

/// Fundamental tensor g_ij = d^2(F^2/2)/dy^i dy^j; throws InvalidMetricError
/// when the result is not positive definite.
inline FundamentalTensor fundamental_tensor(const LocalMetric& lm, const Vec& y) {
  FundamentalTensor t{lm.g(y)};
  Eigen::LLT<Mat> llt(t.g);
  if (llt.info() != Eigen::Success) {
    throw InvalidMetricError("fundamental tensor is not positive definite (strong convexity fails)");
  }
  return t;
}

inline FundamentalTensor fundamental_tensor(const FinslerMetric& m, const Vec& x, const Vec& y) {
  return fundamental_tensor(m.at(x), y);
}

/// alpha-norm of the vector dual to beta, sqrt(beta_i a^ij beta_j).
inline double randers_beta_norm(const LocalMetric::RandersAt& r) {
  const Eigen::LLT<Mat> llt(r.alpha);
  if (llt.info() != Eigen::Success) throw InvalidMetricError("alpha is not positive definite");
  return std::sqrt(std::max(0.0, r.beta.dot(llt.solve(r.beta))));
}

struct ValidationReport {
  bool passed = true;
  double homogeneity_residual = 0.0;  ///< max relative |F(ty) - tF(y)|
  double euler_residual = 0.0;        ///< max relative |y . dF/dy - F|
  double energy_residual = 0.0;       ///< max relative |y^i y^j g_ij - F^2|
  double min_F = std::numeric_limits<double>::infinity();
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  std::optional<double> randers_beta_norm;
  std::vector<std::string> failures;
};

namespace detail {

/// Deterministic direction samples: the coordinate axes in both orientations,
/// then pseudo-random Gaussian directions from a fixed seed.
inline std::vector<Vec> sample_directions(int n, int count) {
  std::vector<Vec> dirs;
  for (int i = 0; i < n && static_cast<int>(dirs.size()) < count; ++i) {
    dirs.push_back(Vec::Unit(n, i));
    if (static_cast<int>(dirs.size()) < count) dirs.push_back(-Vec::Unit(n, i));
  }
  std::mt19937_64 rng(0x5eedu);
  std::normal_distribution<double> normal;
  while (static_cast<int>(dirs.size()) < count) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = normal(rng);
    if (v.norm() > 1e-3) dirs.push_back(v / v.norm());
  }
  return dirs;
}

}  // namespace detail

/// Checks homogeneity, the Euler identity and strong convexity at sampled
/// directions, plus ||beta||_alpha < 1 for Randers metrics. Never throws for
/// invalid metrics; failures are listed in the report.
inline ValidationReport validate_metric(const FinslerMetric& m, const Vec& x, int sample_count) {
  if (sample_count < 1) throw DomainError("sample_count must be >= 1");
  ValidationReport rep;
  const double tol_hom = 1e-9;
  const double tol_energy = 1e-8;
  const LocalMetric lm = m.at(x);
  const int n = m.dim();
  auto fail = [&](std::string msg) {
    rep.passed = false;
    if (std::find(rep.failures.begin(), rep.failures.end(), msg) == rep.failures.end()) rep.failures.push_back(std::move(msg));
  };

  if (const auto* r = lm.randers()) {
    Eigen::SelfAdjointEigenSolver<Mat> es(r->alpha);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      fail("alpha is not positive definite");
      return rep;
    }
    const double bn = randers_beta_norm(*r);
    rep.randers_beta_norm = bn;
    if (bn >= 1.0) fail("Randers condition ||beta||_alpha < 1 violated");
  }

  for (const Vec& y : detail::sample_directions(n, sample_count)) {
    try {
      const double f = lm.F(y);
      rep.min_F = std::min(rep.min_F, f);
      if (!(f > 0.0)) {
        fail("F is not positive at a sampled direction");
        continue;
      }
      for (double t : {0.5, 2.0, 10.0}) {
        const double ft = lm.F(t * y);
        rep.homogeneity_residual = std::max(rep.homogeneity_residual, std::abs(ft - t * f) / (t * f));
      }
      const MetricPartials p = lm.partials(y);
      rep.euler_residual = std::max(rep.euler_residual, std::abs(y.dot(p.dF_dy) - f) / f);
      const Mat g = lm.g(y);
      rep.energy_residual = std::max(rep.energy_residual, std::abs(y.dot(g * y) - f * f) / (f * f));
      Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
      rep.min_eigenvalue = std::min(rep.min_eigenvalue, es.eigenvalues().minCoeff());
    } catch (const Error& e) {
      fail(std::string("evaluation failed: ") + e.what());
    }
  }
  // Finite-difference derivatives of generic metrics carry truncation error.
  const double tol_euler = m.is_randers() ? 1e-9 : 1e-6;
  const double tol_energy_eff = m.is_randers() ? tol_energy : 1e-5;
  if (rep.homogeneity_residual > tol_hom) fail("positive homogeneity violated");
  if (rep.euler_residual > tol_euler) fail("Euler identity y.dF/dy = F violated");
  if (rep.energy_residual > tol_energy_eff) fail("y^i y^j g_ij = F^2 violated");
  if (!(rep.min_eigenvalue > 0.0)) fail("strong convexity violated (fundamental tensor not positive definite)");
  return rep;
}

}  // namespace berwald
