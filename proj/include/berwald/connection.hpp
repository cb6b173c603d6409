#pragma once

// The Riemannian environment at a base point: environment metric gamma(p),
// an orthonormalizing frame, Christoffel symbols of gamma and the affine term
// h*_i = X_i^{h*} F of the compatibility equations.
//
// Frame convention: the frame matrix A has the frame vectors as columns, so
// original coordinates relate to frame coordinates by y = A u and x - p = A s.
// Under this linear change covectors transform with A^T and Christoffel
// symbols transform tensorially.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "berwald/errors.hpp"
#include "berwald/metric.hpp"
#include "berwald/quadrature.hpp"
#include "berwald/summation.hpp"

namespace berwald {

struct ConnectionOptions {
  /// Base step of the central differences of the gamma field; the step used
  /// at x is fd_step * (1 + |x|).
  double fd_step = 1e-5;
  /// Divide the averaged metric by the indicatrix volume.
  bool normalize_averaged = false;
  /// In the explicit-alpha environment differentiate alpha symbolically.
  bool symbolic_alpha_derivatives = true;
  /// Relative disagreement between steps h and h/2 that raises the
  /// cancellation warning.
  double fd_warning_threshold = 1e-4;
};

/// Christoffel symbols Gamma^k_ij, symmetric in (i, j).
class Christoffel {
 public:
  Christoffel() = default;
  explicit Christoffel(int n) : n_(n), data_(static_cast<std::size_t>(n * n * n), 0.0) {}

  int dim() const noexcept { return n_; }
  double& operator()(int k, int i, int j) { return data_[index(k, i, j)]; }
  double operator()(int k, int i, int j) const { return data_[index(k, i, j)]; }
  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  std::size_t index(int k, int i, int j) const { return static_cast<std::size_t>((k * n_ + i) * n_ + j); }
  int n_ = 0;
  std::vector<double> data_;
};

/// Gamma^k_ij = 1/2 gamma^{kl} (d_i gamma_jl + d_j gamma_il - d_l gamma_ij),
/// with d_gamma[m] = d gamma / dx^m.
inline Christoffel christoffel_from_derivatives(const Mat& gamma, const std::vector<Mat>& d_gamma) {
  const int n = static_cast<int>(gamma.rows());
  const Mat inv = gamma.llt().solve(Mat::Identity(n, n));
  Christoffel c(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) {
          const auto ui = static_cast<std::size_t>(i);
          const auto uj = static_cast<std::size_t>(j);
          const auto ul = static_cast<std::size_t>(l);
          s += inv(k, l) * (d_gamma[ui](j, l) + d_gamma[uj](i, l) - d_gamma[ul](i, j));
        }
        c(k, i, j) = 0.5 * s;
        c(k, j, i) = 0.5 * s;
      }
    }
  }
  return c;
}

/// Components in the frame: Gamma~^c_ab = (A^-1)^c_k Gamma^k_ij A^i_a A^j_b.
/// Valid because the frame change is linear (no inhomogeneous term).
inline Christoffel transform_christoffel(const Christoffel& c, const Mat& A) {
  const int n = c.dim();
  const Mat B = A.inverse();
  Christoffel tmp(n);
  Christoffel out(n);
  // Lower indices first, then the upper one.
  for (int k = 0; k < n; ++k) {
    Mat G(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) G(i, j) = c(k, i, j);
    const Mat H = A.transpose() * G * A;
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) tmp(k, a, b) = 0.5 * (H(a, b) + H(b, a));
  }
  for (int cc = 0; cc < n; ++cc)
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += B(cc, k) * tmp(k, a, b);
        out(cc, a, b) = s;
        out(cc, b, a) = s;
      }
  return out;
}

/// Literal averaged metric gamma_ij = integral of g_ij over the indicatrix
/// (no normalization unless `normalized`, which divides by the indicatrix volume).
inline Mat averaged_metric(const LocalMetric& lm, const SphereRule& rule, bool normalized = false) {
  const int n = lm.dim();
  if (rule.dim != n) throw DimensionError("quadrature rule dimension does not match the metric");
  std::vector<CompensatedSum> acc(static_cast<std::size_t>(n * (n + 1) / 2));
  CompensatedSum vol;
  for (int k = 0; k < rule.size(); ++k) {
    const Vec u = rule.nodes.col(k);
    const IndicatrixPoint ip = indicatrix_pullback_weight(lm, u);
    const Mat g = lm.g(u);
    const double w = rule.weights(k) * ip.weight;
    vol.add(w);
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) acc[idx++].add(w * g(i, j));
  }
  Mat gamma(n, n);
  std::size_t idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      gamma(i, j) = acc[idx++].value();
      gamma(j, i) = gamma(i, j);
    }
  if (normalized) gamma /= vol.value();
  return gamma;
}

inline Mat averaged_metric(const FinslerMetric& m, const Vec& x, const SphereRule& rule, bool normalized = false) {
  return averaged_metric(m.at(x), rule, normalized);
}

/// gamma(p) of the configured environment.
inline Mat environment_metric(const FinslerMetric& m, const Vec& x, const SphereRule& rule,
                              const ConnectionOptions& opts = {}) {
  const LocalMetric lm = m.at(x);
  if (m.environment() == EnvironmentMode::ExplicitRandersAlpha) return lm.randers()->alpha;
  return averaged_metric(lm, rule, opts.normalize_averaged);
}

/// A = L^{-T} for gamma = L L^T, so that A^T gamma A = I.
inline Mat orthonormal_frame(const Mat& gamma) {
  const Eigen::LLT<Mat> llt(gamma);
  if (llt.info() != Eigen::Success || !gamma.isApprox(gamma.transpose(), 1e-12)) {
    throw NumericalError("environment metric is not symmetric positive definite");
  }
  const Mat L = llt.matrixL();
  return L.transpose().triangularView<Eigen::Upper>().solve(Mat::Identity(gamma.rows(), gamma.cols()));
}

struct ChristoffelEstimate {
  Christoffel symbols;        ///< original coordinates
  bool symbolic = false;
  bool cancellation_warning = false;
  double step = 0.0;
  double step_disagreement = 0.0;  ///< relative |D_h - D_{h/2}|
};

/// Christoffel symbols of the environment metric at x, in original coordinates.
/// Averaged environments use central differences of the gamma field (each
/// neighbour runs its own indicatrix quadrature); the explicit-alpha
/// environment differentiates alpha symbolically unless disabled in `opts`.
inline ChristoffelEstimate christoffel_star_original(const FinslerMetric& m, const Vec& x, const SphereRule& rule,
                                                     const ConnectionOptions& opts = {}) {
  const int n = m.dim();
  ChristoffelEstimate out;
  const Mat gamma = environment_metric(m, x, rule, opts);

  if (m.environment() == EnvironmentMode::ExplicitRandersAlpha && opts.symbolic_alpha_derivatives) {
    const LocalMetric lm = m.at(x);
    out.symbols = christoffel_from_derivatives(gamma, lm.randers()->d_alpha);
    out.symbolic = true;
    return out;
  }

  const double h = opts.fd_step * (1.0 + x.norm());
  out.step = h;
  auto derivatives = [&](double step) {
    std::vector<Mat> d(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      Vec xp = x;
      Vec xm = x;
      xp(k) += step;
      xm(k) -= step;
      d[static_cast<std::size_t>(k)] =
          (environment_metric(m, xp, rule, opts) - environment_metric(m, xm, rule, opts)) / (2.0 * step);
    }
    return d;
  };
  const std::vector<Mat> d_h = derivatives(h);
  const std::vector<Mat> d_half = derivatives(0.5 * h);
  double diff = 0.0;
  double scale = 1e-6 * gamma.cwiseAbs().maxCoeff();
  for (int k = 0; k < n; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    diff = std::max(diff, (d_h[uk] - d_half[uk]).cwiseAbs().maxCoeff());
    scale = std::max(scale, d_h[uk].cwiseAbs().maxCoeff());
  }
  out.step_disagreement = scale > 0.0 ? diff / scale : 0.0;
  out.cancellation_warning = out.step_disagreement > opts.fd_warning_threshold;
  out.symbols = christoffel_from_derivatives(gamma, d_h);
  return out;
}

/// Per-point environment.
struct PointFrame {
  Vec point;
  Mat gamma;
  Mat A;      ///< frame vectors as columns, A^T gamma A = I
  Mat A_inv;
  Christoffel christoffel;           ///< frame coordinates
  Christoffel christoffel_original;  ///< original coordinates
  EnvironmentMode mode = EnvironmentMode::Averaged;
  bool christoffel_symbolic = false;
  bool fd_warning = false;
  double fd_disagreement = 0.0;
};

inline PointFrame build_point_frame(const FinslerMetric& m, const Vec& x, const SphereRule& rule,
                                    const ConnectionOptions& opts = {}) {
  PointFrame f;
  f.point = x;
  f.mode = m.environment();
  f.gamma = environment_metric(m, x, rule, opts);
  f.A = orthonormal_frame(f.gamma);
  f.A_inv = f.A.inverse();
  ChristoffelEstimate est = christoffel_star_original(m, x, rule, opts);
  f.christoffel_original = std::move(est.symbols);
  f.christoffel = transform_christoffel(f.christoffel_original, f.A);
  f.christoffel_symbolic = est.symbolic;
  f.fd_warning = est.cancellation_warning;
  f.fd_disagreement = est.step_disagreement;
  return f;
}

/// Christoffel symbols of the environment metric in frame coordinates.
inline Christoffel christoffel_star(const FinslerMetric& m, const Vec& x, const SphereRule& rule,
                                    const ConnectionOptions& opts = {}) {
  return build_point_frame(m, x, rule, opts).christoffel;
}

/// F and its first derivatives at the nodes u_k of the frame-coordinate unit
/// sphere, i.e. at y = A u_k, with gradients expressed in frame coordinates.
struct DirectionSamples {
  Mat u;       ///< n x N
  Vec F;       ///< N
  Mat grad_y;  ///< n x N, A^T dF/dy
  Mat grad_x;  ///< n x N, A^T dF/dx
};

inline DirectionSamples sample_directions(const LocalMetric& lm, const PointFrame& frame, const SphereRule& rule) {
  const int n = lm.dim();
  const int N = rule.size();
  DirectionSamples s{rule.nodes, Vec(N), Mat(n, N), Mat(n, N)};
  for (int k = 0; k < N; ++k) {
    const Vec y = frame.A * rule.nodes.col(k);
    const MetricPartials p = lm.partials(y);
    s.F(k) = lm.F(y);
    s.grad_y.col(k) = frame.A.transpose() * p.dF_dy;
    s.grad_x.col(k) = frame.A.transpose() * p.dF_dx;
  }
  return s;
}

/// h*_a(u) = dF/dx^a - u^b Gamma^c_ab dF/dy^c at every node, frame coordinates.
struct HStarField {
  Mat values;  ///< n x N
};

inline HStarField h_star_field(const DirectionSamples& s, const PointFrame& frame) {
  const int n = static_cast<int>(s.u.rows());
  const int N = static_cast<int>(s.u.cols());
  HStarField h{Mat(n, N)};
  const Christoffel& G = frame.christoffel;
  for (int k = 0; k < N; ++k) {
    for (int a = 0; a < n; ++a) {
      double v = s.grad_x(a, k);
      for (int b = 0; b < n; ++b) {
        const double ub = s.u(b, k);
        if (ub == 0.0) continue;
        for (int c = 0; c < n; ++c) v -= ub * G(c, a, b) * s.grad_y(c, k);
      }
      h.values(a, k) = v;
    }
  }
  return h;
}

inline HStarField h_star_field(const FinslerMetric& m, const Vec& x, const PointFrame& frame, const SphereRule& rule) {
  return h_star_field(sample_directions(m.at(x), frame, rule), frame);
}

}  // namespace berwald
