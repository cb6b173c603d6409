#pragma once

// Quadrature on the Euclidean unit sphere S^{n-1} and the pullback of
// indicatrix integrals onto it.
//
// Indicatrix pullback. Let r(u) = 1/F(x,u) and phi(u) = r(u) u, which maps the
// unit sphere onto the indicatrix F = 1. On the indicatrix the induced volume
// form is mu = sqrt(det g) * i_C(dy^1 ^ ... ^ dy^n) with C the Liouville field.
// For tangent vectors v_k of the sphere, d phi(v_k) = (dr v_k) u + r v_k, and
// the radial part drops out of the determinant:
//   det(phi, d phi(v_1), ..., d phi(v_{n-1})) = r^n det(u, v_1, ..., v_{n-1}).
// Since g is 0-homogeneous, g(phi(u)) = g(u), hence
//   phi^* mu = sqrt(det g(x,u)) F(x,u)^{-n} dA(u),
// with dA the Euclidean area form. For a Riemannian F in an orthonormal frame
// the density is identically 1.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "berwald/errors.hpp"
#include "berwald/metric.hpp"
#include "berwald/summation.hpp"

namespace berwald {

struct SphereRule {
  int dim = 0;
  int level = 0;
  Mat nodes;     ///< dim x N, one unit vector per column
  Vec weights;   ///< N positive weights

  int size() const noexcept { return static_cast<int>(weights.size()); }
};

/// Surface area of S^{n-1}: 2 pi^{n/2} / Gamma(n/2).
inline double sphere_area(int n) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

/// Gauss-Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int count, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(static_cast<std::size_t>(count), 0.0);
  weights.assign(static_cast<std::size_t>(count), 0.0);
  const int half = (count + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int j = 0; j < count; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      dp = count * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0;
    double p1 = 0.0;
    for (int j = 0; j < count; ++j) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
    }
    dp = count * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(count - 1 - i);
    nodes[lo] = -z;
    nodes[hi] = z;
    weights[lo] = w;
    weights[hi] = w;
  }
}

namespace detail {

inline SphereRule circle_rule(int level) {
  const int count = 2 * level;
  SphereRule r{2, level, Mat(2, count), Vec::Constant(count, 2.0 * std::numbers::pi / count)};
  for (int k = 0; k < count; ++k) {
    const double phi = 2.0 * std::numbers::pi * (k + 0.5) / count;
    r.nodes(0, k) = std::cos(phi);
    r.nodes(1, k) = std::sin(phi);
  }
  return r;
}

/// Gauss-Legendre in cos(theta) times a uniform azimuthal rule with 2*level points.
inline SphereRule s2_rule(int level) {
  std::vector<double> t;
  std::vector<double> w;
  gauss_legendre(level, t, w);
  const int naz = 2 * level;
  SphereRule r{3, level, Mat(3, level * naz), Vec(level * naz)};
  int k = 0;
  for (int i = 0; i < level; ++i) {
    const double z = t[static_cast<std::size_t>(i)];
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    for (int j = 0; j < naz; ++j, ++k) {
      const double phi = 2.0 * std::numbers::pi * (j + 0.5) / naz;
      r.nodes(0, k) = s * std::cos(phi);
      r.nodes(1, k) = s * std::sin(phi);
      r.nodes(2, k) = z;
      r.weights(k) = w[static_cast<std::size_t>(i)] * 2.0 * std::numbers::pi / naz;
    }
  }
  return r;
}

/// Gauss rule for the weight (1 - z^2)^lambda on [-1, 1] (Golub-Welsch).
inline void gauss_gegenbauer(int count, double lambda, std::vector<double>& nodes, std::vector<double>& weights) {
  const double mu = lambda + 0.5;
  Mat J = Mat::Zero(count, count);
  for (int k = 1; k < count; ++k) {
    const double b = std::sqrt(k * (k + 2.0 * mu - 1.0) / (4.0 * (k + mu) * (k + mu - 1.0)));
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  const Eigen::SelfAdjointEigenSolver<Mat> eig(J);
  const double mass = std::sqrt(std::numbers::pi) * std::tgamma(lambda + 1.0) / std::tgamma(lambda + 1.5);
  nodes.resize(static_cast<std::size_t>(count));
  weights.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double v0 = eig.eigenvectors()(0, i);
    nodes[ui] = eig.eigenvalues()(i);
    weights[ui] = mass * v0 * v0;
  }
  // symmetric weight: pin the node pairs exactly
  for (int i = 0; i < count / 2; ++i) {
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(count - 1 - i);
    const double z = 0.5 * (nodes[hi] - nodes[lo]);
    const double w = 0.5 * (weights[hi] + weights[lo]);
    nodes[lo] = -z;
    nodes[hi] = z;
    weights[lo] = weights[hi] = w;
  }
  if (count % 2 == 1) nodes[static_cast<std::size_t>(count / 2)] = 0.0;
}

/// S^{n-1} = {(sqrt(1 - z^2) v, z)}: Gauss rule in z for the density
/// (1 - z^2)^{(n-3)/2}, times a rule on S^{n-2}.
inline SphereRule recursive_rule(int n, int level) {
  if (n == 2) return circle_rule(level);
  if (n == 3) return s2_rule(level);
  const SphereRule sub = recursive_rule(n - 1, level);
  std::vector<double> t;
  std::vector<double> w;
  gauss_gegenbauer(level, 0.5 * (n - 3), t, w);
  const int count = level * sub.size();
  SphereRule r{n, level, Mat(n, count), Vec(count)};
  int k = 0;
  for (int i = 0; i < level; ++i) {
    const double z = t[static_cast<std::size_t>(i)];
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    for (int j = 0; j < sub.size(); ++j, ++k) {
      r.nodes.col(k).head(n - 1) = s * sub.nodes.col(j);
      r.nodes(n - 1, k) = z;
      r.weights(k) = w[static_cast<std::size_t>(i)] * sub.weights(j);
    }
  }
  return r;
}

}  // namespace detail

/// Quadrature rule on S^{n-1}.
///  n = 2: 2*level equispaced nodes (trapezoid rule on the circle);
///  n = 3: level Gauss-Legendre nodes in cos(theta) x 2*level azimuthal nodes;
///  n >= 4: Gauss-Gegenbauer in the last coordinate, recursively.
inline SphereRule sphere_rule(int n, int level, int max_dim = kMaxDimension) {
  if (n < 2 || n > max_dim) throw DimensionError("unsupported sphere dimension n = " + std::to_string(n));
  if (level < 1) throw DomainError("quadrature level must be >= 1");
  return detail::recursive_rule(n, level);
}

/// Weighted sum of node values in fixed node order with compensated summation.
inline double integrate_sphere(const SphereRule& rule, std::span<const double> values) {
  if (values.size() != static_cast<std::size_t>(rule.size())) {
    throw DimensionError("integrand has " + std::to_string(values.size()) + " values, rule has " +
                         std::to_string(rule.size()) + " nodes");
  }
  return compensated_dot(std::span<const double>(rule.weights.data(), values.size()), values);
}

inline double integrate_sphere(const SphereRule& rule, const Vec& values) {
  return integrate_sphere(rule, std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

struct IndicatrixPoint {
  Vec point;      ///< u / F(x,u), lies on F = 1
  double weight;  ///< pullback density sqrt(det g) F^{-n}
};

inline IndicatrixPoint indicatrix_pullback_weight(const LocalMetric& lm, const Vec& u) {
  const double f = lm.F(u);
  if (!(f > 0.0)) throw InvalidMetricError("F is not positive at a quadrature direction");
  const FundamentalTensor g = fundamental_tensor(lm, u);
  const double det = g.g.determinant();
  if (!(det > 0.0)) throw InvalidMetricError("singular fundamental tensor");
  return {u / f, std::sqrt(det) * std::pow(f, -lm.dim())};
}

inline IndicatrixPoint indicatrix_pullback_weight(const FinslerMetric& m, const Vec& x, const Vec& u) {
  return indicatrix_pullback_weight(m.at(x), u);
}

/// Volume of the indicatrix, the integral of mu over F = 1.
inline double indicatrix_volume(const LocalMetric& lm, const SphereRule& rule) {
  Vec vals(rule.size());
  for (int k = 0; k < rule.size(); ++k) vals(k) = indicatrix_pullback_weight(lm, rule.nodes.col(k)).weight;
  return integrate_sphere(rule, vals);
}

}  // namespace berwald
