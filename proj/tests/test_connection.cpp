#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "berwald/connection.hpp"
#include "test_support.hpp"

using namespace berwald;
using berwald::test::E;
using berwald::test::vec;

namespace {

// d/d beta_k of g(y) w(y) for F = |y| + beta.y at a unit vector y, where
// w = sqrt(det g) F^{-n} is the indicatrix pullback density.
Mat d_gw_d_beta(const Vec& beta, const Vec& y, int k) {
  const int n = static_cast<int>(y.size());
  const double a = y.norm();
  const double f = a + beta.dot(y);
  const Vec l = y / a;
  const Mat P = Mat::Identity(n, n) - l * l.transpose();
  const Vec s = l + beta;
  const Mat g = (f / a) * P + s * s.transpose();
  const Vec ek = Vec::Unit(n, k);
  const Mat dg = (y(k) / a) * P + ek * s.transpose() + s * ek.transpose();
  const double w = std::sqrt(g.determinant()) * std::pow(f, -n);
  const double dw = w * (0.5 * (g.inverse() * dg).trace() - n * y(k) / f);
  return dg * w + g * dw;
}

}  // namespace

TEST(AveragedMetric, EuclideanFactors) {
  EXPECT_TRUE(averaged_metric(FinslerMetric::euclidean(3), vec({0, 0, 0}), sphere_rule(3, 10))
                  .isApprox(4 * std::numbers::pi * Mat::Identity(3, 3), 1e-13));
  EXPECT_TRUE(averaged_metric(FinslerMetric::euclidean(2), vec({0, 0}), sphere_rule(2, 10))
                  .isApprox(2 * std::numbers::pi * Mat::Identity(2, 2), 1e-13));
}

TEST(AveragedMetric, NormalizedDividesByVolume) {
  const auto m = FinslerMetric::randers_flat(3, {E("0"), E("0"), E("0.3")});
  const SphereRule r = sphere_rule(3, 20);
  const LocalMetric lm = m.at(vec({0, 0, 0}));
  EXPECT_TRUE(averaged_metric(lm, r, true).isApprox(averaged_metric(lm, r) / indicatrix_volume(lm, r), 1e-14));
}

TEST(AveragedMetric, RandersStructureAndBruteForce) {
  const auto m = FinslerMetric::randers_flat(3, {E("0"), E("0"), E("0.3")});
  const LocalMetric lm = m.at(vec({0, 0, 0}));
  const Mat gamma = averaged_metric(lm, sphere_rule(3, 30));
  EXPECT_NEAR(gamma(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(gamma(0, 2), 0.0, 1e-12);
  EXPECT_NEAR(gamma(1, 2), 0.0, 1e-12);
  EXPECT_NEAR(gamma(0, 0), gamma(1, 1), 1e-12);
  EXPECT_GT(std::abs(gamma(0, 0) - gamma(2, 2)), 1e-3);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat>(gamma).eigenvalues().minCoeff(), 0.0);

  auto midpoint = [&](int nt, int np) {
    Mat acc = Mat::Zero(3, 3);
    for (int i = 0; i < nt; ++i) {
      const double th = std::numbers::pi * (i + 0.5) / nt;
      for (int j = 0; j < np; ++j) {
        const double ph = 2 * std::numbers::pi * (j + 0.5) / np;
        const Vec u = vec({std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)});
        acc += lm.g(u) * indicatrix_pullback_weight(lm, u).weight * std::sin(th);
      }
    }
    return Mat(acc * (std::numbers::pi / nt) * (2 * std::numbers::pi / np));
  };
  // Richardson in theta; the azimuthal midpoint rule is already spectrally accurate
  const Mat brute = (4 * midpoint(400, 100) - midpoint(200, 100)) / 3;
  EXPECT_LT((gamma - brute).cwiseAbs().maxCoeff(), 1e-8 * gamma.cwiseAbs().maxCoeff());
}

TEST(AveragedMetric, NodeRelabelingInvariance) {
  const auto m = FinslerMetric::randers_flat(3, {E("0.1"), E("0.2"), E("0.3")});
  SphereRule r = sphere_rule(3, 12);
  const Mat g1 = averaged_metric(m, vec({0, 0, 0}), r);
  std::vector<int> perm(static_cast<std::size_t>(r.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  SphereRule p = r;
  for (int k = 0; k < r.size(); ++k) {
    p.nodes.col(k) = r.nodes.col(perm[static_cast<std::size_t>(k)]);
    p.weights(k) = r.weights(perm[static_cast<std::size_t>(k)]);
  }
  EXPECT_LT((averaged_metric(m, vec({0, 0, 0}), p) - g1).cwiseAbs().maxCoeff(), 1e-13 * g1.norm());
}

TEST(AveragedMetric, RiemannianProportionality) {
  const auto m = FinslerMetric::randers(3, {E("2"), E("0.3"), E("0.1"), E("0.3"), E("1"), E("-0.2"), E("0.1"), E("-0.2"), E("1.5")},
                                        {E("0"), E("0"), E("0")});
  const LocalMetric lm = m.at(vec({0, 0, 0}));
  const Mat gamma = averaged_metric(lm, sphere_rule(3, 20));
  double lo = 1e300;
  double hi = 0.0;
  for (const Vec& v : {vec({1, 0, 0}), vec({0.3, -1, 0.2}), vec({-0.5, 0.5, 1}), vec({0.1, 0.2, 0.3})}) {
    const double r = v.dot(gamma * v) / std::pow(lm.F(v), 2);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  EXPECT_LT(hi - lo, 1e-8 * hi);
}

TEST(Frame, Examples) {
  EXPECT_TRUE(orthonormal_frame(Mat::Identity(3, 3)).isApprox(Mat::Identity(3, 3)));
  EXPECT_TRUE(orthonormal_frame(4 * std::numbers::pi * Mat::Identity(3, 3))
                  .isApprox(Mat::Identity(3, 3) / std::sqrt(4 * std::numbers::pi), 1e-15));
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 3;
  Mat expect = Mat::Zero(2, 2);
  expect(0, 0) = 1 / std::sqrt(2.0);
  expect(1, 1) = 1 / std::sqrt(3.0);
  EXPECT_TRUE(orthonormal_frame(d).isApprox(expect, 1e-15));
}

TEST(Frame, OrthonormalizesGeneralSpd) {
  Mat g(3, 3);
  g << 4, 1, 0.5, 1, 3, -0.2, 0.5, -0.2, 2;
  const Mat A = orthonormal_frame(g);
  EXPECT_LT((A.transpose() * g * A - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Frame, RejectsNonSpd) {
  Mat g(2, 2);
  g << 1, 2, 2, 1;
  EXPECT_THROW(orthonormal_frame(g), NumericalError);
}

TEST(Christoffel, EuclideanVanishes) {
  const SphereRule r = sphere_rule(3, 8);
  EXPECT_LT(christoffel_star(FinslerMetric::euclidean(3), vec({0.2, 0.1, -0.4}), r).max_abs(), 1e-12);
}

TEST(Christoffel, FlatExplicitIsExactlyZero) {
  const auto m = FinslerMetric::randers_flat(3, {E("cos(x3)"), E("sin(x3)"), E("0")}, EnvironmentMode::ExplicitRandersAlpha);
  EXPECT_EQ(christoffel_star(m, vec({0, 0, 0}), sphere_rule(3, 8)).max_abs(), 0.0);
}

TEST(Christoffel, ExplicitMatchesHandFormula) {
  // alpha = diag(exp(x1), 1 + x1^2, 1): the only non-zero symbols are
  //   G^1_11 = 1/2, G^1_22 = -x1 exp(-x1), G^2_12 = G^2_21 = x1 / (1 + x1^2).
  const auto m = FinslerMetric::randers(3, {E("exp(x1)"), E("0"), E("0"), E("0"), E("1 + x1^2"), E("0"), E("0"), E("0"), E("1")},
                                        {E("0"), E("0"), E("0.2")}, EnvironmentMode::ExplicitRandersAlpha);
  const Vec x = vec({0.4, 0, 0});
  const PointFrame f = build_point_frame(m, x, sphere_rule(3, 6));
  EXPECT_TRUE(f.christoffel_symbolic);
  const Christoffel& G = f.christoffel_original;
  Christoffel expect(3);
  expect(0, 0, 0) = 0.5;
  expect(0, 1, 1) = -0.4 * std::exp(-0.4);
  expect(1, 0, 1) = expect(1, 1, 0) = 0.4 / (1 + 0.16);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(G(k, i, j), expect(k, i, j), 1e-12);

  ConnectionOptions fd;
  fd.symbolic_alpha_derivatives = false;
  const PointFrame g = build_point_frame(m, x, sphere_rule(3, 6), fd);
  EXPECT_FALSE(g.christoffel_symbolic);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(g.christoffel_original(k, i, j), expect(k, i, j), 1e-8);
}

TEST(Christoffel, AveragedRandersAgainstAnalyticIntegrand) {
  // beta = (0.2 sin(x1), 0.1 + 0.2 x2^2) with flat alpha, n = 2.
  const auto m = FinslerMetric::randers_flat(2, {E("0.2*sin(x1)"), E("0.1 + 0.2*x2^2")});
  const Vec x = vec({0.3, 0.5});
  const SphereRule r = sphere_rule(2, 32);
  const LocalMetric lm = m.at(x);
  const Vec beta = lm.randers()->beta;
  Mat dbeta(2, 2);  // (m, k) = d beta_k / dx^m
  dbeta << 0.2 * std::cos(0.3), 0, 0, 0.4 * 0.5;
  std::vector<Mat> dgamma(2, Mat::Zero(2, 2));
  for (int q = 0; q < r.size(); ++q) {
    const Vec u = r.nodes.col(q);
    for (int k = 0; k < 2; ++k) {
      const Mat d = d_gw_d_beta(beta, u, k) * r.weights(q);
      for (int mm = 0; mm < 2; ++mm) dgamma[static_cast<std::size_t>(mm)] += dbeta(mm, k) * d;
    }
  }
  const Mat gamma = averaged_metric(lm, r);
  const Christoffel expect = christoffel_from_derivatives(gamma, dgamma);
  const PointFrame f = build_point_frame(m, x, r);
  EXPECT_FALSE(f.fd_warning);
  EXPECT_GT(expect.max_abs(), 1e-3);
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) EXPECT_NEAR(f.christoffel_original(k, i, j), expect(k, i, j), 1e-7);
}

TEST(Christoffel, CancellationWarning) {
  const auto m = FinslerMetric::randers_flat(2, {E("0.2*sin(x1)"), E("0.1")});
  ConnectionOptions o;
  o.fd_step = 1e-13;
  EXPECT_TRUE(build_point_frame(m, vec({0.3, 0}), sphere_rule(2, 16), o).fd_warning);
}

TEST(Frame, Invariants) {
  const auto m = FinslerMetric::randers_flat(3, {E("0.1*x2"), E("0.2*cos(x1)"), E("0.3")});
  const PointFrame f = build_point_frame(m, vec({0.2, -0.1, 0.3}), sphere_rule(3, 12));
  EXPECT_LT((f.A.transpose() * f.gamma * f.A - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_EQ(f.christoffel(k, i, j), f.christoffel(k, j, i));
}

TEST(HStar, EuclideanVanishes) {
  const auto m = FinslerMetric::euclidean(3);
  const SphereRule r = sphere_rule(3, 8);
  const PointFrame f = build_point_frame(m, vec({0, 0, 0}), r);
  EXPECT_LT(h_star_field(m, vec({0, 0, 0}), f, r).values.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(HStar, NonConstantBetaLength) {
  const auto m = FinslerMetric::randers_flat(3, {E("0"), E("0"), E("1 + x1")}, EnvironmentMode::ExplicitRandersAlpha);
  const SphereRule r = sphere_rule(3, 8);
  const PointFrame f = build_point_frame(m, vec({0, 0, 0}), r);
  const HStarField h = h_star_field(m, vec({0, 0, 0}), f, r);
  for (int k = 0; k < r.size(); ++k) {
    EXPECT_NEAR(h.values(0, k), r.nodes(2, k), 1e-15);
    EXPECT_EQ(h.values(1, k), 0.0);
    EXPECT_EQ(h.values(2, k), 0.0);
  }
}

TEST(HStar, ConstantBetaVanishes) {
  const auto m = FinslerMetric::randers_flat(3, {E("0.1"), E("0"), E("0.3")});
  const SphereRule r = sphere_rule(3, 8);
  const PointFrame f = build_point_frame(m, vec({0, 0, 0}), r);
  EXPECT_LT(h_star_field(m, vec({0, 0, 0}), f, r).values.cwiseAbs().maxCoeff(), 1e-12);
}
