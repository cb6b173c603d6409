#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

#include "berwald/metric.hpp"
#include "test_support.hpp"

using namespace berwald;
using berwald::test::E;
using berwald::test::vec;

TEST(EvalF, EuclideanLength) { EXPECT_DOUBLE_EQ(eval_F(FinslerMetric::euclidean(2), vec({0, 0}), vec({3, 4})), 5.0); }

TEST(EvalF, RandersAlongBeta) {
  const auto m = FinslerMetric::randers_flat(3, {E("0"), E("0"), E("0.3")});
  EXPECT_DOUBLE_EQ(eval_F(m, vec({0, 0, 0}), vec({0, 0, 1})), 1.3);
  EXPECT_DOUBLE_EQ(eval_F(m, vec({0, 0, 0}), vec({0, 0, -1})), 0.7);
}

TEST(EvalF, ZeroDirectionRejected) {
  EXPECT_THROW(eval_F(FinslerMetric::euclidean(3), vec({0, 0, 0}), vec({0, 0, 0})), DomainError);
}

TEST(Partials, EuclideanGradient) {
  const auto p = partials_F(FinslerMetric::euclidean(3), vec({0, 0, 0}), vec({0, 0, 1}));
  EXPECT_TRUE(p.dF_dy.isApprox(vec({0, 0, 1})));
  EXPECT_EQ(p.dF_dx.norm(), 0.0);
}

TEST(Partials, RandersGradient) {
  const auto m = FinslerMetric::randers_flat(3, {E("0"), E("0"), E("0.3")});
  const auto p = partials_F(m, vec({0, 0, 0}), vec({1, 0, 0}));
  EXPECT_NEAR((p.dF_dy - vec({1, 0, 0.3})).norm(), 0.0, 1e-15);
}

TEST(Partials, XDerivativeOfBeta) {
  const auto m = FinslerMetric::randers_flat(3, {E("0"), E("0"), E("1 + x1")});
  const auto p = partials_F(m, vec({0, 0, 0}), vec({0, 0, 1}));
  EXPECT_NEAR((p.dF_dx - vec({1, 0, 0})).norm(), 0.0, 1e-15);
}

TEST(Partials, GenericMatchesRanders) {
  const auto r = FinslerMetric::randers(
      3, {E("1 + 0.1*x1^2"), E("0.1*x2"), E("0"), E("0.1*x2"), E("2"), E("0"), E("0"), E("0"), E("1")},
      {E("0.2*cos(x3)"), E("0.1"), E("0.3*x1")});
  const auto g = FinslerMetric::generic(
      3, E("sqrt((1 + 0.1*x1^2)*y1^2 + 2*0.1*x2*y1*y2 + 2*y2^2 + y3^2) + 0.2*cos(x3)*y1 + 0.1*y2 + 0.3*x1*y3"));
  const Vec x = vec({0.4, -0.3, 0.7});
  for (const Vec& y : {vec({1, 0.2, -0.5}), vec({-0.3, 1, 0.1}), vec({0.2, -0.4, -1})}) {
    const auto pr = partials_F(r, x, y);
    const auto pg = partials_F(g, x, y);
    EXPECT_NEAR(eval_F(r, x, y), eval_F(g, x, y), 1e-14);
    EXPECT_LT((pr.dF_dy - pg.dF_dy).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((pr.dF_dx - pg.dF_dx).cwiseAbs().maxCoeff(), 1e-9);
    const Mat gr = fundamental_tensor(r, x, y).g;
    const Mat gg = fundamental_tensor(g, x, y).g;
    EXPECT_LT((gr - gg).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(FundamentalTensor, EuclideanIsIdentity) {
  const auto m = FinslerMetric::euclidean(3);
  EXPECT_TRUE(fundamental_tensor(m, vec({0, 0, 0}), vec({0.3, -2, 1})).g.isApprox(Mat::Identity(3, 3), 1e-14));
}

TEST(FundamentalTensor, EnergyIdentity) {
  const auto m = FinslerMetric::randers_flat(3, {E("0"), E("0"), E("0.3")});
  const Vec y = vec({0, 0, 1});
  const Mat g = fundamental_tensor(m, vec({0, 0, 0}), y).g;
  EXPECT_NEAR(y.dot(g * y), 1.69, 1e-12);
}

TEST(FundamentalTensor, QuarticIsPositiveDefinite) {
  const auto m = FinslerMetric::generic(2, E("(y1^4 + y2^4 + 0.5*(y1^2 + y2^2)^2)^0.25"));
  for (const Vec& y : {vec({1, 0}), vec({0.6, 0.8}), vec({-0.3, 1}), vec({-1, -1})}) {
    const Mat g = fundamental_tensor(m, vec({0, 0}), y).g;
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat>(g).eigenvalues().minCoeff(), 0.0);
    const double f = eval_F(m, vec({0, 0}), y);
    EXPECT_NEAR(y.dot(g * y), f * f, 1e-8 * f * f);
  }
}

TEST(FundamentalTensor, InvalidMetricFlagged) {
  const auto m = FinslerMetric::randers_flat(2, {E("0"), E("1.1")});
  bool flagged = false;
  for (const Vec& y : {vec({1, 0}), vec({0, -1}), vec({0.1, -1})}) {
    try {
      fundamental_tensor(m, vec({0, 0}), y);
    } catch (const InvalidMetricError&) {
      flagged = true;
    }
  }
  EXPECT_TRUE(flagged);
}

TEST(Validate, Euclidean) {
  const auto rep = validate_metric(FinslerMetric::euclidean(3), vec({0, 0, 0}), 20);
  EXPECT_TRUE(rep.passed);
  EXPECT_NEAR(rep.min_eigenvalue, 1.0, 1e-12);
}

TEST(Validate, RandersWithinUnitBall) {
  const auto rep = validate_metric(FinslerMetric::randers_flat(3, {E("0"), E("0"), E("0.3")}), vec({0, 0, 0}), 20);
  EXPECT_TRUE(rep.passed);
  ASSERT_TRUE(rep.randers_beta_norm.has_value());
  EXPECT_NEAR(*rep.randers_beta_norm, 0.3, 1e-15);
}

TEST(Validate, RandersOutsideUnitBall) {
  const auto rep = validate_metric(FinslerMetric::randers_flat(3, {E("0"), E("0"), E("1.1")}), vec({0, 0, 0}), 20);
  EXPECT_FALSE(rep.passed);
  EXPECT_FALSE(rep.failures.empty());
}

TEST(Validate, GenericHomogeneityViolation) {
  const auto rep = validate_metric(FinslerMetric::generic(2, E("y1^2 + y2^2")), vec({0, 0}), 10);
  EXPECT_FALSE(rep.passed);
}

TEST(Property, HomogeneityAndEuler) {
  const std::vector<FinslerMetric> metrics{
      FinslerMetric::randers(3, {E("1 + 0.2*sin(x1)"), E("0.1"), E("0"), E("0.1"), E("1.5"), E("0"), E("0"), E("0"), E("exp(0.1*x3)")},
                             {E("0.1*x2"), E("0.2"), E("0.3*cos(x1)")}),
      FinslerMetric::generic(3, E("(y1^4 + y2^4 + y3^4 + (1 + 0.1*x1^2)*(y1^2 + y2^2 + y3^2)^2)^0.25"))};
  const Vec x = vec({0.3, -0.2, 0.5});
  for (const auto& m : metrics) {
    const LocalMetric lm = m.at(x);
    for (const Vec& y : {vec({1, 0.3, -0.2}), vec({-0.5, 0.4, 1}), vec({0.1, -1, 0.2})}) {
      const double f = lm.F(y);
      for (double t : {0.5, 2.0, 10.0}) EXPECT_NEAR(lm.F(t * y), t * f, 1e-9 * t * f);
      EXPECT_NEAR(y.dot(lm.partials(y).dF_dy), f, 1e-9 * f);
      EXPECT_NEAR(y.dot(lm.g(y) * y), f * f, 1e-8 * f * f);
    }
  }
}
