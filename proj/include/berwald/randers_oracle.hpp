#pragma once

// Closed forms for Randers metrics F = alpha + beta with the environment
// gamma = alpha. Everything is evaluated in coordinates adapted at p:
// alpha(p) = I and beta(p) = (0, ..., 0, beta_n), beta_n > 0.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "berwald/connection.hpp"
#include "berwald/errors.hpp"
#include "berwald/metric.hpp"
#include "berwald/torsion.hpp"

namespace berwald {

struct AdaptedFrame {
  Mat R;               ///< adapted basis vectors as columns (original coordinates), R^T alpha R = I
  double beta_n = 0.0; ///< alpha-norm of beta at p
};

/// Cholesky frame of alpha followed by the Householder reflection sending the
/// frame components of beta to +|beta| e_n. A reflection flips orientation, so
/// the first two columns are then swapped (for n = 2 the first is negated)
/// to keep det R > 0.
inline AdaptedFrame adapt(const Mat& alpha, const Vec& beta) {
  const int n = static_cast<int>(alpha.rows());
  if (alpha.cols() != n || beta.size() != n) throw DimensionError("adapt: alpha and beta sizes disagree");
  const Mat A0 = orthonormal_frame(alpha);
  const Vec b = A0.transpose() * beta;
  const double norm = b.norm();
  if (!(norm > 0.0)) throw DomainError("beta vanishes at the point: the metric is Riemannian there");
  Vec v = b;
  v(n - 1) -= norm;
  Mat Q = Mat::Identity(n, n);
  if (v.norm() > 1e-14 * norm) {
    Q -= 2.0 * v * v.transpose() / v.squaredNorm();
    if (n == 2) {
      Q.col(0) = -Q.col(0);
    } else {
      Q.col(0).swap(Q.col(1));
    }
  }
  return {A0 * Q, norm};
}

/// Randers data at p expressed in adapted coordinates.
struct AdaptedRanders {
  AdaptedFrame frame;
  Vec beta;            ///< (0, ..., 0, beta_n) up to rounding
  Mat d_beta;          ///< (i, a) = d beta~_a / dx~^i
  Christoffel gamma;   ///< Christoffel symbols of alpha
};

inline AdaptedRanders adapted_randers(const LocalMetric& lm) {
  const auto* r = lm.randers();
  if (r == nullptr) throw InvalidMetricError("the Randers oracle needs a Randers metric");
  AdaptedRanders out;
  out.frame = adapt(r->alpha, r->beta);
  const Mat& R = out.frame.R;
  out.beta = R.transpose() * r->beta;
  out.d_beta = R.transpose() * r->d_beta * R;
  out.gamma = transform_christoffel(christoffel_from_derivatives(r->alpha, r->d_alpha), R);
  return out;
}

struct SolvabilityC {
  Vec adapted;     ///< C_{n;i} = d beta~_n / dx~^i - beta_n Gamma~^n_in
  Vec original;    ///< 1/2 d |beta#|^2 / dx^i / |beta#|, original coordinates
  double beta_norm = 0.0;
  AdaptedFrame frame;
};

/// The generalized Berwald condition for Randers metrics; vanishes iff the
/// alpha-length of beta is stationary at x.
inline SolvabilityC solvability_C(const FinslerMetric& m, const Vec& x) {
  const LocalMetric lm = m.at(x);
  const auto* r = lm.randers();
  if (r == nullptr) throw InvalidMetricError("the Randers oracle needs a Randers metric");
  const int n = lm.dim();
  const AdaptedRanders ad = adapted_randers(lm);
  SolvabilityC out;
  out.frame = ad.frame;
  out.beta_norm = ad.frame.beta_n;
  out.adapted = Vec(n);
  for (int i = 0; i < n; ++i) out.adapted(i) = ad.d_beta(i, n - 1) - ad.frame.beta_n * ad.gamma(n - 1, i, n - 1);

  const Mat inv = r->alpha.llt().solve(Mat::Identity(n, n));
  const Vec sharp = inv * r->beta;
  out.original = Vec(n);
  for (int i = 0; i < n; ++i) {
    const double d_norm2 = 2.0 * sharp.dot(r->d_beta.row(i).transpose()) -
                           sharp.dot(r->d_alpha[static_cast<std::size_t>(i)] * sharp);
    out.original(i) = 0.5 * d_norm2 / out.beta_norm;
  }
  return out;
}

/// Extremal torsion of a three-dimensional Randers metric in adapted
/// coordinates. Refuses inputs violating the solvability condition by more
/// than `c_tol`.
inline TorsionTensor torsion_3d(const FinslerMetric& m, const Vec& x, double c_tol = 1e-10) {
  if (m.dim() != 3) throw DimensionError("torsion_3d requires n = 3");
  const LocalMetric lm = m.at(x);
  const AdaptedRanders ad = adapted_randers(lm);
  const SolvabilityC c = solvability_C(m, x);
  const double scale = std::max(1.0, ad.d_beta.cwiseAbs().maxCoeff());
  if (c.adapted.cwiseAbs().maxCoeff() > c_tol * scale) {
    throw DomainError("solvability condition fails (max |C| = " + std::to_string(c.adapted.cwiseAbs().maxCoeff()) +
                      "): no compatible connection exists");
  }
  const double b3 = ad.frame.beta_n;
  const Mat& db = ad.d_beta;  // db(i, a) = d beta_a / dx^i
  const Christoffel& G = ad.gamma;
  TorsionTensor t(3, FrameTag::Adapted);
  t.set(0, 2, 0, -(db(0, 0) - b3 * G(2, 0, 0)) / b3);
  t.set(1, 2, 1, -(db(1, 1) - b3 * G(2, 1, 1)) / b3);
  t.set(0, 2, 2, -(db(2, 0) - b3 * G(2, 0, 2)) / b3);
  t.set(1, 2, 2, -(db(2, 1) - b3 * G(2, 1, 2)) / b3);
  const double mixed = G(2, 0, 1) - (db(0, 1) + db(1, 0)) / (2.0 * b3);
  t.set(1, 2, 0, mixed);
  t.set(0, 2, 1, mixed);
  t.set(0, 1, 2, (db(0, 1) - db(1, 0)) / b3);
  return t;
}

/// Predicted rank of G_f and isometry dimension for a Randers metric with beta != 0.
struct RandersRankPrediction {
  int rank = 0;
  int d = 0;
};

inline RandersRankPrediction randers_rank_prediction(int n) { return {n - 1, pair_count(n - 1)}; }

/// Basis elements whose images span the image of the torsion map in three
/// dimensions: mu_13^j and mu_23^j for j = 1, 2, 3 (0-based basis numbers).
inline std::vector<int> randers_basis_3d() {
  const int C = pair_count(3);
  std::vector<int> idx;
  for (int j = 0; j < 3; ++j) {
    idx.push_back(j * C + pair_index(0, 2, 3));
    idx.push_back(j * C + pair_index(1, 2, 3));
  }
  return idx;
}

/// Gram matrix of the six images T(mu) listed by randers_basis_3d, for
/// gamma = alpha: beta_3^4 omega^2 M with omega = 4 pi / 3.
inline Mat randers_gram_prediction_3d(double beta_n) {
  Mat M = Mat::Identity(6, 6);
  M(1, 1) = M(2, 2) = 0.75;
  M(1, 2) = M(2, 1) = 0.25;
  const double omega = 4.0 * std::numbers::pi / 3.0;
  return std::pow(beta_n, 4) * omega * omega * M;
}

}  // namespace berwald
