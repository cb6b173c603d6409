#pragma once

// Minimum-norm torsion subject to the compatibility equations, evaluated at a
// single base point in a gamma-orthonormal frame.
//
// Notation used throughout (frame coordinates, u on the unit sphere):
//   f_ab(u)          = u^a dF/dy^b - u^b dF/dy^a,  a < b, lexicographic rows
//   G_f              = Gram matrix of the f_ab in L^2(S, mu*)
//   mu_kl^j          = the element of W = L^2(S)^n with f_kl in slot j
//   T(mu)_ab^c       = 1/2 int (mu_c f_ab + mu_a f_cb - mu_b f_ca)
//   sigma_{c;i}^{ab} = 1/2 (d_ic f_ab + d_ia f_cb - d_ib f_ca)
//   g_i(T)           = h*_i + <T, sigma_i>  (the constraint functions)
// Basis elements mu_kl^j are numbered j*C(n,2) + pair_index(k,l), matching
// the torsion component order, so the map T is a square matrix on R^m,
// m = n*C(n,2).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "berwald/connection.hpp"
#include "berwald/errors.hpp"
#include "berwald/quadrature.hpp"
#include "berwald/summation.hpp"
#include "berwald/torsion.hpp"

namespace berwald {

enum class Verdict : std::uint8_t { Solvable, NotSolvable, RiemannianDegenerate };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Solvable: return "solvable";
    case Verdict::NotSolvable: return "not_solvable";
    case Verdict::RiemannianDegenerate: return "riemannian_degenerate";
  }
  return "?";
}

/// f_ab at every node: C(n,2) x N.
inline Mat f_values(const DirectionSamples& s) {
  const int n = static_cast<int>(s.u.rows());
  const int N = static_cast<int>(s.u.cols());
  Mat f(pair_count(n), N);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const int p = pair_index(a, b, n);
      for (int k = 0; k < N; ++k) {
        const double lhs = s.u(a, k) * s.grad_y(b, k);
        const double rhs = s.u(b, k) * s.grad_y(a, k);
        const double v = lhs - rhs;
        // differences at rounding level are exact zeros
        f(p, k) = std::abs(v) <= 4 * std::numeric_limits<double>::epsilon() * (std::abs(lhs) + std::abs(rhs)) ? 0.0 : v;
      }
    }
  return f;
}

inline Mat f_values(const FinslerMetric& m, const Vec& x, const PointFrame& frame, const SphereRule& rule) {
  return f_values(sample_directions(m.at(x), frame, rule));
}

/// f_pq extended to all index pairs: f_qp = -f_pq, f_pp = 0.
inline double f_ext(const Mat& f, int p, int q, int n, int node) {
  if (p == q) return 0.0;
  return p < q ? f(pair_index(p, q, n), node) : -f(pair_index(q, p, n), node);
}

/// Integral over the sphere of the product of two node-value rows.
inline double inner_l2(const SphereRule& rule, const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b) {
  CompensatedSum acc;
  for (int k = 0; k < rule.size(); ++k) acc.add(rule.weights(k) * a(k) * b(k));
  return acc.value();
}

struct GramReport {
  int n = 0;
  Mat G;                  ///< C(n,2) x C(n,2)
  Vec singular_values;    ///< descending
  Mat singular_vectors;   ///< right singular vectors as columns, same order
  double sigma_max = 0.0;
  double scale = 1.0;     ///< reference magnitude, the integral of F^2 mu*
  bool degenerate = false;  ///< G_f ~ 0: quadratic indicatrix
  int rank = 0;
  int d = 0;              ///< dimension of the linear isometry group, C(n,2) - rank
  int big_rank = 0;       ///< n * rank, rank of the Gram matrix of the mu_kl^j
  bool maximal_rank = false;
  bool isometry_bound_ok = true;  ///< non-quadratic indicatrix has d <= (n-1)(n-2)/2
};

struct RankOptions {
  double rtol = 1e-8;             ///< singular values below rtol * sigma_max count as zero
  double degeneracy_tol = 1e-10;  ///< sigma_max < degeneracy_tol * scale means G_f ~ 0
};

inline GramReport gram_f(const Mat& fvals, const SphereRule& rule, const RankOptions& opts = {}, double scale = 1.0) {
  const int C = static_cast<int>(fvals.rows());
  int n = 2;
  while (pair_count(n) < C) ++n;
  if (pair_count(n) != C) throw DimensionError("f_values row count is not C(n,2)");
  GramReport r;
  r.n = n;
  r.scale = scale;
  r.G = Mat(C, C);
  for (int p = 0; p < C; ++p)
    for (int q = p; q < C; ++q) {
      r.G(p, q) = inner_l2(rule, fvals.row(p).transpose(), fvals.row(q).transpose());
      r.G(q, p) = r.G(p, q);
    }
  const Eigen::JacobiSVD<Mat> svd(r.G, Eigen::ComputeFullV);
  r.singular_values = svd.singularValues();
  r.singular_vectors = svd.matrixV();
  r.sigma_max = C > 0 ? r.singular_values(0) : 0.0;
  r.degenerate = !(r.sigma_max >= opts.degeneracy_tol * scale) || r.sigma_max == 0.0;
  r.rank = 0;
  if (!r.degenerate) {
    for (int i = 0; i < C; ++i)
      if (r.singular_values(i) > opts.rtol * r.sigma_max) ++r.rank;
  }
  r.d = C - r.rank;
  r.big_rank = n * r.rank;
  r.maximal_rank = r.rank == C;
  r.isometry_bound_ok = r.degenerate || r.d <= (n - 1) * (n - 2) / 2;
  return r;
}

/// Columns are T(mu_kl^j) in basis order, assembled from G_f alone:
///   T_ab^c(mu_kl^j) = 1/2 (d_cj G[ab,kl] + d_aj G[cb,kl] - d_bj G[ca,kl])
/// with G[pq, .] extended antisymmetrically in (p, q).
inline Mat torsion_map_basis(const Mat& G, int n) {
  const int C = pair_count(n);
  if (G.rows() != C || G.cols() != C) throw DimensionError("G_f has wrong size");
  const int m = torsion_dim(n);
  auto gx = [&](int p, int q, int col) -> double {
    if (p == q) return 0.0;
    return p < q ? G(pair_index(p, q, n), col) : -G(pair_index(q, p, n), col);
  };
  Mat Ts = Mat::Zero(m, m);
  for (int j = 0; j < n; ++j)
    for (int kl = 0; kl < C; ++kl) {
      const int col = j * C + kl;
      for (int c = 0; c < n; ++c)
        for (int a = 0; a < n; ++a)
          for (int b = a + 1; b < n; ++b) {
            double v = 0.0;
            if (c == j) v += gx(a, b, kl);
            if (a == j) v += gx(c, b, kl);
            if (b == j) v -= gx(c, a, kl);
            Ts(torsion_index(a, b, c, n), col) = 0.5 * v;
          }
    }
  return Ts;
}

/// sigma_{c;i}^{ab} at one node for a fixed constraint index i, as a vector
/// over the torsion components.
inline Vec sigma_values(const Mat& fvals, int node, int i, int n) {
  Vec s = Vec::Zero(torsion_dim(n));
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        double v = 0.0;
        if (i == c) v += f_ext(fvals, a, b, n, node);
        if (i == a) v += f_ext(fvals, c, b, n, node);
        if (i == b) v -= f_ext(fvals, c, a, n, node);
        s(torsion_index(a, b, c, n)) = 0.5 * v;
      }
  return s;
}

/// T(mu) = sum_i int mu_i sigma_i by direct quadrature; `mu` is n x N.
inline Vec torsion_map_quadrature(const Mat& fvals, const Mat& mu, const SphereRule& rule) {
  const int n = static_cast<int>(mu.rows());
  const int m = torsion_dim(n);
  std::vector<CompensatedSum> acc(static_cast<std::size_t>(m));
  for (int k = 0; k < rule.size(); ++k)
    for (int i = 0; i < n; ++i) {
      const double w = rule.weights(k) * mu(i, k);
      if (w == 0.0) continue;
      const Vec s = sigma_values(fvals, k, i, n);
      for (int t = 0; t < m; ++t) acc[static_cast<std::size_t>(t)].add(w * s(t));
    }
  Vec out(m);
  for (int t = 0; t < m; ++t) out(t) = acc[static_cast<std::size_t>(t)].value();
  return out;
}

struct SubsystemSelection {
  std::vector<int> indices;      ///< selected basis elements, ascending
  std::vector<int> pivot_order;  ///< order in which they were picked
  int svd_rank = 0;              ///< rank of the basis images by singular values
  int expected_rank = -1;        ///< n * rank(G_f) when supplied
  bool consistent = true;
  std::string diagnostic;
};

/// Maximal linearly independent subsystem of the basis images by greedy
/// column-pivoted Gram-Schmidt. Among pivots equal to within 1e-10 relative
/// the lowest basis index wins.
inline SubsystemSelection select_subsystem(const Mat& Ts, double rtol, int expected_rank = -1) {
  SubsystemSelection sel;
  sel.expected_rank = expected_rank;
  const int m = static_cast<int>(Ts.cols());
  const Eigen::JacobiSVD<Mat> svd(Ts);
  const Vec sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  if (smax > 0.0) {
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > rtol * smax) ++sel.svd_rank;
  }

  Mat R = Ts;
  std::vector<bool> used(static_cast<std::size_t>(m), false);
  const double stop = rtol * smax;
  while (smax > 0.0) {
    double best = 0.0;
    for (int j = 0; j < m; ++j)
      if (!used[static_cast<std::size_t>(j)]) best = std::max(best, R.col(j).norm());
    if (!(best > stop)) break;
    int pick = -1;
    for (int j = 0; j < m; ++j) {
      if (!used[static_cast<std::size_t>(j)] && R.col(j).norm() >= best * (1.0 - 1e-10)) {
        pick = j;
        break;
      }
    }
    used[static_cast<std::size_t>(pick)] = true;
    sel.pivot_order.push_back(pick);
    const Vec q = R.col(pick) / R.col(pick).norm();
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < m; ++j)
        if (!used[static_cast<std::size_t>(j)]) R.col(j) -= q.dot(R.col(j)) * q;
    R.col(pick).setZero();
  }
  sel.indices = sel.pivot_order;
  std::sort(sel.indices.begin(), sel.indices.end());

  const int size = static_cast<int>(sel.indices.size());
  if (size != sel.svd_rank) {
    sel.consistent = false;
    sel.diagnostic = "pivoted selection size " + std::to_string(size) + " differs from singular-value rank " +
                     std::to_string(sel.svd_rank);
  }
  if (expected_rank >= 0 && size != expected_rank) {
    sel.consistent = false;
    if (!sel.diagnostic.empty()) sel.diagnostic += "; ";
    sel.diagnostic += "selection size " + std::to_string(size) + " differs from n*rank(G_f) = " +
                      std::to_string(expected_rank);
  }
  return sel;
}

/// <mu_kl^j, h*> = int h*_j f_kl, in basis order.
inline Vec h_inner(const Mat& fvals, const HStarField& h, const SphereRule& rule) {
  const int n = static_cast<int>(h.values.rows());
  const int C = pair_count(n);
  if (fvals.rows() != C || fvals.cols() != h.values.cols() || h.values.cols() != rule.size()) {
    throw DimensionError("h_inner: shapes of f, h* and the rule disagree");
  }
  Vec b(torsion_dim(n));
  for (int j = 0; j < n; ++j)
    for (int kl = 0; kl < C; ++kl) b(j * C + kl) = inner_l2(rule, h.values.row(j).transpose(), fvals.row(kl).transpose());
  return b;
}

struct ExtremalSolution {
  TorsionTensor torsion;  ///< frame components
  Vec coefficients;       ///< r_kl^j over all basis elements, zero outside the selection
  double gram_condition = 1.0;
  bool ill_conditioned = false;
  bool unique_connection = false;
};

namespace detail {

inline Mat selected_columns(const Mat& Ts, const std::vector<int>& idx) {
  Mat S(Ts.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) S.col(static_cast<Eigen::Index>(i)) = Ts.col(idx[i]);
  return S;
}

inline Vec selected_entries(const Vec& b, const std::vector<int>& idx) {
  Vec out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = b(idx[i]);
  return out;
}

inline int dim_from_torsion_size(Eigen::Index m) {
  int n = 2;
  while (torsion_dim(n) < m) ++n;
  if (torsion_dim(n) != m) throw DimensionError("basis size is not n*C(n,2)");
  return n;
}

}  // namespace detail

/// r = -Gram(T(mu_sel))^{-1} <mu_sel, h*>, T0 = sum r T(mu_sel).
inline ExtremalSolution solve_extremal(const SubsystemSelection& sel, const Mat& Ts, const Vec& b,
                                       double ill_condition_limit = 1e12) {
  const int n = detail::dim_from_torsion_size(Ts.rows());
  const int m = static_cast<int>(Ts.rows());
  ExtremalSolution out;
  out.torsion = TorsionTensor(n, FrameTag::Orthonormal);
  out.coefficients = Vec::Zero(m);
  if (sel.indices.empty()) throw NumericalError("empty subsystem: the indicatrix is quadratic");
  const Mat S = detail::selected_columns(Ts, sel.indices);
  const Mat gram = S.transpose() * S;
  const Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  out.gram_condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  out.ill_conditioned = out.gram_condition > ill_condition_limit;
  const Eigen::LDLT<Mat> ldlt(gram);
  const Vec r = -ldlt.solve(detail::selected_entries(b, sel.indices));
  for (std::size_t i = 0; i < sel.indices.size(); ++i) out.coefficients(sel.indices[i]) = r(static_cast<Eigen::Index>(i));
  out.torsion = TorsionTensor(n, FrameTag::Orthonormal, S * r);
  out.unique_connection = static_cast<int>(sel.indices.size()) == m;
  return out;
}

/// Same solution through the orthogonalization process: nu^i = mu^i minus its
/// projections on the earlier nu^j (measured through T), then
///   T0 = -sum <nu^i, h*> / |T(nu^i)|^2 T(nu^i).
inline ExtremalSolution solve_orthogonalized(const SubsystemSelection& sel, const Mat& Ts, const Vec& b) {
  const int n = detail::dim_from_torsion_size(Ts.rows());
  const int m = static_cast<int>(Ts.rows());
  if (sel.indices.empty()) throw NumericalError("empty subsystem: the indicatrix is quadratic");
  const Mat S = detail::selected_columns(Ts, sel.indices);
  const Vec bs = detail::selected_entries(b, sel.indices);
  const auto k = static_cast<Eigen::Index>(sel.indices.size());
  Mat coef = Mat::Identity(k, k);  // nu^i = sum_j coef(j, i) mu^j
  Mat Tnu = S;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      const double proj = Tnu.col(i).dot(Tnu.col(j)) / Tnu.col(j).squaredNorm();
      Tnu.col(i) -= proj * Tnu.col(j);
      coef.col(i) -= proj * coef.col(j);
    }
  }
  Vec torsion = Vec::Zero(m);
  Vec r = Vec::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double s = -coef.col(i).dot(bs) / Tnu.col(i).squaredNorm();
    torsion += s * Tnu.col(i);
    r += s * coef.col(i);
  }
  ExtremalSolution out;
  out.torsion = TorsionTensor(n, FrameTag::Orthonormal, torsion);
  out.coefficients = Vec::Zero(m);
  for (Eigen::Index i = 0; i < k; ++i) out.coefficients(sel.indices[static_cast<std::size_t>(i)]) = r(i);
  out.unique_connection = k == m;
  return out;
}

struct ResidualStats {
  double rms = 0.0;        ///< sqrt(sum_i int g_i^2 / (n area))
  double max_abs = 0.0;    ///< max over nodes and i of |g_i|
  double h_norm = 0.0;     ///< same normalization applied to h*
  double ratio = 0.0;      ///< rms / h_norm
  double threshold = 0.0;
  bool solvable = true;
};

/// Evaluates g_i(T)(u) = h*_i(u) + <T, sigma_i(u)> at every node and compares
/// its L^2 size with that of h*. `floor` guards the ratio when h* vanishes:
/// below it h* counts as zero and the ratio is measured against the floor.
inline ResidualStats constraint_residual(const Mat& fvals, const HStarField& h, const TorsionTensor& T,
                                         const SphereRule& rule, double threshold, double floor = 0.0) {
  const int n = T.dim();
  const int N = rule.size();
  std::vector<CompensatedSum> g2(static_cast<std::size_t>(n));
  std::vector<CompensatedSum> h2(static_cast<std::size_t>(n));
  ResidualStats st;
  st.threshold = threshold;
  Vec g(n);
  for (int k = 0; k < N; ++k) {
    g = h.values.col(k);
    for (int c = 0; c < n; ++c)
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
          const double t = 0.5 * T(a, b, c);
          if (t == 0.0) continue;
          g(c) += t * f_ext(fvals, a, b, n, k);
          g(a) += t * f_ext(fvals, c, b, n, k);
          g(b) -= t * f_ext(fvals, c, a, n, k);
        }
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      g2[ui].add(rule.weights(k) * g(i) * g(i));
      h2[ui].add(rule.weights(k) * h.values(i, k) * h.values(i, k));
      st.max_abs = std::max(st.max_abs, std::abs(g(i)));
    }
  }
  double gs = 0.0;
  double hs = 0.0;
  for (int i = 0; i < n; ++i) {
    gs += g2[static_cast<std::size_t>(i)].value();
    hs += h2[static_cast<std::size_t>(i)].value();
  }
  const double norm = n * rule.weights.sum();
  st.rms = std::sqrt(std::max(0.0, gs) / norm);
  st.h_norm = std::sqrt(std::max(0.0, hs) / norm);
  const double denom = std::max(st.h_norm, floor);
  st.ratio = denom > 0.0 ? st.rms / denom : 0.0;
  st.solvable = st.ratio < threshold;
  return st;
}

struct TwoDSolution {
  TorsionTensor torsion;
  bool degenerate = false;
  double f12_norm2 = 0.0;  ///< int f_12^2 mu*
};

/// Closed form for surfaces:
///   T_12^c = - int h*_c f_12 / int f_12^2,  c = 1, 2.
inline TwoDSolution solve_2d(const Mat& fvals, const HStarField& h, const SphereRule& rule, double degeneracy_tol = 1e-10,
                             double scale = 1.0) {
  if (fvals.rows() != 1 || h.values.rows() != 2) throw DimensionError("solve_2d requires n = 2");
  TwoDSolution out;
  out.torsion = TorsionTensor(2, FrameTag::Orthonormal);
  out.f12_norm2 = inner_l2(rule, fvals.row(0).transpose(), fvals.row(0).transpose());
  if (!(out.f12_norm2 >= degeneracy_tol * scale) || out.f12_norm2 == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (int c = 0; c < 2; ++c) {
    out.torsion.set(0, 1, c, -inner_l2(rule, h.values.row(c).transpose(), fvals.row(0).transpose()) / out.f12_norm2);
  }
  return out;
}

/// Null vectors r of G_f reshaped to skew matrices A (A[k,l] = r_kl for k < l),
/// normalized to unit Frobenius norm; each generates a one-parameter group of
/// linear maps preserving F (frame coordinates).
inline std::vector<Mat> isometry_directions(const GramReport& gr, double rtol = 1e-8) {
  const int n = gr.n;
  const int C = pair_count(n);
  std::vector<Vec> nulls;
  if (gr.degenerate) {
    for (int p = 0; p < C; ++p) nulls.push_back(Vec::Unit(C, p));
  } else {
    for (int i = 0; i < C; ++i)
      if (!(gr.singular_values(i) > rtol * gr.sigma_max)) nulls.push_back(gr.singular_vectors.col(i));
  }
  std::vector<Mat> out;
  for (Vec r : nulls) {
    Eigen::Index imax = 0;
    r.cwiseAbs().maxCoeff(&imax);
    if (r(imax) < 0.0) r = -r;
    Mat A = Mat::Zero(n, n);
    for (int k = 0; k < n; ++k)
      for (int l = k + 1; l < n; ++l) {
        A(k, l) = r(pair_index(k, l, n));
        A(l, k) = -A(k, l);
      }
    out.push_back(A / A.norm());
  }
  return out;
}

/// Torsion directions that leave every constraint unchanged, built from an
/// isometry generator A and a covector c: with K_ijr = c_i A_jr the
/// contorsion, T^r_ij = K_jir - K_ijr = c_j A_ir - c_i A_jr.
inline TorsionTensor constraint_null_direction(const Mat& A, const Vec& c) {
  const int n = static_cast<int>(A.rows());
  TorsionTensor t(n, FrameTag::Orthonormal);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int r = 0; r < n; ++r) t.set(i, j, r, c(j) * A(i, r) - c(i) * A(j, r));
  return t;
}

}  // namespace berwald
