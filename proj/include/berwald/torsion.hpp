#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "berwald/errors.hpp"
#include "berwald/metric.hpp"

namespace berwald {

/// C(n, 2).
constexpr int pair_count(int n) noexcept { return n * (n - 1) / 2; }

/// Lexicographic position of the pair (a, b), 0-based with a < b:
/// (0,1), (0,2), ..., (0,n-1), (1,2), ...
constexpr int pair_index(int a, int b, int n) noexcept { return a * n - a * (a + 1) / 2 + (b - a - 1); }

/// Inverse of pair_index.
inline std::pair<int, int> pair_from_index(int idx, int n) {
  for (int a = 0; a < n; ++a) {
    const int row = n - a - 1;
    if (idx < row) return {a, a + 1 + idx};
    idx -= row;
  }
  throw DimensionError("pair index out of range");
}

/// Dimension of the torsion fibre, n * C(n, 2).
constexpr int torsion_dim(int n) noexcept { return n * pair_count(n); }

/// Position of T_ab^c (a < b) in the component vector: c-major, pairs in
/// lexicographic order, i.e. T_12^1, T_13^1, ..., T_{n-1,n}^1, T_12^2, ...
constexpr int torsion_index(int a, int b, int c, int n) noexcept { return c * pair_count(n) + pair_index(a, b, n); }

enum class FrameTag : std::uint8_t { Orthonormal, Original, Adapted };

inline const char* to_string(FrameTag t) {
  switch (t) {
    case FrameTag::Orthonormal: return "orthonormal";
    case FrameTag::Original: return "original";
    case FrameTag::Adapted: return "adapted";
  }
  return "?";
}

/// Torsion T_ab^c stored for a < b; the remaining components follow from
/// antisymmetry in (a, b).
class TorsionTensor {
 public:
  TorsionTensor() = default;
  TorsionTensor(int n, FrameTag frame) : n_(n), frame_(frame), comps_(Vec::Zero(torsion_dim(n))) {}
  TorsionTensor(int n, FrameTag frame, Vec comps) : n_(n), frame_(frame), comps_(std::move(comps)) {
    if (comps_.size() != torsion_dim(n)) throw DimensionError("torsion component vector has wrong length");
  }

  int dim() const noexcept { return n_; }
  FrameTag frame() const noexcept { return frame_; }
  const Vec& components() const noexcept { return comps_; }

  /// Extended component with T_ba^c = -T_ab^c and T_aa^c = 0 (0-based indices).
  double operator()(int a, int b, int c) const {
    if (a == b) return 0.0;
    if (a < b) return comps_(torsion_index(a, b, c, n_));
    return -comps_(torsion_index(b, a, c, n_));
  }

  /// Sets T_ab^c and, implicitly, T_ba^c = -value.
  void set(int a, int b, int c, double value) {
    if (a == b) throw DomainError("T_aa^c is identically zero");
    if (a < b) {
      comps_(torsion_index(a, b, c, n_)) = value;
    } else {
      comps_(torsion_index(b, a, c, n_)) = -value;
    }
  }

  /// Sum over a < b and c of (T_ab^c)^2; the bundle norm when the frame is orthonormal.
  double norm() const { return comps_.norm(); }
  double dot(const TorsionTensor& o) const { return comps_.dot(o.comps_); }

 private:
  int n_ = 0;
  FrameTag frame_ = FrameTag::Orthonormal;
  Vec comps_;
};

/// Change of basis. `A` holds the old basis vectors expressed in the new
/// coordinates as columns (e_c = A^k_c d_k); with B = A^{-1},
///   T'^k_ij = A^k_c T^c_ab B^a_i B^b_j.
/// Passing the frame matrix maps frame components to original coordinates.
inline TorsionTensor transform_torsion(const TorsionTensor& t, const Mat& A, FrameTag target = FrameTag::Original) {
  const int n = t.dim();
  if (A.rows() != n || A.cols() != n) throw DimensionError("basis matrix has wrong size");
  const Eigen::FullPivLU<Mat> lu(A);
  if (!lu.isInvertible()) throw NumericalError("basis matrix is singular");
  const Mat B = lu.inverse();
  TorsionTensor out(n, target);
  for (int c = 0; c < n; ++c) {
    // Lower indices: M_c = B^T T^c B, where (T^c)_ab is antisymmetric.
    Mat Tc(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) Tc(a, b) = t(a, b, c);
    const Mat lowered = B.transpose() * Tc * B;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          out.set(i, j, k, out(i, j, k) + A(k, c) * lowered(i, j));
        }
  }
  return out;
}

/// The inverse operation of transform_torsion(t, A): original -> frame.
inline TorsionTensor to_frame(const TorsionTensor& t, const Mat& A, FrameTag target = FrameTag::Orthonormal) {
  return transform_torsion(t, A.inverse(), target);
}

}  // namespace berwald
