#pragma once

#include <cmath>
#include <span>

namespace berwald {

/// Kahan-Babuska (Neumaier) compensated accumulator.
///
/// The result depends on the order of the additions, so callers that need
/// bit-reproducible output must feed terms in a fixed order.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      compensation_ += (sum_ - t) + v;
    } else {
      compensation_ += (v - t) + sum_;
    }
    sum_ = t;
  }

  CompensatedSum& operator+=(double v) noexcept {
    add(v);
    return *this;
  }

  double value() const noexcept { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

/// Compensated weighted sum of `values` against `weights`, in index order.
inline double compensated_dot(std::span<const double> weights, std::span<const double> values) noexcept {
  CompensatedSum acc;
  for (std::size_t k = 0; k < weights.size(); ++k) acc.add(weights[k] * values[k]);
  return acc.value();
}

}  // namespace berwald
