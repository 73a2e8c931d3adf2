#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace raregrad::stats {

// Welford accumulator: numerically stable running mean and M2.
class OnlineMoments {
 public:
  void add(double x) noexcept {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }

  // Bessel-corrected sample variance; 0 for n < 2.
  double variance() const noexcept {
    return n_ < 2 ? 0.0 : m2_ / static_cast<double>(n_ - 1);
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Per-coordinate Welford for fixed-dimension vectors.
class VectorMoments {
 public:
  explicit VectorMoments(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  void add(std::span<const double> x) {
    if (x.size() != mean_.size()) throw std::invalid_argument("VectorMoments: dimension mismatch");
    ++n_;
    for (std::size_t j = 0; j < mean_.size(); ++j) {
      const double d = x[j] - mean_[j];
      mean_[j] += d / static_cast<double>(n_);
      m2_[j] += d * (x[j] - mean_[j]);
    }
  }

  std::size_t count() const noexcept { return n_; }
  const std::vector<double>& mean() const noexcept { return mean_; }

  double variance(std::size_t j) const {
    return n_ < 2 ? 0.0 : m2_.at(j) / static_cast<double>(n_ - 1);
  }

  // Sum of per-coordinate Bessel-corrected variances.
  double trace_variance() const noexcept {
    if (n_ < 2) return 0.0;
    double t = 0.0;
    for (double v : m2_) t += v;
    return t / static_cast<double>(n_ - 1);
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Ordinary least squares of y on x.  Requires at least two points.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_line: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("fit_line: need at least two points");
  const auto n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0) throw std::invalid_argument("fit_line: x values are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

inline double norm2(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Normal-approximation binomial confidence interval, clamped to [0,1].
struct BinomialCi {
  double rate = 0.0;
  double low = 0.0;
  double high = 1.0;
};

inline BinomialCi binomial_ci(std::size_t successes, std::size_t n, double z) {
  if (n == 0) throw std::invalid_argument("binomial_ci: n must be positive");
  BinomialCi ci;
  ci.rate = static_cast<double>(successes) / static_cast<double>(n);
  const double half = z * std::sqrt(ci.rate * (1.0 - ci.rate) / static_cast<double>(n));
  ci.low = std::max(0.0, ci.rate - half);
  ci.high = std::min(1.0, ci.rate + half);
  return ci;
}

}  // namespace raregrad::stats
