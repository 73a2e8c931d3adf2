#pragma once

// Event-labeled sample model and the synthetic two-component mixture.
//
// A draw is a gradient-space vector X together with the label of the event
// that produced it: Normal (the bulk) or Critical (the rare informative
// event).  The label is carried with the sample, never inferred from the
// value; two events may well emit the same vector.
//
// The mixture: with probability rho_b the sample is Critical and each
// coordinate is drawn around mean_b[j] with variance var_b; otherwise it is
// Normal, zero-mean with variance var_a per coordinate.  The Normal
// component having mean exactly zero is what makes the filtered estimator
// meaningful.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "raregrad/rng.hpp"
#include "raregrad/stats.hpp"

namespace raregrad::core {

enum class EventLabel : std::uint8_t { Normal, Critical };

struct LabeledSample {
  std::vector<double> value;
  EventLabel label = EventLabel::Normal;
};

// Component shape.  Closed-form moments depend only on the first two
// moments, so properties (1) and (2) can be exercised with either family;
// Uniform keeps the same per-coordinate mean and variance.
enum class ComponentFamily : std::uint8_t { Gaussian, Uniform };

struct MixtureSpec {
  double rho_b = 0.01;              // P(Critical)
  std::vector<double> mean_b{1.0};  // Critical-component mean, not all zero
  double var_a = 2.0;               // per-coordinate variance of the Normal component
  double var_b = 1.0;               // per-coordinate variance of the Critical component
  ComponentFamily family = ComponentFamily::Gaussian;

  std::size_t dim() const noexcept { return mean_b.size(); }

  double mean_b_norm2() const noexcept { return stats::norm2(mean_b); }

  // Second-moment independence of the Critical event holds for this family
  // exactly when var_a == var_b + |mean_b|^2 / dim (trace convention).
  bool assumption_satisfied(double rel_tol = 1e-9) const noexcept {
    const double target = var_b + mean_b_norm2() / static_cast<double>(dim());
    const double scale = std::max({1.0, var_a, target});
    return std::abs(var_a - target) <= rel_tol * scale;
  }

  void validate() const {
    if (mean_b.empty()) throw std::invalid_argument("MixtureSpec: dim must be positive");
    if (!(rho_b > 0.0) || rho_b > 1.0)
      throw std::invalid_argument("MixtureSpec: rho_b must lie in (0, 1]");
    if (!(var_a >= 0.0) || !std::isfinite(var_a))
      throw std::invalid_argument("MixtureSpec: var_a must be a finite nonnegative real");
    if (!(var_b >= 0.0) || !std::isfinite(var_b))
      throw std::invalid_argument("MixtureSpec: var_b must be a finite nonnegative real");
    bool any = false;
    for (double m : mean_b) {
      if (!std::isfinite(m)) throw std::invalid_argument("MixtureSpec: mean_b must be finite");
      any = any || m != 0.0;
    }
    if (!any) throw std::invalid_argument("MixtureSpec: mean_b must not be all zero");
  }
};

// A batch of labeled samples with one shared dimension, stored flat.
class SampleBatch {
 public:
  explicit SampleBatch(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw std::invalid_argument("SampleBatch: dim must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  void reserve(std::size_t n) {
    values_.reserve(n * dim_);
    labels_.reserve(n);
  }

  void push_back(std::span<const double> value, EventLabel label) {
    if (value.size() != dim_) throw std::invalid_argument("SampleBatch: dimension mismatch");
    for (double v : value) {
      if (!std::isfinite(v)) throw std::invalid_argument("SampleBatch: sample value must be finite");
      values_.push_back(v);
    }
    labels_.push_back(label);
  }

  void push_back(const LabeledSample& s) { push_back(std::span<const double>(s.value), s.label); }

  std::span<const double> value(std::size_t i) const noexcept {
    return {values_.data() + i * dim_, dim_};
  }
  EventLabel label(std::size_t i) const noexcept { return labels_[i]; }

  LabeledSample sample(std::size_t i) const {
    auto v = value(i);
    return {{v.begin(), v.end()}, label(i)};
  }

  bool operator==(const SampleBatch&) const = default;

 private:
  std::size_t dim_;
  std::vector<double> values_;
  std::vector<EventLabel> labels_;
};

namespace detail {

// Zero-mean unit-variance draw j of the sample stream; uniform indices
// start at 1 because index 0 selects the label.
inline double unit_draw(const rng::Stream& s, ComponentFamily family, std::uint64_t j) noexcept {
  if (family == ComponentFamily::Gaussian) return s.normal(1, j);
  // Uniform on [-sqrt(3), sqrt(3)]: mean 0, variance 1.
  constexpr double kHalfWidth = 1.7320508075688772;
  return kHalfWidth * (2.0 * s.uniform(1 + j) - 1.0);
}

}  // namespace detail

// Draws n independent labeled samples.  Sample i owns the child stream at
// index i, so the batch is identical for any evaluation order.
inline SampleBatch sample_mixture(const MixtureSpec& spec, std::size_t n, rng::Stream stream) {
  spec.validate();
  if (n == 0) throw std::invalid_argument("sample_mixture: n must be positive");
  const std::size_t d = spec.dim();
  const double sd_a = std::sqrt(spec.var_a);
  const double sd_b = std::sqrt(spec.var_b);
  SampleBatch batch(d);
  batch.reserve(n);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    const rng::Stream s = stream.child(i);
    const bool critical = s.uniform(0) < spec.rho_b;
    for (std::size_t j = 0; j < d; ++j) {
      const double z = detail::unit_draw(s, spec.family, j);
      x[j] = critical ? spec.mean_b[j] + sd_b * z : sd_a * z;
    }
    batch.push_back(x, critical ? EventLabel::Critical : EventLabel::Normal);
  }
  return batch;
}

inline SampleBatch sample_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed) {
  return sample_mixture(spec, n, rng::Stream(seed));
}

}  // namespace raregrad::core
