// Copyright 2026 The rnnquant Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RNNQUANT_QUANTIZER_HPP
#define RNNQUANT_QUANTIZER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rnnquant/error.hpp"
#include "rnnquant/numerics.hpp"

namespace rnnquant {

/// Symmetric uniform weight grid: `levels` odd points spaced `step` apart,
/// centred on zero.
struct WeightQuantSpec {
  std::int64_t levels = 3;
  double step = 1.0;

  std::int64_t max_membership() const noexcept { return (levels - 1) / 2; }

  void validate() const {
    if (levels < 3 || levels % 2 == 0) {
      throw ArgumentError("weight quantizer needs an odd level count >= 3, got " +
                          std::to_string(levels));
    }
    if (!(step > 0.0) || !std::isfinite(step)) {
      throw ArgumentError("weight quantizer step must be positive and finite");
    }
  }

  bool operator==(const WeightQuantSpec&) const = default;
};

/// Integer membership z of w on a grid of `step` clamped to +-max_membership.
inline std::int64_t weight_membership(double w, double step, std::int64_t max_membership) {
  const double scaled = std::floor(std::fabs(w) / step + 0.5);
  const auto mag = scaled >= static_cast<double>(max_membership)
                       ? max_membership
                       : static_cast<std::int64_t>(scaled);
  return w < 0.0 ? -mag : mag;
}

inline double quantize_weight(double w, const WeightQuantSpec& spec) {
  return spec.step * static_cast<double>(weight_membership(w, spec.step, spec.max_membership()));
}

inline void quantize_weights(std::span<const double> in, std::span<double> out,
                             const WeightQuantSpec& spec) {
  if (in.size() != out.size()) throw ShapeError("quantize_weights: size mismatch");
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = quantize_weight(in[i], spec);
}

/// Half the summed squared distance between each weight and its grid value.
inline double quantization_error(std::span<const double> weights, const WeightQuantSpec& spec) {
  if (weights.empty()) throw ArgumentError("quantization_error: empty weight array");
  double sum = 0.0;
  for (double w : weights) {
    const double d = quantize_weight(w, spec) - w;
    sum += d * d;
  }
  return 0.5 * sum;
}

struct QuantizationOutcome {
  std::vector<std::int64_t> memberships;
  double step = 0.0;
  double error = 0.0;
  int iterations = 0;
  /// Error after each step-size update, in order.
  std::vector<double> error_history;
};

struct StepSearchOptions {
  double rtol = 1e-8;
  int max_iterations = 100;
  /// Points in the coarse scan of E over the step size whose best local
  /// minima seed extra descents; 0 runs only the max|w| start.
  int scan_points = 96;
  int extra_starts = 4;
  /// Largest n*(M-1)/2 for which the exact breakpoint sweep also seeds a
  /// descent.
  std::size_t exact_budget = std::size_t{1} << 20;
};

namespace detail {

/// Global minimizer of E over the step size. Memberships change only at
/// steps |w|/(k-0.5); between consecutive breakpoints E is quadratic in the
/// step, so each interval is minimized in closed form while sweeping the
/// breakpoints in decreasing order.
inline double exact_optimal_step(std::span<const double> weights, std::int64_t top) {
  struct Breakpoint {
    double step;
    double magnitude;
    double dz2;
  };
  std::vector<Breakpoint> bps;
  bps.reserve(weights.size() * static_cast<std::size_t>(top));
  double sum_sq = 0.0;
  for (double w : weights) {
    const double a = std::fabs(w);
    sum_sq += a * a;
    if (a == 0.0) continue;
    for (std::int64_t k = 1; k <= top; ++k) {
      bps.push_back({a / (static_cast<double>(k) - 0.5), a, 2.0 * static_cast<double>(k) - 1.0});
    }
  }
  std::sort(bps.begin(), bps.end(), [](const Breakpoint& l, const Breakpoint& r) { return l.step > r.step; });
  double az = 0.0, zz = 0.0;
  double best_step = bps.front().step, best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bps.size(); ++i) {
    az += bps[i].magnitude;
    zz += bps[i].dz2;
    const double lo = i + 1 < bps.size() ? bps[i + 1].step : 0.0;
    const double s = std::clamp(az / zz, lo, bps[i].step);
    const double e = sum_sq - 2.0 * s * az + s * s * zz;
    if (e < best) {
      best = e;
      best_step = s;
    }
  }
  return best_step;
}

}  // namespace detail

/// L2-optimal step size by alternating membership assignment and the closed
/// form step update sum(w*z)/sum(z*z). The descent starts with the largest
/// weight mapped to the top level; it is repeated from the exact global
/// minimizer when that is affordable, otherwise from the lowest local minima
/// of a coarse scan of E, and the lowest final error is kept (the max|w|
/// start wins ties). `error_history` belongs to the returned descent.
inline QuantizationOutcome optimize_step_size(std::span<const double> weights, std::int64_t levels,
                                              StepSearchOptions options = {}) {
  if (weights.empty()) throw ArgumentError("optimize_step_size: empty weight array");
  if (levels < 3 || levels % 2 == 0) {
    throw ArgumentError("optimize_step_size: level count must be odd and >= 3, got " +
                        std::to_string(levels));
  }
  double max_abs = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) throw ArgumentError("optimize_step_size: non-finite weight");
    max_abs = std::max(max_abs, std::fabs(w));
  }
  if (max_abs == 0.0) {
    throw DegenerateWeights("optimize_step_size: all weights are zero, step size undefined");
  }

  const std::int64_t top = (levels - 1) / 2;
  const std::size_t n = weights.size();

  auto assign = [&](double step, std::vector<std::int64_t>& z) {
    for (std::size_t i = 0; i < n; ++i) z[i] = weight_membership(weights[i], step, top);
  };
  auto grid_error = [&](double step, const std::vector<std::int64_t>& z) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = step * static_cast<double>(z[i]) - weights[i];
      sum += d * d;
    }
    return 0.5 * sum;
  };

  // Every start is below 2 max|w|, so the largest weight keeps a nonzero
  // membership and sum(z*z) > 0; updates never exceed max|w|.
  auto descend = [&](double start) {
    QuantizationOutcome out;
    out.step = start;
    std::vector<std::int64_t> z(n), next(n);
    assign(out.step, z);
    for (int it = 0; it < options.max_iterations; ++it) {
      double num = 0.0;
      double den = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double zi = static_cast<double>(z[i]);
        num += weights[i] * zi;
        den += zi * zi;
      }
      const double updated = num / den;
      const double change = std::fabs(updated - out.step);
      out.step = updated;
      ++out.iterations;
      out.error_history.push_back(grid_error(out.step, z));

      assign(out.step, next);
      const bool stable = next == z;
      z.swap(next);
      if (stable || change <= options.rtol * out.step) break;
    }
    out.memberships = std::move(z);
    out.error = grid_error(out.step, out.memberships);
    return out;
  };

  QuantizationOutcome best = descend(max_abs / static_cast<double>(top));
  auto consider = [&](double start) {
    auto cand = descend(std::min(start, max_abs));
    if (cand.error < best.error * (1.0 - 1e-12)) best = std::move(cand);
  };
  if (n * static_cast<std::size_t>(top) <= options.exact_budget) {
    consider(detail::exact_optimal_step(weights, top));
    return best;
  }
  if (options.scan_points < 3 || options.extra_starts < 1) return best;

  const double lo = max_abs / (16.0 * static_cast<double>(top));
  const double hi = max_abs / (static_cast<double>(top) - 0.25);
  const int k = options.scan_points;
  std::vector<double> steps(static_cast<std::size_t>(k)), errors(static_cast<std::size_t>(k));
  std::vector<std::int64_t> z(n);
  for (int i = 0; i < k; ++i) {
    const double s = lo * std::pow(hi / lo, static_cast<double>(i) / (k - 1));
    assign(s, z);
    steps[static_cast<std::size_t>(i)] = s;
    errors[static_cast<std::size_t>(i)] = grid_error(s, z);
  }
  std::vector<std::size_t> minima;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const bool left = i == 0 || errors[i] <= errors[i - 1];
    const bool right = i + 1 == steps.size() || errors[i] <= errors[i + 1];
    if (left && right) minima.push_back(i);
  }
  std::sort(minima.begin(), minima.end(), [&](std::size_t a, std::size_t b) { return errors[a] < errors[b]; });
  if (minima.size() > static_cast<std::size_t>(options.extra_starts)) {
    minima.resize(static_cast<std::size_t>(options.extra_starts));
  }
  for (std::size_t i : minima) consider(steps[i]);
  return best;
}

/// Which grid family a bit budget is being converted for.
enum class LevelTarget { weight, sigmoid_signal, symmetric_signal };

inline std::int64_t bits_to_levels(int bits, LevelTarget target) {
  if (bits < 2) throw ArgumentError("bits_to_levels: need at least 2 bits, got " + std::to_string(bits));
  if (bits > 62) throw ArgumentError("bits_to_levels: at most 62 bits supported");
  const std::int64_t full = std::int64_t{1} << bits;
  return target == LevelTarget::sigmoid_signal ? full : full - 1;
}

/// Bounded activation quantizer. Sigmoid signals use 2^bits points on [0,1];
/// tanh and linear signals use 2^bits - 1 points spanning [lo,hi] (zero is a
/// point when the range is symmetric).
struct SignalQuantSpec {
  ActivationKind kind = ActivationKind::tanh;
  int bits = 8;
  double lo = -1.0;
  double hi = 1.0;

  static SignalQuantSpec sigmoid(int bits) { return {ActivationKind::sigmoid, bits, 0.0, 1.0}; }
  static SignalQuantSpec tanh(int bits) { return {ActivationKind::tanh, bits, -1.0, 1.0}; }
  static SignalQuantSpec linear(int bits, double lo = -3.0, double hi = 3.0) {
    return {ActivationKind::linear, bits, lo, hi};
  }

  std::int64_t points() const {
    return bits_to_levels(bits, kind == ActivationKind::sigmoid ? LevelTarget::sigmoid_signal
                                                                : LevelTarget::symmetric_signal);
  }

  void validate() const {
    (void)points();
    if (kind == ActivationKind::sigmoid && (lo != 0.0 || hi != 1.0)) {
      throw ArgumentError("sigmoid signal range is fixed to (0,1)");
    }
    if (kind == ActivationKind::tanh && (lo != -1.0 || hi != 1.0)) {
      throw ArgumentError("tanh signal range is fixed to (-1,1)");
    }
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw ArgumentError("signal range needs finite lo < hi");
    }
  }

  double point(std::int64_t index) const {
    const auto last = static_cast<double>(points() - 1);
    const auto k = static_cast<double>(index);
    return (lo * (last - k) + hi * k) / last;
  }

  std::vector<double> codebook() const {
    std::vector<double> cb(static_cast<std::size_t>(points()));
    for (std::size_t i = 0; i < cb.size(); ++i) cb[i] = point(static_cast<std::int64_t>(i));
    return cb;
  }

  bool operator==(const SignalQuantSpec&) const = default;
};

inline double quantize_signal(double y, const SignalQuantSpec& spec) {
  const std::int64_t n = spec.points();
  const double step = (spec.hi - spec.lo) / static_cast<double>(n - 1);
  const double pos = std::floor((y - spec.lo) / step + 0.5);
  std::int64_t idx;
  if (!(pos > 0.0)) {
    idx = 0;
  } else if (pos >= static_cast<double>(n - 1)) {
    idx = n - 1;
  } else {
    idx = static_cast<std::int64_t>(pos);
  }
  return spec.point(idx);
}

/// Layerwise group labels for a network with `hidden` LSTM layers:
/// In-L1, L1, L1-L2, L2, ..., Lk, Lk-Out.
inline std::vector<std::string> group_labels(std::size_t hidden) {
  std::vector<std::string> labels;
  for (std::size_t k = 1; k <= hidden; ++k) {
    labels.push_back(k == 1 ? "In-L1" : "L" + std::to_string(k - 1) + "-L" + std::to_string(k));
    labels.push_back("L" + std::to_string(k));
  }
  labels.push_back("L" + std::to_string(hidden) + "-Out");
  return labels;
}

struct GroupCounts {
  std::vector<std::string> labels;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
};

/// Storage-accounting weight counts: forward groups 4NM, recurrent groups
/// 4N^2 + 5N, output group out*N + out.
inline GroupCounts count_group_weights(std::span<const std::size_t> layer_sizes) {
  if (layer_sizes.size() < 3) {
    throw ArgumentError("count_group_weights: need input, at least one hidden layer, and output");
  }
  for (std::size_t s : layer_sizes) {
    if (s < 1) throw ArgumentError("count_group_weights: layer sizes must be >= 1");
  }
  const std::size_t hidden = layer_sizes.size() - 2;
  GroupCounts gc;
  gc.labels = group_labels(hidden);
  for (std::size_t k = 1; k <= hidden; ++k) {
    const std::uint64_t n = layer_sizes[k];
    const std::uint64_t m = layer_sizes[k - 1];
    gc.counts.push_back(4 * n * m);
    gc.counts.push_back(4 * n * n + 5 * n);
  }
  const std::uint64_t last = layer_sizes[hidden];
  const std::uint64_t out = layer_sizes.back();
  gc.counts.push_back(out * last + out);
  for (auto c : gc.counts) gc.total += c;
  return gc;
}

/// Quantized storage as a percentage of `baseline_bits` storage.
inline double capacity_ratio(std::span<const std::uint64_t> counts, std::span<const int> bits,
                             int baseline_bits = 32) {
  if (counts.size() != bits.size()) {
    throw ArgumentError("capacity_ratio: " + std::to_string(counts.size()) + " groups but " +
                        std::to_string(bits.size()) + " bit-widths");
  }
  if (baseline_bits < 1) throw ArgumentError("capacity_ratio: baseline bits must be >= 1");
  double weighted = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (bits[i] < 1) throw ArgumentError("capacity_ratio: bit-widths must be >= 1");
    weighted += static_cast<double>(counts[i]) * bits[i];
    total += static_cast<double>(counts[i]);
  }
  if (total == 0.0) throw ArgumentError("capacity_ratio: no weights");
  return 100.0 * weighted / (total * baseline_bits);
}

}  // namespace rnnquant

#endif  // RNNQUANT_QUANTIZER_HPP
