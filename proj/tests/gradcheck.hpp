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

#ifndef RNNQUANT_TESTS_GRADCHECK_HPP
#define RNNQUANT_TESTS_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rnnquant/lstm.hpp"

namespace rnnquant::testing {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t parameters = 0;
};

/// Central differences of the total weighted loss against bptt_backward.
/// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
/// near-zero gradients from dominating.
inline GradCheckResult gradient_check(const Network& net, const Tensor2D& x, const TargetSequence& tgt,
                                      const LstmState& init, std::span<const std::uint8_t> resets = {},
                                      double eps = 1e-5, double floor = 1e-6) {
  const auto fwd = network_forward(net, x, init, nullptr, resets);
  const auto analytic = bptt_backward(net, fwd.cache, tgt).gradients.flatten();
  auto loss_at = [&](const std::vector<double>& flat) {
    Network probe(net.topology());
    probe.assign_flat(flat);
    const auto f = network_forward(probe, x, init, nullptr, resets);
    return bptt_backward(probe, f.cache, tgt).loss;
  };
  auto flat = net.flatten();
  GradCheckResult r;
  r.parameters = flat.size();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + eps;
    const double up = loss_at(flat);
    flat[i] = saved - eps;
    const double down = loss_at(flat);
    flat[i] = saved;
    const double numeric = (up - down) / (2 * eps);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), floor});
    const double rel = std::fabs(analytic[i] - numeric) / denom;
    if (rel > r.max_relative_error) {
      r.max_relative_error = rel;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace rnnquant::testing

#endif  // RNNQUANT_TESTS_GRADCHECK_HPP
