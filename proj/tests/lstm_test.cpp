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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gradcheck.hpp"
#include "test_util.hpp"

namespace rnnquant {
namespace {

using testing::small_topology;

Tensor2D random_inputs(SeededRng& rng, std::size_t steps, std::size_t dim) {
  Tensor2D x(steps, dim);
  for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
  return x;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(LstmCell, ScalarHandComputed) {
  LstmLayerParams p(1, 1);
  p.input_weights.values()[0] = 0.5;   // i
  p.input_weights.values()[1] = -0.3;  // f
  p.input_weights.values()[2] = 0.8;   // g
  p.input_weights.values()[3] = 0.1;   // o
  p.recurrent_weights.values()[0] = 0.2;
  p.recurrent_weights.values()[1] = 0.4;
  p.recurrent_weights.values()[2] = -0.6;
  p.recurrent_weights.values()[3] = 0.7;
  p.biases = {0.1, 1.0, -0.2, 0.05};
  const double x = 0.9, h = -0.4, c = 0.3;
  const double i = sig(0.5 * x + 0.2 * h + 0.1);
  const double f = sig(-0.3 * x + 0.4 * h + 1.0);
  const double g = std::tanh(0.8 * x - 0.6 * h - 0.2);
  const double o = sig(0.1 * x + 0.7 * h + 0.05);
  const double c_new = f * c + i * g;
  const double h_new = o * std::tanh(c_new);

  const std::vector<double> xv{x}, hv{h}, cv{c};
  const auto r = lstm_step_forward(p, xv, hv, cv);
  EXPECT_NEAR(r.cell[0], c_new, 1e-15);
  EXPECT_NEAR(r.h_out[0], h_new, 1e-15);
  EXPECT_NEAR(r.gates[0], i, 1e-15);
  EXPECT_NEAR(r.gates[1], f, 1e-15);
  EXPECT_NEAR(r.gates[2], g, 1e-15);
  EXPECT_NEAR(r.gates[3], o, 1e-15);
}

TEST(LstmCell, ZeroInputsZeroStateGiveZeroOutputWithZeroBias) {
  LstmLayerParams p(3, 2);
  const std::vector<double> x(2, 0.0), h(3, 0.0), c(3, 0.0);
  const auto r = lstm_step_forward(p, x, h, c);
  for (double v : r.h_out) EXPECT_EQ(v, 0.0);
}

TEST(LstmCell, ShapeMismatchIsShapeError) {
  LstmLayerParams p(3, 2);
  const std::vector<double> x(5, 0.0), h(3, 0.0), c(3, 0.0);
  EXPECT_THROW(lstm_step_forward(p, x, h, c), ShapeError);
}

TEST(LstmCell, RecurrentSpecQuantizesBiasesToo) {
  SeededRng rng(4);
  auto net = Network::initialize(small_topology(2, {3}, 2), rng);
  auto p = net.layers()[0];
  for (auto& b : p.biases) b = rng.uniform(-0.9, 0.9);
  const WeightQuantSpec spec{3, 0.5};
  auto q = p;
  for (auto& w : q.recurrent_weights.values()) w = quantize_weight(w, spec);
  for (auto& b : q.biases) b = quantize_weight(b, spec);
  const std::vector<double> x{0.3, -0.2}, h{0.1, 0.2, -0.1}, c{0.0, 0.5, -0.5};
  const auto a = lstm_step_forward(p, x, h, c, std::nullopt, spec);
  const auto b = lstm_step_forward(q, x, h, c);
  EXPECT_EQ(a.h_out, b.h_out);
  EXPECT_EQ(a.cell, b.cell);
}

TEST(LstmCell, SignalSpecPutsOutputOnCodebook) {
  SeededRng rng(6);
  auto net = Network::initialize(small_topology(2, {5}, 2), rng, 1.0);
  const auto spec = SignalQuantSpec::tanh(3);
  const auto cb = spec.codebook();
  const std::vector<double> x{0.7, -0.9}, h(5, 0.2), c(5, 0.1);
  const auto r = lstm_step_forward(net.layers()[0], x, h, c, std::nullopt, std::nullopt, spec, true);
  for (double v : r.h_out) EXPECT_NE(std::find(cb.begin(), cb.end(), v), cb.end()) << v;
  const auto gate_cb = SignalQuantSpec::sigmoid(3).codebook();
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NE(std::find(gate_cb.begin(), gate_cb.end(), r.gates[j]), gate_cb.end());
    EXPECT_NE(std::find(cb.begin(), cb.end(), r.gates[2 * 5 + j]), cb.end());
  }
}

TEST(Network, InitializationRangesAndForgetBias) {
  SeededRng rng(1);
  const auto net = Network::initialize(small_topology(4, {6, 5}, 3), rng);
  for (const auto& layer : net.layers()) {
    for (double w : layer.input_weights.values()) EXPECT_LE(std::fabs(w), 0.08);
    for (double w : layer.recurrent_weights.values()) EXPECT_LE(std::fabs(w), 0.08);
    const std::size_t n = layer.units();
    for (std::size_t j = 0; j < 4 * n; ++j) EXPECT_EQ(layer.biases[j], j >= n && j < 2 * n ? 1.0 : 0.0);
  }
  SeededRng again(1);
  EXPECT_EQ(Network::initialize(small_topology(4, {6, 5}, 3), again), net);
}

TEST(Network, GroupsPartitionParameters) {
  SeededRng rng(2);
  auto net = Network::initialize(small_topology(4, {6, 5, 3}, 7), rng);
  EXPECT_EQ(net.group_count(), 7u);
  std::size_t total = 0;
  for (std::size_t g = 0; g < net.group_count(); ++g) total += net.group_parameter_count(g);
  EXPECT_EQ(total, net.parameter_count());
  const auto flat = net.flatten();
  EXPECT_EQ(flat.size(), net.parameter_count());
  Network copy(net.topology());
  copy.assign_flat(flat);
  EXPECT_EQ(copy, net);
  EXPECT_THROW(copy.assign_flat(std::vector<double>(3)), ShapeError);
  EXPECT_THROW(net.group_spans(7), ArgumentError);
}

TEST(Network, GroupDescriptorsReportBothCounts) {
  const auto topo = small_topology(123, {512, 512, 512}, 61);
  const auto groups = enumerate_groups(topo);
  ASSERT_EQ(groups.size(), 7u);
  const auto counts = count_group_weights(topo.layer_sizes);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    EXPECT_EQ(groups[g].label, counts.labels[g]);
    EXPECT_EQ(groups[g].storage_count, counts.counts[g]);
  }
  EXPECT_EQ(groups[0].parameter_count, 4u * 512 * 123);
  EXPECT_EQ(groups[1].parameter_count, 4u * 512 * 512 + 4 * 512);
  EXPECT_EQ(groups[1].storage_count, 4u * 512 * 512 + 5 * 512);
  EXPECT_EQ(groups[6].parameter_count, 61u * 512 + 61);
  EXPECT_EQ(find_group(topo, "L2-L3"), 4u);
  EXPECT_THROW(find_group(topo, "L4"), ArgumentError);
  EXPECT_EQ(find_signal_layer(topo, "Input"), 0u);
  EXPECT_EQ(find_signal_layer(topo, "L3"), 3u);
}

TEST(Network, TopologyValidation) {
  EXPECT_THROW(Network(small_topology(3, {}, 2)), ArgumentError);
  EXPECT_THROW(Network(small_topology(3, {0}, 2)), ArgumentError);
}

TEST(NetworkForward, MatchesManualStacking) {
  SeededRng rng(10);
  const auto net = Network::initialize(small_topology(3, {4, 5}, 2), rng, 0.5);
  const auto x = random_inputs(rng, 6, 3);
  const auto fwd = network_forward(net, x, LstmState::zeros(net.topology()));
  auto state = LstmState::zeros(net.topology());
  for (std::size_t t = 0; t < 6; ++t) {
    std::vector<double> in(x.row(t).begin(), x.row(t).end());
    for (std::size_t k = 0; k < 2; ++k) {
      const auto r = lstm_step_forward(net.layers()[k], in, state.hidden[k], state.cell[k]);
      state.hidden[k] = r.h_out;
      state.cell[k] = r.cell;
      in = r.h_out;
    }
    std::vector<double> logits(net.output().biases);
    for (std::size_t o = 0; o < 2; ++o) {
      for (std::size_t j = 0; j < in.size(); ++j) logits[o] += net.output().weights(o, j) * in[j];
    }
    const double m = std::max(logits[0], logits[1]);
    const double z = std::exp(logits[0] - m) + std::exp(logits[1] - m);
    for (std::size_t o = 0; o < 2; ++o) EXPECT_NEAR(fwd.outputs(t, o), std::exp(logits[o] - m) / z, 1e-14);
  }
  EXPECT_EQ(fwd.final_state, state);
}

TEST(NetworkForward, SplitSequenceWithCarriedStateEqualsWhole) {
  SeededRng rng(12);
  const auto net = Network::initialize(small_topology(3, {4, 4}, 3), rng, 0.5);
  const auto x = random_inputs(rng, 10, 3);
  const auto whole = network_forward(net, x, LstmState::zeros(net.topology()));
  Tensor2D a(4, 3), b(6, 3);
  for (std::size_t t = 0; t < 10; ++t) {
    auto dst = t < 4 ? a.row(t) : b.row(t - 4);
    std::copy(x.row(t).begin(), x.row(t).end(), dst.begin());
  }
  const auto first = network_forward(net, a, LstmState::zeros(net.topology()));
  const auto second = network_forward(net, b, first.final_state);
  for (std::size_t t = 0; t < 10; ++t) {
    const auto expect = whole.outputs.row(t);
    const auto got = t < 4 ? first.outputs.row(t) : second.outputs.row(t - 4);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(got[j], expect[j]);
  }
  EXPECT_EQ(second.final_state, whole.final_state);
}

TEST(NetworkForward, ResetFlagRestartsFromZeroState) {
  SeededRng rng(13);
  const auto net = Network::initialize(small_topology(2, {3}, 2), rng, 0.5);
  const auto x = random_inputs(rng, 8, 2);
  std::vector<std::uint8_t> resets(8, 0);
  resets[5] = 1;
  const auto fwd = network_forward(net, x, LstmState::zeros(net.topology()), nullptr, resets);
  Tensor2D tail(3, 2);
  for (std::size_t t = 0; t < 3; ++t) std::copy(x.row(t + 5).begin(), x.row(t + 5).end(), tail.row(t).begin());
  const auto fresh = network_forward(net, tail, LstmState::zeros(net.topology()));
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(fwd.outputs(t + 5, j), fresh.outputs(t, j));
  }
}

TEST(NetworkForward, WeightPlanEqualsPrequantizedNetwork) {
  SeededRng rng(14);
  const auto net = Network::initialize(small_topology(3, {4, 4}, 3), rng, 0.5);
  const auto x = random_inputs(rng, 5, 3);
  QuantizationPlan plan;
  plan.weights.assign(net.group_count(), std::nullopt);
  plan.weights[0] = WeightQuantSpec{3, 0.2};
  plan.weights[3] = WeightQuantSpec{7, 0.05};
  const auto a = network_forward(net, x, LstmState::zeros(net.topology()), &plan);
  const auto b = network_forward(quantize_network(net, plan.weights), x, LstmState::zeros(net.topology()));
  EXPECT_EQ(a.outputs, b.outputs);
  ASSERT_TRUE(a.cache.effective_weights.has_value());
}

TEST(NetworkForward, SignalPlanQuantizesInputAndHidden) {
  SeededRng rng(15);
  const auto net = Network::initialize(small_topology(3, {4, 4}, 3), rng, 0.5);
  auto x = random_inputs(rng, 5, 3);
  for (auto& v : x.values()) v *= 5.0;
  QuantizationPlan plan;
  plan.signals = {SignalQuantSpec::linear(3), std::nullopt, SignalQuantSpec::tanh(2)};
  const auto fwd = network_forward(net, x, LstmState::zeros(net.topology()), &plan);
  const auto in_cb = SignalQuantSpec::linear(3).codebook();
  for (double v : fwd.cache.layers[0].inputs.values()) {
    EXPECT_NE(std::find(in_cb.begin(), in_cb.end(), v), in_cb.end());
  }
  for (double v : fwd.cache.layers[1].hidden.values()) EXPECT_TRUE(v == -1.0 || v == 0.0 || v == 1.0) << v;
  const auto l1 = SignalQuantSpec::tanh(2).codebook();
  bool any_off_grid = false;
  for (double v : fwd.cache.layers[0].hidden.values()) any_off_grid |= std::find(l1.begin(), l1.end(), v) == l1.end();
  EXPECT_TRUE(any_off_grid);
}

TEST(NetworkForward, NonFiniteInputReportsTimestep) {
  SeededRng rng(16);
  const auto net = Network::initialize(small_topology(2, {3}, 2), rng);
  Tensor2D x(4, 2, 0.1);
  x(2, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    network_forward(net, x, LstmState::zeros(net.topology()));
    FAIL() << "expected NumericFault";
  } catch (const NumericFault& e) {
    EXPECT_NE(std::string(e.what()).find("timestep 2"), std::string::npos) << e.what();
  }
}

TEST(NetworkForward, ShapeErrors) {
  SeededRng rng(16);
  const auto net = Network::initialize(small_topology(2, {3}, 2), rng);
  EXPECT_THROW(network_forward(net, Tensor2D(3, 5), LstmState::zeros(net.topology())), ShapeError);
  const std::vector<std::uint8_t> bad_resets(2, 0);
  EXPECT_THROW(network_forward(net, Tensor2D(3, 2), LstmState::zeros(net.topology()), nullptr, bad_resets),
               ShapeError);
}

TEST(Bptt, CrossEntropyGradientMatchesFiniteDifferences) {
  SeededRng rng(20);
  const auto net = Network::initialize(small_topology(3, {5, 4}, 4), rng, 0.5);
  const auto x = random_inputs(rng, 5, 3);
  TargetSequence tgt;
  tgt.classes = {0, 3, 1, 2, 3};
  const auto r = testing::gradient_check(net, x, tgt, LstmState::zeros(net.topology()));
  EXPECT_LT(r.max_relative_error, 1e-4) << "worst parameter " << r.worst_index;
}

TEST(Bptt, SquaredErrorLinearOutputWithWeightsAndInitialState) {
  SeededRng rng(21);
  const auto net = Network::initialize(small_topology(2, {4}, 3, OutputKind::linear), rng, 0.5);
  const auto x = random_inputs(rng, 4, 2);
  TargetSequence tgt;
  tgt.loss = LossKind::squared_error;
  tgt.values = random_inputs(rng, 4, 3);
  tgt.weights = {0.0, 0.5, 1.0, 2.0};
  auto init = LstmState::zeros(net.topology());
  for (auto& v : init.hidden[0]) v = rng.uniform(-0.5, 0.5);
  for (auto& v : init.cell[0]) v = rng.uniform(-0.5, 0.5);
  const auto r = testing::gradient_check(net, x, tgt, init);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Bptt, GradientRespectsResets) {
  SeededRng rng(22);
  const auto net = Network::initialize(small_topology(3, {4}, 3), rng, 0.5);
  const auto x = random_inputs(rng, 6, 3);
  TargetSequence tgt;
  tgt.classes = {0, 1, 2, 0, 1, 2};
  const std::vector<std::uint8_t> resets{1, 0, 0, 1, 0, 0};
  auto init = LstmState::zeros(net.topology());
  const auto r = testing::gradient_check(net, x, tgt, init, resets);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Bptt, LossEqualsForwardCrossEntropy) {
  SeededRng rng(23);
  const auto net = Network::initialize(small_topology(3, {4}, 3), rng, 0.5);
  const auto x = random_inputs(rng, 5, 3);
  TargetSequence tgt;
  tgt.classes = {2, 1, 0, 0, 1};
  const auto fwd = network_forward(net, x, LstmState::zeros(net.topology()));
  double expect = 0;
  for (std::size_t t = 0; t < 5; ++t) expect -= std::log(fwd.outputs(t, tgt.classes[t]));
  EXPECT_NEAR(bptt_backward(net, fwd.cache, tgt).loss, expect, 1e-12);
}

TEST(Bptt, CrossEntropyNeedsSoftmax) {
  SeededRng rng(24);
  const auto net = Network::initialize(small_topology(2, {3}, 2, OutputKind::linear), rng);
  const auto fwd = network_forward(net, Tensor2D(2, 2, 0.1), LstmState::zeros(net.topology()));
  TargetSequence tgt;
  tgt.classes = {0, 1};
  EXPECT_THROW(bptt_backward(net, fwd.cache, tgt), ArgumentError);
  tgt.classes = {0};
  EXPECT_THROW(bptt_backward(net, fwd.cache, tgt), ShapeError);
}

TEST(Bptt, QuantizedForwardUsesShadowWeightsStraightThrough) {
  SeededRng rng(25);
  const auto net = Network::initialize(small_topology(3, {4}, 3), rng, 0.5);
  const auto x = random_inputs(rng, 4, 3);
  QuantizationPlan plan;
  plan.weights.assign(net.group_count(), WeightQuantSpec{7, 0.1});
  TargetSequence tgt;
  tgt.classes = {0, 1, 2, 1};
  const auto a = network_forward(net, x, LstmState::zeros(net.topology()), &plan);
  const auto q = quantize_network(net, plan.weights);
  const auto b = network_forward(q, x, LstmState::zeros(net.topology()));
  const auto ga = bptt_backward(net, a.cache, tgt);
  const auto gb = bptt_backward(q, b.cache, tgt);
  EXPECT_EQ(ga.gradients.flatten(), gb.gradients.flatten());
}

}  // namespace
}  // namespace rnnquant
