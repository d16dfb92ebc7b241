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

#ifndef RNNQUANT_LSTM_HPP
#define RNNQUANT_LSTM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rnnquant/error.hpp"
#include "rnnquant/numerics.hpp"
#include "rnnquant/quantizer.hpp"

namespace rnnquant {

enum class OutputKind { softmax, linear };
enum class LossKind { cross_entropy, squared_error };

/// Packed gate rows inside the 4N-row matrices.
enum Gate : std::size_t { gate_input = 0, gate_forget = 1, gate_cell = 2, gate_output = 3 };

struct NetworkTopology {
  /// input, hidden..., output
  std::vector<std::size_t> layer_sizes;
  OutputKind output_kind = OutputKind::softmax;

  std::size_t hidden_layers() const { return layer_sizes.size() < 2 ? 0 : layer_sizes.size() - 2; }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t hidden_size(std::size_t layer) const { return layer_sizes.at(layer + 1); }
  std::size_t group_count() const { return 2 * hidden_layers() + 1; }
  std::vector<std::string> group_labels() const { return rnnquant::group_labels(hidden_layers()); }

  /// Signal layer labels: Input, L1, ..., Lk.
  std::vector<std::string> signal_labels() const {
    std::vector<std::string> out{"Input"};
    for (std::size_t k = 1; k <= hidden_layers(); ++k) out.push_back("L" + std::to_string(k));
    return out;
  }

  void validate() const {
    if (layer_sizes.size() < 3) throw ArgumentError("topology needs input, >=1 hidden layer, output");
    for (auto s : layer_sizes) {
      if (s == 0) throw ArgumentError("topology layer sizes must be >= 1");
    }
  }

  bool operator==(const NetworkTopology&) const = default;
};

struct LstmLayerParams {
  Tensor2D input_weights;      // 4N x M_prev
  Tensor2D recurrent_weights;  // 4N x N
  std::vector<double> biases;  // 4N

  LstmLayerParams() = default;
  LstmLayerParams(std::size_t units, std::size_t inputs)
      : input_weights(4 * units, inputs), recurrent_weights(4 * units, units), biases(4 * units) {}

  std::size_t units() const { return recurrent_weights.cols(); }
  std::size_t input_size() const { return input_weights.cols(); }

  void validate() const {
    const std::size_t n = units();
    if (recurrent_weights.rows() != 4 * n || input_weights.rows() != 4 * n || biases.size() != 4 * n) {
      throw ShapeError("LSTM layer: inconsistent shapes input " + input_weights.shape() +
                       ", recurrent " + recurrent_weights.shape() + ", biases " +
                       std::to_string(biases.size()));
    }
  }

  bool operator==(const LstmLayerParams&) const = default;
};

struct OutputLayerParams {
  Tensor2D weights;  // out x N_last
  std::vector<double> biases;

  bool operator==(const OutputLayerParams&) const = default;
};

/// A stack of LSTM layers followed by an affine output layer. Parameters are
/// addressed by weight group: group 2k holds layer k's input weights, group
/// 2k+1 its recurrent weights and biases, the last group the output layer.
class Network {
 public:
  Network() = default;

  explicit Network(NetworkTopology topology) : topology_(std::move(topology)) {
    topology_.validate();
    for (std::size_t k = 0; k < topology_.hidden_layers(); ++k) {
      layers_.emplace_back(topology_.layer_sizes[k + 1], topology_.layer_sizes[k]);
    }
    output_.weights = Tensor2D(topology_.output_size(), topology_.layer_sizes[topology_.hidden_layers()]);
    output_.biases.assign(topology_.output_size(), 0.0);
  }

  /// Uniform(-0.08, 0.08) weights, zero biases except forget-gate biases = 1.
  static Network initialize(NetworkTopology topology, SeededRng& rng, double scale = 0.08) {
    Network net(std::move(topology));
    for (auto& layer : net.layers_) {
      for (double& w : layer.input_weights.values()) w = rng.uniform(-scale, scale);
      for (double& w : layer.recurrent_weights.values()) w = rng.uniform(-scale, scale);
      const std::size_t n = layer.units();
      std::fill(layer.biases.begin() + static_cast<std::ptrdiff_t>(gate_forget * n),
                layer.biases.begin() + static_cast<std::ptrdiff_t>((gate_forget + 1) * n), 1.0);
    }
    for (double& w : net.output_.weights.values()) w = rng.uniform(-scale, scale);
    return net;
  }

  const NetworkTopology& topology() const { return topology_; }
  std::vector<LstmLayerParams>& layers() { return layers_; }
  const std::vector<LstmLayerParams>& layers() const { return layers_; }
  OutputLayerParams& output() { return output_; }
  const OutputLayerParams& output() const { return output_; }

  std::size_t group_count() const { return topology_.group_count(); }

  std::vector<std::span<double>> group_spans(std::size_t g) {
    std::vector<std::span<double>> out;
    const std::size_t k = g / 2;
    if (g >= group_count()) throw ArgumentError("group index out of range: " + std::to_string(g));
    if (g + 1 == group_count()) {
      out.push_back(output_.weights.values());
      out.push_back(output_.biases);
    } else if (g % 2 == 0) {
      out.push_back(layers_[k].input_weights.values());
    } else {
      out.push_back(layers_[k].recurrent_weights.values());
      out.push_back(layers_[k].biases);
    }
    return out;
  }

  std::vector<std::span<const double>> group_spans(std::size_t g) const {
    auto spans = const_cast<Network*>(this)->group_spans(g);
    return {spans.begin(), spans.end()};
  }

  std::vector<double> group_values(std::size_t g) const {
    std::vector<double> out;
    for (auto s : group_spans(g)) out.insert(out.end(), s.begin(), s.end());
    return out;
  }

  std::size_t group_parameter_count(std::size_t g) const {
    std::size_t n = 0;
    for (auto s : group_spans(g)) n += s.size();
    return n;
  }

  /// All parameter arrays in group order.
  std::vector<std::span<double>> tensors() {
    std::vector<std::span<double>> out;
    for (std::size_t g = 0; g < group_count(); ++g) {
      for (auto s : group_spans(g)) out.push_back(s);
    }
    return out;
  }

  std::vector<std::span<const double>> tensors() const {
    auto spans = const_cast<Network*>(this)->tensors();
    return {spans.begin(), spans.end()};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto s : tensors()) n += s.size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (auto s : tensors()) out.insert(out.end(), s.begin(), s.end());
    return out;
  }

  void assign_flat(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
      throw ShapeError("assign_flat: expected " + std::to_string(parameter_count()) + " values, got " +
                       std::to_string(flat.size()));
    }
    std::size_t off = 0;
    for (auto s : tensors()) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), s.size(), s.begin());
      off += s.size();
    }
  }

  void validate() const {
    topology_.validate();
    if (layers_.size() != topology_.hidden_layers()) throw ShapeError("layer count mismatch");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      layers_[k].validate();
      if (layers_[k].units() != topology_.layer_sizes[k + 1] ||
          layers_[k].input_size() != topology_.layer_sizes[k]) {
        throw ShapeError("layer " + std::to_string(k + 1) + " shape disagrees with topology");
      }
    }
    if (output_.weights.rows() != topology_.output_size() ||
        output_.weights.cols() != topology_.layer_sizes[topology_.hidden_layers()] ||
        output_.biases.size() != topology_.output_size()) {
      throw ShapeError("output layer shape disagrees with topology");
    }
  }

  bool operator==(const Network&) const = default;

 private:
  NetworkTopology topology_;
  std::vector<LstmLayerParams> layers_;
  OutputLayerParams output_;
};

struct GroupDescriptor {
  std::string label;
  /// Trainable parameters held by the executable network.
  std::size_t parameter_count = 0;
  /// Storage-accounting count (4N^2 + 5N for recurrent groups).
  std::uint64_t storage_count = 0;
};

inline std::vector<GroupDescriptor> enumerate_groups(const NetworkTopology& topology) {
  topology.validate();
  const auto counts = count_group_weights(topology.layer_sizes);
  const Network shape(topology);
  std::vector<GroupDescriptor> out;
  for (std::size_t g = 0; g < topology.group_count(); ++g) {
    out.push_back({counts.labels[g], shape.group_parameter_count(g), counts.counts[g]});
  }
  return out;
}

inline std::size_t find_group(const NetworkTopology& topology, const std::string& label) {
  const auto labels = topology.group_labels();
  for (std::size_t g = 0; g < labels.size(); ++g) {
    if (labels[g] == label) return g;
  }
  throw ArgumentError("unknown weight group '" + label + "'");
}

inline std::size_t find_signal_layer(const NetworkTopology& topology, const std::string& label) {
  const auto labels = topology.signal_labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  throw ArgumentError("unknown signal layer '" + label + "'");
}

/// Which weights and signals are quantized during a forward pass.
struct QuantizationPlan {
  /// Per weight group; nullopt leaves the group in floating point.
  std::vector<std::optional<WeightQuantSpec>> weights;
  /// Index 0 is the network input, index k the output of hidden layer k.
  std::vector<std::optional<SignalQuantSpec>> signals;
  /// Also quantize gate activations of layers with a signal spec: sigmoid
  /// gates on the 2^b point [0,1] grid, the cell candidate on the tanh grid.
  bool quantize_gates = false;

  bool has_weight_quant() const {
    return std::any_of(weights.begin(), weights.end(), [](const auto& s) { return s.has_value(); });
  }
  bool has_signal_quant() const {
    return std::any_of(signals.begin(), signals.end(), [](const auto& s) { return s.has_value(); });
  }

  const SignalQuantSpec* signal(std::size_t index) const {
    return index < signals.size() && signals[index] ? &*signals[index] : nullptr;
  }

  static QuantizationPlan none() { return {}; }
};

/// Copy of `net` with every group that has a spec mapped onto its grid.
inline Network quantize_network(const Network& net,
                                const std::vector<std::optional<WeightQuantSpec>>& specs) {
  Network out = net;
  for (std::size_t g = 0; g < std::min(specs.size(), net.group_count()); ++g) {
    if (!specs[g]) continue;
    for (auto s : out.group_spans(g)) {
      for (double& w : s) w = quantize_weight(w, *specs[g]);
    }
  }
  return out;
}

struct LstmState {
  std::vector<std::vector<double>> hidden;
  std::vector<std::vector<double>> cell;

  static LstmState zeros(const NetworkTopology& topology) {
    LstmState s;
    for (std::size_t k = 0; k < topology.hidden_layers(); ++k) {
      s.hidden.emplace_back(topology.hidden_size(k), 0.0);
      s.cell.emplace_back(topology.hidden_size(k), 0.0);
    }
    return s;
  }

  bool operator==(const LstmState&) const = default;
};

/// Per-layer activations recorded over a window, one row per timestep.
struct LayerCache {
  Tensor2D inputs;      // signal entering the layer (after quantization)
  Tensor2D h_prev;
  Tensor2D c_prev;
  Tensor2D gates;       // gate values used in the cell update
  Tensor2D gates_raw;   // activations before signal quantization
  Tensor2D cell;
  Tensor2D cell_tanh;
  Tensor2D hidden;      // layer output after signal quantization

  LayerCache() = default;
  LayerCache(std::size_t steps, std::size_t inputs_dim, std::size_t units)
      : inputs(steps, inputs_dim), h_prev(steps, units), c_prev(steps, units),
        gates(steps, 4 * units), gates_raw(steps, 4 * units), cell(steps, units),
        cell_tanh(steps, units), hidden(steps, units) {}
};

struct ForwardCache {
  std::size_t steps = 0;
  std::vector<LayerCache> layers;
  Tensor2D outputs;  // softmax probabilities or linear outputs
  std::vector<std::uint8_t> resets;
  /// Set when the forward pass quantized the weights itself.
  std::optional<Network> effective_weights;
};

struct ForwardResult {
  Tensor2D outputs;
  ForwardCache cache;
  LstmState final_state;
};

namespace detail {

// out += W * x, skipping zero entries of x when x is mostly zeros.
inline void affine_accumulate(const Tensor2D& w, std::span<const double> x, std::span<double> out,
                              std::vector<std::size_t>& nz) {
  nz.clear();
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] != 0.0) nz.push_back(j);
  }
  if (nz.empty()) return;
  if (2 * nz.size() < x.size()) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
      const double* row = w.row(r).data();
      double acc = 0.0;
      for (std::size_t j : nz) acc += row[j] * x[j];
      out[r] += acc;
    }
  } else {
    for (std::size_t r = 0; r < w.rows(); ++r) {
      const double* row = w.row(r).data();
      double acc = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) acc += row[j] * x[j];
      out[r] += acc;
    }
  }
}

// grad += dz (outer) x, skipping zero entries of x.
inline void outer_accumulate(Tensor2D& grad, std::span<const double> dz, std::span<const double> x,
                             std::vector<std::size_t>& nz) {
  nz.clear();
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] != 0.0) nz.push_back(j);
  }
  if (nz.empty()) return;
  const bool sparse = 2 * nz.size() < x.size();
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    const double d = dz[r];
    if (d == 0.0) continue;
    double* row = grad.row(r).data();
    if (sparse) {
      for (std::size_t j : nz) row[j] += d * x[j];
    } else {
      for (std::size_t j = 0; j < x.size(); ++j) row[j] += d * x[j];
    }
  }
}

// out += W^T * dz
inline void transpose_accumulate(const Tensor2D& w, std::span<const double> dz, std::span<double> out) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double d = dz[r];
    if (d == 0.0) continue;
    const double* row = w.row(r).data();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += d * row[j];
  }
}

struct StepBuffers {
  std::vector<double> pre;
  std::vector<std::size_t> nz;
};

// One LSTM cell update writing every intermediate into row `t` of `cache`.
inline void lstm_step_into(const LstmLayerParams& p, std::span<const double> x,
                           std::span<const double> h_prev, std::span<const double> c_prev,
                           const SignalQuantSpec* sq, bool quantize_gates, LayerCache& cache,
                           std::size_t t, StepBuffers& buf) {
  const std::size_t n = p.units();
  buf.pre.assign(p.biases.begin(), p.biases.end());
  affine_accumulate(p.input_weights, x, buf.pre, buf.nz);
  affine_accumulate(p.recurrent_weights, h_prev, buf.pre, buf.nz);

  auto gates = cache.gates.row(t);
  auto raw = cache.gates_raw.row(t);
  for (std::size_t r = 0; r < 4 * n; ++r) {
    const bool candidate = r >= gate_cell * n && r < (gate_cell + 1) * n;
    raw[r] = candidate ? std::tanh(buf.pre[r]) : sigmoid(buf.pre[r]);
    gates[r] = raw[r];
  }
  if (sq != nullptr && quantize_gates) {
    const auto gate_spec = SignalQuantSpec::sigmoid(sq->bits);
    const auto cand_spec = SignalQuantSpec::tanh(sq->bits);
    for (std::size_t r = 0; r < 4 * n; ++r) {
      const bool candidate = r >= gate_cell * n && r < (gate_cell + 1) * n;
      gates[r] = quantize_signal(raw[r], candidate ? cand_spec : gate_spec);
    }
  }

  auto c = cache.cell.row(t);
  auto tc = cache.cell_tanh.row(t);
  auto h = cache.hidden.row(t);
  for (std::size_t j = 0; j < n; ++j) {
    const double i = gates[gate_input * n + j];
    const double f = gates[gate_forget * n + j];
    const double g = gates[gate_cell * n + j];
    const double o = gates[gate_output * n + j];
    c[j] = f * c_prev[j] + i * g;
    tc[j] = std::tanh(c[j]);
    h[j] = o * tc[j];
    if (sq != nullptr) h[j] = quantize_signal(h[j], *sq);
  }
  std::copy(x.begin(), x.end(), cache.inputs.row(t).begin());
  std::copy(h_prev.begin(), h_prev.end(), cache.h_prev.row(t).begin());
  std::copy(c_prev.begin(), c_prev.end(), cache.c_prev.row(t).begin());
}

inline void softmax_inplace(std::span<double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

}  // namespace detail

struct LstmStepResult {
  std::vector<double> h_out;
  std::vector<double> cell;
  /// Gate values [input, forget, candidate, output] as used.
  std::vector<double> gates;
};

/// Single cell update for one layer. When `input_spec`/`recurrent_spec` are
/// given the corresponding weights are quantized before use; `signal_spec`
/// quantizes the layer output.
inline LstmStepResult lstm_step_forward(const LstmLayerParams& params, std::span<const double> x,
                                        std::span<const double> h_prev, std::span<const double> c_prev,
                                        const std::optional<WeightQuantSpec>& input_spec = std::nullopt,
                                        const std::optional<WeightQuantSpec>& recurrent_spec = std::nullopt,
                                        const std::optional<SignalQuantSpec>& signal_spec = std::nullopt,
                                        bool quantize_gates = false) {
  params.validate();
  const std::size_t n = params.units();
  if (x.size() != params.input_size() || h_prev.size() != n || c_prev.size() != n) {
    throw ShapeError("lstm_step_forward: input " + std::to_string(x.size()) + "/" +
                     std::to_string(params.input_size()) + ", state " + std::to_string(h_prev.size()) +
                     "," + std::to_string(c_prev.size()) + "/" + std::to_string(n));
  }
  const LstmLayerParams* used = &params;
  LstmLayerParams quantized;
  if (input_spec || recurrent_spec) {
    quantized = params;
    if (input_spec) {
      for (double& w : quantized.input_weights.values()) w = quantize_weight(w, *input_spec);
    }
    if (recurrent_spec) {
      for (double& w : quantized.recurrent_weights.values()) w = quantize_weight(w, *recurrent_spec);
      for (double& w : quantized.biases) w = quantize_weight(w, *recurrent_spec);
    }
    used = &quantized;
  }
  LayerCache cache(1, params.input_size(), n);
  detail::StepBuffers buf;
  detail::lstm_step_into(*used, x, h_prev, c_prev, signal_spec ? &*signal_spec : nullptr,
                         quantize_gates, cache, 0, buf);
  LstmStepResult out;
  out.h_out.assign(cache.hidden.row(0).begin(), cache.hidden.row(0).end());
  out.cell.assign(cache.cell.row(0).begin(), cache.cell.row(0).end());
  out.gates.assign(cache.gates.row(0).begin(), cache.gates.row(0).end());
  return out;
}

/// Runs the stacked network over `inputs` (one row per timestep). A null
/// plan disables all quantization. `resets[t] != 0` zeroes every layer's
/// state before step t.
inline ForwardResult network_forward(const Network& net, const Tensor2D& inputs,
                                     const LstmState& initial, const QuantizationPlan* plan = nullptr,
                                     std::span<const std::uint8_t> resets = {}) {
  const auto& topo = net.topology();
  if (inputs.cols() != topo.input_size()) {
    throw ShapeError("network_forward: input width " + std::to_string(inputs.cols()) +
                     " but topology expects " + std::to_string(topo.input_size()));
  }
  if (!resets.empty() && resets.size() != inputs.rows()) {
    throw ShapeError("network_forward: reset flags length disagrees with input length");
  }
  if (initial.hidden.size() != topo.hidden_layers() || initial.cell.size() != topo.hidden_layers()) {
    throw ShapeError("network_forward: initial state layer count mismatch");
  }

  ForwardResult result;
  ForwardCache& cache = result.cache;
  const Network* weights = &net;
  if (plan != nullptr && plan->has_weight_quant()) {
    cache.effective_weights = quantize_network(net, plan->weights);
    weights = &*cache.effective_weights;
  }

  const std::size_t steps = inputs.rows();
  const std::size_t layers = topo.hidden_layers();
  cache.steps = steps;
  cache.resets.assign(resets.begin(), resets.end());
  for (std::size_t k = 0; k < layers; ++k) {
    cache.layers.emplace_back(steps, topo.layer_sizes[k], topo.layer_sizes[k + 1]);
  }
  result.final_state = initial;
  LstmState& state = result.final_state;

  const SignalQuantSpec* input_spec = plan ? plan->signal(0) : nullptr;
  const bool gates_q = plan != nullptr && plan->quantize_gates;
  std::vector<double> x(topo.input_size());
  std::vector<double> h_prev, c_prev;
  detail::StepBuffers buf;
  cache.outputs = Tensor2D(steps, topo.output_size());

  for (std::size_t t = 0; t < steps; ++t) {
    if (!resets.empty() && resets[t] != 0) {
      for (std::size_t k = 0; k < layers; ++k) {
        std::fill(state.hidden[k].begin(), state.hidden[k].end(), 0.0);
        std::fill(state.cell[k].begin(), state.cell[k].end(), 0.0);
      }
    }
    auto in_row = inputs.row(t);
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] = input_spec ? quantize_signal(in_row[j], *input_spec) : in_row[j];
    }
    std::span<const double> layer_in = x;
    for (std::size_t k = 0; k < layers; ++k) {
      const SignalQuantSpec* sq = plan ? plan->signal(k + 1) : nullptr;
      auto& lc = cache.layers[k];
      detail::lstm_step_into(weights->layers()[k], layer_in, state.hidden[k], state.cell[k], sq, gates_q,
                             lc, t, buf);
      auto h = lc.hidden.row(t);
      if (!all_finite(h)) {
        throw NumericFault("non-finite activation at timestep " + std::to_string(t) + " in layer L" +
                           std::to_string(k + 1));
      }
      std::copy(h.begin(), h.end(), state.hidden[k].begin());
      auto c = lc.cell.row(t);
      std::copy(c.begin(), c.end(), state.cell[k].begin());
      layer_in = h;
    }
    auto out = cache.outputs.row(t);
    std::copy(weights->output().biases.begin(), weights->output().biases.end(), out.begin());
    detail::affine_accumulate(weights->output().weights, layer_in, out, buf.nz);
    if (topo.output_kind == OutputKind::softmax) detail::softmax_inplace(out);
    if (!all_finite(out)) throw NumericFault("non-finite output at timestep " + std::to_string(t));
  }
  result.outputs = cache.outputs;
  return result;
}

/// Targets aligned with a forward window.
struct TargetSequence {
  LossKind loss = LossKind::cross_entropy;
  std::vector<std::uint32_t> classes;  // cross-entropy
  Tensor2D values;                     // squared error, one row per step
  /// Per-step loss weight; empty means 1 everywhere.
  std::vector<double> weights;

  std::size_t steps() const { return loss == LossKind::cross_entropy ? classes.size() : values.rows(); }
  double weight(std::size_t t) const { return weights.empty() ? 1.0 : weights[t]; }
};

struct BackwardResult {
  Network gradients;
  double loss = 0.0;  // weighted sum of per-step losses (nats for cross-entropy)
};

/// Backpropagation through the unfolded window recorded in `cache`. Signal
/// quantizers pass gradients straight through; weight gradients are taken
/// at the weights the forward pass used.
inline BackwardResult bptt_backward(const Network& net, const ForwardCache& cache,
                                    const TargetSequence& targets) {
  const Network& w = cache.effective_weights ? *cache.effective_weights : net;
  const auto& topo = w.topology();
  const std::size_t steps = cache.steps;
  if (targets.steps() != steps) {
    throw ShapeError("bptt_backward: " + std::to_string(targets.steps()) + " targets for " +
                     std::to_string(steps) + " cached steps");
  }
  if (!targets.weights.empty() && targets.weights.size() != steps) {
    throw ShapeError("bptt_backward: loss weight length mismatch");
  }
  if (targets.loss == LossKind::cross_entropy && topo.output_kind != OutputKind::softmax) {
    throw ArgumentError("bptt_backward: cross-entropy loss requires a softmax output");
  }
  if (cache.layers.size() != topo.hidden_layers()) throw ShapeError("bptt_backward: cache/topology mismatch");

  BackwardResult result{Network(topo), 0.0};
  Network& grads = result.gradients;
  const std::size_t layers = topo.hidden_layers();
  const std::size_t out_dim = topo.output_size();
  std::vector<std::size_t> nz;

  Tensor2D d_above(steps, topo.layer_sizes[layers]);
  std::vector<double> dy(out_dim);
  for (std::size_t t = 0; t < steps; ++t) {
    const double wt = targets.weight(t);
    auto y = cache.outputs.row(t);
    if (targets.loss == LossKind::cross_entropy) {
      const std::uint32_t c = targets.classes[t];
      if (c >= out_dim) throw ArgumentError("bptt_backward: class id out of range");
      result.loss += wt * -std::log(std::max(y[c], 1e-300));
      for (std::size_t j = 0; j < out_dim; ++j) dy[j] = wt * y[j];
      dy[c] -= wt;
    } else {
      auto tv = targets.values.row(t);
      if (tv.size() != out_dim) throw ShapeError("bptt_backward: target width mismatch");
      double sq = 0.0;
      for (std::size_t j = 0; j < out_dim; ++j) {
        const double d = y[j] - tv[j];
        sq += d * d;
        dy[j] = wt * d;
      }
      result.loss += wt * 0.5 * sq;
    }
    if (wt == 0.0) continue;
    auto h_top = cache.layers[layers - 1].hidden.row(t);
    detail::outer_accumulate(grads.output().weights, dy, h_top, nz);
    for (std::size_t j = 0; j < out_dim; ++j) grads.output().biases[j] += dy[j];
    detail::transpose_accumulate(w.output().weights, dy, d_above.row(t));
  }

  for (std::size_t kk = layers; kk-- > 0;) {
    const auto& p = w.layers()[kk];
    auto& g = grads.layers()[kk];
    const auto& lc = cache.layers[kk];
    const std::size_t n = p.units();
    Tensor2D d_below = kk > 0 ? Tensor2D(steps, p.input_size()) : Tensor2D();
    std::vector<double> dh_next(n, 0.0), dc_next(n, 0.0), dz(4 * n);

    for (std::size_t t = steps; t-- > 0;) {
      auto gates = lc.gates.row(t);
      auto raw = lc.gates_raw.row(t);
      auto tc = lc.cell_tanh.row(t);
      auto cp = lc.c_prev.row(t);
      auto da = d_above.row(t);
      for (std::size_t j = 0; j < n; ++j) {
        const double i = gates[gate_input * n + j];
        const double f = gates[gate_forget * n + j];
        const double gg = gates[gate_cell * n + j];
        const double o = gates[gate_output * n + j];
        const double dh = da[j] + dh_next[j];
        const double d_o = dh * tc[j];
        const double dc = dc_next[j] + dh * o * (1.0 - tc[j] * tc[j]);
        const double ri = raw[gate_input * n + j];
        const double rf = raw[gate_forget * n + j];
        const double rg = raw[gate_cell * n + j];
        const double ro = raw[gate_output * n + j];
        dz[gate_input * n + j] = dc * gg * ri * (1.0 - ri);
        dz[gate_forget * n + j] = dc * cp[j] * rf * (1.0 - rf);
        dz[gate_cell * n + j] = dc * i * (1.0 - rg * rg);
        dz[gate_output * n + j] = d_o * ro * (1.0 - ro);
        dc_next[j] = dc * f;
      }
      for (std::size_t r = 0; r < 4 * n; ++r) g.biases[r] += dz[r];
      detail::outer_accumulate(g.input_weights, dz, lc.inputs.row(t), nz);
      detail::outer_accumulate(g.recurrent_weights, dz, lc.h_prev.row(t), nz);
      if (kk > 0) detail::transpose_accumulate(p.input_weights, dz, d_below.row(t));
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      detail::transpose_accumulate(p.recurrent_weights, dz, dh_next);
      if (!cache.resets.empty() && cache.resets[t] != 0) {
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        std::fill(dc_next.begin(), dc_next.end(), 0.0);
      }
    }
    if (kk > 0) d_above = std::move(d_below);
  }
  return result;
}

}  // namespace rnnquant

#endif  // RNNQUANT_LSTM_HPP
