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

#ifndef RNNQUANT_TRAINER_HPP
#define RNNQUANT_TRAINER_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "rnnquant/data.hpp"
#include "rnnquant/error.hpp"
#include "rnnquant/lstm.hpp"
#include "rnnquant/numerics.hpp"
#include "rnnquant/quantizer.hpp"

namespace rnnquant {

struct TrainConfig {
  std::size_t forward_steps = 32;
  std::size_t backward_steps = 32;
  std::size_t streams = 8;
  /// Global multiplier on the adadelta step.
  double initial_lr = 1.0;
  double lr_floor = 0.01;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  bool nesterov = false;
  double adadelta_rho = 0.95;
  double adadelta_eps = 1e-6;
  std::size_t early_stop_patience = 3;
  std::size_t max_epochs = 10;
  /// Evaluate every this many updates; 0 evaluates once per epoch.
  std::size_t eval_every = 0;
  std::uint64_t seed = 1;
  /// Worker threads for per-stream passes; 0 reads RNQ_THREADS, else uses
  /// the hardware concurrency.
  std::size_t threads = 0;

  void validate() const {
    if (forward_steps < 1 || backward_steps < forward_steps) {
      throw ArgumentError("train config: need backward_steps >= forward_steps >= 1");
    }
    if (streams < 1) throw ArgumentError("train config: streams must be >= 1");
    if (!(lr_floor > 0.0) || lr_floor > initial_lr) {
      throw ArgumentError("train config: need 0 < lr_floor <= initial_lr");
    }
    if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("train config: momentum must be in [0,1)");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) {
      throw ArgumentError("train config: lr_decay_factor must be in (0,1)");
    }
    if (!(adadelta_rho > 0.0 && adadelta_rho < 1.0) || !(adadelta_eps > 0.0)) {
      throw ArgumentError("train config: adadelta rho must be in (0,1) and eps > 0");
    }
    if (early_stop_patience < 1 || max_epochs < 1) {
      throw ArgumentError("train config: patience and max_epochs must be >= 1");
    }
  }

  std::size_t resolved_threads() const {
    std::size_t n = threads;
    if (n == 0) {
      if (const char* env = std::getenv("RNQ_THREADS"); env != nullptr && *env != '\0') {
        n = static_cast<std::size_t>(std::strtoul(env, nullptr, 10));
      }
    }
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return std::clamp<std::size_t>(n, 1, streams);
  }

  bool operator==(const TrainConfig&) const = default;
};

/// Running averages for adadelta plus the momentum velocity, one entry per
/// parameter in flattened group order.
struct OptimizerState {
  std::vector<double> mean_sq_grad;
  std::vector<double> mean_sq_update;
  std::vector<double> velocity;

  static OptimizerState zeros(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  }
  std::size_t size() const { return velocity.size(); }
  bool operator==(const OptimizerState&) const = default;
};

/// Parameter change for one step: adadelta's unit-consistent step folded
/// into (optionally Nesterov) momentum, then scaled by `lr`.
inline std::vector<double> adadelta_update(std::span<const double> grad, OptimizerState& st,
                                           const TrainConfig& cfg, double lr) {
  if (grad.size() != st.size() || st.mean_sq_grad.size() != st.size() || st.mean_sq_update.size() != st.size()) {
    throw ShapeError("adadelta_update: gradient has " + std::to_string(grad.size()) +
                     " entries, optimizer state " + std::to_string(st.size()));
  }
  const double rho = cfg.adadelta_rho;
  const double eps = cfg.adadelta_eps;
  std::vector<double> delta(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    st.mean_sq_grad[i] = rho * st.mean_sq_grad[i] + (1.0 - rho) * g * g;
    const double raw = -std::sqrt((st.mean_sq_update[i] + eps) / (st.mean_sq_grad[i] + eps)) * g;
    st.mean_sq_update[i] = rho * st.mean_sq_update[i] + (1.0 - rho) * raw * raw;
    st.velocity[i] = cfg.momentum * st.velocity[i] + raw;
    const double step = cfg.nesterov ? cfg.momentum * st.velocity[i] + raw : st.velocity[i];
    delta[i] = lr * step;
  }
  return delta;
}

struct LogRow {
  std::size_t epoch = 0;
  std::size_t update_count = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;  // mean cross-entropy per frame, nats
  double valid_metric = 0.0;
  double wall_seconds = 0.0;

  bool operator==(const LogRow&) const = default;
};

inline std::string log_csv_header() {
  return "epoch,update_count,learning_rate,train_loss,valid_metric,wall_seconds\n";
}

inline std::string log_csv_row(const LogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.3f\n", r.epoch, r.update_count,
                r.learning_rate, r.train_loss, r.valid_metric, r.wall_seconds);
  return buf;
}

enum class LrDecision { continue_training, decay, stop };

/// Plateau schedule over a log of validation metrics (lower is better).
/// When neither the best value nor the last LR change lies within the last
/// `patience` evaluations, the rate decays; a decay that would take it below
/// the floor stops training instead. `last_change` is the log length at the
/// most recent decay.
inline LrDecision lr_and_stopping(std::span<const double> metrics, double current_lr, const TrainConfig& cfg,
                                  std::size_t last_change = 0) {
  if (metrics.empty()) return LrDecision::continue_training;
  const auto best = static_cast<std::size_t>(std::min_element(metrics.begin(), metrics.end()) - metrics.begin());
  const std::size_t since_best = metrics.size() - 1 - best;
  const std::size_t since_change = metrics.size() - std::min(last_change, metrics.size());
  if (since_best < cfg.early_stop_patience || since_change < cfg.early_stop_patience) {
    return LrDecision::continue_training;
  }
  if (current_lr * cfg.lr_decay_factor < cfg.lr_floor * (1.0 - 1e-9)) return LrDecision::stop;
  return LrDecision::decay;
}

struct GroupQuantization {
  int bits = 0;
  WeightQuantSpec spec;
  double error = 0.0;
  int iterations = 0;

  bool operator==(const GroupQuantization&) const = default;
};

/// Floating-point master weights and their quantized shadow. Groups without
/// a quantization record keep shadow == master.
struct DualWeights {
  Network master;
  Network shadow;
  std::vector<std::optional<GroupQuantization>> groups;

  static DualWeights floating(Network net) {
    DualWeights d;
    d.groups.assign(net.group_count(), std::nullopt);
    d.shadow = net;
    d.master = std::move(net);
    return d;
  }

  std::vector<std::optional<WeightQuantSpec>> specs() const {
    std::vector<std::optional<WeightQuantSpec>> out;
    for (const auto& g : groups) out.push_back(g ? std::optional(g->spec) : std::nullopt);
    return out;
  }

  std::vector<int> bits() const {
    std::vector<int> out;
    for (const auto& g : groups) out.push_back(g ? g->bits : 0);
    return out;
  }

  bool quantized() const {
    return std::any_of(groups.begin(), groups.end(), [](const auto& g) { return g.has_value(); });
  }

  /// shadow = Q(master) under the recorded (frozen) step sizes.
  void requantize() {
    if (groups.size() != master.group_count()) throw IntegrityError("dual weights: group record count mismatch");
    shadow = master;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (!groups[g]) continue;
      for (auto s : shadow.group_spans(g)) {
        for (double& w : s) w = quantize_weight(w, groups[g]->spec);
      }
    }
  }

  bool consistent() const {
    if (groups.size() != master.group_count() || !(master.topology() == shadow.topology())) return false;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto ms = master.group_spans(g);
      const auto ss = shadow.group_spans(g);
      for (std::size_t k = 0; k < ms.size(); ++k) {
        if (ms[k].size() != ss[k].size()) return false;
        for (std::size_t i = 0; i < ms[k].size(); ++i) {
          const double expect = groups[g] ? quantize_weight(ms[k][i], groups[g]->spec) : ms[k][i];
          if (expect != ss[k][i]) return false;
        }
      }
    }
    return true;
  }

  bool operator==(const DualWeights&) const = default;
};

/// Quantizes every group with a nonzero bit-width using its L2-optimal step.
/// A bit-width of 0 leaves the group in floating point.
inline DualWeights direct_quantize(const Network& params, std::span<const int> group_bits) {
  if (group_bits.size() != params.group_count()) {
    throw ArgumentError("direct_quantize: expected " + std::to_string(params.group_count()) +
                        " group bit-widths, got " + std::to_string(group_bits.size()));
  }
  DualWeights d = DualWeights::floating(params);
  const auto labels = params.topology().group_labels();
  for (std::size_t g = 0; g < group_bits.size(); ++g) {
    if (group_bits[g] == 0) continue;
    const auto levels = bits_to_levels(group_bits[g], LevelTarget::weight);
    const auto values = params.group_values(g);
    QuantizationOutcome q;
    try {
      q = optimize_step_size(values, levels);
    } catch (const DegenerateWeights& e) {
      throw DegenerateWeights("group " + labels[g] + ": " + e.what());
    }
    d.groups[g] = GroupQuantization{group_bits[g], WeightQuantSpec{levels, q.step}, q.error, q.iterations};
  }
  d.requantize();
  return d;
}

/// Thrown when training produces a non-finite loss; carries the best
/// parameters seen before the fault.
struct TrainingDiverged : NumericFault {
  TrainingDiverged(const std::string& what, DualWeights last_good)
      : NumericFault(what), last_good(std::move(last_good)) {}
  DualWeights last_good;
};

/// One stream's truncated-BPTT window.
struct StreamWindow {
  Tensor2D inputs;
  std::vector<std::uint8_t> resets;
  TargetSequence targets;
  LstmState initial;
  /// Capture the state after this many steps for the next window (0 keeps
  /// `initial`).
  std::size_t carry_after = 0;
};

struct StepOutcome {
  double loss = 0.0;
  std::vector<LstmState> carry;
};

namespace detail {

struct WindowPass {
  Network grad;
  double loss = 0.0;
  LstmState carry;
};

inline WindowPass run_window(const Network& weights, const StreamWindow& w, const QuantizationPlan& plan) {
  const auto fwd = network_forward(weights, w.inputs, w.initial, &plan, w.resets);
  auto back = bptt_backward(weights, fwd.cache, w.targets);
  WindowPass out{std::move(back.gradients), back.loss, w.initial};
  if (w.carry_after > 0) {
    const std::size_t t = w.carry_after - 1;
    for (std::size_t k = 0; k < fwd.cache.layers.size(); ++k) {
      auto h = fwd.cache.layers[k].hidden.row(t);
      auto c = fwd.cache.layers[k].cell.row(t);
      out.carry.hidden[k].assign(h.begin(), h.end());
      out.carry.cell[k].assign(c.begin(), c.end());
    }
  }
  return out;
}

}  // namespace detail

/// Forward/backward over every window with the shadow weights and the
/// plan's signal quantizers; gradients are summed in window order.
inline std::pair<Network, StepOutcome> compute_gradients(const DualWeights& dual,
                                                         std::span<const StreamWindow> windows,
                                                         const QuantizationPlan& signals, std::size_t threads) {
  QuantizationPlan plan = signals;
  plan.weights.clear();
  std::vector<detail::WindowPass> passes(windows.size());
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, windows.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < windows.size(); ++i) passes[i] = detail::run_window(dual.shadow, windows[i], plan);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < windows.size(); i += threads) {
            passes[i] = detail::run_window(dual.shadow, windows[i], plan);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  Network total(dual.shadow.topology());
  StepOutcome outcome;
  auto dst = total.tensors();
  for (auto& p : passes) {
    auto src = p.grad.tensors();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += src[k][i];
    }
    outcome.loss += p.loss;
    outcome.carry.push_back(std::move(p.carry));
  }
  return {std::move(total), std::move(outcome)};
}

/// Applies a parameter delta to the master weights and refreshes the shadow.
inline void apply_update(DualWeights& dual, std::span<const double> delta) {
  std::size_t off = 0;
  for (auto s : dual.master.tensors()) {
    for (double& w : s) w += delta[off++];
  }
  dual.requantize();
}

/// One quantization-aware update: forward and backward through the shadow
/// weights, adadelta+momentum on the master weights, then shadow = Q(master)
/// with frozen step sizes. Window loss weights should already average over
/// the mini-batch frames.
inline StepOutcome retrain_step(DualWeights& dual, std::span<const StreamWindow> windows, OptimizerState& opt,
                                const TrainConfig& cfg, double lr, const QuantizationPlan& signals = {},
                                std::size_t threads = 1) {
  if (!dual.consistent()) throw IntegrityError("retrain_step: shadow weights differ from Q(master)");
  if (opt.size() != dual.master.parameter_count()) {
    throw IntegrityError("retrain_step: optimizer state does not match parameter count");
  }
  auto [grad, outcome] = compute_gradients(dual, windows, signals, threads);
  const auto flat = grad.flatten();
  const auto delta = adadelta_update(flat, opt, cfg, lr);
  apply_update(dual, delta);
  return outcome;
}

/// Validation metric (lower is better) of a network under a signal plan.
using Metric = std::function<double(const Network&, const QuantizationPlan&)>;

struct TrainResult {
  DualWeights best;
  double best_metric = 0.0;
  std::vector<LogRow> log;
  OptimizerState optimizer;
  double final_lr = 0.0;
  std::size_t updates = 0;
};

/// Multi-stream truncated BPTT. Each update advances every stream by F
/// frames and backpropagates through the last B frames (B-F of them already
/// seen); loss terms come only from the F new frames and are averaged over
/// all S*F of them. Stream state carries over between updates and restarts
/// at zero each epoch. Returns the best-validation weights.
inline TrainResult train(DualWeights start, const QuantizationPlan& signals, const LabeledSequence& data,
                         const Metric& valid, const TrainConfig& cfg,
                         const std::function<void(const LogRow&)>& on_log = {}) {
  cfg.validate();
  if (!start.consistent()) throw IntegrityError("train: shadow weights differ from Q(master)");
  if (data.input_dim != start.master.topology().input_size()) {
    throw ShapeError("train: data input width " + std::to_string(data.input_dim) + " but network expects " +
                     std::to_string(start.master.topology().input_size()));
  }
  const NetworkTopology topo = start.master.topology();
  const std::size_t S = cfg.streams;
  const std::size_t F = cfg.forward_steps;
  const std::size_t B = cfg.backward_steps;
  const std::size_t threads = cfg.resolved_threads();
  StreamBatcher batcher(data.size(), S, F);
  const double frame_weight = 1.0 / static_cast<double>(S * F);
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  DualWeights dual = std::move(start);
  result.best = dual;
  result.best_metric = valid(dual.shadow, signals);
  OptimizerState opt = OptimizerState::zeros(dual.master.parameter_count());
  double lr = cfg.initial_lr;
  std::vector<double> metrics;
  std::size_t last_change = 0;
  std::size_t updates = 0;
  bool stop = false;

  std::vector<std::size_t> hist_start(S);
  std::vector<LstmState> hist_state(S, LstmState::zeros(topo));
  std::vector<StreamChunk> chunks;
  std::vector<StreamWindow> windows(S);
  double loss_sum = 0.0;
  std::size_t loss_count = 0;

  auto evaluate = [&](std::size_t epoch) {
    const double metric = valid(dual.shadow, signals);
    LogRow row{epoch, updates, lr, loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0, metric,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    loss_sum = 0.0;
    loss_count = 0;
    result.log.push_back(row);
    if (on_log) on_log(row);
    if (!std::isfinite(metric)) throw TrainingDiverged("validation metric is not finite", result.best);
    metrics.push_back(metric);
    if (metric < result.best_metric) {
      result.best_metric = metric;
      result.best = dual;
    }
    switch (lr_and_stopping(metrics, lr, cfg, last_change)) {
      case LrDecision::continue_training: break;
      case LrDecision::decay:
        lr *= cfg.lr_decay_factor;
        last_change = metrics.size();
        break;
      case LrDecision::stop: stop = true; break;
    }
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    batcher.reset();
    while (!stop && batcher.next(chunks)) {
      for (std::size_t s = 0; s < S; ++s) {
        const auto& ch = chunks[s];
        if (!ch.continues) {
          hist_start[s] = ch.begin;
          hist_state[s] = LstmState::zeros(topo);
        }
        const std::size_t wbegin = hist_start[s];
        const std::size_t wlen = ch.begin + F - wbegin;
        auto& w = windows[s];
        data.fill_inputs(wbegin, wlen, w.inputs);
        w.resets.assign(data.resets.begin() + static_cast<std::ptrdiff_t>(wbegin),
                        data.resets.begin() + static_cast<std::ptrdiff_t>(wbegin + wlen));
        w.targets.loss = LossKind::cross_entropy;
        w.targets.classes.assign(data.targets.begin() + static_cast<std::ptrdiff_t>(wbegin),
                                 data.targets.begin() + static_cast<std::ptrdiff_t>(wbegin + wlen));
        w.targets.weights.assign(wlen, 0.0);
        std::fill(w.targets.weights.begin() + static_cast<std::ptrdiff_t>(ch.begin - wbegin), w.targets.weights.end(),
                  frame_weight);
        w.initial = hist_state[s];
        const std::size_t stream_begin = batcher.stream_offset(s);
        const std::size_t next_start = std::max(stream_begin, ch.begin + 2 * F >= B ? ch.begin + 2 * F - B : 0);
        const std::size_t clipped = std::max(next_start, wbegin);
        w.carry_after = clipped - wbegin;
        hist_start[s] = clipped;
      }
      StepOutcome out;
      try {
        out = retrain_step(dual, windows, opt, cfg, lr, signals, threads);
      } catch (const NumericFault& e) {
        throw TrainingDiverged(std::string("training diverged: ") + e.what(), result.best);
      }
      if (!std::isfinite(out.loss)) throw TrainingDiverged("training loss is not finite", result.best);
      for (std::size_t s = 0; s < S; ++s) hist_state[s] = std::move(out.carry[s]);
      ++updates;
      loss_sum += out.loss;
      ++loss_count;
      if (cfg.eval_every > 0 && updates % cfg.eval_every == 0) evaluate(epoch);
    }
    if (cfg.eval_every == 0 && !stop) evaluate(epoch);
  }
  result.optimizer = std::move(opt);
  result.final_lr = lr;
  result.updates = updates;
  return result;
}

/// Float training from a seeded initialization.
inline TrainResult train_float(const NetworkTopology& topology, const LabeledSequence& data, const Metric& valid,
                               const TrainConfig& cfg, const std::function<void(const LogRow&)>& on_log = {}) {
  SeededRng rng(cfg.seed);
  return train(DualWeights::floating(Network::initialize(topology, rng)), QuantizationPlan{}, data, valid, cfg,
               on_log);
}

struct BpcResult {
  double bpc = 0.0;
  /// Predictions whose probability was clamped to 1e-12.
  std::size_t clamped = 0;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean -log2 p(target) over rows of a probability matrix.
inline BpcResult bpc_from_probabilities(const Tensor2D& probs, std::span<const std::uint32_t> targets) {
  if (probs.rows() != targets.size() || targets.empty()) {
    throw ArgumentError("bpc_from_probabilities: need one non-empty probability row per target");
  }
  BpcResult r;
  double sum = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    double p = probs(t, targets[t]);
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      ++r.clamped;
    }
    sum -= std::log2(p);
  }
  r.bpc = sum / static_cast<double>(targets.size());
  return r;
}

/// Bits per character of next-byte prediction over `text`, run as one
/// continuous stream from a zero state.
inline BpcResult evaluate_bpc(const Network& net, const QuantizationPlan& plan, std::span<const std::uint8_t> text,
                              std::size_t chunk = 512) {
  if (text.size() < 2) throw ArgumentError("evaluate_bpc: sequence needs at least 2 characters");
  const auto seq = char_lm_sequence(text);
  LstmState state = LstmState::zeros(net.topology());
  std::optional<Network> quantized;
  const Network* weights = &net;
  QuantizationPlan signal_plan = plan;
  if (plan.has_weight_quant()) {
    quantized = quantize_network(net, plan.weights);
    weights = &*quantized;
    signal_plan.weights.clear();
  }
  BpcResult total;
  double sum = 0.0;
  Tensor2D inputs;
  for (std::size_t begin = 0; begin < seq.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, seq.size() - begin);
    seq.fill_inputs(begin, n, inputs);
    auto fwd = network_forward(*weights, inputs, state, &signal_plan);
    const auto r = bpc_from_probabilities(
        fwd.outputs, std::span<const std::uint32_t>(seq.targets).subspan(begin, n));
    sum += r.bpc * static_cast<double>(n);
    total.clamped += r.clamped;
    state = std::move(fwd.final_state);
  }
  total.bpc = sum / static_cast<double>(seq.size());
  return total;
}

inline double frame_error_rate(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> labels) {
  if (labels.empty() || predicted.size() != labels.size()) {
    throw ArgumentError("frame_error_rate: need equal-length non-empty prediction and label lists");
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) wrong += predicted[i] != labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(labels.size());
}

/// Percentage of frames whose argmax output differs from the label. Each
/// sequence starts from a zero state.
inline double evaluate_fer(const Network& net, const QuantizationPlan& plan, std::span<const FrameSequence> frames) {
  std::vector<std::uint32_t> predicted, labels;
  std::optional<Network> quantized;
  const Network* weights = &net;
  QuantizationPlan signal_plan = plan;
  if (plan.has_weight_quant()) {
    quantized = quantize_network(net, plan.weights);
    weights = &*quantized;
    signal_plan.weights.clear();
  }
  const std::size_t classes = net.topology().output_size();
  for (const auto& s : frames) {
    if (s.labels.empty()) continue;
    auto fwd = network_forward(*weights, s.features, LstmState::zeros(net.topology()), &signal_plan);
    for (std::size_t t = 0; t < s.labels.size(); ++t) {
      if (s.labels[t] >= classes) throw ArgumentError("evaluate_fer: label outside class range");
      auto row = fwd.outputs.row(t);
      predicted.push_back(static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin()));
      labels.push_back(s.labels[t]);
    }
  }
  if (labels.empty()) throw ArgumentError("evaluate_fer: empty frame set");
  return frame_error_rate(predicted, labels);
}

}  // namespace rnnquant

#endif  // RNNQUANT_TRAINER_HPP
