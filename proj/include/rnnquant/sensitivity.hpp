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

#ifndef RNNQUANT_SENSITIVITY_HPP
#define RNNQUANT_SENSITIVITY_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "rnnquant/binary_io.hpp"
#include "rnnquant/error.hpp"
#include "rnnquant/lstm.hpp"
#include "rnnquant/trainer.hpp"

namespace rnnquant {

enum class SweepAxis { weight_group, signal_layer };
enum class SweepMode { direct, retrain };

inline std::string to_string(SweepMode m) { return m == SweepMode::direct ? "direct" : "retrain"; }
inline std::string to_string(SweepAxis a) { return a == SweepAxis::weight_group ? "weights" : "signals"; }

struct SensitivityEntry {
  std::string label;
  int bits = 0;
  double metric = 0.0;
  SweepMode mode = SweepMode::direct;

  bool operator==(const SensitivityEntry&) const = default;
};

/// Floating-point reference; written with bit-width 0.
struct FloatBaseline {
  std::string label;
  double metric = 0.0;

  bool operator==(const FloatBaseline&) const = default;
};

struct SensitivityReport {
  SweepAxis axis = SweepAxis::weight_group;
  std::vector<SensitivityEntry> entries;
  std::vector<FloatBaseline> float_baselines;

  void add(SensitivityEntry e) {
    if (!std::isfinite(e.metric)) throw NumericFault("sensitivity metric for " + e.label + " is not finite");
    for (const auto& x : entries) {
      if (x.label == e.label && x.bits == e.bits && x.mode == e.mode) {
        throw ArgumentError("duplicate sensitivity entry " + e.label + "/" + std::to_string(e.bits));
      }
    }
    entries.push_back(std::move(e));
  }

  void add(std::span<const SensitivityEntry> es) {
    for (const auto& e : es) add(e);
  }

  /// Entries ordered by (label, bits, mode).
  void sort() {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return std::tie(a.label, a.bits, a.mode) < std::tie(b.label, b.bits, b.mode);
    });
  }

  bool operator==(const SensitivityReport&) const = default;
};

struct RetrainContext {
  const LabeledSequence* data = nullptr;
  TrainConfig config;
};

/// Quantizes only `group` (its own L2-optimal step) at each bit-width, with
/// every other group left in floating point, and evaluates. Retrain mode
/// retrains under that single-group quantization before evaluating.
inline std::vector<SensitivityEntry> weight_group_sweep(const Network& net, const std::string& group,
                                                        std::span<const int> bits, const Metric& eval,
                                                        SweepMode mode = SweepMode::direct,
                                                        const RetrainContext* retrain = nullptr) {
  const std::size_t g = find_group(net.topology(), group);
  if (mode == SweepMode::retrain && (retrain == nullptr || retrain->data == nullptr)) {
    throw ArgumentError("retrain-mode sweep needs training data");
  }
  std::vector<SensitivityEntry> out;
  for (int b : bits) {
    if (b < 2) throw ArgumentError("sweep bit-widths must be >= 2");
    std::vector<int> per_group(net.group_count(), 0);
    per_group[g] = b;
    DualWeights dual = direct_quantize(net, per_group);
    double metric;
    if (mode == SweepMode::direct) {
      metric = eval(dual.shadow, QuantizationPlan{});
    } else {
      metric = train(std::move(dual), QuantizationPlan{}, *retrain->data, eval, retrain->config).best_metric;
    }
    out.push_back({group, b, metric, mode});
  }
  return out;
}

/// Plan with only signal layer `index` quantized at `bits`. The input layer
/// uses a linear grid over `input_range`; hidden layers the tanh grid.
inline QuantizationPlan single_signal_plan(const NetworkTopology& topo, std::size_t index, int bits,
                                           std::pair<double, double> input_range = {-3.0, 3.0},
                                           bool quantize_gates = false) {
  QuantizationPlan plan;
  plan.signals.assign(topo.hidden_layers() + 1, std::nullopt);
  plan.signals[index] = index == 0 ? SignalQuantSpec::linear(bits, input_range.first, input_range.second)
                                   : SignalQuantSpec::tanh(bits);
  plan.signals[index]->validate();
  plan.quantize_gates = quantize_gates;
  return plan;
}

/// Quantizes only the output signals of `layer` (all weights stay float).
inline std::vector<SensitivityEntry> signal_layer_sweep(const Network& net, const std::string& layer,
                                                        std::span<const int> bits, const Metric& eval,
                                                        std::pair<double, double> input_range = {-3.0, 3.0},
                                                        bool quantize_gates = false) {
  const std::size_t index = find_signal_layer(net.topology(), layer);
  std::vector<SensitivityEntry> out;
  for (int b : bits) {
    if (b < 2) throw ArgumentError("sweep bit-widths must be >= 2");
    const auto plan = single_signal_plan(net.topology(), index, b, input_range, quantize_gates);
    out.push_back({layer, b, eval(net, plan), SweepMode::direct});
  }
  return out;
}

inline std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header `label,bits,metric,flag`; flag is direct, retrain, or
/// float (baseline rows, bits = 0).
inline std::string report_csv(const SensitivityReport& report, const std::string& config_hash = {}) {
  SensitivityReport sorted = report;
  sorted.sort();
  std::string out = "label,bits,metric,flag\n";
  for (const auto& e : sorted.entries) {
    out += e.label + "," + std::to_string(e.bits) + "," + format_metric(e.metric) + "," + to_string(e.mode) + "\n";
  }
  for (const auto& b : sorted.float_baselines) out += b.label + ",0," + format_metric(b.metric) + ",float\n";
  if (!config_hash.empty()) out += "# config_hash=" + config_hash + "\n";
  return out;
}

inline SensitivityReport parse_report_csv(const std::string& text, SweepAxis axis) {
  SensitivityReport report;
  report.axis = axis;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "label,bits,metric,flag") throw DataError("sensitivity CSV: unexpected header '" + line + "'");
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (cols.size() != 4) throw DataError("sensitivity CSV line " + std::to_string(lineno) + ": expected 4 columns");
    const int bits = std::stoi(cols[1]);
    const double metric = std::strtod(cols[2].c_str(), nullptr);
    if (cols[3] == "float") {
      report.float_baselines.push_back({cols[0], metric});
    } else if (cols[3] == "direct" || cols[3] == "retrain") {
      report.add({cols[0], bits, metric, cols[3] == "direct" ? SweepMode::direct : SweepMode::retrain});
    } else {
      throw DataError("sensitivity CSV line " + std::to_string(lineno) + ": unknown flag '" + cols[3] + "'");
    }
  }
  return report;
}

struct ReportPaths {
  std::filesystem::path csv;
  std::filesystem::path plot_data;
};

/// Writes `<prefix>.csv` and a whitespace-separated `<prefix>.dat` for
/// plotting tools.
inline ReportPaths emit_report(const SensitivityReport& report, const std::filesystem::path& prefix,
                               const std::string& config_hash = {}) {
  if (report.entries.empty()) throw ArgumentError("emit_report: report has no entries");
  ReportPaths paths{prefix.string() + ".csv", prefix.string() + ".dat"};
  binio::write_text(paths.csv, report_csv(report, config_hash));

  SensitivityReport sorted = report;
  sorted.sort();
  std::string dat = "# axis=" + to_string(report.axis) + "\n";
  if (!config_hash.empty()) dat += "# config_hash=" + config_hash + "\n";
  dat += "# label bits metric flag (bits 0 = floating-point baseline)\n";
  for (const auto& e : sorted.entries) {
    dat += e.label + " " + std::to_string(e.bits) + " " + format_metric(e.metric) + " " + to_string(e.mode) + "\n";
  }
  for (const auto& b : sorted.float_baselines) dat += b.label + " 0 " + format_metric(b.metric) + " float\n";
  binio::write_text(paths.plot_data, dat);
  return paths;
}

}  // namespace rnnquant

#endif  // RNNQUANT_SENSITIVITY_HPP
