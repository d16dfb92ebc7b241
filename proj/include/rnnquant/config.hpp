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

#ifndef RNNQUANT_CONFIG_HPP
#define RNNQUANT_CONFIG_HPP

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rnnquant/data.hpp"
#include "rnnquant/error.hpp"
#include "rnnquant/lstm.hpp"
#include "rnnquant/sensitivity.hpp"
#include "rnnquant/trainer.hpp"

namespace rnnquant {

enum class TaskKind { char_lm, frame_classify };

/// Everything one CLI invocation needs. Bit vectors use 0 for "leave in
/// floating point".
struct RunConfig {
  TaskKind task = TaskKind::char_lm;
  /// Corpus file (char-lm) or frame dataset file (frame-classify; empty
  /// means generate the synthetic task from `frames`).
  std::string data;
  std::string output_dir = "rnq_out";
  std::vector<std::size_t> hidden{64, 64, 64};
  SplitFractions splits;
  FrameTaskOptions frames;
  TrainConfig train;
  std::size_t retrain_epochs = 3;
  /// One entry per weight group, or empty.
  std::vector<int> weight_bits;
  /// Either one entry per hidden layer (L1..Lk) or one per signal layer
  /// (Input, L1..Lk), or empty.
  std::vector<int> signal_bits;
  bool quantize_gates = false;
  double input_lo = -3.0;
  double input_hi = 3.0;
  std::vector<int> sweep_bits{2, 3, 4, 8, 16};
  SweepMode sweep_mode = SweepMode::direct;
  SweepAxis sweep_axis = SweepAxis::weight_group;
  /// Retrain-mode sweep budget as a fraction of train.max_epochs.
  double sweep_retrain_fraction = 0.2;

  NetworkTopology topology() const {
    NetworkTopology t;
    t.layer_sizes.push_back(task == TaskKind::char_lm ? kByteAlphabet : frames.feature_dim);
    t.layer_sizes.insert(t.layer_sizes.end(), hidden.begin(), hidden.end());
    t.layer_sizes.push_back(task == TaskKind::char_lm ? kByteAlphabet : frames.classes);
    t.output_kind = OutputKind::softmax;
    return t;
  }

  /// Per-signal-layer plan built from `signal_bits`.
  QuantizationPlan signal_plan() const {
    QuantizationPlan p;
    p.quantize_gates = quantize_gates;
    if (signal_bits.empty()) return p;
    p.signals.assign(hidden.size() + 1, std::nullopt);
    const std::size_t shift = signal_bits.size() == hidden.size() ? 1 : 0;
    for (std::size_t i = 0; i < signal_bits.size(); ++i) {
      const int b = signal_bits[i];
      if (b == 0) continue;
      const std::size_t idx = i + shift;
      p.signals[idx] = idx == 0 ? SignalQuantSpec::linear(b, input_lo, input_hi) : SignalQuantSpec::tanh(b);
    }
    return p;
  }

  void validate() const {
    if (hidden.empty()) throw ConfigError("topology.hidden: need at least one hidden layer");
    for (auto h : hidden) {
      if (h == 0) throw ConfigError("topology.hidden: layer sizes must be >= 1");
    }
    const std::size_t groups = 2 * hidden.size() + 1;
    if (!weight_bits.empty() && weight_bits.size() != groups) {
      throw ConfigError("quant.weight_bits: expected " + std::to_string(groups) + " entries (one per weight group), got " +
                        std::to_string(weight_bits.size()));
    }
    for (int b : weight_bits) {
      if (b != 0 && (b < 2 || b > 62)) throw ConfigError("quant.weight_bits: entries must be 0 or in [2,62]");
    }
    if (!signal_bits.empty() && signal_bits.size() != hidden.size() && signal_bits.size() != hidden.size() + 1) {
      throw ConfigError("quant.signal_bits: expected " + std::to_string(hidden.size()) + " or " +
                        std::to_string(hidden.size() + 1) + " entries, got " + std::to_string(signal_bits.size()));
    }
    for (int b : signal_bits) {
      if (b != 0 && (b < 2 || b > 62)) throw ConfigError("quant.signal_bits: entries must be 0 or in [2,62]");
    }
    if (!(input_lo < input_hi)) throw ConfigError("quant.input_range: need lo < hi");
    for (int b : sweep_bits) {
      if (b < 2 || b > 62) throw ConfigError("sensitivity.bits: entries must be in [2,62]");
    }
    if (!(sweep_retrain_fraction > 0.0 && sweep_retrain_fraction <= 1.0)) {
      throw ConfigError("sensitivity.retrain_fraction must be in (0,1]");
    }
    if (retrain_epochs < 1) throw ConfigError("retrain.max_epochs must be >= 1");
    try {
      train.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  }

  bool operator==(const RunConfig&) const = default;
};

/// Dash-separated bit vector, e.g. "3-2-2-2-2-2-2".
inline std::vector<int> parse_bit_vector(std::string_view text) {
  std::vector<int> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto dash = text.find('-', start);
    const auto token = text.substr(start, dash == std::string_view::npos ? std::string_view::npos : dash - start);
    if (token.empty() || token.find_first_not_of("0123456789") != std::string_view::npos) {
      throw ConfigError("bad bit vector '" + std::string(text) + "'");
    }
    out.push_back(std::stoi(std::string(token)));
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  return out;
}

inline std::string format_bit_vector(const std::vector<int>& bits) {
  std::string s;
  for (std::size_t i = 0; i < bits.size(); ++i) s += (i ? "-" : "") + std::to_string(bits[i]);
  return s;
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ValueError {
  std::string expected;
};

inline double to_double(const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) throw ValueError{"a real number"};
  return d;
}

inline std::uint64_t to_uint(const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) throw ValueError{"a non-negative integer"};
  errno = 0;
  const auto x = std::strtoull(v.c_str(), nullptr, 10);
  if (errno == ERANGE) throw ValueError{"a non-negative integer"};
  return x;
}

inline bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValueError{"a boolean (true/false)"};
}

inline std::vector<std::size_t> to_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(to_uint(trim(tok)));
  if (out.empty()) throw ValueError{"a comma-separated list of integers"};
  return out;
}

inline std::vector<int> to_bits(const std::string& v) {
  try {
    return parse_bit_vector(v);
  } catch (const ConfigError&) {
    throw ValueError{"a dash-separated bit vector like 3-2-2"};
  }
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<std::pair<std::string, Field>>& config_fields() {
  using C = RunConfig;
  static const std::vector<std::pair<std::string, Field>> fields = [] {
    std::vector<std::pair<std::string, Field>> f;
    f.push_back({"run.task",
                 {[](C& c, const std::string& v) {
                    if (v == "char-lm") {
                      c.task = TaskKind::char_lm;
                    } else if (v == "frame-classify") {
                      c.task = TaskKind::frame_classify;
                    } else {
                      throw ValueError{"one of char-lm, frame-classify"};
                    }
                  },
                  [](const C& c) { return std::string(c.task == TaskKind::char_lm ? "char-lm" : "frame-classify"); }}});
    f.push_back({"run.data", {[](C& c, const std::string& v) { c.data = v; }, [](const C& c) { return c.data; }}});
    f.push_back({"run.output_dir",
                 {[](C& c, const std::string& v) { c.output_dir = v; }, [](const C& c) { return c.output_dir; }}});
    f.push_back({"topology.hidden",
                 {[](C& c, const std::string& v) { c.hidden = to_size_list(v); },
                  [](const C& c) {
                    std::string s;
                    for (std::size_t i = 0; i < c.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(c.hidden[i]);
                    return s;
                  }}});

#define RNQ_REAL(key, member)                                                       \
  f.push_back({key,                                                                 \
               {[](C& c, const std::string& v) { c.member = to_double(v); },        \
                [](const C& c) { return fmt_double(c.member); }}})
#define RNQ_UINT(key, member, type)                                                 \
  f.push_back({key,                                                                 \
               {[](C& c, const std::string& v) { c.member = static_cast<type>(to_uint(v)); }, \
                [](const C& c) { return std::to_string(c.member); }}})
#define RNQ_BOOL(key, member)                                                       \
  f.push_back({key,                                                                 \
               {[](C& c, const std::string& v) { c.member = to_bool(v); },          \
                [](const C& c) { return std::string(c.member ? "true" : "false"); }}})
#define RNQ_BITS(key, member)                                                       \
  f.push_back({key,                                                                 \
               {[](C& c, const std::string& v) { c.member = to_bits(v); },          \
                [](const C& c) { return format_bit_vector(c.member); }}})

    RNQ_REAL("corpus.train_fraction", splits.train);
    RNQ_REAL("corpus.valid_fraction", splits.valid);
    RNQ_REAL("corpus.test_fraction", splits.test);

    RNQ_UINT("frames.seed", frames.seed, std::uint64_t);
    RNQ_UINT("frames.classes", frames.classes, std::size_t);
    RNQ_UINT("frames.feature_dim", frames.feature_dim, std::size_t);
    RNQ_UINT("frames.sequences", frames.sequences, std::size_t);
    RNQ_UINT("frames.min_length", frames.min_length, std::size_t);
    RNQ_UINT("frames.max_length", frames.max_length, std::size_t);
    RNQ_REAL("frames.valid_fraction", frames.valid_fraction);
    RNQ_REAL("frames.test_fraction", frames.test_fraction);
    RNQ_REAL("frames.stay_probability", frames.stay_probability);
    RNQ_REAL("frames.successor_probability", frames.successor_probability);
    RNQ_REAL("frames.noise", frames.noise);
    RNQ_REAL("frames.smoothing", frames.smoothing);

    RNQ_UINT("train.forward_steps", train.forward_steps, std::size_t);
    RNQ_UINT("train.backward_steps", train.backward_steps, std::size_t);
    RNQ_UINT("train.streams", train.streams, std::size_t);
    RNQ_REAL("train.initial_lr", train.initial_lr);
    RNQ_REAL("train.lr_floor", train.lr_floor);
    RNQ_REAL("train.lr_decay_factor", train.lr_decay_factor);
    RNQ_REAL("train.momentum", train.momentum);
    RNQ_BOOL("train.nesterov", train.nesterov);
    RNQ_REAL("train.adadelta_rho", train.adadelta_rho);
    RNQ_REAL("train.adadelta_eps", train.adadelta_eps);
    RNQ_UINT("train.early_stop_patience", train.early_stop_patience, std::size_t);
    RNQ_UINT("train.max_epochs", train.max_epochs, std::size_t);
    RNQ_UINT("train.eval_every", train.eval_every, std::size_t);
    RNQ_UINT("train.seed", train.seed, std::uint64_t);
    RNQ_UINT("train.threads", train.threads, std::size_t);

    RNQ_UINT("retrain.max_epochs", retrain_epochs, std::size_t);

    RNQ_BITS("quant.weight_bits", weight_bits);
    RNQ_BITS("quant.signal_bits", signal_bits);
    RNQ_BOOL("quant.quantize_gates", quantize_gates);
    f.push_back({"quant.input_range",
                 {[](C& c, const std::string& v) {
                    const auto comma = v.find(',');
                    if (comma == std::string::npos) throw ValueError{"two reals 'lo,hi'"};
                    c.input_lo = to_double(trim(v.substr(0, comma)));
                    c.input_hi = to_double(trim(v.substr(comma + 1)));
                  },
                  [](const C& c) { return fmt_double(c.input_lo) + "," + fmt_double(c.input_hi); }}});

    RNQ_BITS("sensitivity.bits", sweep_bits);
    f.push_back({"sensitivity.mode",
                 {[](C& c, const std::string& v) {
                    if (v == "direct") {
                      c.sweep_mode = SweepMode::direct;
                    } else if (v == "retrain") {
                      c.sweep_mode = SweepMode::retrain;
                    } else {
                      throw ValueError{"one of direct, retrain"};
                    }
                  },
                  [](const C& c) { return to_string(c.sweep_mode); }}});
    f.push_back({"sensitivity.axis",
                 {[](C& c, const std::string& v) {
                    if (v == "weights") {
                      c.sweep_axis = SweepAxis::weight_group;
                    } else if (v == "signals") {
                      c.sweep_axis = SweepAxis::signal_layer;
                    } else {
                      throw ValueError{"one of weights, signals"};
                    }
                  },
                  [](const C& c) { return to_string(c.sweep_axis); }}});
    RNQ_REAL("sensitivity.retrain_fraction", sweep_retrain_fraction);

#undef RNQ_REAL
#undef RNQ_UINT
#undef RNQ_BOOL
#undef RNQ_BITS
    return f;
  }();
  return fields;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::config_fields()) keys.push_back(k);
  return keys;
}

inline std::string nearest_config_key(std::string_view key) {
  std::string best;
  std::size_t best_d = SIZE_MAX;
  for (const auto& [k, _] : detail::config_fields()) {
    const auto d = edit_distance(key, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

/// Sets one fully-qualified `section.key`. `line` is used in messages
/// (0 for command-line overrides).
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value, std::size_t line = 0) {
  const std::string where = line ? "line " + std::to_string(line) + ": " : "";
  for (const auto& [k, field] : detail::config_fields()) {
    if (k != key) continue;
    try {
      field.set(cfg, value);
    } catch (const detail::ValueError& e) {
      throw ConfigError(where + "key '" + key + "' expects " + e.expected + ", got '" + value + "'");
    }
    return;
  }
  throw ConfigError(where + "unknown key '" + key + "'; nearest valid key is '" + nearest_config_key(key) + "'");
}

/// Grammar: `[section]` headers, `key = value` lines, `#` starts a comment.
/// Keys may also be written fully qualified as `section.key`. Unset keys
/// keep their defaults; the result is validated.
inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key.find('.') == std::string::npos) {
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(lineno) + ": key '" + key +
                          "' outside a section; nearest valid key is '" + nearest_config_key(key) + "'");
      }
      key = section + "." + key;
    }
    set_config_value(cfg, key, value, lineno);
  }
  cfg.validate();
  return cfg;
}

/// Canonical text form with every key; parse_config(emit_config(c)) == c.
inline std::string emit_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [k, field] : detail::config_fields()) {
    const auto dot = k.find('.');
    const std::string sec = k.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += k.substr(dot + 1) + " = " + field.get(cfg) + "\n";
  }
  return out;
}

/// Hex fingerprint of the resolved configuration.
inline std::string config_hash(const RunConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(emit_config(cfg))));
  return buf;
}

}  // namespace rnnquant

#endif  // RNNQUANT_CONFIG_HPP
