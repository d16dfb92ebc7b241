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

#ifndef RNNQUANT_CHECKPOINT_HPP
#define RNNQUANT_CHECKPOINT_HPP

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rnnquant/binary_io.hpp"
#include "rnnquant/error.hpp"
#include "rnnquant/lstm.hpp"
#include "rnnquant/trainer.hpp"

namespace rnnquant {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  Network master;
  /// Per weight group; nullopt for floating-point groups.
  std::vector<std::optional<GroupQuantization>> weight_quant;
  /// Per signal layer (Input, L1, ...).
  std::vector<std::optional<SignalQuantSpec>> signal_quant;
  bool quantize_gates = false;
  std::optional<OptimizerState> optimizer;
  std::string rng_algorithm{SeededRng::algorithm};
  std::uint64_t seed = 0;
  std::vector<LogRow> log_tail;
  std::string config_hash;

  static Checkpoint from(const DualWeights& dual) {
    Checkpoint c;
    c.master = dual.master;
    c.weight_quant = dual.groups;
    return c;
  }

  DualWeights dual() const {
    DualWeights d = DualWeights::floating(master);
    if (!weight_quant.empty()) d.groups = weight_quant;
    d.requantize();
    return d;
  }

  QuantizationPlan signal_plan() const {
    QuantizationPlan p;
    p.signals = signal_quant;
    p.quantize_gates = quantize_gates;
    return p;
  }

  bool operator==(const Checkpoint&) const = default;
};

namespace detail {

inline std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_double_exact(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw CorruptionError("checkpoint: bad number '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::uint64_t parse_u64(const std::string& s) {
  char* end = nullptr;
  const auto v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') throw CorruptionError("checkpoint: bad integer '" + s + "'");
  return v;
}

}  // namespace detail

/// Container layout, little-endian:
///   bytes 0-3   magic "RNQ1"
///   bytes 4-7   u32 format version
///   bytes 8-15  u64 descriptor length L
///   L bytes     UTF-8 descriptor, one `key=value` per line
///   zero padding to an 8-byte boundary
///   u64 array count, then per array: u64 element count, float64 values
///   u64 FNV-1a checksum of every preceding byte
/// Arrays appear per hidden layer as input weights, recurrent weights,
/// biases; then output weights and output biases; then, when present, the
/// optimizer's mean squared gradient, mean squared update, and velocity.
/// Packed gate rows are ordered input, forget, cell candidate, output.
inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
  const auto& topo = c.master.topology();
  std::ostringstream d;
  d << "format=rnnquant-checkpoint\n";
  d << "layer_sizes=";
  for (std::size_t i = 0; i < topo.layer_sizes.size(); ++i) d << (i ? "," : "") << topo.layer_sizes[i];
  d << "\noutput=" << (topo.output_kind == OutputKind::softmax ? "softmax" : "linear") << "\n";
  d << "gate_order=input,forget,cell,output\n";
  d << "rng=" << c.rng_algorithm << "\nseed=" << c.seed << "\n";
  d << "config_hash=" << c.config_hash << "\n";
  for (std::size_t g = 0; g < c.weight_quant.size(); ++g) {
    const auto& q = c.weight_quant[g];
    d << "weight_quant." << g << "=";
    if (q) {
      d << q->bits << "," << q->spec.levels << "," << detail::hex_double(q->spec.step) << ","
        << detail::hex_double(q->error) << "," << q->iterations;
    } else {
      d << "none";
    }
    d << "\n";
  }
  for (std::size_t i = 0; i < c.signal_quant.size(); ++i) {
    const auto& s = c.signal_quant[i];
    d << "signal_quant." << i << "=";
    if (s) {
      d << to_string(s->kind) << "," << s->bits << "," << detail::hex_double(s->lo) << ","
        << detail::hex_double(s->hi);
    } else {
      d << "none";
    }
    d << "\n";
  }
  d << "quantize_gates=" << (c.quantize_gates ? 1 : 0) << "\n";
  d << "optimizer=" << (c.optimizer ? 1 : 0) << "\n";
  d << "log_rows=" << c.log_tail.size() << "\n";
  for (std::size_t i = 0; i < c.log_tail.size(); ++i) {
    const auto& r = c.log_tail[i];
    d << "log." << i << "=" << r.epoch << "," << r.update_count << "," << detail::hex_double(r.learning_rate) << ","
      << detail::hex_double(r.train_loss) << "," << detail::hex_double(r.valid_metric) << ","
      << detail::hex_double(r.wall_seconds) << "\n";
  }
  const std::string desc = d.str();

  binio::Writer w;
  w.put_bytes("RNQ1");
  w.put<std::uint32_t>(c.version);
  w.put<std::uint64_t>(desc.size());
  w.put_bytes(desc);
  w.pad_to(8);
  std::vector<std::span<const double>> arrays;
  for (std::size_t k = 0; k < topo.hidden_layers(); ++k) {
    const auto& l = c.master.layers()[k];
    arrays.push_back(l.input_weights.values());
    arrays.push_back(l.recurrent_weights.values());
    arrays.push_back(l.biases);
  }
  arrays.push_back(c.master.output().weights.values());
  arrays.push_back(c.master.output().biases);
  if (c.optimizer) {
    arrays.push_back(c.optimizer->mean_sq_grad);
    arrays.push_back(c.optimizer->mean_sq_update);
    arrays.push_back(c.optimizer->velocity);
  }
  w.put<std::uint64_t>(arrays.size());
  for (auto a : arrays) w.put_f64_array(a);
  w.seal();
  return w.bytes();
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  binio::write_file(path, encode_checkpoint(c));
}

inline Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  binio::Reader head(bytes);
  if (bytes.size() < 8 || head.get_string(4) != "RNQ1") throw CorruptionError("not a checkpoint (bad magic)");
  const auto version = head.get<std::uint32_t>();
  if (version > kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is newer than supported version " +
                       std::to_string(kCheckpointVersion));
  }
  if (version == 0) throw VersionError("checkpoint version 0 is invalid");
  const auto body = binio::verify_sealed(bytes);

  binio::Reader r(body);
  r.get_string(8);
  const auto desc_len = r.get<std::uint64_t>();
  if (desc_len > r.remaining()) throw CorruptionError("descriptor length exceeds file");
  const std::string desc = r.get_string(static_cast<std::size_t>(desc_len));
  r.skip_to_alignment(8);

  std::map<std::string, std::string> kv;
  {
    std::istringstream in(desc);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw CorruptionError("checkpoint descriptor line without '='");
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw CorruptionError("checkpoint descriptor missing '" + key + "'");
    return it->second;
  };
  if (need("format") != "rnnquant-checkpoint") throw CorruptionError("checkpoint descriptor has wrong format tag");

  Checkpoint c;
  c.version = version;
  NetworkTopology topo;
  for (const auto& s : detail::split(need("layer_sizes"), ',')) topo.layer_sizes.push_back(detail::parse_u64(s));
  const auto& out_kind = need("output");
  if (out_kind != "softmax" && out_kind != "linear") throw CorruptionError("unknown output kind");
  topo.output_kind = out_kind == "softmax" ? OutputKind::softmax : OutputKind::linear;
  try {
    topo.validate();
  } catch (const ArgumentError& e) {
    throw CorruptionError(std::string("checkpoint topology: ") + e.what());
  }
  c.rng_algorithm = need("rng");
  c.seed = detail::parse_u64(need("seed"));
  c.config_hash = need("config_hash");

  for (std::size_t g = 0; kv.count("weight_quant." + std::to_string(g)); ++g) {
    const auto& v = kv["weight_quant." + std::to_string(g)];
    if (v == "none") {
      c.weight_quant.emplace_back();
      continue;
    }
    const auto f = detail::split(v, ',');
    if (f.size() != 5) throw CorruptionError("weight_quant entry has wrong field count");
    GroupQuantization q;
    q.bits = static_cast<int>(detail::parse_u64(f[0]));
    q.spec.levels = static_cast<std::int64_t>(detail::parse_u64(f[1]));
    q.spec.step = detail::parse_double_exact(f[2]);
    q.error = detail::parse_double_exact(f[3]);
    q.iterations = static_cast<int>(detail::parse_u64(f[4]));
    try {
      q.spec.validate();
    } catch (const ArgumentError& e) {
      throw CorruptionError(std::string("checkpoint weight quantizer: ") + e.what());
    }
    c.weight_quant.push_back(q);
  }
  if (!c.weight_quant.empty() && c.weight_quant.size() != topo.group_count()) {
    throw CorruptionError("checkpoint weight quantizer count disagrees with topology");
  }
  for (std::size_t i = 0; kv.count("signal_quant." + std::to_string(i)); ++i) {
    const auto& v = kv["signal_quant." + std::to_string(i)];
    if (v == "none") {
      c.signal_quant.emplace_back();
      continue;
    }
    const auto f = detail::split(v, ',');
    if (f.size() != 4) throw CorruptionError("signal_quant entry has wrong field count");
    SignalQuantSpec s;
    try {
      s.kind = parse_activation_kind(f[0]);
      s.bits = static_cast<int>(detail::parse_u64(f[1]));
      s.lo = detail::parse_double_exact(f[2]);
      s.hi = detail::parse_double_exact(f[3]);
      s.validate();
    } catch (const ArgumentError& e) {
      throw CorruptionError(std::string("checkpoint signal quantizer: ") + e.what());
    }
    c.signal_quant.push_back(s);
  }
  c.quantize_gates = need("quantize_gates") == "1";
  const bool has_opt = need("optimizer") == "1";
  const auto rows = detail::parse_u64(need("log_rows"));
  for (std::uint64_t i = 0; i < rows; ++i) {
    const auto f = detail::split(need("log." + std::to_string(i)), ',');
    if (f.size() != 6) throw CorruptionError("log row has wrong field count");
    c.log_tail.push_back({detail::parse_u64(f[0]), detail::parse_u64(f[1]), detail::parse_double_exact(f[2]),
                          detail::parse_double_exact(f[3]), detail::parse_double_exact(f[4]),
                          detail::parse_double_exact(f[5])});
  }

  Network net(topo);
  const std::size_t expected_arrays = 3 * topo.hidden_layers() + 2 + (has_opt ? 3 : 0);
  if (r.get<std::uint64_t>() != expected_arrays) throw CorruptionError("checkpoint array count mismatch");
  auto load_into = [&](std::span<double> dst) {
    const auto v = r.get_f64_array(dst.size());
    if (v.size() != dst.size()) throw CorruptionError("checkpoint array length mismatch");
    std::copy(v.begin(), v.end(), dst.begin());
  };
  for (auto& l : net.layers()) {
    load_into(l.input_weights.values());
    load_into(l.recurrent_weights.values());
    load_into(l.biases);
  }
  load_into(net.output().weights.values());
  load_into(net.output().biases);
  if (has_opt) {
    auto st = OptimizerState::zeros(net.parameter_count());
    load_into(st.mean_sq_grad);
    load_into(st.mean_sq_update);
    load_into(st.velocity);
    c.optimizer = std::move(st);
  }
  if (r.remaining() != 0) throw CorruptionError("trailing bytes after checkpoint arrays");
  c.master = std::move(net);
  return c;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(binio::read_file(path));
}

}  // namespace rnnquant

#endif  // RNNQUANT_CHECKPOINT_HPP
