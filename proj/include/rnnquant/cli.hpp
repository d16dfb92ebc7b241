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

#ifndef RNNQUANT_CLI_HPP
#define RNNQUANT_CLI_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <new>
#include <ostream>
#include <string>
#include <vector>

#include "rnnquant/checkpoint.hpp"
#include "rnnquant/config.hpp"
#include "rnnquant/data.hpp"
#include "rnnquant/error.hpp"
#include "rnnquant/lstm.hpp"
#include "rnnquant/quantizer.hpp"
#include "rnnquant/sensitivity.hpp"
#include "rnnquant/trainer.hpp"

namespace rnnquant {

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"train", "quantize", "retrain", "sensitivity", "eval", "capacity"};
  return names;
}

struct CommandOptions {
  /// Input checkpoint; empty picks the previous stage's file in output_dir.
  std::string checkpoint;
  /// Split used by `eval`: valid or test.
  std::string split = "valid";
  /// Full layer-size list for `capacity`; empty uses the config topology.
  std::vector<std::size_t> layers;
};

/// Loaded task data: a training sequence plus split metrics.
struct TaskData {
  std::string metric_name;
  LabeledSequence train;
  std::function<double(const Network&, const QuantizationPlan&, const std::string&)> metric;

  Metric valid_metric() const {
    return [m = metric](const Network& n, const QuantizationPlan& p) { return m(n, p, "valid"); };
  }
};

inline TaskData load_task(const RunConfig& cfg) {
  TaskData t;
  if (cfg.task == TaskKind::char_lm) {
    if (cfg.data.empty()) throw ConfigError("run.data: char-lm needs a corpus file");
    auto corpus = std::make_shared<CharCorpus>(load_char_corpus(cfg.data, cfg.splits));
    t.metric_name = "bpc";
    t.train = char_lm_sequence(corpus->split(corpus->train));
    t.metric = [corpus](const Network& n, const QuantizationPlan& p, const std::string& split) {
      return evaluate_bpc(n, p, corpus->split(split == "test" ? corpus->test : corpus->valid)).bpc;
    };
    return t;
  }
  auto ds = std::make_shared<FrameDataset>(cfg.data.empty() ? synth_frame_task(cfg.frames)
                                                            : load_frame_dataset(cfg.data));
  if (ds->stats.empty()) normalize_features(*ds);
  if (ds->feature_dim != cfg.frames.feature_dim || ds->classes != cfg.frames.classes) {
    throw DataError("frame dataset has " + std::to_string(ds->feature_dim) + " features and " +
                    std::to_string(ds->classes) + " classes; config expects " +
                    std::to_string(cfg.frames.feature_dim) + " and " + std::to_string(cfg.frames.classes));
  }
  t.metric_name = "fer";
  t.train = frame_sequence(ds->train, ds->feature_dim, ds->classes);
  t.metric = [ds](const Network& n, const QuantizationPlan& p, const std::string& split) {
    return evaluate_fer(n, p, split == "test" ? ds->test : ds->valid);
  };
  return t;
}

namespace detail {

inline std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
  return std::filesystem::path(cfg.output_dir) / name;
}

inline void prepare_output(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.output_dir + ": " + ec.message());
  binio::write_text(out_path(cfg, "config.ini"), emit_config(cfg));
}

inline std::filesystem::path input_checkpoint(const RunConfig& cfg, const CommandOptions& opt,
                                              const std::string& fallback) {
  return opt.checkpoint.empty() ? out_path(cfg, fallback) : std::filesystem::path(opt.checkpoint);
}

inline void write_log(const std::filesystem::path& path, const std::vector<LogRow>& log, const std::string& hash) {
  std::string text = log_csv_header();
  for (const auto& r : log) text += log_csv_row(r);
  text += "# config_hash=" + hash + "\n";
  binio::write_text(path, text);
}

inline Checkpoint make_checkpoint(const DualWeights& dual, const QuantizationPlan& signals, const RunConfig& cfg,
                                  const std::vector<LogRow>& log) {
  Checkpoint c = Checkpoint::from(dual);
  c.signal_quant = signals.signals;
  c.quantize_gates = signals.quantize_gates;
  c.seed = cfg.train.seed;
  const std::size_t keep = std::min<std::size_t>(log.size(), 16);
  c.log_tail.assign(log.end() - static_cast<std::ptrdiff_t>(keep), log.end());
  c.config_hash = config_hash(cfg);
  return c;
}

inline void check_topology(const Checkpoint& c, const RunConfig& cfg) {
  if (c.master.topology().layer_sizes != cfg.topology().layer_sizes) {
    throw ConfigError("checkpoint topology does not match the configured task and hidden sizes");
  }
}

inline QuantizationPlan resolve_signals(const RunConfig& cfg, const Checkpoint& c) {
  return cfg.signal_bits.empty() && !cfg.quantize_gates ? c.signal_plan() : cfg.signal_plan();
}

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string with_commas(std::uint64_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

inline int cmd_capacity(const RunConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  const auto layers = opt.layers.empty() ? cfg.topology().layer_sizes : opt.layers;
  const auto counts = count_group_weights(layers);
  if (cfg.weight_bits.empty()) throw ConfigError("capacity needs quant.weight_bits");
  if (cfg.weight_bits.size() != counts.counts.size()) {
    throw ConfigError("quant.weight_bits: expected " + std::to_string(counts.counts.size()) + " entries, got " +
                      std::to_string(cfg.weight_bits.size()));
  }
  std::vector<int> bits = cfg.weight_bits;
  for (auto& b : bits) b = b == 0 ? 32 : b;
  out << "group,count,bits\n";
  for (std::size_t g = 0; g < counts.labels.size(); ++g) {
    out << counts.labels[g] << "," << counts.counts[g] << "," << bits[g] << "\n";
  }
  out << "total weights: " << with_commas(counts.total) << "\n";
  out << "capacity: " << fixed2(capacity_ratio(counts.counts, bits)) << "%\n";
  return 0;
}

inline int cmd_train(const RunConfig& cfg, std::ostream& out) {
  prepare_output(cfg);
  const auto task = load_task(cfg);
  const auto res = train_float(cfg.topology(), task.train, task.valid_metric(), cfg.train);
  const auto hash = config_hash(cfg);
  auto ckpt = make_checkpoint(res.best, QuantizationPlan{}, cfg, res.log);
  ckpt.optimizer = res.optimizer;
  save_checkpoint(ckpt, out_path(cfg, "float.rnq"));
  write_log(out_path(cfg, "train_log.csv"), res.log, hash);
  out << "valid " << task.metric_name << ": " << detail::fmt_double(res.best_metric) << "\n";
  return 0;
}

inline int cmd_quantize(const RunConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  if (cfg.weight_bits.empty()) throw ConfigError("quantize needs quant.weight_bits");
  prepare_output(cfg);
  const auto src = load_checkpoint(input_checkpoint(cfg, opt, "float.rnq"));
  check_topology(src, cfg);
  const auto dual = direct_quantize(src.master, cfg.weight_bits);
  const auto signals = cfg.signal_plan();
  const auto hash = config_hash(cfg);
  save_checkpoint(make_checkpoint(dual, signals, cfg, src.log_tail), out_path(cfg, "quantized.rnq"));

  const auto labels = src.master.topology().group_labels();
  std::string report = "group,bits,levels,step,error,iterations\n";
  for (std::size_t g = 0; g < labels.size(); ++g) {
    if (!dual.groups[g]) {
      report += labels[g] + ",0,0,0,0,0\n";
      continue;
    }
    const auto& q = *dual.groups[g];
    report += labels[g] + "," + std::to_string(q.bits) + "," + std::to_string(q.spec.levels) + "," +
              detail::fmt_double(q.spec.step) + "," + detail::fmt_double(q.error) + "," +
              std::to_string(q.iterations) + "\n";
  }
  report += "# config_hash=" + hash + "\n";
  binio::write_text(out_path(cfg, "quantize_report.csv"), report);
  out << report;
  return 0;
}

inline int cmd_retrain(const RunConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  prepare_output(cfg);
  const auto src = load_checkpoint(input_checkpoint(cfg, opt, "quantized.rnq"));
  check_topology(src, cfg);
  DualWeights dual = src.dual();
  if (!cfg.weight_bits.empty() && dual.bits() != cfg.weight_bits) dual = direct_quantize(src.master, cfg.weight_bits);
  const auto signals = resolve_signals(cfg, src);
  const auto task = load_task(cfg);
  TrainConfig tc = cfg.train;
  tc.max_epochs = cfg.retrain_epochs;
  const auto res = train(std::move(dual), signals, task.train, task.valid_metric(), tc);
  auto ckpt = make_checkpoint(res.best, signals, cfg, res.log);
  ckpt.optimizer = res.optimizer;
  save_checkpoint(ckpt, out_path(cfg, "retrained.rnq"));
  write_log(out_path(cfg, "retrain_log.csv"), res.log, config_hash(cfg));
  out << "valid " << task.metric_name << ": " << detail::fmt_double(res.best_metric) << "\n";
  return 0;
}

inline int cmd_sensitivity(const RunConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  prepare_output(cfg);
  const auto src = load_checkpoint(input_checkpoint(cfg, opt, "float.rnq"));
  check_topology(src, cfg);
  const auto task = load_task(cfg);
  const auto eval = task.valid_metric();
  const auto& topo = src.master.topology();
  SensitivityReport report;
  report.axis = cfg.sweep_axis;
  report.float_baselines.push_back({"float", eval(src.master, QuantizationPlan{})});
  if (cfg.sweep_axis == SweepAxis::weight_group) {
    RetrainContext ctx{&task.train, cfg.train};
    ctx.config.max_epochs = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.sweep_retrain_fraction * static_cast<double>(cfg.train.max_epochs))));
    for (const auto& label : topo.group_labels()) {
      report.add(weight_group_sweep(src.master, label, cfg.sweep_bits, eval, cfg.sweep_mode, &ctx));
    }
  } else {
    if (cfg.sweep_mode == SweepMode::retrain) throw ConfigError("sensitivity.mode retrain applies to the weights axis");
    for (const auto& label : topo.signal_labels()) {
      report.add(signal_layer_sweep(src.master, label, cfg.sweep_bits, eval, {cfg.input_lo, cfg.input_hi},
                                    cfg.quantize_gates));
    }
  }
  const std::string name = cfg.sweep_axis == SweepAxis::weight_group ? "sensitivity_weights" : "sensitivity_signals";
  const auto hash = config_hash(cfg);
  emit_report(report, out_path(cfg, name), hash);
  out << report_csv(report, hash);
  return 0;
}

inline int cmd_eval(const RunConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  if (opt.split != "valid" && opt.split != "test") throw ConfigError("--split must be valid or test");
  prepare_output(cfg);
  const auto path = input_checkpoint(cfg, opt, "float.rnq");
  const auto src = load_checkpoint(path);
  check_topology(src, cfg);
  const auto task = load_task(cfg);
  const auto dual = src.dual();
  const double value = task.metric(dual.shadow, src.signal_plan(), opt.split);
  const auto csv = out_path(cfg, "eval.csv");
  const bool fresh = !std::filesystem::exists(csv);
  std::ofstream f(csv, std::ios::app);
  if (!f) throw IoError("cannot open " + csv.string());
  if (fresh) f << "checkpoint,split,metric,value,config_hash\n";
  f << path.string() << "," << opt.split << "," << task.metric_name << "," << detail::fmt_double(value) << ","
    << config_hash(cfg) << "\n";
  if (!f) throw IoError("write failed: " + csv.string());
  out << opt.split << " " << task.metric_name << ": " << detail::fmt_double(value) << "\n";
  return 0;
}

}  // namespace detail

/// Runs one pipeline stage. Throws rnnquant::Error on failure.
inline int run(const std::string& command, const RunConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  cfg.validate();
  if (command == "capacity") return detail::cmd_capacity(cfg, opt, out);
  if (command == "train") return detail::cmd_train(cfg, out);
  if (command == "quantize") return detail::cmd_quantize(cfg, opt, out);
  if (command == "retrain") return detail::cmd_retrain(cfg, opt, out);
  if (command == "sensitivity") return detail::cmd_sensitivity(cfg, opt, out);
  if (command == "eval") return detail::cmd_eval(cfg, opt, out);
  throw ConfigError("unknown command '" + command + "'");
}

/// run() with failures reported as one `error: <category>: <message>` line
/// on `err` and mapped to the process exit code.
inline int run_guarded(const std::string& command, const RunConfig& cfg, const CommandOptions& opt,
                       std::ostream& out, std::ostream& err) {
  try {
    return run(command, cfg, opt, out);
  } catch (const Error& e) {
    err << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: io: " << e.what() << "\n";
    return 5;
  } catch (const std::bad_alloc&) {
    err << "error: numeric: out of memory\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace rnnquant

#endif  // RNNQUANT_CLI_HPP
