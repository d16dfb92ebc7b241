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

#ifndef RNNQUANT_DATA_HPP
#define RNNQUANT_DATA_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rnnquant/binary_io.hpp"
#include "rnnquant/error.hpp"
#include "rnnquant/numerics.hpp"

namespace rnnquant {

inline constexpr std::size_t kByteAlphabet = 256;

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

/// Raw bytes of a text file with contiguous train/valid/test splits.
struct CharCorpus {
  std::vector<std::uint8_t> bytes;
  IndexRange train, valid, test;

  std::span<const std::uint8_t> split(const IndexRange& r) const {
    return std::span<const std::uint8_t>(bytes).subspan(r.begin, r.size());
  }
};

struct SplitFractions {
  double train = 0.9;
  double valid = 0.05;
  double test = 0.05;

  bool operator==(const SplitFractions&) const = default;
};

inline CharCorpus make_char_corpus(std::vector<std::uint8_t> bytes, SplitFractions fractions = {}) {
  if (bytes.empty()) throw DataError("corpus is empty");
  if (fractions.train <= 0.0 || fractions.valid < 0.0 || fractions.test < 0.0 ||
      std::fabs(fractions.train + fractions.valid + fractions.test - 1.0) > 1e-6) {
    throw ArgumentError("split fractions must be non-negative, train > 0, and sum to 1");
  }
  CharCorpus c;
  const auto k = static_cast<double>(bytes.size());
  const auto train_end = static_cast<std::size_t>(std::llround(k * fractions.train));
  const auto valid_end = static_cast<std::size_t>(std::llround(k * (fractions.train + fractions.valid)));
  c.train = {0, std::min(train_end, bytes.size())};
  c.valid = {c.train.end, std::min(std::max(valid_end, c.train.end), bytes.size())};
  c.test = {c.valid.end, bytes.size()};
  if (c.train.size() == 0) throw DataError("train split is empty");
  c.bytes = std::move(bytes);
  return c;
}

inline CharCorpus load_char_corpus(const std::filesystem::path& path, SplitFractions fractions = {}) {
  auto raw = binio::read_file(path);
  if (raw.empty()) throw DataError("corpus file '" + path.string() + "' is empty");
  return make_char_corpus(std::vector<std::uint8_t>(raw.begin(), raw.end()), fractions);
}

inline std::vector<double> one_hot(std::uint32_t symbol, std::size_t width = kByteAlphabet) {
  if (symbol >= width) throw ArgumentError("one_hot: symbol out of range");
  std::vector<double> v(width, 0.0);
  v[symbol] = 1.0;
  return v;
}

/// Inputs, next-step targets, and sequence-start flags for streamed training.
struct LabeledSequence {
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  /// One-hot inputs when non-empty; otherwise `features` holds dense rows.
  std::vector<std::uint32_t> symbols;
  Tensor2D features;
  std::vector<std::uint32_t> targets;
  std::vector<std::uint8_t> resets;

  std::size_t size() const { return targets.size(); }

  void fill_inputs(std::size_t begin, std::size_t count, Tensor2D& out) const {
    if (begin + count > size()) throw ArgumentError("fill_inputs: range past end of sequence");
    out = Tensor2D(count, input_dim);
    for (std::size_t t = 0; t < count; ++t) {
      if (!symbols.empty()) {
        out(t, symbols[begin + t]) = 1.0;
      } else {
        auto src = features.row(begin + t);
        std::copy(src.begin(), src.end(), out.row(t).begin());
      }
    }
  }
};

/// K bytes become K-1 (byte, next byte) pairs.
inline LabeledSequence char_lm_sequence(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) throw DataError("character sequence needs at least 2 bytes");
  LabeledSequence s;
  s.input_dim = kByteAlphabet;
  s.classes = kByteAlphabet;
  s.symbols.assign(bytes.begin(), bytes.end() - 1);
  s.targets.assign(bytes.begin() + 1, bytes.end());
  s.resets.assign(s.targets.size(), 0);
  s.resets[0] = 1;
  return s;
}

struct FrameSequence {
  Tensor2D features;  // T x D
  std::vector<std::uint32_t> labels;

  bool operator==(const FrameSequence&) const = default;
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  /// Dimensions with zero training variance (stddev replaced by 1).
  std::vector<std::size_t> flagged;

  bool empty() const { return mean.empty(); }
  bool operator==(const NormalizationStats&) const = default;
};

struct FrameDataset {
  std::size_t feature_dim = 0;
  std::size_t classes = 0;
  std::vector<FrameSequence> train, valid, test;
  NormalizationStats stats;

  bool operator==(const FrameDataset&) const = default;
};

inline LabeledSequence frame_sequence(std::span<const FrameSequence> seqs, std::size_t feature_dim,
                                      std::size_t classes) {
  std::size_t total = 0;
  for (const auto& s : seqs) total += s.labels.size();
  if (total == 0) throw DataError("frame split is empty");
  LabeledSequence out;
  out.input_dim = feature_dim;
  out.classes = classes;
  out.features = Tensor2D(total, feature_dim);
  std::size_t t = 0;
  for (const auto& s : seqs) {
    for (std::size_t i = 0; i < s.labels.size(); ++i, ++t) {
      auto src = s.features.row(i);
      std::copy(src.begin(), src.end(), out.features.row(t).begin());
      out.targets.push_back(s.labels[i]);
      out.resets.push_back(i == 0 ? 1 : 0);
    }
  }
  return out;
}

struct FrameTaskOptions {
  std::uint64_t seed = 7;
  std::size_t classes = 10;
  std::size_t feature_dim = 24;
  std::size_t sequences = 120;
  std::size_t min_length = 40;
  std::size_t max_length = 80;
  double valid_fraction = 0.15;
  double test_fraction = 0.15;
  /// Probability that a frame keeps the previous frame's class.
  double stay_probability = 0.8;
  /// Probability that a class change goes to the successor class (c+1 mod C).
  double successor_probability = 0.75;
  double noise = 1.5;
  /// Exponential smoothing of the class-mean trajectory.
  double smoothing = 0.5;

  bool operator==(const FrameTaskOptions&) const = default;
};

/// Seeded surrogate for frame-level phoneme classification. Labels follow a
/// Markov chain that favours staying and then moving to the successor class;
/// features are a smoothed trajectory of per-class Gaussian means plus noise,
/// so neighbouring frames carry information about the current label.
inline FrameDataset synth_frame_task(const FrameTaskOptions& opt) {
  if (opt.classes < 2) throw ArgumentError("synth_frame_task: need at least 2 classes");
  if (opt.feature_dim < 1) throw ArgumentError("synth_frame_task: feature dimension must be >= 1");
  if (opt.sequences < 1 || opt.min_length < 1 || opt.max_length < opt.min_length) {
    throw ArgumentError("synth_frame_task: invalid sequence count or length range");
  }
  SeededRng rng(opt.seed);
  std::vector<std::vector<double>> means(opt.classes, std::vector<double>(opt.feature_dim));
  for (auto& m : means) {
    for (double& v : m) v = rng.normal();
  }

  FrameDataset ds;
  ds.feature_dim = opt.feature_dim;
  ds.classes = opt.classes;
  const auto n_valid = static_cast<std::size_t>(std::llround(opt.sequences * opt.valid_fraction));
  const auto n_test = static_cast<std::size_t>(std::llround(opt.sequences * opt.test_fraction));
  if (n_valid + n_test >= opt.sequences) throw ArgumentError("synth_frame_task: no sequences left for training");
  const std::size_t n_train = opt.sequences - n_valid - n_test;

  for (std::size_t s = 0; s < opt.sequences; ++s) {
    const std::size_t len = opt.min_length + rng.below(opt.max_length - opt.min_length + 1);
    FrameSequence seq;
    seq.features = Tensor2D(len, opt.feature_dim);
    auto label = static_cast<std::uint32_t>(rng.below(opt.classes));
    std::vector<double> traj = means[label];
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0 && rng.uniform() >= opt.stay_probability) {
        if (rng.uniform() < opt.successor_probability) {
          label = static_cast<std::uint32_t>((label + 1) % opt.classes);
        } else {
          label = static_cast<std::uint32_t>((label + 1 + rng.below(opt.classes - 1)) % opt.classes);
        }
      }
      seq.labels.push_back(label);
      for (std::size_t d = 0; d < opt.feature_dim; ++d) {
        traj[d] = opt.smoothing * traj[d] + (1.0 - opt.smoothing) * means[label][d];
        seq.features(t, d) = traj[d] + opt.noise * rng.normal();
      }
    }
    if (s < n_train) {
      ds.train.push_back(std::move(seq));
    } else if (s < n_train + n_valid) {
      ds.valid.push_back(std::move(seq));
    } else {
      ds.test.push_back(std::move(seq));
    }
  }
  return ds;
}

/// Standardizes every split with train-split statistics and stores them.
inline NormalizationStats normalize_features(FrameDataset& ds) {
  const std::size_t d = ds.feature_dim;
  std::size_t count = 0;
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (const auto& s : ds.train) {
    for (std::size_t t = 0; t < s.features.rows(); ++t) {
      for (std::size_t j = 0; j < d; ++j) mean[j] += s.features(t, j);
    }
    count += s.features.rows();
  }
  if (count == 0) throw DataError("normalize_features: empty train split");
  for (double& m : mean) m /= static_cast<double>(count);
  for (const auto& s : ds.train) {
    for (std::size_t t = 0; t < s.features.rows(); ++t) {
      for (std::size_t j = 0; j < d; ++j) {
        const double dv = s.features(t, j) - mean[j];
        var[j] += dv * dv;
      }
    }
  }
  NormalizationStats st;
  st.mean = mean;
  st.stddev.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(count));
    if (sd > 1e-12) {
      st.stddev[j] = sd;
    } else {
      st.stddev[j] = 1.0;
      st.flagged.push_back(j);
    }
  }
  for (auto* split : {&ds.train, &ds.valid, &ds.test}) {
    for (auto& s : *split) {
      for (std::size_t t = 0; t < s.features.rows(); ++t) {
        for (std::size_t j = 0; j < d; ++j) s.features(t, j) = (s.features(t, j) - st.mean[j]) / st.stddev[j];
      }
    }
  }
  ds.stats = st;
  return st;
}

inline void denormalize_features(FrameDataset& ds) {
  if (ds.stats.empty()) return;
  for (auto* split : {&ds.train, &ds.valid, &ds.test}) {
    for (auto& s : *split) {
      for (std::size_t t = 0; t < s.features.rows(); ++t) {
        for (std::size_t j = 0; j < ds.feature_dim; ++j) {
          s.features(t, j) = s.features(t, j) * ds.stats.stddev[j] + ds.stats.mean[j];
        }
      }
    }
  }
  ds.stats = {};
}

struct StreamChunk {
  std::size_t stream = 0;
  std::size_t begin = 0;
  std::size_t count = 0;
  /// False for the first chunk of a stream in an epoch (state starts at zero).
  bool continues = false;
};

/// Splits a sequence of `total` frames into `streams` contiguous slices of
/// equal length starting at evenly spaced offsets, then walks all slices in
/// lockstep `forward_steps` frames at a time.
class StreamBatcher {
 public:
  StreamBatcher(std::size_t total, std::size_t streams, std::size_t forward_steps)
      : total_(total), streams_(streams), forward_(forward_steps) {
    if (streams < 1 || forward_steps < 1) throw ArgumentError("stream batcher needs S >= 1 and F >= 1");
    if (total < streams * forward_steps) {
      throw ArgumentError("data of " + std::to_string(total) + " frames is shorter than S*F = " +
                          std::to_string(streams * forward_steps));
    }
    stream_length_ = total / streams;
  }

  std::size_t streams() const { return streams_; }
  std::size_t forward_steps() const { return forward_; }
  std::size_t stream_length() const { return stream_length_; }
  std::size_t stream_offset(std::size_t s) const { return s * stream_length_; }
  std::size_t updates_per_epoch() const { return stream_length_ / forward_; }

  void reset() { step_ = 0; }

  bool next(std::vector<StreamChunk>& out) {
    if (step_ >= updates_per_epoch()) return false;
    out.clear();
    for (std::size_t s = 0; s < streams_; ++s) {
      out.push_back({s, stream_offset(s) + step_ * forward_, forward_, step_ > 0});
    }
    ++step_;
    return true;
  }

 private:
  std::size_t total_, streams_, forward_;
  std::size_t stream_length_ = 0;
  std::size_t step_ = 0;
};

inline constexpr std::uint32_t kFrameFileVersion = 1;

/// Binary layout (little-endian):
///   "RNQF" u32 version u32 D u32 C u64 n_train u64 n_valid u64 n_test
///   u64 has_stats; if set: f64 mean[D] f64 std[D] u64 n_flagged u64 flagged[]
///   per sequence: u64 T, f64 features[T*D], u32 labels[T], zero pad to 8
///   u64 FNV-1a checksum of all preceding bytes
inline void save_frame_dataset(const FrameDataset& ds, const std::filesystem::path& path) {
  binio::Writer w;
  w.put_bytes("RNQF");
  w.put<std::uint32_t>(kFrameFileVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.feature_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.classes));
  w.put<std::uint64_t>(ds.train.size());
  w.put<std::uint64_t>(ds.valid.size());
  w.put<std::uint64_t>(ds.test.size());
  w.put<std::uint64_t>(ds.stats.empty() ? 0 : 1);
  if (!ds.stats.empty()) {
    for (double v : ds.stats.mean) w.put_f64(v);
    for (double v : ds.stats.stddev) w.put_f64(v);
    w.put<std::uint64_t>(ds.stats.flagged.size());
    for (auto f : ds.stats.flagged) w.put<std::uint64_t>(f);
  }
  std::size_t frames = 0;
  for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
    for (const auto& s : *split) {
      w.put<std::uint64_t>(s.labels.size());
      for (double v : s.features.values()) w.put_f64(v);
      for (auto l : s.labels) w.put<std::uint32_t>(l);
      w.pad_to(8);
      frames += s.labels.size();
    }
  }
  w.seal();
  binio::write_file(path, w.bytes());

  std::ostringstream m;
  m << "format = rnnquant-frames\n"
    << "version = " << kFrameFileVersion << "\n"
    << "feature_dim = " << ds.feature_dim << "\n"
    << "classes = " << ds.classes << "\n"
    << "train_sequences = " << ds.train.size() << "\n"
    << "valid_sequences = " << ds.valid.size() << "\n"
    << "test_sequences = " << ds.test.size() << "\n"
    << "total_frames = " << frames << "\n"
    << "normalized = " << (ds.stats.empty() ? 0 : 1) << "\n"
    << "bytes = " << w.size() << "\n";
  binio::write_text(path.string() + ".manifest", m.str());
}

inline FrameDataset load_frame_dataset(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  binio::Reader head(bytes);
  if (head.get_string(4) != "RNQF") throw CorruptionError("'" + path.string() + "' is not a frame dataset");
  const auto version = head.get<std::uint32_t>();
  if (version != kFrameFileVersion) {
    throw VersionError("frame dataset version " + std::to_string(version) + " unsupported");
  }
  const auto body = binio::verify_sealed(bytes);
  binio::Reader r(body);
  r.get_string(4);
  r.get<std::uint32_t>();
  FrameDataset ds;
  ds.feature_dim = r.get<std::uint32_t>();
  ds.classes = r.get<std::uint32_t>();
  const auto n_train = r.get<std::uint64_t>();
  const auto n_valid = r.get<std::uint64_t>();
  const auto n_test = r.get<std::uint64_t>();
  if (r.get<std::uint64_t>() != 0) {
    ds.stats.mean.resize(ds.feature_dim);
    ds.stats.stddev.resize(ds.feature_dim);
    for (double& v : ds.stats.mean) v = r.get_f64();
    for (double& v : ds.stats.stddev) v = r.get_f64();
    const auto nf = r.get<std::uint64_t>();
    if (nf > ds.feature_dim) throw CorruptionError("flagged dimension count exceeds feature dim");
    for (std::uint64_t i = 0; i < nf; ++i) ds.stats.flagged.push_back(r.get<std::uint64_t>());
  }
  auto read_split = [&](std::uint64_t n, std::vector<FrameSequence>& out) {
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto len = r.get<std::uint64_t>();
      if (len * (ds.feature_dim * 8 + 4) > r.remaining()) throw CorruptionError("sequence length exceeds payload");
      FrameSequence s;
      s.features = Tensor2D(len, ds.feature_dim);
      for (double& v : s.features.values()) v = r.get_f64();
      s.labels.resize(len);
      for (auto& l : s.labels) {
        l = r.get<std::uint32_t>();
        if (l >= ds.classes) throw DataError("label " + std::to_string(l) + " out of class range");
      }
      r.skip_to_alignment(8);
      out.push_back(std::move(s));
    }
  };
  read_split(n_train, ds.train);
  read_split(n_valid, ds.valid);
  read_split(n_test, ds.test);
  return ds;
}

}  // namespace rnnquant

#endif  // RNNQUANT_DATA_HPP
