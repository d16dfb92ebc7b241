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
#include <fstream>
#include <set>

#include "test_util.hpp"

namespace rnnquant {
namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

TEST(CharCorpus, ThreeByteEqualSplits) {
  const auto c = make_char_corpus(bytes_of("abc"), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_EQ(c.train, (IndexRange{0, 1}));
  EXPECT_EQ(c.valid, (IndexRange{1, 2}));
  EXPECT_EQ(c.test, (IndexRange{2, 3}));
  EXPECT_EQ(c.split(c.valid)[0], 'b');
}

TEST(CharCorpus, SplitsAreOrderedDisjointAndCoverAll) {
  std::vector<std::uint8_t> b(1001);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<std::uint8_t>(i * 7);
  const auto c = make_char_corpus(b);
  EXPECT_EQ(c.train.begin, 0u);
  EXPECT_EQ(c.train.end, c.valid.begin);
  EXPECT_EQ(c.valid.end, c.test.begin);
  EXPECT_EQ(c.test.end, b.size());
  EXPECT_EQ(c.train.size(), 901u);
}

TEST(CharCorpus, ErrorsOnEmptyAndBadFractions) {
  EXPECT_THROW(make_char_corpus({}), DataError);
  EXPECT_THROW(make_char_corpus(bytes_of("abcd"), {0.5, 0.1, 0.1}), ArgumentError);
  const auto dir = testing::scratch_dir("corpus_errors");
  { std::ofstream(dir / "empty.txt"); }
  EXPECT_THROW(load_char_corpus(dir / "empty.txt"), DataError);
  EXPECT_THROW(load_char_corpus(dir / "missing.txt"), IoError);
}

TEST(CharCorpus, HighBytesAreLegalSymbols) {
  const std::vector<std::uint8_t> b{0xff, 0x80, 0x00, 0x41};
  const auto s = char_lm_sequence(b);
  EXPECT_EQ(s.symbols, (std::vector<std::uint32_t>{0xff, 0x80, 0x00}));
  EXPECT_EQ(s.targets, (std::vector<std::uint32_t>{0x80, 0x00, 0x41}));
}

TEST(OneHot, SingleUnitAtSymbol) {
  const auto v = one_hot(65);
  ASSERT_EQ(v.size(), 256u);
  double l1 = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    l1 += std::fabs(v[i]);
    EXPECT_EQ(v[i], i == 65 ? 1.0 : 0.0);
  }
  EXPECT_EQ(l1, 1.0);
  EXPECT_THROW(one_hot(256), ArgumentError);
}

TEST(CharLmSequence, KBytesGiveKMinusOnePairs) {
  const auto s = char_lm_sequence(bytes_of("hello"));
  EXPECT_EQ(s.size(), 4u);
  EXPECT_EQ(s.resets, (std::vector<std::uint8_t>{1, 0, 0, 0}));
  Tensor2D x;
  s.fill_inputs(1, 3, x);
  EXPECT_EQ(x.rows(), 3u);
  EXPECT_EQ(x(0, 'e'), 1.0);
  for (std::size_t t = 0; t < 3; ++t) {
    double sum = 0;
    for (double v : x.row(t)) sum += v;
    EXPECT_EQ(sum, 1.0);
  }
  EXPECT_THROW(s.fill_inputs(2, 3, x), ArgumentError);
  EXPECT_THROW(char_lm_sequence(bytes_of("a")), DataError);
}

TEST(SynthFrameTask, DeterministicPerSeed) {
  FrameTaskOptions opt;
  opt.sequences = 20;
  EXPECT_EQ(synth_frame_task(opt), synth_frame_task(opt));
  auto other = opt;
  other.seed = 8;
  EXPECT_NE(synth_frame_task(opt), synth_frame_task(other));
}

TEST(SynthFrameTask, LabelsCoverAllClassesAndSplitsSized) {
  FrameTaskOptions opt;
  opt.sequences = 100;
  const auto ds = synth_frame_task(opt);
  std::set<std::uint32_t> seen;
  for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
    for (const auto& s : *split) {
      EXPECT_EQ(s.features.rows(), s.labels.size());
      EXPECT_GE(s.labels.size(), opt.min_length);
      EXPECT_LE(s.labels.size(), opt.max_length);
      for (auto l : s.labels) {
        ASSERT_LT(l, opt.classes);
        seen.insert(l);
      }
    }
  }
  EXPECT_EQ(seen.size(), opt.classes);
  EXPECT_EQ(ds.valid.size(), 15u);
  EXPECT_EQ(ds.test.size(), 15u);
  EXPECT_EQ(ds.train.size(), 70u);
}

TEST(SynthFrameTask, RejectsBadOptions) {
  FrameTaskOptions opt;
  opt.classes = 1;
  EXPECT_THROW(synth_frame_task(opt), ArgumentError);
  opt = {};
  opt.feature_dim = 0;
  EXPECT_THROW(synth_frame_task(opt), ArgumentError);
}

TEST(Normalize, TrainStatsZeroMeanUnitVariance) {
  FrameTaskOptions opt;
  opt.sequences = 40;
  auto ds = synth_frame_task(opt);
  normalize_features(ds);
  std::vector<double> mean(ds.feature_dim, 0.0), sq(ds.feature_dim, 0.0);
  std::size_t n = 0;
  for (const auto& s : ds.train) {
    for (std::size_t t = 0; t < s.features.rows(); ++t) {
      for (std::size_t j = 0; j < ds.feature_dim; ++j) {
        mean[j] += s.features(t, j);
        sq[j] += s.features(t, j) * s.features(t, j);
      }
    }
    n += s.features.rows();
  }
  for (std::size_t j = 0; j < ds.feature_dim; ++j) {
    const double m = mean[j] / n;
    EXPECT_LT(std::fabs(m), 1e-6);
    EXPECT_LT(std::fabs(sq[j] / n - m * m - 1.0), 1e-3);
  }
  double valid_mean = 0;
  std::size_t vn = 0;
  for (const auto& s : ds.valid) {
    for (std::size_t t = 0; t < s.features.rows(); ++t) valid_mean += s.features(t, 0);
    vn += s.features.rows();
  }
  EXPECT_GT(std::fabs(valid_mean / vn), 1e-6);
}

TEST(Normalize, ConstantDimensionFlaggedAndZeroed) {
  FrameDataset ds;
  ds.feature_dim = 2;
  ds.classes = 2;
  FrameSequence s;
  s.features = Tensor2D(3, 2, std::vector<double>{5, 1, 5, 2, 5, 3});
  s.labels = {0, 1, 0};
  ds.train.push_back(s);
  const auto st = normalize_features(ds);
  EXPECT_EQ(st.flagged, (std::vector<std::size_t>{0}));
  EXPECT_EQ(st.stddev[0], 1.0);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(ds.train[0].features(t, 0), 0.0);
}

TEST(Normalize, InverseRestoresFeatures) {
  FrameTaskOptions opt;
  opt.sequences = 20;
  const auto original = synth_frame_task(opt);
  auto ds = original;
  normalize_features(ds);
  denormalize_features(ds);
  EXPECT_TRUE(ds.stats.empty());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    const auto a = ds.train[i].features.values();
    const auto b = original.train[i].features.values();
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(StreamBatcher, SingleStreamIsSequential) {
  StreamBatcher b(10, 1, 3);
  std::vector<StreamChunk> chunks;
  std::vector<std::size_t> begins;
  while (b.next(chunks)) {
    ASSERT_EQ(chunks.size(), 1u);
    begins.push_back(chunks[0].begin);
    EXPECT_EQ(chunks[0].continues, chunks[0].begin > 0);
  }
  EXPECT_EQ(begins, (std::vector<std::size_t>{0, 3, 6}));
}

TEST(StreamBatcher, CoverageWithoutOverlap) {
  for (std::size_t total : {97u, 1000u, 4099u}) {
    for (std::size_t s : {1u, 3u, 8u}) {
      for (std::size_t f : {1u, 4u, 7u}) {
        if (total < s * f) continue;
        StreamBatcher b(total, s, f);
        std::vector<int> hits(total, 0);
        std::vector<StreamChunk> chunks;
        while (b.next(chunks)) {
          ASSERT_EQ(chunks.size(), s);
          for (const auto& c : chunks) {
            ASSERT_EQ(c.count, f);
            ASSERT_LE(c.begin + c.count, total);
            for (std::size_t t = c.begin; t < c.begin + c.count; ++t) ++hits[t];
          }
        }
        std::size_t covered = 0;
        for (int h : hits) {
          ASSERT_LE(h, 1);
          covered += static_cast<std::size_t>(h);
        }
        EXPECT_GE(static_cast<double>(covered), (1.0 - static_cast<double>(s * f) / total) * total);
      }
    }
  }
}

TEST(StreamBatcher, ResetRepeatsSequenceAndRejectsShortData) {
  StreamBatcher b(100, 4, 5);
  std::vector<StreamChunk> c;
  std::vector<std::size_t> first, second;
  while (b.next(c)) first.push_back(c[2].begin);
  b.reset();
  while (b.next(c)) second.push_back(c[2].begin);
  EXPECT_EQ(first, second);
  EXPECT_THROW(StreamBatcher(19, 4, 5), ArgumentError);
  EXPECT_THROW(StreamBatcher(19, 0, 5), ArgumentError);
}

TEST(FrameSequence, ConcatenatesWithResets) {
  FrameTaskOptions opt;
  opt.sequences = 10;
  const auto ds = synth_frame_task(opt);
  const auto seq = frame_sequence(ds.train, ds.feature_dim, ds.classes);
  std::size_t total = 0, starts = 0;
  for (const auto& s : ds.train) total += s.labels.size();
  for (auto r : seq.resets) starts += r;
  EXPECT_EQ(seq.size(), total);
  EXPECT_EQ(starts, ds.train.size());
  Tensor2D x;
  seq.fill_inputs(0, 2, x);
  EXPECT_EQ(x(1, 3), ds.train[0].features(1, 3));
}

TEST(FrameDatasetFile, RoundTripWithManifest) {
  FrameTaskOptions opt;
  opt.sequences = 12;
  auto ds = synth_frame_task(opt);
  normalize_features(ds);
  const auto dir = testing::scratch_dir("frames");
  save_frame_dataset(ds, dir / "frames.rnqf");
  EXPECT_TRUE(std::filesystem::exists(dir / "frames.rnqf.manifest"));
  EXPECT_EQ(load_frame_dataset(dir / "frames.rnqf"), ds);
}

TEST(FrameDatasetFile, CorruptionAndTruncationDetected) {
  FrameTaskOptions opt;
  opt.sequences = 6;
  const auto ds = synth_frame_task(opt);
  const auto dir = testing::scratch_dir("frames_bad");
  save_frame_dataset(ds, dir / "f.rnqf");
  auto bytes = binio::read_file(dir / "f.rnqf");
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  binio::write_file(dir / "flip.rnqf", flipped);
  EXPECT_THROW(load_frame_dataset(dir / "flip.rnqf"), CorruptionError);
  bytes.resize(bytes.size() - 9);
  binio::write_file(dir / "trunc.rnqf", bytes);
  EXPECT_THROW(load_frame_dataset(dir / "trunc.rnqf"), CorruptionError);
}

}  // namespace
}  // namespace rnnquant
