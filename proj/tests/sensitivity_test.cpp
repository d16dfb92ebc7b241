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

#include "test_util.hpp"

namespace rnnquant {
namespace {

using testing::small_topology;

struct Fixture {
  Network net;
  std::vector<std::uint8_t> text;
  Metric eval;
};

Fixture make_fixture() {
  SeededRng rng(31);
  Fixture f{Network::initialize(small_topology(256, {8, 6}, 256), rng, 0.4), {}, {}};
  const std::string unit = "sensitivity sweep text ";
  while (f.text.size() < 600) f.text.insert(f.text.end(), unit.begin(), unit.end());
  f.eval = [text = f.text](const Network& n, const QuantizationPlan& p) { return evaluate_bpc(n, p, text).bpc; };
  return f;
}

TEST(WeightGroupSweep, OnlyTargetGroupChanges) {
  auto f = make_fixture();
  std::vector<Network> seen;
  Metric spy = [&](const Network& n, const QuantizationPlan& p) {
    seen.push_back(n);
    return f.eval(n, p);
  };
  const std::vector<int> bits{2, 4};
  const auto entries = weight_group_sweep(f.net, "L1-L2", bits, spy);
  ASSERT_EQ(entries.size(), 2u);
  ASSERT_EQ(seen.size(), 2u);
  const std::size_t g = find_group(f.net.topology(), "L1-L2");
  for (const auto& n : seen) {
    for (std::size_t k = 0; k < f.net.group_count(); ++k) {
      if (k == g) {
        EXPECT_NE(n.group_values(k), f.net.group_values(k));
      } else {
        EXPECT_EQ(n.group_values(k), f.net.group_values(k)) << "group " << k;
      }
    }
  }
  EXPECT_EQ(entries[0].label, "L1-L2");
  EXPECT_EQ(entries[1].bits, 4);
}

TEST(WeightGroupSweep, SixteenBitsWithinToleranceOfFloat) {
  auto f = make_fixture();
  const double base = f.eval(f.net, {});
  const std::vector<int> bits{16};
  for (const auto& label : f.net.topology().group_labels()) {
    const auto e = weight_group_sweep(f.net, label, bits, f.eval);
    EXPECT_NEAR(e[0].metric, base, 1e-3) << label;
  }
}

TEST(WeightGroupSweep, ReproducibleAndValidated) {
  auto f = make_fixture();
  const std::vector<int> bits{2, 3};
  EXPECT_EQ(weight_group_sweep(f.net, "L1", bits, f.eval), weight_group_sweep(f.net, "L1", bits, f.eval));
  EXPECT_THROW(weight_group_sweep(f.net, "L9", bits, f.eval), ArgumentError);
  EXPECT_THROW(weight_group_sweep(f.net, "L1", std::vector<int>{1}, f.eval), ArgumentError);
  EXPECT_THROW(weight_group_sweep(f.net, "L1", bits, f.eval, SweepMode::retrain), ArgumentError);
}

TEST(WeightGroupSweep, RetrainModeRuns) {
  auto f = make_fixture();
  const auto seq = char_lm_sequence(f.text);
  RetrainContext ctx{&seq, {}};
  ctx.config.streams = 2;
  ctx.config.forward_steps = 8;
  ctx.config.backward_steps = 8;
  ctx.config.max_epochs = 1;
  const auto e = weight_group_sweep(f.net, "L2", std::vector<int>{2}, f.eval, SweepMode::retrain, &ctx);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].mode, SweepMode::retrain);
  EXPECT_TRUE(std::isfinite(e[0].metric));
}

TEST(SignalLayerSweep, QuantizesOnlyRequestedLayer) {
  auto f = make_fixture();
  std::vector<QuantizationPlan> plans;
  Metric spy = [&](const Network& n, const QuantizationPlan& p) {
    plans.push_back(p);
    EXPECT_EQ(n, f.net);
    return f.eval(n, p);
  };
  signal_layer_sweep(f.net, "L2", std::vector<int>{3}, spy);
  ASSERT_EQ(plans.size(), 1u);
  ASSERT_EQ(plans[0].signals.size(), 3u);
  EXPECT_FALSE(plans[0].signals[0]);
  EXPECT_FALSE(plans[0].signals[1]);
  EXPECT_EQ(*plans[0].signals[2], SignalQuantSpec::tanh(3));
  const auto in = single_signal_plan(f.net.topology(), 0, 4, {-2.0, 2.0});
  EXPECT_EQ(*in.signals[0], SignalQuantSpec::linear(4, -2.0, 2.0));
  EXPECT_THROW(signal_layer_sweep(f.net, "Output", std::vector<int>{3}, f.eval), ArgumentError);
}

TEST(SignalLayerSweep, SixteenBitsWithinToleranceOfFloat) {
  auto f = make_fixture();
  const double base = f.eval(f.net, {});
  for (const auto& label : f.net.topology().signal_labels()) {
    const auto e = signal_layer_sweep(f.net, label, std::vector<int>{16}, f.eval);
    EXPECT_NEAR(e[0].metric, base, 1e-3) << label;
  }
}

TEST(SensitivityReport, RejectsDuplicatesAndNonFinite) {
  SensitivityReport r;
  r.add({"L1", 2, 1.0, SweepMode::direct});
  EXPECT_THROW(r.add({"L1", 2, 1.5, SweepMode::direct}), ArgumentError);
  EXPECT_NO_THROW(r.add({"L1", 2, 1.5, SweepMode::retrain}));
  EXPECT_THROW(r.add({"L2", 2, std::numeric_limits<double>::infinity(), SweepMode::direct}), NumericFault);
}

TEST(ReportCsv, SingleEntryIsTwoLines) {
  SensitivityReport r;
  r.add({"In-L1", 3, 2.25, SweepMode::direct});
  EXPECT_EQ(report_csv(r), "label,bits,metric,flag\nIn-L1,3,2.25,direct\n");
}

TEST(ReportCsv, RoundTripIsLossless) {
  SensitivityReport r;
  r.axis = SweepAxis::signal_layer;
  r.add({"L2", 8, 1.0 / 3.0, SweepMode::direct});
  r.add({"Input", 2, 2.718281828459045, SweepMode::direct});
  r.add({"L1", 16, 0.1 + 0.2, SweepMode::retrain});
  r.float_baselines.push_back({"float", 1.2345678901234567});
  const auto text = report_csv(r, "abc123");
  EXPECT_NE(text.find("float"), std::string::npos);
  EXPECT_NE(text.find("# config_hash=abc123"), std::string::npos);
  auto parsed = parse_report_csv(text, r.axis);
  r.sort();
  EXPECT_EQ(parsed, r);
  EXPECT_THROW(parse_report_csv("bad,header\n", r.axis), DataError);
  EXPECT_THROW(parse_report_csv("label,bits,metric,flag\nL1,2,1.0,weird\n", r.axis), DataError);
}

TEST(EmitReport, WritesCsvAndPlotData) {
  SensitivityReport r;
  r.add({"L1", 4, 1.5, SweepMode::direct});
  r.float_baselines.push_back({"float", 1.25});
  const auto dir = testing::scratch_dir("emit_report");
  const auto paths = emit_report(r, dir / "sens", "feed");
  const auto csv = binio::read_file(paths.csv);
  EXPECT_EQ(parse_report_csv(std::string(csv.begin(), csv.end()), r.axis), r);
  const auto dat = binio::read_file(paths.plot_data);
  const std::string dtext(dat.begin(), dat.end());
  EXPECT_NE(dtext.find("L1 4 1.5 direct"), std::string::npos);
  EXPECT_NE(dtext.find("float 0 1.25 float"), std::string::npos);
  EXPECT_THROW(emit_report(SensitivityReport{}, dir / "empty"), ArgumentError);
}

}  // namespace
}  // namespace rnnquant
