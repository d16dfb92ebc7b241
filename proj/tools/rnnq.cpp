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

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rnnquant/cli.hpp"

namespace {

rnnquant::RunConfig resolve(const std::string& config_path, const std::vector<std::string>& overrides,
                            const std::string& weight_bits, const std::string& signal_bits,
                            const std::vector<std::size_t>& layers) {
  using namespace rnnquant;
  RunConfig cfg;
  if (!config_path.empty()) {
    const auto bytes = binio::read_file(config_path);
    cfg = parse_config(std::string(bytes.begin(), bytes.end()));
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  if (!weight_bits.empty()) cfg.weight_bits = parse_bit_vector(weight_bits);
  if (!signal_bits.empty()) cfg.signal_bits = parse_bit_vector(signal_bits);
  if (layers.size() >= 3) cfg.hidden.assign(layers.begin() + 1, layers.end() - 1);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rnnq: fixed-point quantization for LSTM networks"};
  app.require_subcommand(1, 1);

  std::string config_path, weight_bits, signal_bits;
  std::vector<std::string> overrides;
  rnnquant::CommandOptions opt;
  for (const auto& name : rnnquant::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "configuration file");
    sub->add_option("--set", overrides, "override a key, e.g. --set train.max_epochs=4")->allow_extra_args(false);
    sub->add_option("--weight-bits", weight_bits, "per-group weight bits, e.g. 3-2-2-2-2-2-2");
    sub->add_option("--signal-bits", signal_bits, "per-layer signal bits, e.g. 8-8-8");
    sub->add_option("--checkpoint", opt.checkpoint, "input checkpoint");
    if (name == "capacity") {
      sub->add_option("--layers", opt.layers, "layer sizes, e.g. 123,512,512,512,61")->delimiter(',');
    }
    if (name == "eval") sub->add_option("--split", opt.split, "valid or test");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  rnnquant::RunConfig cfg;
  try {
    cfg = resolve(config_path, overrides, weight_bits, signal_bits, opt.layers);
  } catch (const rnnquant::Error& e) {
    std::cerr << "error: " << rnnquant::category_name(e.category()) << ": " << e.what() << "\n";
    return rnnquant::exit_code_for(e.category());
  }
  return rnnquant::run_guarded(command, cfg, opt, std::cout, std::cerr);
}
