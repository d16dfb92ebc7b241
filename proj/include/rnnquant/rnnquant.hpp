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

#ifndef RNNQUANT_RNNQUANT_HPP
#define RNNQUANT_RNNQUANT_HPP

#include "rnnquant/binary_io.hpp"
#include "rnnquant/checkpoint.hpp"
#include "rnnquant/cli.hpp"
#include "rnnquant/config.hpp"
#include "rnnquant/data.hpp"
#include "rnnquant/error.hpp"
#include "rnnquant/lstm.hpp"
#include "rnnquant/numerics.hpp"
#include "rnnquant/quantizer.hpp"
#include "rnnquant/sensitivity.hpp"
#include "rnnquant/trainer.hpp"

#endif  // RNNQUANT_RNNQUANT_HPP
