// Copyright 2026 The RSTB Authors. All Rights Reserved.
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

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "json.hpp"
#include "rstb/attack.hpp"
#include "rstb/model.hpp"
#include "rstb/train.hpp"

namespace rstb::cli {

// Everything `train`, `attack` and `bench` need to know about one model.
struct RunConfig {
  std::string name = "default";
  ModelConfig model;
  TrainConfig train;
  AttackSpec attack;
  std::uint64_t seed = 0;

  // Copies `seed` into the model, training and attack seeds.
  void ApplySeed(std::uint64_t s);

  nlohmann::json ToJson() const;
  static RunConfig FromJson(const nlohmann::json& j);
};

struct DataConfig {
  std::size_t count = 16;
  std::size_t height = 64;
  std::size_t width = 64;
  RainParams rain;
  std::uint64_t seed = 0;

  nlohmann::json ToJson() const;
  static DataConfig FromJson(const nlohmann::json& j);
};

// Ablation grid: stages_N, attn_*, dil_*, mask_on/off, adv_on/off, ours and
// its leave-one-out variants, plus "default".
const std::map<std::string, RunConfig>& Presets();

}  // namespace rstb::cli
