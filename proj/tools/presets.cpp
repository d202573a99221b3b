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

#include "presets.hpp"

#include "rstb/error.hpp"

namespace rstb::cli {
namespace {

RunConfig Base(const std::string& name) {
  RunConfig c;
  c.name = name;
  c.train.epochs = 30;
  return c;
}

std::map<std::string, RunConfig> BuildPresets() {
  std::map<std::string, RunConfig> p;
  auto add = [&](const RunConfig& c) { p.emplace(c.name, c); };

  add(Base("default"));
  for (std::size_t stages : {1, 2, 3, 5, 8, 12, 17}) {
    RunConfig c = Base("stages_" + std::to_string(stages));
    c.model.num_stages = stages;
    add(c);
  }
  for (Attention a : {Attention::kNone, Attention::kSeMul, Attention::kSeAdd, Attention::kCbamLite}) {
    RunConfig c = Base("attn_" + AttentionName(a));
    c.model.attention = a;
    add(c);
  }
  for (const auto& dil : std::vector<std::vector<std::size_t>>{{1}, {1, 2}, {1, 2, 3}}) {
    std::string name = "dil";
    for (auto d : dil) name += "_" + std::to_string(d);
    RunConfig c = Base(name);
    c.model.dilation_set = dil;
    add(c);
  }
  for (bool on : {true, false}) {
    RunConfig m = Base(on ? "mask_on" : "mask_off");
    m.model.mask_head = on;
    add(m);
    RunConfig a = Base(on ? "adv_on" : "adv_off");
    a.train.adv.enabled = on;
    add(a);
  }

  RunConfig ours = Base("ours");
  ours.model.dilation_set = {1, 2, 3};
  ours.model.attention = Attention::kSeAdd;
  ours.model.mask_head = false;
  ours.train.adv.enabled = true;
  add(ours);
  RunConfig no_dil = ours;
  no_dil.name = "ours_no_dilation";
  no_dil.model.dilation_set = {1};
  add(no_dil);
  RunConfig no_attn = ours;
  no_attn.name = "ours_no_attention";
  no_attn.model.attention = Attention::kNone;
  add(no_attn);
  RunConfig no_adv = ours;
  no_adv.name = "ours_no_adv";
  no_adv.train.adv.enabled = false;
  add(no_adv);
  return p;
}

}  // namespace

void RunConfig::ApplySeed(std::uint64_t s) {
  seed = s;
  model.seed = s;
  train.seed = s;
  attack.seed = s;
}

nlohmann::json RunConfig::ToJson() const {
  return {{"name", name},
          {"model", model.ToJson()},
          {"train", train.ToJson()},
          {"attack", attack.ToJson()},
          {"seed", seed}};
}

RunConfig RunConfig::FromJson(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.name = j.value("name", c.name);
    if (j.contains("model")) c.model = ModelConfig::FromJson(j.at("model"));
    if (j.contains("train")) c.train = TrainConfig::FromJson(j.at("train"));
    if (j.contains("attack")) c.attack = AttackSpec::FromJson(j.at("attack"));
    c.ApplySeed(j.value("seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("run config: ") + e.what());
  }
  if (c.name.empty() || c.name.find_first_of("/\\ ") != std::string::npos) {
    throw Error(ErrorCode::kConfig, "run config: name must be non-empty without slashes or spaces");
  }
  return c;
}

nlohmann::json DataConfig::ToJson() const {
  return {{"count", count}, {"height", height}, {"width", width}, {"rain", rain.ToJson()}, {"seed", seed}};
}

DataConfig DataConfig::FromJson(const nlohmann::json& j) {
  DataConfig c;
  try {
    c.count = j.value("count", c.count);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    if (j.contains("rain")) c.rain = RainParams::FromJson(j.at("rain"));
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("data config: ") + e.what());
  }
  if (c.count == 0) throw Error(ErrorCode::kConfig, "data config: count must be >= 1");
  return c;
}

const std::map<std::string, RunConfig>& Presets() {
  static const std::map<std::string, RunConfig> presets = BuildPresets();
  return presets;
}

}  // namespace rstb::cli
