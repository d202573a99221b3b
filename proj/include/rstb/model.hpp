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

// Desk-scale recurrent deraining network with the ablation switches the
// robustness study varies: stage count, channel attention, dilation paths and
// an optional rain-mask head.
//
// Stage t (1-based) maps (O_{t-1}, R_{t-1}) to R_t and sets
// B_t = O_t = O - R_t, with O_0 = O and R_0 = 0. Each stage is
// depth_per_stage layers; a layer runs one 3x3 conv per dilation in
// dilation_set on the same input, sums the paths, adds one bias, applies relu
// and then the configured attention. A 3x3 conv maps the last features to
// R_t. Stages share no parameters.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rstb/tensor.hpp"

namespace rstb {

enum class Attention { kNone, kSeMul, kSeAdd, kCbamLite };

std::string AttentionName(Attention kind);
Attention ParseAttention(const std::string& name);

struct ModelConfig {
  std::size_t base_width = 16;
  std::size_t num_stages = 3;
  std::vector<std::size_t> dilation_set{1, 2, 3};
  Attention attention = Attention::kSeAdd;
  bool mask_head = false;
  std::size_t depth_per_stage = 4;
  std::uint64_t seed = 0;

  // Throws Error(kConfig) describing the first violated constraint.
  void Validate() const;

  nlohmann::json ToJson() const;
  static ModelConfig FromJson(const nlohmann::json& j);

  bool operator==(const ModelConfig&) const = default;
};

// Anything the attack engine can differentiate through: input image in,
// restored image of the same shape out.
class Restorer {
 public:
  virtual ~Restorer() = default;
  virtual Tensor Restore(const Tensor& input) const = 0;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct AttentionParams {
  Tensor fc1_weight, fc1_bias;  // squeeze C -> C/4
  Tensor fc2_weight, fc2_bias;  // excite C/4 -> C
  Tensor spatial_weight, spatial_bias;  // cbam_lite only: 2 -> 1, 7x7
};

// Recalibrates C x H x W features. kind must not be kNone.
Tensor ApplyAttention(Attention kind, const Tensor& features, const AttentionParams& params);

struct StageOutputs {
  std::vector<Tensor> rain;         // R_t, 3 x H x W
  std::vector<Tensor> background;   // B_t = O - R_t
  std::vector<Tensor> mask_logits;  // 1 x H x W per stage when mask_head

  const Tensor& output() const { return background.back(); }
};

class DerainModel final : public Restorer {
 public:
  // He-uniform weights and zero biases drawn from config.seed.
  explicit DerainModel(const ModelConfig& config);

  DerainModel(DerainModel&&) noexcept = default;
  DerainModel& operator=(DerainModel&&) noexcept = default;
  DerainModel(const DerainModel&) = delete;
  DerainModel& operator=(const DerainModel&) = delete;

  // Deep copy: the clone shares no parameter storage with this model.
  DerainModel Clone() const;

  const ModelConfig& config() const { return config_; }

  StageOutputs Forward(const Tensor& rainy) const;
  Tensor Restore(const Tensor& input) const override { return Forward(input).output(); }

  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::size_t ParameterCount() const;
  Tensor& Parameter(const std::string& name);

  void SetRequiresGrad(bool requires_grad);
  void ZeroGrad();

  // SHA-256 over parameter names, shapes and values.
  std::string Checksum() const;

  // Zeroes each stage's rain-output conv, turning the model into the identity.
  void ZeroResidualLayers();

 private:
  struct Layer {
    std::vector<Tensor> path_weights;  // one per dilation
    Tensor bias;
    AttentionParams attention;
  };
  struct Stage {
    std::vector<Layer> layers;
    Tensor out_weight, out_bias;
    Tensor mask_weight, mask_bias;
  };

  DerainModel() = default;
  void Register();

  ModelConfig config_;
  std::vector<Stage> stages_;
  std::vector<NamedTensor> params_;
};

// Frozen random-weight feature pyramid backing the perceptual distance:
// conv(3->8) relu | pool2 conv(8->16) relu | pool2 conv(16->32) relu, all
// 3x3, weights drawn once from seed 0xFEA7.
class FeatureExtractor {
 public:
  static constexpr std::uint64_t kSeed = 0xFEA7;

  FeatureExtractor();

  // Feature maps at scales 1, 1/2 and 1/4. H, W >= 8 and divisible by 4.
  std::vector<Tensor> Extract(const Tensor& image) const;

  const std::vector<NamedTensor>& parameters() const { return params_; }

 private:
  std::vector<NamedTensor> params_;  // w1 b1 w2 b2 w3 b3
};

}  // namespace rstb
