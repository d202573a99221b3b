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

#include "rstb/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rstb/checksum.hpp"
#include "rstb/error.hpp"
#include "rstb/ops.hpp"
#include "rstb/random.hpp"

namespace rstb {
namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kSeReduction = 4;
constexpr std::size_t kSpatialKernel = 7;
constexpr std::size_t kMaxStages = 17;

Tensor HeUniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = Uniform(rng, -bound, bound);
  return Tensor::FromData(std::move(shape), std::move(v));
}

AttentionParams MakeAttention(Attention kind, std::size_t channels, std::mt19937_64& rng) {
  AttentionParams p;
  if (kind == Attention::kNone) return p;
  const std::size_t hidden = std::max<std::size_t>(1, channels / kSeReduction);
  p.fc1_weight = HeUniform({hidden, channels, 1, 1}, channels, rng);
  p.fc1_bias = Tensor::Zeros({hidden});
  p.fc2_weight = HeUniform({channels, hidden, 1, 1}, hidden, rng);
  p.fc2_bias = Tensor::Zeros({channels});
  if (kind == Attention::kCbamLite) {
    p.spatial_weight = HeUniform({1, 2, kSpatialKernel, kSpatialKernel},
                                 2 * kSpatialKernel * kSpatialKernel, rng);
    p.spatial_bias = Tensor::Zeros({1});
  }
  return p;
}

Tensor SeGate(const Tensor& features, const AttentionParams& p) {
  auto squeeze = Pool(PoolOp::kChannelGlobalAvg, features);
  auto hidden = Relu(Conv2d(squeeze, p.fc1_weight, p.fc1_bias, 0, 1));
  return Sigmoid(Conv2d(hidden, p.fc2_weight, p.fc2_bias, 0, 1));
}

Tensor DeepCopy(const Tensor& t) {
  if (!t.defined()) return {};
  auto copy = Tensor::FromData(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
  copy.set_requires_grad(t.requires_grad());
  return copy;
}

}  // namespace

std::string AttentionName(Attention kind) {
  switch (kind) {
    case Attention::kNone:
      return "none";
    case Attention::kSeMul:
      return "se_mul";
    case Attention::kSeAdd:
      return "se_add";
    case Attention::kCbamLite:
      return "cbam_lite";
  }
  return "unknown";
}

Attention ParseAttention(const std::string& name) {
  for (Attention a : {Attention::kNone, Attention::kSeMul, Attention::kSeAdd, Attention::kCbamLite}) {
    if (AttentionName(a) == name) return a;
  }
  throw Error(ErrorCode::kConfig, "unknown attention kind '" + name + "'");
}

void ModelConfig::Validate() const {
  if (base_width == 0) throw Error(ErrorCode::kConfig, "base_width must be >= 1");
  if (num_stages < 1 || num_stages > kMaxStages) {
    throw Error(ErrorCode::kConfig, "num_stages must be in [1, 17], got " + std::to_string(num_stages));
  }
  if (depth_per_stage < 1) throw Error(ErrorCode::kConfig, "depth_per_stage must be >= 1");
  if (dilation_set.empty()) throw Error(ErrorCode::kConfig, "dilation_set must be non-empty");
  for (std::size_t i = 0; i < dilation_set.size(); ++i) {
    const std::size_t d = dilation_set[i];
    if (d < 1 || d > 3) {
      throw Error(ErrorCode::kConfig, "dilation " + std::to_string(d) + " not in {1,2,3}");
    }
    if (i > 0 && dilation_set[i - 1] >= d) {
      throw Error(ErrorCode::kConfig, "dilation_set must be strictly increasing");
    }
  }
}

nlohmann::json ModelConfig::ToJson() const {
  return {{"base_width", base_width},       {"num_stages", num_stages},
          {"dilation_set", dilation_set},   {"attention", AttentionName(attention)},
          {"mask_head", mask_head},         {"depth_per_stage", depth_per_stage},
          {"seed", seed}};
}

ModelConfig ModelConfig::FromJson(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.base_width = j.value("base_width", c.base_width);
    c.num_stages = j.value("num_stages", c.num_stages);
    c.dilation_set = j.value("dilation_set", c.dilation_set);
    c.attention = ParseAttention(j.value("attention", AttentionName(c.attention)));
    c.mask_head = j.value("mask_head", c.mask_head);
    c.depth_per_stage = j.value("depth_per_stage", c.depth_per_stage);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("model config: ") + e.what());
  }
  std::sort(c.dilation_set.begin(), c.dilation_set.end());
  c.Validate();
  return c;
}

Tensor ApplyAttention(Attention kind, const Tensor& features, const AttentionParams& params) {
  if (features.rank() != 3) {
    throw Error(ErrorCode::kShapeMismatch, "attention expects C x H x W");
  }
  const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
  switch (kind) {
    case Attention::kSeMul:
      return Mul(features, ExpandChannels(SeGate(features, params), h, w));
    case Attention::kSeAdd:
      return Add(features, ExpandChannels(SeGate(features, params), h, w));
    case Attention::kCbamLite: {
      auto refined = Mul(features, ExpandChannels(SeGate(features, params), h, w));
      auto pooled = ConcatChannels({Pool(PoolOp::kSpatialChannelAvg, refined),
                                    Pool(PoolOp::kSpatialChannelMax, refined)});
      auto map = Sigmoid(Conv2d(pooled, params.spatial_weight, params.spatial_bias,
                                kSpatialKernel / 2, 1));
      return Mul(refined, ExpandSpatial(map, c));
    }
    case Attention::kNone:
      break;
  }
  throw Error(ErrorCode::kInvalidArgument, "attention kind must be se_mul, se_add or cbam_lite");
}

DerainModel::DerainModel(const ModelConfig& config) : config_(config) {
  config_.Validate();
  std::mt19937_64 rng(config_.seed);
  const std::size_t width = config_.base_width;
  const std::size_t paths = config_.dilation_set.size();
  stages_.resize(config_.num_stages);
  for (Stage& stage : stages_) {
    for (std::size_t l = 0; l < config_.depth_per_stage; ++l) {
      const std::size_t cin = l == 0 ? 6 : width;  // stage input is concat(O_{t-1}, R_{t-1})
      Layer layer;
      for (std::size_t p = 0; p < paths; ++p) {
        layer.path_weights.push_back(
            HeUniform({width, cin, kKernel, kKernel}, cin * kKernel * kKernel * paths, rng));
      }
      layer.bias = Tensor::Zeros({width});
      layer.attention = MakeAttention(config_.attention, width, rng);
      stage.layers.push_back(std::move(layer));
    }
    stage.out_weight = HeUniform({3, width, kKernel, kKernel}, width * kKernel * kKernel, rng);
    stage.out_bias = Tensor::Zeros({3});
    if (config_.mask_head) {
      stage.mask_weight = HeUniform({1, width, kKernel, kKernel}, width * kKernel * kKernel, rng);
      stage.mask_bias = Tensor::Zeros({1});
    }
  }
  Register();
}

void DerainModel::Register() {
  params_.clear();
  auto add = [&](std::string name, const Tensor& t) {
    if (t.defined()) params_.push_back({std::move(name), t});
  };
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string sp = "stage" + std::to_string(s);
    for (std::size_t l = 0; l < stages_[s].layers.size(); ++l) {
      const Layer& layer = stages_[s].layers[l];
      const std::string lp = sp + ".layer" + std::to_string(l);
      for (std::size_t p = 0; p < layer.path_weights.size(); ++p) {
        add(lp + ".dil" + std::to_string(config_.dilation_set[p]) + ".weight", layer.path_weights[p]);
      }
      add(lp + ".bias", layer.bias);
      add(lp + ".att.fc1.weight", layer.attention.fc1_weight);
      add(lp + ".att.fc1.bias", layer.attention.fc1_bias);
      add(lp + ".att.fc2.weight", layer.attention.fc2_weight);
      add(lp + ".att.fc2.bias", layer.attention.fc2_bias);
      add(lp + ".att.spatial.weight", layer.attention.spatial_weight);
      add(lp + ".att.spatial.bias", layer.attention.spatial_bias);
    }
    add(sp + ".out.weight", stages_[s].out_weight);
    add(sp + ".out.bias", stages_[s].out_bias);
    add(sp + ".mask.weight", stages_[s].mask_weight);
    add(sp + ".mask.bias", stages_[s].mask_bias);
  }
}

DerainModel DerainModel::Clone() const {
  DerainModel copy;
  copy.config_ = config_;
  copy.stages_ = stages_;
  for (Stage& stage : copy.stages_) {
    for (Layer& layer : stage.layers) {
      for (Tensor& w : layer.path_weights) w = DeepCopy(w);
      layer.bias = DeepCopy(layer.bias);
      AttentionParams& a = layer.attention;
      for (Tensor* t : {&a.fc1_weight, &a.fc1_bias, &a.fc2_weight, &a.fc2_bias, &a.spatial_weight,
                        &a.spatial_bias}) {
        *t = DeepCopy(*t);
      }
    }
    for (Tensor* t : {&stage.out_weight, &stage.out_bias, &stage.mask_weight, &stage.mask_bias}) {
      *t = DeepCopy(*t);
    }
  }
  copy.Register();
  return copy;
}

StageOutputs DerainModel::Forward(const Tensor& rainy) const {
  if (rainy.rank() != 3 || rainy.dim(0) != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                "model input must be 3 x H x W, got " + ShapeString(rainy.shape()));
  }
  const std::size_t h = rainy.dim(1), w = rainy.dim(2);
  StageOutputs out;
  Tensor previous_bg = rainy;
  Tensor previous_rain = Tensor::Zeros({3, h, w});
  for (const Stage& stage : stages_) {
    Tensor feat = ConcatChannels({previous_bg, previous_rain});
    for (const Layer& layer : stage.layers) {
      Tensor sum;
      for (std::size_t p = 0; p < layer.path_weights.size(); ++p) {
        const std::size_t d = config_.dilation_set[p];
        Tensor path = Conv2d(feat, layer.path_weights[p], p == 0 ? layer.bias : Tensor{}, d, d);
        sum = p == 0 ? path : Add(sum, path);
      }
      feat = Relu(sum);
      if (config_.attention != Attention::kNone) {
        feat = ApplyAttention(config_.attention, feat, layer.attention);
      }
    }
    Tensor rain = Conv2d(feat, stage.out_weight, stage.out_bias, 1, 1);
    Tensor background = Sub(rainy, rain);
    if (config_.mask_head) out.mask_logits.push_back(Conv2d(feat, stage.mask_weight, stage.mask_bias, 1, 1));
    out.rain.push_back(rain);
    out.background.push_back(background);
    previous_bg = background;
    previous_rain = rain;
  }
  return out;
}

std::size_t DerainModel::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

Tensor& DerainModel::Parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw Error(ErrorCode::kInvalidArgument, "no parameter named '" + name + "'");
}

void DerainModel::SetRequiresGrad(bool requires_grad) {
  for (auto& p : params_) p.value.set_requires_grad(requires_grad);
}

void DerainModel::ZeroGrad() {
  for (auto& p : params_) p.value.zero_grad();
}

std::string DerainModel::Checksum() const {
  Sha256 hash;
  for (const auto& p : params_) {
    hash.Update(p.name).Update(ShapeString(p.value.shape())).Update(p.value.data());
  }
  return hash.HexDigest();
}

void DerainModel::ZeroResidualLayers() {
  for (Stage& stage : stages_) {
    for (double& v : stage.out_weight.mutable_data()) v = 0.0;
    for (double& v : stage.out_bias.mutable_data()) v = 0.0;
  }
}

FeatureExtractor::FeatureExtractor() {
  std::mt19937_64 rng(kSeed);
  const std::size_t widths[] = {3, 8, 16, 32};
  for (int l = 0; l < 3; ++l) {
    const std::size_t cin = widths[l], cout = widths[l + 1];
    params_.push_back({"w" + std::to_string(l + 1), HeUniform({cout, cin, 3, 3}, cin * 9, rng)});
    params_.push_back({"b" + std::to_string(l + 1), Tensor::Zeros({cout})});
  }
}

std::vector<Tensor> FeatureExtractor::Extract(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                "feature extractor expects 3 x H x W, got " + ShapeString(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h < 8 || w < 8 || h % 4 || w % 4) {
    throw Error(ErrorCode::kShapeMismatch, "feature extractor needs H, W >= 8 and divisible by 4, got " +
                                               ShapeString(image.shape()));
  }
  std::vector<Tensor> feats;
  Tensor x = image;
  for (int l = 0; l < 3; ++l) {
    if (l > 0) x = AvgPool2(x);
    x = Relu(Conv2d(x, params_[2 * l].value, params_[2 * l + 1].value, 1, 1));
    feats.push_back(x);
  }
  return feats;
}

}  // namespace rstb
