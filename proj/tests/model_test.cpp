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

#include <memory>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "rstb/checkpoint.hpp"
#include "rstb/error.hpp"
#include "rstb/model.hpp"
#include "rstb/ops.hpp"

using namespace rstb;
using rstb::testing::CheckGradients;
using rstb::testing::RandomTensor;

namespace {

ModelConfig Small(Attention att = Attention::kSeAdd) {
  ModelConfig c;
  c.base_width = 4;
  c.num_stages = 2;
  c.depth_per_stage = 2;
  c.attention = att;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("build_model is deterministic and validated") {
  ModelConfig config;
  DerainModel a(config), b(config);
  CHECK(a.Checksum() == b.Checksum());
  config.seed = 1;
  CHECK(DerainModel(config).Checksum() != a.Checksum());

  ModelConfig bad;
  bad.num_stages = 0;
  CHECK_THROWS_AS(DerainModel{bad}, Error);
  bad = {};
  bad.dilation_set = {};
  CHECK_THROWS_AS(DerainModel{bad}, Error);
  bad.dilation_set = {1, 4};
  CHECK_THROWS_AS(DerainModel{bad}, Error);
  bad = {};
  bad.num_stages = 18;
  CHECK_THROWS_AS(DerainModel{bad}, Error);
}

TEST_CASE("parameter count grows with dilation paths and depth") {
  // Each layer holds one width x cin x 3 x 3 kernel per dilation path, so
  // dropping paths {2,3} removes exactly 2 * 9 * width * (6 + (depth-1)*width)
  // weights per stage.
  ModelConfig full;
  ModelConfig one = full;
  one.dilation_set = {1};
  ModelConfig two = full;
  two.dilation_set = {1, 2};
  const std::size_t w = full.base_width, depth = full.depth_per_stage;
  const std::size_t per_path = 9 * w * (6 + (depth - 1) * w);
  CHECK(DerainModel(full).ParameterCount() - DerainModel(one).ParameterCount() ==
        full.num_stages * 2 * per_path);
  CHECK(DerainModel(one).ParameterCount() < DerainModel(two).ParameterCount());
  CHECK(DerainModel(two).ParameterCount() < DerainModel(full).ParameterCount());

  ModelConfig deeper = full;
  deeper.depth_per_stage = 5;
  CHECK(DerainModel(full).ParameterCount() < DerainModel(deeper).ParameterCount());
}

TEST_CASE("forward keeps the residual decomposition for every config") {
  std::mt19937_64 rng(3);
  auto o = RandomTensor({3, 8, 12}, rng, 0, 1, false);
  for (Attention att : {Attention::kNone, Attention::kSeMul, Attention::kSeAdd, Attention::kCbamLite}) {
    for (bool mask : {false, true}) {
      ModelConfig c = Small(att);
      c.mask_head = mask;
      c.num_stages = 3;
      DerainModel model(c);
      auto out = model.Forward(o);
      REQUIRE(out.rain.size() == 3);
      CHECK(out.output().shape() == o.shape());
      for (std::size_t t = 0; t < 3; ++t) {
        for (std::size_t i = 0; i < o.numel(); ++i) {
          CHECK(out.background[t].data()[i] + out.rain[t].data()[i] ==
                doctest::Approx(o.data()[i]).epsilon(1e-12));
        }
      }
      CHECK(out.mask_logits.size() == (mask ? 3u : 0u));
      for (const auto& m : out.mask_logits) CHECK(m.shape() == Shape{1, 8, 12});
    }
  }
}

TEST_CASE("zeroed residual layers make the model the identity") {
  DerainModel model(ModelConfig{});
  model.ZeroResidualLayers();
  std::mt19937_64 rng(4);
  auto o = RandomTensor({3, 8, 8}, rng, 0, 1, false);
  auto out = model.Forward(o);
  for (const auto& r : out.rain) {
    for (double v : r.data()) CHECK(v == 0.0);
  }
  for (std::size_t i = 0; i < o.numel(); ++i) CHECK(out.output().data()[i] == o.data()[i]);
}

TEST_CASE("forward rejects wrong channel counts") {
  DerainModel model(Small());
  CHECK_THROWS_AS(model.Forward(Tensor::Zeros({1, 8, 8})), Error);
}

TEST_CASE("model gradient matches finite differences") {
  std::mt19937_64 rng(6);
  using rstb::testing::GradientOracle;
  SUBCASE("default config, l2_norm(B_T) w.r.t. O on 3x8x8") {
    DerainModel model(ModelConfig{});
    Tensor o;
    const auto s = GradientOracle(1, {&o}, [&] { o = RandomTensor({3, 8, 8}, rng, 0, 1); },
                                  [&] { return L2Norm(model.Restore(o)); });
    CHECK(s.accepted == 1);
    CHECK(s.worst < 1e-3);
  }
  SUBCASE("20 random small configs w.r.t. O") {
    const Attention kinds[] = {Attention::kNone, Attention::kSeMul, Attention::kSeAdd,
                               Attention::kCbamLite};
    const std::vector<std::size_t> dils[] = {{1}, {1, 2}, {1, 2, 3}, {2, 3}};
    std::unique_ptr<DerainModel> model;
    Tensor o;
    int draw = 0;
    const auto s = GradientOracle(20, {&o}, [&] {
      ModelConfig c = Small(kinds[draw % 4]);
      c.dilation_set = dils[(draw / 4) % 4];
      c.mask_head = draw % 3 == 0;
      c.seed = 100 + static_cast<std::uint64_t>(draw);
      ++draw;
      model = std::make_unique<DerainModel>(c);
      o = RandomTensor({3, 8, 8}, rng, 0, 1);
    }, [&] { return L2Norm(model->Restore(o)); });
    CHECK(s.accepted == 20);
    CHECK(s.worst < 1e-3);
  }
  SUBCASE("parameters") {
    ModelConfig c = Small(Attention::kCbamLite);
    c.mask_head = true;
    DerainModel model(c);
    model.SetRequiresGrad(true);
    auto o = RandomTensor({3, 8, 8}, rng, 0, 1, false);
    std::vector<Tensor*> leaves;
    for (auto& p : model.parameters()) {
      if (p.name.starts_with("stage1")) leaves.push_back(&p.value);
    }
    CHECK(CheckGradients(leaves, [&] {
            auto out = model.Forward(o);
            return Add(L2Norm(out.output()), Mean(out.mask_logits.back()));
          }) < 1e-3);
  }
}

TEST_CASE("attention examples") {
  std::mt19937_64 rng(7);
  const std::size_t c = 8;
  auto feats = RandomTensor({c, 5, 5}, rng, -2, 2, false);
  AttentionParams p;
  p.fc1_weight = RandomTensor({2, c, 1, 1}, rng, -1, 1, false);
  p.fc1_bias = Tensor::Zeros({2});
  p.fc2_weight = Tensor::Zeros({c, 2, 1, 1});

  SUBCASE("se_mul with saturated-open gate") {
    p.fc2_bias = Tensor::Full({c}, 20.0);
    auto y = ApplyAttention(Attention::kSeMul, feats, p);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y.data()[i] - feats.data()[i]) < 1e-8);
  }
  SUBCASE("se_add with saturated-closed gate") {
    p.fc2_bias = Tensor::Full({c}, -20.0);
    auto y = ApplyAttention(Attention::kSeAdd, feats, p);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y.data()[i] - feats.data()[i]) < 1e-8);
  }
  SUBCASE("se_mul annihilates zero features") {
    p.fc2_weight = RandomTensor({c, 2, 1, 1}, rng, -1, 1, false);
    p.fc2_bias = RandomTensor({c}, rng, -1, 1, false);
    auto y = ApplyAttention(Attention::kSeMul, Tensor::Zeros({c, 5, 5}), p);
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("none is rejected") {
    p.fc2_bias = Tensor::Zeros({c});
    CHECK_THROWS_AS(ApplyAttention(Attention::kNone, feats, p), Error);
  }
}

TEST_CASE("feature extractor") {
  FeatureExtractor f1, f2;
  std::mt19937_64 rng(8);
  auto img = RandomTensor({3, 32, 32}, rng, 0, 1, false);
  auto a = f1.Extract(img);
  auto b = f2.Extract(img);
  REQUIRE(a.size() == 3);
  CHECK(a[0].shape() == Shape{8, 32, 32});
  CHECK(a[1].shape() == Shape{16, 16, 16});
  CHECK(a[2].shape() == Shape{32, 8, 8});
  for (int l = 0; l < 3; ++l) {
    for (std::size_t i = 0; i < a[l].numel(); ++i) CHECK(a[l].data()[i] == b[l].data()[i]);
  }
  CHECK_THROWS_AS(f1.Extract(Tensor::Zeros({3, 10, 12})), Error);
  CHECK_THROWS_AS(f1.Extract(Tensor::Zeros({3, 4, 4})), Error);

  auto x = RandomTensor({3, 8, 8}, rng, 0, 1);
  auto w0 = RandomTensor({8, 8, 8}, rng, -1, 1, false);
  auto w1 = RandomTensor({16, 4, 4}, rng, -1, 1, false);
  auto w2 = RandomTensor({32, 2, 2}, rng, -1, 1, false);
  CHECK(CheckGradients({&x}, [&] {
          auto f = f1.Extract(x);
          return Add(Add(Sum(Mul(f[0], w0)), Sum(Mul(f[1], w1))), Sum(Mul(f[2], w2)));
        }) < 1e-3);
}

TEST_CASE("checkpoints round-trip bitwise") {
  ModelConfig c = Small(Attention::kCbamLite);
  c.mask_head = true;
  c.dilation_set = {1, 3};
  DerainModel model(c);
  const std::string bytes = SerializeCheckpoint(model);
  CHECK(bytes.substr(0, 4) == "RSTB");
  DerainModel back = DeserializeCheckpoint(bytes);
  CHECK(back.config() == c);
  CHECK(back.Checksum() == model.Checksum());
  CHECK(SerializeCheckpoint(back) == bytes);

  CHECK_THROWS_AS(DeserializeCheckpoint(bytes.substr(0, bytes.size() - 3)), Error);
  std::string corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS_AS(DeserializeCheckpoint(corrupt), Error);
}

TEST_CASE("clone shares no storage") {
  DerainModel a(Small());
  DerainModel b = a.Clone();
  CHECK(a.Checksum() == b.Checksum());
  b.parameters()[0].value.mutable_data()[0] += 1.0;
  CHECK(a.Checksum() != b.Checksum());
}
