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

// Differentiable ops over rstb::Tensor. Image tensors are C x H x W.
//
// Binary ops accept equal shapes or a single-element operand (scalar
// broadcast); nothing else broadcasts. Subgradients at relu/clip kinks are 0
// and max pooling routes its gradient to the first maximal element in
// row-major order.

#include <cstddef>
#include <vector>

#include "rstb/tensor.hpp"

namespace rstb {

// Elementwise.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor AddScalar(const Tensor& a, double s);
Tensor ScalarMul(const Tensor& a, double s);
Tensor Relu(const Tensor& a);
Tensor Sigmoid(const Tensor& a);
Tensor Clip(const Tensor& a, double lo, double hi);
// Clip against per-element bounds (constants, no gradient to them).
Tensor ClipBox(const Tensor& a, const Tensor& lo, const Tensor& hi);

enum class ElementwiseOp { kAdd, kSub, kMul, kRelu, kSigmoid, kScalarMul, kClip };
// Enum front end over the functions above. `p0`/`p1` carry the scalar
// factor (kScalarMul) or the clip bounds (kClip); `b` is used by binary ops.
Tensor Elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = {}, double p0 = 0.0,
                   double p1 = 0.0);

// Full reductions to a {1} tensor.
Tensor Sum(const Tensor& a);
Tensor Mean(const Tensor& a);
Tensor L2Norm(const Tensor& a);  // gradient at the origin is 0

enum class ReduceOp { kSum, kMean, kL2Norm };
Tensor Reduce(ReduceOp op, const Tensor& a);

// mean((a - b)^2), fused.
Tensor MeanSquaredError(const Tensor& a, const Tensor& b);
// mean(max(x,0) - x*t + log(1 + exp(-|x|))); `target` is a constant.
Tensor BceWithLogits(const Tensor& logits, const Tensor& target);

// Zero-padded cross-correlation. kernel: Cout x Cin x k x k, bias: Cout (may
// be undefined). Requires odd k and padding == dilation * (k - 1) / 2.
Tensor Conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t padding,
              std::size_t dilation);

enum class PoolOp { kChannelGlobalAvg, kChannelGlobalMax, kSpatialChannelAvg, kSpatialChannelMax };
// channel_global_*: C x H x W -> C x 1 x 1. spatial_channel_*: -> 1 x H x W.
Tensor Pool(PoolOp op, const Tensor& input);

// 2x2 average pooling with stride 2; H and W must be even.
Tensor AvgPool2(const Tensor& input);

// C x 1 x 1 -> C x H x W.
Tensor ExpandChannels(const Tensor& gate, std::size_t height, std::size_t width);
// 1 x H x W -> C x H x W.
Tensor ExpandSpatial(const Tensor& map, std::size_t channels);

Tensor ConcatChannels(const std::vector<Tensor>& parts);

struct Rect {
  std::size_t y = 0;
  std::size_t x = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  bool operator==(const Rect&) const = default;
};
Tensor Crop(const Tensor& input, const Rect& rect);

// Scales each spatial feature vector (over channels) to unit l2 norm;
// zero vectors stay zero.
Tensor NormalizeChannels(const Tensor& input);

// mask != 0 ? a : +0.0. `mask` is a constant of a's shape, or 1 x H x W
// applied to every channel.
Tensor ApplyMask(const Tensor& a, const Tensor& mask);

}  // namespace rstb
