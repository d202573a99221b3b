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

#include "rstb/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rstb/error.hpp"
#include "rstb/kernels.hpp"

namespace rstb {
namespace {

using detail::GradBuffer;
using detail::Node;

const kernels::KernelTable& K() { return kernels::Active(); }

void RequireImage(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(op) + " expects C x H x W, got " + ShapeString(t.shape()));
  }
}

enum class Broadcast { kNone, kScalarA, kScalarB };

Broadcast CheckBinary(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (b.numel() == 1) return Broadcast::kScalarB;
  if (a.numel() == 1) return Broadcast::kScalarA;
  throw Error(ErrorCode::kShapeMismatch, std::string(op) + ": incompatible shapes " +
                                             ShapeString(a.shape()) + " and " +
                                             ShapeString(b.shape()));
}

// Accumulates `g` into input `i` of `self` when that input tracks gradients;
// a single-element input receives the sum.
void AccumulateInto(Node& self, std::size_t i, std::span<const double> g) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return;
  auto dst = GradBuffer(in);
  if (dst.size() == g.size()) {
    K().accumulate(g.data(), dst.data(), g.size());
  } else {
    dst[0] += K().sum(g.data(), g.size());
  }
}

}  // namespace

Tensor Add(const Tensor& a, const Tensor& b) {
  const Broadcast bc = CheckBinary(a, b, "add");
  const Tensor& big = bc == Broadcast::kScalarA ? b : a;
  std::vector<double> out(big.numel());
  if (bc == Broadcast::kNone) {
    K().add(a.data().data(), b.data().data(), out.data(), out.size());
  } else {
    const double s = (bc == Broadcast::kScalarB ? b : a).data()[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = big.data()[i] + s;
  }
  return MakeOpResult("add", big.shape(), std::move(out), {a, b}, [](Node& self) {
    AccumulateInto(self, 0, self.grad);
    AccumulateInto(self, 1, self.grad);
  });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  const Broadcast bc = CheckBinary(a, b, "sub");
  const Tensor& big = bc == Broadcast::kScalarA ? b : a;
  std::vector<double> out(big.numel());
  if (bc == Broadcast::kNone) {
    K().sub(a.data().data(), b.data().data(), out.data(), out.size());
  } else if (bc == Broadcast::kScalarB) {
    const double s = b.data()[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - s;
  } else {
    const double s = a.data()[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s - b.data()[i];
  }
  return MakeOpResult("sub", big.shape(), std::move(out), {a, b}, [](Node& self) {
    AccumulateInto(self, 0, self.grad);
    std::vector<double> neg(self.grad.size());
    K().scale(-1.0, self.grad.data(), neg.data(), neg.size());
    AccumulateInto(self, 1, neg);
  });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  const Broadcast bc = CheckBinary(a, b, "mul");
  const Tensor& big = bc == Broadcast::kScalarA ? b : a;
  std::vector<double> out(big.numel());
  if (bc == Broadcast::kNone) {
    K().mul(a.data().data(), b.data().data(), out.data(), out.size());
  } else {
    const double s = (bc == Broadcast::kScalarB ? b : a).data()[0];
    K().scale(s, big.data().data(), out.data(), out.size());
  }
  return MakeOpResult("mul", big.shape(), std::move(out), {a, b}, [bc](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const std::size_t n = self.grad.size();
    std::vector<double> g(n);
    // d/da = g * b
    if (bc == Broadcast::kNone) {
      K().mul(self.grad.data(), bv.data(), g.data(), n);
    } else if (bc == Broadcast::kScalarB) {
      K().scale(bv[0], self.grad.data(), g.data(), n);
    } else {
      K().mul(self.grad.data(), bv.data(), g.data(), n);
    }
    AccumulateInto(self, 0, g);
    // d/db = g * a
    if (bc == Broadcast::kNone) {
      K().mul(self.grad.data(), av.data(), g.data(), n);
    } else if (bc == Broadcast::kScalarA) {
      K().scale(av[0], self.grad.data(), g.data(), n);
    } else {
      K().mul(self.grad.data(), av.data(), g.data(), n);
    }
    AccumulateInto(self, 1, g);
  });
}

Tensor AddScalar(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + s;
  return MakeOpResult("add_scalar", a.shape(), std::move(out), {a},
                      [](Node& self) { AccumulateInto(self, 0, self.grad); });
}

Tensor ScalarMul(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  K().scale(s, a.data().data(), out.data(), out.size());
  return MakeOpResult("scalar_mul", a.shape(), std::move(out), {a}, [s](Node& self) {
    std::vector<double> g(self.grad.size());
    K().scale(s, self.grad.data(), g.data(), g.size());
    AccumulateInto(self, 0, g);
  });
}

Tensor Relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return MakeOpResult("relu", a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& x = self.inputs[0]->value;
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = x[i] > 0.0 ? self.grad[i] : 0.0;
    AccumulateInto(self, 0, g);
  });
}

Tensor Sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return MakeOpResult("sigmoid", a.shape(), std::move(out), {a}, [](Node& self) {
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.value[i];
      g[i] = self.grad[i] * (s * (1.0 - s));
    }
    AccumulateInto(self, 0, g);
  });
}

Tensor Clip(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw Error(ErrorCode::kInvalidArgument, "clip with lo > hi");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(a.data()[i], lo), hi);
  return MakeOpResult("clip", a.shape(), std::move(out), {a}, [lo, hi](Node& self) {
    const auto& x = self.inputs[0]->value;
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (x[i] > lo && x[i] < hi) ? self.grad[i] : 0.0;
    AccumulateInto(self, 0, g);
  });
}

Tensor ClipBox(const Tensor& a, const Tensor& lo, const Tensor& hi) {
  if (lo.shape() != a.shape() || hi.shape() != a.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "clip bounds must match " + ShapeString(a.shape()));
  }
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto l = lo.data();
  const auto h = hi.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(x[i], l[i]), h[i]);
  std::vector<double> lo_copy(l.begin(), l.end());
  std::vector<double> hi_copy(h.begin(), h.end());
  return MakeOpResult("clip_box", a.shape(), std::move(out), {a},
                      [lo_copy = std::move(lo_copy), hi_copy = std::move(hi_copy)](Node& self) {
                        const auto& x = self.inputs[0]->value;
                        std::vector<double> g(self.grad.size());
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          g[i] = (x[i] > lo_copy[i] && x[i] < hi_copy[i]) ? self.grad[i] : 0.0;
                        }
                        AccumulateInto(self, 0, g);
                      });
}

Tensor Elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b, double p0, double p1) {
  switch (op) {
    case ElementwiseOp::kAdd:
      return Add(a, b);
    case ElementwiseOp::kSub:
      return Sub(a, b);
    case ElementwiseOp::kMul:
      return Mul(a, b);
    case ElementwiseOp::kRelu:
      return Relu(a);
    case ElementwiseOp::kSigmoid:
      return Sigmoid(a);
    case ElementwiseOp::kScalarMul:
      return ScalarMul(a, p0);
    case ElementwiseOp::kClip:
      return Clip(a, p0, p1);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown elementwise op");
}

Tensor Sum(const Tensor& a) {
  const double s = K().sum(a.data().data(), a.numel());
  return MakeOpResult("sum", {1}, {s}, {a}, [](Node& self) {
    std::vector<double> g(self.inputs[0]->value.size(), self.grad[0]);
    AccumulateInto(self, 0, g);
  });
}

Tensor Mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  const double m = K().sum(a.data().data(), a.numel()) / n;
  return MakeOpResult("mean", {1}, {m}, {a}, [n](Node& self) {
    std::vector<double> g(self.inputs[0]->value.size(), self.grad[0] / n);
    AccumulateInto(self, 0, g);
  });
}

Tensor L2Norm(const Tensor& a) {
  const auto x = a.data();
  const double norm = std::sqrt(K().dot(x.data(), x.data(), x.size()));
  return MakeOpResult("l2_norm", {1}, {norm}, {a}, [](Node& self) {
    const double norm = self.value[0];
    const auto& x = self.inputs[0]->value;
    std::vector<double> g(x.size(), 0.0);
    if (norm > 0.0) K().scale(self.grad[0] / norm, x.data(), g.data(), g.size());
    AccumulateInto(self, 0, g);
  });
}

Tensor Reduce(ReduceOp op, const Tensor& a) {
  switch (op) {
    case ReduceOp::kSum:
      return Sum(a);
    case ReduceOp::kMean:
      return Mean(a);
    case ReduceOp::kL2Norm:
      return L2Norm(a);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown reduce op");
}

Tensor MeanSquaredError(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::kShapeMismatch,
                "mse: " + ShapeString(a.shape()) + " vs " + ShapeString(b.shape()));
  }
  const double n = static_cast<double>(a.numel());
  const double v = K().sum_sq_diff(a.data().data(), b.data().data(), a.numel()) / n;
  return MakeOpResult("mse", {1}, {v}, {a, b}, [n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    std::vector<double> diff(av.size());
    K().sub(av.data(), bv.data(), diff.data(), diff.size());
    std::vector<double> g(av.size());
    K().scale(2.0 * self.grad[0] / n, diff.data(), g.data(), g.size());
    AccumulateInto(self, 0, g);
    K().scale(-1.0, g.data(), g.data(), g.size());
    AccumulateInto(self, 1, g);
  });
}

Tensor BceWithLogits(const Tensor& logits, const Tensor& target) {
  if (logits.shape() != target.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "bce: " + ShapeString(logits.shape()) + " vs " +
                                               ShapeString(target.shape()));
  }
  const auto x = logits.data();
  const auto t = target.data();
  std::vector<double> terms(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    terms[i] = std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  const double n = static_cast<double>(x.size());
  const double v = K().sum(terms.data(), terms.size()) / n;
  std::vector<double> t_copy(t.begin(), t.end());
  return MakeOpResult("bce_logits", {1}, {v}, {logits}, [n, t_copy = std::move(t_copy)](Node& self) {
    const auto& x = self.inputs[0]->value;
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                   : std::exp(x[i]) / (1.0 + std::exp(x[i]));
      g[i] = self.grad[0] * (s - t_copy[i]) / n;
    }
    AccumulateInto(self, 0, g);
  });
}

Tensor Pool(PoolOp op, const Tensor& input) {
  RequireImage(input, "pool");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2), hw = h * w;
  const auto x = input.data();
  switch (op) {
    case PoolOp::kChannelGlobalAvg: {
      std::vector<double> out(c);
      for (std::size_t k = 0; k < c; ++k) out[k] = K().sum(x.data() + k * hw, hw) / double(hw);
      return MakeOpResult("channel_global_avg", {c, 1, 1}, std::move(out), {input},
                          [c, hw](Node& self) {
                            std::vector<double> g(c * hw);
                            for (std::size_t k = 0; k < c; ++k) {
                              std::fill_n(g.begin() + k * hw, hw, self.grad[k] / double(hw));
                            }
                            AccumulateInto(self, 0, g);
                          });
    }
    case PoolOp::kChannelGlobalMax: {
      std::vector<double> out(c);
      std::vector<std::size_t> arg(c);
      for (std::size_t k = 0; k < c; ++k) {
        const double* p = x.data() + k * hw;
        arg[k] = std::max_element(p, p + hw) - p;  // first maximum
        out[k] = p[arg[k]];
      }
      return MakeOpResult("channel_global_max", {c, 1, 1}, std::move(out), {input},
                          [c, hw, arg = std::move(arg)](Node& self) {
                            std::vector<double> g(c * hw, 0.0);
                            for (std::size_t k = 0; k < c; ++k) g[k * hw + arg[k]] = self.grad[k];
                            AccumulateInto(self, 0, g);
                          });
    }
    case PoolOp::kSpatialChannelAvg: {
      std::vector<double> out(hw, 0.0);
      for (std::size_t k = 0; k < c; ++k) K().accumulate(x.data() + k * hw, out.data(), hw);
      K().scale(1.0 / double(c), out.data(), out.data(), hw);
      return MakeOpResult("spatial_channel_avg", {1, h, w}, std::move(out), {input},
                          [c, hw](Node& self) {
                            std::vector<double> g(c * hw);
                            for (std::size_t k = 0; k < c; ++k) {
                              K().scale(1.0 / double(c), self.grad.data(), g.data() + k * hw, hw);
                            }
                            AccumulateInto(self, 0, g);
                          });
    }
    case PoolOp::kSpatialChannelMax: {
      std::vector<double> out(hw);
      std::vector<std::size_t> arg(hw, 0);
      for (std::size_t i = 0; i < hw; ++i) {
        double best = x[i];
        for (std::size_t k = 1; k < c; ++k) {
          if (x[k * hw + i] > best) {
            best = x[k * hw + i];
            arg[i] = k;
          }
        }
        out[i] = best;
      }
      return MakeOpResult("spatial_channel_max", {1, h, w}, std::move(out), {input},
                          [c, hw, arg = std::move(arg)](Node& self) {
                            std::vector<double> g(c * hw, 0.0);
                            for (std::size_t i = 0; i < hw; ++i) g[arg[i] * hw + i] = self.grad[i];
                            AccumulateInto(self, 0, g);
                          });
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown pool op");
}

Tensor AvgPool2(const Tensor& input) {
  RequireImage(input, "avg_pool2");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 || w % 2) {
    throw Error(ErrorCode::kShapeMismatch, "avg_pool2 needs even H and W, got " +
                                               ShapeString(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  const auto x = input.data();
  std::vector<double> out(c * oh * ow);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < oh; ++y) {
      const double* r0 = x.data() + (k * h + 2 * y) * w;
      const double* r1 = r0 + w;
      for (std::size_t i = 0; i < ow; ++i) {
        out[(k * oh + y) * ow + i] =
            ((r0[2 * i] + r0[2 * i + 1]) + (r1[2 * i] + r1[2 * i + 1])) * 0.25;
      }
    }
  }
  return MakeOpResult("avg_pool2", {c, oh, ow}, std::move(out), {input},
                      [c, h, w, oh, ow](Node& self) {
                        std::vector<double> g(c * h * w);
                        for (std::size_t k = 0; k < c; ++k) {
                          for (std::size_t y = 0; y < h; ++y) {
                            for (std::size_t i = 0; i < w; ++i) {
                              g[(k * h + y) * w + i] =
                                  self.grad[(k * oh + y / 2) * ow + i / 2] * 0.25;
                            }
                          }
                        }
                        AccumulateInto(self, 0, g);
                      });
}

Tensor ExpandChannels(const Tensor& gate, std::size_t height, std::size_t width) {
  if (gate.rank() != 3 || gate.dim(1) != 1 || gate.dim(2) != 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "expand_channels expects C x 1 x 1, got " + ShapeString(gate.shape()));
  }
  const std::size_t c = gate.dim(0), hw = height * width;
  std::vector<double> out(c * hw);
  for (std::size_t k = 0; k < c; ++k) std::fill_n(out.begin() + k * hw, hw, gate.data()[k]);
  return MakeOpResult("expand_channels", {c, height, width}, std::move(out), {gate},
                      [c, hw](Node& self) {
                        std::vector<double> g(c);
                        for (std::size_t k = 0; k < c; ++k) g[k] = K().sum(self.grad.data() + k * hw, hw);
                        AccumulateInto(self, 0, g);
                      });
}

Tensor ExpandSpatial(const Tensor& map, std::size_t channels) {
  if (map.rank() != 3 || map.dim(0) != 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "expand_spatial expects 1 x H x W, got " + ShapeString(map.shape()));
  }
  const std::size_t h = map.dim(1), w = map.dim(2), hw = h * w;
  std::vector<double> out(channels * hw);
  for (std::size_t k = 0; k < channels; ++k) {
    std::copy(map.data().begin(), map.data().end(), out.begin() + k * hw);
  }
  return MakeOpResult("expand_spatial", {channels, h, w}, std::move(out), {map},
                      [channels, hw](Node& self) {
                        std::vector<double> g(hw, 0.0);
                        for (std::size_t k = 0; k < channels; ++k) {
                          K().accumulate(self.grad.data() + k * hw, g.data(), hw);
                        }
                        AccumulateInto(self, 0, g);
                      });
}

Tensor ConcatChannels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorCode::kEmptyTensor, "concat of zero tensors");
  for (const Tensor& p : parts) RequireImage(p, "concat_channels");
  const std::size_t h = parts[0].dim(1), w = parts[0].dim(2);
  std::size_t c = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    if (p.dim(1) != h || p.dim(2) != w) {
      throw Error(ErrorCode::kShapeMismatch, "concat_channels: spatial sizes differ (" +
                                                 ShapeString(parts[0].shape()) + " vs " +
                                                 ShapeString(p.shape()) + ")");
    }
    offsets.push_back(c * h * w);
    c += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(c * h * w);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return MakeOpResult("concat_channels", {c, h, w}, std::move(out), parts,
                      [offsets = std::move(offsets)](Node& self) {
                        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                          const std::size_t n = self.inputs[i]->value.size();
                          AccumulateInto(self, i, std::span<const double>(self.grad).subspan(offsets[i], n));
                        }
                      });
}

Tensor Crop(const Tensor& input, const Rect& rect) {
  RequireImage(input, "crop");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (rect.height == 0 || rect.width == 0 || rect.y + rect.height > h || rect.x + rect.width > w) {
    throw Error(ErrorCode::kInvalidArgument, "crop rect outside " + ShapeString(input.shape()));
  }
  std::vector<double> out(c * rect.height * rect.width);
  const auto x = input.data();
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < rect.height; ++y) {
      const double* src = x.data() + (k * h + rect.y + y) * w + rect.x;
      std::copy_n(src, rect.width, out.begin() + (k * rect.height + y) * rect.width);
    }
  }
  return MakeOpResult("crop", {c, rect.height, rect.width}, std::move(out), {input},
                      [c, h, w, rect](Node& self) {
                        std::vector<double> g(c * h * w, 0.0);
                        for (std::size_t k = 0; k < c; ++k) {
                          for (std::size_t y = 0; y < rect.height; ++y) {
                            std::copy_n(self.grad.data() + (k * rect.height + y) * rect.width,
                                        rect.width, g.begin() + (k * h + rect.y + y) * w + rect.x);
                          }
                        }
                        AccumulateInto(self, 0, g);
                      });
}

Tensor NormalizeChannels(const Tensor& input) {
  RequireImage(input, "normalize_channels");
  const std::size_t c = input.dim(0), hw = input.dim(1) * input.dim(2);
  const auto x = input.data();
  std::vector<double> sq(hw, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < hw; ++i) {
      const double v = x[k * hw + i];
      const double p = v * v;
      sq[i] += p;
    }
  }
  std::vector<double> norm(hw);
  for (std::size_t i = 0; i < hw; ++i) norm[i] = std::sqrt(sq[i]);
  std::vector<double> out(c * hw, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < hw; ++i) {
      if (norm[i] > 0.0) out[k * hw + i] = x[k * hw + i] / norm[i];
    }
  }
  return MakeOpResult("normalize_channels", input.shape(), std::move(out), {input},
                      [c, hw, norm = std::move(norm)](Node& self) {
                        // d(v/|v|) . g = (g - u (u . g)) / |v|, u = v/|v|.
                        std::vector<double> proj(hw, 0.0);
                        for (std::size_t k = 0; k < c; ++k) {
                          for (std::size_t i = 0; i < hw; ++i) {
                            const double p = self.value[k * hw + i] * self.grad[k * hw + i];
                            proj[i] += p;
                          }
                        }
                        std::vector<double> g(c * hw, 0.0);
                        for (std::size_t k = 0; k < c; ++k) {
                          for (std::size_t i = 0; i < hw; ++i) {
                            if (norm[i] > 0.0) {
                              const double u = self.value[k * hw + i];
                              g[k * hw + i] = (self.grad[k * hw + i] - u * proj[i]) / norm[i];
                            }
                          }
                        }
                        AccumulateInto(self, 0, g);
                      });
}

Tensor ApplyMask(const Tensor& a, const Tensor& mask) {
  const bool per_channel = mask.shape() == a.shape();
  const bool shared = a.rank() == 3 && mask.rank() == 3 && mask.dim(0) == 1 &&
                      mask.dim(1) == a.dim(1) && mask.dim(2) == a.dim(2);
  if (!per_channel && !shared) {
    throw Error(ErrorCode::kShapeMismatch,
                "mask " + ShapeString(mask.shape()) + " does not fit " + ShapeString(a.shape()));
  }
  const std::size_t n = a.numel();
  const std::size_t period = mask.numel();
  std::vector<char> keep(n);
  for (std::size_t i = 0; i < n; ++i) keep[i] = mask.data()[i % period] != 0.0;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = keep[i] ? a.data()[i] : 0.0;
  return MakeOpResult("apply_mask", a.shape(), std::move(out), {a},
                      [keep = std::move(keep)](Node& self) {
                        std::vector<double> g(self.grad.size());
                        for (std::size_t i = 0; i < g.size(); ++i) g[i] = keep[i] ? self.grad[i] : 0.0;
                        AccumulateInto(self, 0, g);
                      });
}

}  // namespace rstb
