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

#include <algorithm>
#include <string>

#include "rstb/error.hpp"
#include "rstb/kernels.hpp"
#include "rstb/ops.hpp"

namespace rstb {
namespace {

// Copies planes C x H x W into the interior of zero planes C x (H+2p) x (W+2p).
std::vector<double> PadPlanes(const double* src, std::size_t c, std::size_t h, std::size_t w,
                              std::size_t pad) {
  const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
  std::vector<double> out(c * hp * wp, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(src + (k * h + y) * w, w, out.data() + (k * hp + y + pad) * wp + pad);
    }
  }
  return out;
}

struct ConvGeometry {
  std::size_t cin, cout, h, w, k, pad, dil;
  std::size_t hp() const { return h + 2 * pad; }
  std::size_t wp() const { return w + 2 * pad; }
  std::size_t taps() const { return cin * k * k; }
};

}  // namespace

// All three passes run over zero-padded planes so every tap is in bounds and
// each output element accumulates its taps in a fixed order:
//   forward      out[co]  = bias + sum over (ci, ky, kx)
//   input grad   gin[ci]  = sum over (co, ky, kx) of the flipped taps
//   weight grad  gw       = sum over rows y of the canonical row dot
Tensor Conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t padding,
              std::size_t dilation) {
  if (input.rank() != 3) {
    throw Error(ErrorCode::kShapeMismatch, "conv2d input must be C x H x W, got " +
                                               ShapeString(input.shape()));
  }
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3)) {
    throw Error(ErrorCode::kShapeMismatch, "conv2d kernel must be Cout x Cin x k x k, got " +
                                               ShapeString(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(0)) {
    throw Error(ErrorCode::kShapeMismatch,
                "conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                    " input channels, input has " + std::to_string(input.dim(0)));
  }
  const std::size_t k = kernel.dim(2);
  if (k % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "conv2d kernel size must be odd");
  if (dilation == 0) throw Error(ErrorCode::kInvalidArgument, "conv2d dilation must be >= 1");
  if (padding != dilation * (k - 1) / 2) {
    throw Error(ErrorCode::kInvalidArgument, "conv2d padding must equal dilation*(k-1)/2 = " +
                                                 std::to_string(dilation * (k - 1) / 2));
  }
  const std::size_t cout = kernel.dim(0);
  if (bias.defined() && (bias.numel() != cout)) {
    throw Error(ErrorCode::kShapeMismatch, "conv2d bias must have " + std::to_string(cout) +
                                               " entries, got " + ShapeString(bias.shape()));
  }

  const ConvGeometry g{input.dim(0), cout, input.dim(1), input.dim(2), k, padding, dilation};
  const auto& kt = kernels::Active();
  const std::vector<double> xp = PadPlanes(input.data().data(), g.cin, g.h, g.w, g.pad);
  const double* wt = kernel.data().data();

  std::vector<double> out(cout * g.h * g.w, 0.0);
  std::vector<const double*> src(g.taps());
  for (std::size_t y = 0; y < g.h; ++y) {
    std::size_t t = 0;
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          src[t++] = xp.data() + (ci * g.hp() + y + ky * g.dil) * g.wp() + kx * g.dil;
        }
      }
    }
    for (std::size_t co = 0; co < cout; ++co) {
      double* row = out.data() + (co * g.h + y) * g.w;
      if (bias.defined()) std::fill_n(row, g.w, bias.data()[co]);
      kt.multi_axpy(wt + co * g.taps(), src.data(), g.taps(), row, g.w);
    }
  }

  std::vector<Tensor> inputs{input, kernel};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return MakeOpResult(
      "conv2d", {cout, g.h, g.w}, std::move(out), std::move(inputs),
      [g, has_bias](detail::Node& self) {
        const auto& kt = kernels::Active();
        const std::size_t hw = g.h * g.w;
        const std::size_t kk = g.k * g.k;
        const double* gout = self.grad.data();
        detail::Node& in = *self.inputs[0];
        detail::Node& ker = *self.inputs[1];
        const double* wv = ker.value.data();

        if (in.requires_grad) {
          const std::vector<double> gp = PadPlanes(gout, g.cout, g.h, g.w, g.pad);
          // Weights regrouped per input channel in (co, ky, kx) order.
          std::vector<double> wt(g.cin * g.cout * kk);
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t co = 0; co < g.cout; ++co) {
              for (std::size_t j = 0; j < kk; ++j) {
                wt[(ci * g.cout + co) * kk + j] = wv[(co * g.cin + ci) * kk + j];
              }
            }
          }
          std::vector<double> gin(g.cin * hw, 0.0);
          std::vector<const double*> src(g.cout * kk);
          for (std::size_t y = 0; y < g.h; ++y) {
            std::size_t t = 0;
            for (std::size_t co = 0; co < g.cout; ++co) {
              for (std::size_t ky = 0; ky < g.k; ++ky) {
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                  // Output (y', x') = (y + p - ky*d, x + p - kx*d) read input (y, x) via this tap.
                  src[t++] = gp.data() + (co * g.hp() + y + 2 * g.pad - ky * g.dil) * g.wp() +
                             (2 * g.pad - kx * g.dil);
                }
              }
            }
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              kt.multi_axpy(wt.data() + ci * g.cout * kk, src.data(), src.size(),
                            gin.data() + (ci * g.h + y) * g.w, g.w);
            }
          }
          auto dst = detail::GradBuffer(in);
          kt.accumulate(gin.data(), dst.data(), gin.size());
        }

        if (ker.requires_grad) {
          const std::vector<double> xp = PadPlanes(in.value.data(), g.cin, g.h, g.w, g.pad);
          std::vector<double> acc(g.cout * g.cin * kk, 0.0);
          std::vector<const double*> src(kk);
          for (std::size_t co = 0; co < g.cout; ++co) {
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              double* a = acc.data() + (co * g.cin + ci) * kk;
              for (std::size_t y = 0; y < g.h; ++y) {
                for (std::size_t ky = 0; ky < g.k; ++ky) {
                  for (std::size_t kx = 0; kx < g.k; ++kx) {
                    src[ky * g.k + kx] =
                        xp.data() + (ci * g.hp() + y + ky * g.dil) * g.wp() + kx * g.dil;
                  }
                }
                kt.multi_dot(gout + (co * g.h + y) * g.w, src.data(), kk, a, g.w);
              }
            }
          }
          auto gk = detail::GradBuffer(ker);
          kt.accumulate(acc.data(), gk.data(), acc.size());
        }

        if (has_bias && self.inputs[2]->requires_grad) {
          auto gb = detail::GradBuffer(*self.inputs[2]);
          for (std::size_t co = 0; co < g.cout; ++co) gb[co] += kt.sum(gout + co * hw, hw);
        }
      });
}

}  // namespace rstb
