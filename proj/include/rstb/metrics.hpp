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

// Image quality metrics, the differentiable perceptual distance and the
// mean-adversarial-performance (mAP) aggregate over a perturbation set.
//
// Images are C x H x W tensors on the [0, 1] scale.

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rstb/model.hpp"
#include "rstb/tensor.hpp"

namespace rstb {

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kPsnrCapMse = 1e-10;

// 10 log10(1 / MSE), or kPsnrCapDb once MSE drops below kPsnrCapMse.
double Psnr(const Tensor& x, const Tensor& y);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 1e-4;  // (0.01 L)^2, L = 1
inline constexpr double kSsimC2 = 9e-4;  // (0.03 L)^2

// Mean local SSIM of the channel-mean grayscale images over every window
// that fits entirely inside the image.
double Ssim(const Tensor& x, const Tensor& y);

// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> SsimGaussianTaps();

// Sum over the extractor's three layers of the mean squared difference of
// per-pixel unit-normalized feature vectors. Differentiable in both images.
Tensor PerceptualDistance(const Tensor& x, const Tensor& y, const FeatureExtractor& features);

// Perturbation bound kept as an exact rational, written "num/den".
struct Epsilon {
  std::uint32_t num = 0;
  std::uint32_t den = 255;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string ToString() const;
  // Accepts "k/255"-style rationals and a bare "0".
  static Epsilon Parse(std::string_view text);

  bool operator==(const Epsilon& other) const;
  std::strong_ordering operator<=>(const Epsilon& other) const;
};

// Comma-separated list, e.g. "1/255,2/255,4/255,8/255".
std::vector<Epsilon> ParseEpsilonList(std::string_view text);

enum class MetricName { kPsnrDb, kSsim, kLpips, kMiouPlaceholder };
std::string MetricNameString(MetricName name);

struct MetricValue {
  MetricName name;
  double value;
};

inline constexpr std::string_view kStatusOk = "ok";

struct ReportRow {
  std::string image_id;
  Epsilon epsilon;
  std::string objective;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double lpips = 0.0;
  std::string status{kStatusOk};  // failure tag when the attack aborted

  bool ok() const { return status == kStatusOk; }
};

struct MetricTriple {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double lpips = 0.0;
};

// Mean over epsilons of the mean over images. Every (image, epsilon) cell for
// epsilon in `epsilons` must appear exactly once among `rows`; rows at other
// epsilons are ignored. Throws kMissingCells naming absent or repeated cells.
MetricTriple AggregateMap(const std::vector<ReportRow>& rows,
                          const std::vector<Epsilon>& epsilons);

struct RobustnessReport {
  std::string dataset_id;
  std::string objective;
  std::vector<Epsilon> epsilons;  // the set E averaged by mAP
  std::vector<ReportRow> rows;    // includes the epsilon = 0 baseline rows
  nlohmann::json config = nlohmann::json::object();

  // Means over successful rows at each epsilon present, ascending.
  std::vector<std::pair<Epsilon, MetricTriple>> PerEpsilonMeans() const;

  // mAP over images whose cells at every epsilon in E succeeded. Images with
  // any failed cell are excluded and listed in the summary.
  MetricTriple Map() const;
  std::vector<std::string> FailedImages() const;

  // Columns image_id, epsilon_num, epsilon_den, objective, psnr_db, ssim,
  // lpips, status; rows in stored order.
  std::string ToCsv() const;
  nlohmann::json Summary() const;
};

// Shortest round-trip decimal for a double; used for every float we emit.
std::string FormatDouble(double value);

}  // namespace rstb
