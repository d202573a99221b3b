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

// Procedural rainy/clean image pairs with ground-truth rain masks.
//
// O = clip(B + R, 0, 1) with R >= 0 a blurred sum of anti-aliased streaks
// (identical on all channels) and M = [max_c R > kMaskThreshold].

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "rstb/tensor.hpp"

namespace rstb {

inline constexpr double kMaskThreshold = 0.05;
inline constexpr double kCalibratedPsnrLowDb = 15.0;
inline constexpr double kCalibratedPsnrHighDb = 32.0;

struct RainParams {
  double streak_density = 40.0;  // streaks per 1e4 pixels
  double angle_deg = 10.0;       // from vertical, [-30, 30]
  double length_px = 16.0;       // [8, 24]
  int width_px = 1;              // 1 or 2
  double intensity = 0.5;        // [0.2, 0.8]
  double blur_sigma = 0.7;
  std::uint64_t seed = 0;

  void Validate() const;  // throws kConfig
  nlohmann::json ToJson() const;
  static RainParams FromJson(const nlohmann::json& j);
};

struct RainLayer {
  Tensor rain;  // 3 x H x W
  Tensor mask;  // 1 x H x W, {0, 1}
};

struct SamplePair {
  Tensor clean;  // B
  Tensor rainy;  // O
  Tensor rain;   // R
  Tensor mask;   // M
};

// Smooth multi-octave noise, a linear gradient and a few blended rectangles.
// H, W >= 32 and divisible by 4.
Tensor GenBackground(std::uint64_t seed, std::size_t height, std::size_t width);

// Per-streak jitter (angle, length, brightness) is drawn independently of
// the intensity value, so scaling intensity scales R at fixed geometry.
RainLayer GenRain(const RainParams& params, std::size_t height, std::size_t width);

// Sample `index` of a dataset seeded with `seed`.
SamplePair MakeSample(const RainParams& params, std::uint64_t seed, std::size_t index,
                      std::size_t height, std::size_t width);

// 8-neighbourhood dilation of a 1 x H x W binary mask.
Tensor DilateMask(const Tensor& mask, std::size_t radius);

struct DatasetSample {
  std::string id;  // "0000", "0001", ...
  Tensor clean;
  Tensor rainy;
  Tensor mask;
};

struct Dataset {
  std::string checksum;  // SHA-256 over the file list and file checksums
  nlohmann::json manifest;
  std::vector<DatasetSample> samples;  // as decoded from the written files
};

// Writes dir/{clean,rain,mask}/NNNN.ppm and dir/manifest.json.
Dataset MakeDataset(const std::filesystem::path& dir, std::size_t n, std::size_t height,
                    std::size_t width, const RainParams& params, std::uint64_t seed);

// Reads a dataset written by MakeDataset, verifying every file checksum.
Dataset LoadDataset(const std::filesystem::path& dir);

}  // namespace rstb
