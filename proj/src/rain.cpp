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


#include "rstb/rain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "rstb/checksum.hpp"
#include "rstb/error.hpp"
#include "rstb/image_io.hpp"
#include "rstb/metrics.hpp"
#include "rstb/random.hpp"

namespace rstb {
namespace {

double Smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise on a lattice with `cell` pixels per cell, in [-1, 1].
std::vector<double> ValueNoise(std::mt19937_64& rng, std::size_t h, std::size_t w,
                               std::size_t cell) {
  const std::size_t gh = h / cell + 2, gw = w / cell + 2;
  std::vector<double> lattice(gh * gw);
  for (double& v : lattice) v = Uniform(rng, -1.0, 1.0);
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(cell);
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const double ty = Smoothstep(fy - static_cast<double>(y0));
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(cell);
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const double tx = Smoothstep(fx - static_cast<double>(x0));
      const double a = lattice[y0 * gw + x0], b = lattice[y0 * gw + x0 + 1];
      const double c = lattice[(y0 + 1) * gw + x0], d = lattice[(y0 + 1) * gw + x0 + 1];
      out[y * w + x] = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
    }
  }
  return out;
}

std::vector<double> GaussianTaps(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    taps[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& t : taps) t /= total;
  return taps;
}

// Separable blur with zero padding.
std::vector<double> Blur(const std::vector<double>& plane, std::size_t h, std::size_t w,
                         double sigma) {
  if (sigma <= 0.0) return plane;
  const auto taps = GaussianTaps(sigma);
  const auto r = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const auto sh = static_cast<std::ptrdiff_t>(h), sw = static_cast<std::ptrdiff_t>(w);
  std::vector<double> tmp(h * w, 0.0), out(h * w, 0.0);
  for (std::ptrdiff_t y = 0; y < sh; ++y) {
    for (std::ptrdiff_t x = 0; x < sw; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t k = -r; k <= r; ++k) {
        if (x + k >= 0 && x + k < sw) s += taps[static_cast<std::size_t>(k + r)] * plane[static_cast<std::size_t>(y * sw + x + k)];
      }
      tmp[static_cast<std::size_t>(y * sw + x)] = s;
    }
  }
  for (std::ptrdiff_t y = 0; y < sh; ++y) {
    for (std::ptrdiff_t x = 0; x < sw; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t k = -r; k <= r; ++k) {
        if (y + k >= 0 && y + k < sh) s += taps[static_cast<std::size_t>(k + r)] * tmp[static_cast<std::size_t>((y + k) * sw + x)];
      }
      out[static_cast<std::size_t>(y * sw + x)] = s;
    }
  }
  return out;
}

double SegmentDistance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = ax + t * dx - px, ey = ay + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

void CheckImageSize(std::size_t h, std::size_t w, const char* what) {
  if (h < 32 || w < 32 || h % 4 != 0 || w % 4 != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + ": size " + std::to_string(h) + "x" + std::to_string(w) +
                    " must be at least 32x32 with both sides divisible by 4");
  }
}

std::string SampleId(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

}  // namespace

void RainParams::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, "rain params: " + msg); };
  if (!(streak_density >= 0.0) || !std::isfinite(streak_density)) fail("streak_density must be >= 0");
  if (!(angle_deg >= -30.0 && angle_deg <= 30.0)) fail("angle_deg must lie in [-30, 30]");
  if (!(length_px >= 8.0 && length_px <= 24.0)) fail("length_px must lie in [8, 24]");
  if (width_px != 1 && width_px != 2) fail("width_px must be 1 or 2");
  if (!(intensity >= 0.2 && intensity <= 0.8)) fail("intensity must lie in [0.2, 0.8]");
  if (!(blur_sigma >= 0.0 && blur_sigma <= 5.0)) fail("blur_sigma must lie in [0, 5]");
}

nlohmann::json RainParams::ToJson() const {
  return {{"streak_density", streak_density}, {"angle_deg", angle_deg},
          {"length_px", length_px},           {"width_px", width_px},
          {"intensity", intensity},           {"blur_sigma", blur_sigma},
          {"seed", seed}};
}

RainParams RainParams::FromJson(const nlohmann::json& j) {
  RainParams p;
  try {
    p.streak_density = j.value("streak_density", p.streak_density);
    p.angle_deg = j.value("angle_deg", p.angle_deg);
    p.length_px = j.value("length_px", p.length_px);
    p.width_px = j.value("width_px", p.width_px);
    p.intensity = j.value("intensity", p.intensity);
    p.blur_sigma = j.value("blur_sigma", p.blur_sigma);
    p.seed = j.value("seed", p.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("rain params: ") + e.what());
  }
  p.Validate();
  return p;
}

Tensor GenBackground(std::uint64_t seed, std::size_t height, std::size_t width) {
  CheckImageSize(height, width, "gen_background");
  const std::size_t h = height, w = width, hw = h * w;
  std::mt19937_64 rng(seed);
  std::vector<double> img(3 * hw);

  const double theta = Uniform(rng, 0.0, 2.0 * std::numbers::pi);
  for (std::size_t c = 0; c < 3; ++c) {
    const double base = Uniform(rng, 0.25, 0.75);
    const double amp = Uniform(rng, -0.25, 0.25);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double u = static_cast<double>(x) / static_cast<double>(w) - 0.5;
        const double v = static_cast<double>(y) / static_cast<double>(h) - 0.5;
        img[c * hw + y * w + x] = base + amp * (u * std::cos(theta) + v * std::sin(theta));
      }
    }
    const std::size_t cells[] = {16, 8, 4};
    const double amps[] = {0.18, 0.09, 0.045};
    for (int o = 0; o < 3; ++o) {
      const auto n = ValueNoise(rng, h, w, cells[o]);
      for (std::size_t i = 0; i < hw; ++i) img[c * hw + i] += amps[o] * n[i];
    }
  }

  const int rects = 2 + static_cast<int>(rng() % 4);
  for (int r = 0; r < rects; ++r) {
    const auto rh = static_cast<std::size_t>(Uniform(rng, h / 8.0, h / 2.0));
    const auto rw = static_cast<std::size_t>(Uniform(rng, w / 8.0, w / 2.0));
    const auto y0 = static_cast<std::size_t>(Uniform(rng, 0.0, static_cast<double>(h - rh)));
    const auto x0 = static_cast<std::size_t>(Uniform(rng, 0.0, static_cast<double>(w - rw)));
    const double alpha = Uniform(rng, 0.4, 0.9);
    double colour[3];
    for (double& col : colour) col = Uniform01(rng);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = y0; y < y0 + rh; ++y) {
        for (std::size_t x = x0; x < x0 + rw; ++x) {
          double& v = img[c * hw + y * w + x];
          v = (1.0 - alpha) * v + alpha * colour[c];
        }
      }
    }
  }
  for (double& v : img) v = std::clamp(v, 0.0, 1.0);
  return Tensor::FromData({3, h, w}, std::move(img));
}

RainLayer GenRain(const RainParams& params, std::size_t height, std::size_t width) {
  params.Validate();
  if (height == 0 || width == 0) throw Error(ErrorCode::kInvalidArgument, "gen_rain: empty image");
  const std::size_t h = height, w = width, hw = h * w;
  std::mt19937_64 rng(params.seed);
  const auto count = static_cast<std::size_t>(
      std::llround(params.streak_density * static_cast<double>(hw) / 1e4));
  const double half_width = 0.5 * params.width_px;

  std::vector<double> layer(hw, 0.0);
  for (std::size_t s = 0; s < count; ++s) {
    const double cx = Uniform(rng, 0.0, static_cast<double>(w));
    const double cy = Uniform(rng, 0.0, static_cast<double>(h));
    const double angle = std::clamp(params.angle_deg + Uniform(rng, -5.0, 5.0), -30.0, 30.0);
    const double len = std::clamp(params.length_px * Uniform(rng, 0.75, 1.25), 8.0, 24.0);
    const double brightness = params.intensity * Uniform(rng, 0.6, 1.0);
    const double rad = angle * std::numbers::pi / 180.0;
    const double dx = std::sin(rad) * len * 0.5, dy = std::cos(rad) * len * 0.5;
    const double ax = cx - dx, ay = cy - dy, bx = cx + dx, by = cy + dy;
    const double margin = half_width + 1.0;
    const auto x_lo = static_cast<std::ptrdiff_t>(std::floor(std::min(ax, bx) - margin));
    const auto x_hi = static_cast<std::ptrdiff_t>(std::ceil(std::max(ax, bx) + margin));
    const auto y_lo = static_cast<std::ptrdiff_t>(std::floor(std::min(ay, by) - margin));
    const auto y_hi = static_cast<std::ptrdiff_t>(std::ceil(std::max(ay, by) + margin));
    for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(y_lo, 0);
         y <= std::min<std::ptrdiff_t>(y_hi, static_cast<std::ptrdiff_t>(h) - 1); ++y) {
      for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(x_lo, 0);
           x <= std::min<std::ptrdiff_t>(x_hi, static_cast<std::ptrdiff_t>(w) - 1); ++x) {
        const double d = SegmentDistance(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5,
                                         ax, ay, bx, by);
        const double coverage = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
        if (coverage > 0.0) layer[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] += brightness * coverage;
      }
    }
  }
  layer = Blur(layer, h, w, params.blur_sigma);

  std::vector<double> rain(3 * hw), mask(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) rain[c * hw + i] = layer[i];
    mask[i] = layer[i] > kMaskThreshold ? 1.0 : 0.0;
  }
  return {Tensor::FromData({3, h, w}, std::move(rain)), Tensor::FromData({1, h, w}, std::move(mask))};
}

SamplePair MakeSample(const RainParams& params, std::uint64_t seed, std::size_t index,
                      std::size_t height, std::size_t width) {
  const std::uint64_t sub = DeriveSeed(seed, index);
  SamplePair s;
  s.clean = GenBackground(DeriveSeed(sub, 0), height, width);
  RainParams p = params;
  p.seed = DeriveSeed(sub, 1);
  RainLayer r = GenRain(p, height, width);
  s.rain = r.rain;
  s.mask = r.mask;
  std::vector<double> o(s.clean.numel());
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = std::clamp(s.clean.data()[i] + s.rain.data()[i], 0.0, 1.0);
  }
  s.rainy = Tensor::FromData(s.clean.shape(), std::move(o));
  return s;
}

Tensor DilateMask(const Tensor& mask, std::size_t radius) {
  if (mask.rank() != 3 || mask.dim(0) != 1) {
    throw Error(ErrorCode::kShapeMismatch, "mask must be 1 x H x W, got " + ShapeString(mask.shape()));
  }
  const std::size_t h = mask.dim(1), w = mask.dim(2);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  std::vector<double> out(h * w, 0.0);
  for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(h); ++y) {
    for (std::ptrdiff_t x = 0; x < static_cast<std::ptrdiff_t>(w); ++x) {
      bool on = false;
      for (std::ptrdiff_t dy = -r; dy <= r && !on; ++dy) {
        for (std::ptrdiff_t dx = -r; dx <= r && !on; ++dx) {
          const std::ptrdiff_t yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          on = mask.data()[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)] != 0.0;
        }
      }
      out[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = on ? 1.0 : 0.0;
    }
  }
  return Tensor::FromData({1, h, w}, std::move(out));
}

Dataset MakeDataset(const std::filesystem::path& dir, std::size_t n, std::size_t height,
                    std::size_t width, const RainParams& params, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "make_dataset: n must be >= 1");
  params.Validate();
  CheckImageSize(height, width, "make_dataset");

  nlohmann::json files = nlohmann::json::array();
  Sha256 digest;
  double psnr_min = kPsnrCapDb, psnr_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const SamplePair s = MakeSample(params, seed, i, height, width);
    const double p = Psnr(s.rainy, s.clean);
    psnr_min = std::min(psnr_min, p);
    psnr_max = std::max(psnr_max, p);
    const std::string id = SampleId(i);
    nlohmann::json entry{{"id", id}};
    const std::pair<const char*, const Tensor*> parts[] = {
        {"clean", &s.clean}, {"rain", &s.rainy}, {"mask", &s.mask}};
    for (const auto& [kind, img] : parts) {
      const std::string rel = std::string(kind) + "/" + id + ".ppm";
      const std::string bytes = EncodePpm(*img);
      WriteFileBytes(dir / rel, bytes);
      const std::string sha = Sha256Hex(bytes);
      entry[kind] = {{"path", rel}, {"sha256", sha}};
      digest.Update(rel + ":" + sha + "\n");
    }
    files.push_back(entry);
  }

  nlohmann::json manifest{
      {"format", "rstb-dataset"},
      {"version", 1},
      {"seed", seed},
      {"count", n},
      {"height", height},
      {"width", width},
      {"params", params.ToJson()},
      {"mask_threshold", kMaskThreshold},
      {"psnr_bounds_db", {kCalibratedPsnrLowDb, kCalibratedPsnrHighDb}},
      {"psnr_observed_db", {{"min", psnr_min}, {"max", psnr_max}}},
      {"files", files},
      {"dataset_checksum", digest.HexDigest()},
  };
  manifest["params"]["seed"] = seed;
  WriteFileBytes(dir / "manifest.json", manifest.dump(2) + "\n");
  return LoadDataset(dir);
}

Dataset LoadDataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(ReadFileBytes(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, manifest_path.string() + ": " + e.what());
  }
  Dataset ds;
  Sha256 digest;
  try {
    for (const auto& entry : manifest.at("files")) {
      DatasetSample s;
      s.id = entry.at("id").get<std::string>();
      for (const char* kind : {"clean", "rain", "mask"}) {
        const std::string rel = entry.at(kind).at("path").get<std::string>();
        const std::string expect = entry.at(kind).at("sha256").get<std::string>();
        const std::string bytes = ReadFileBytes(dir / rel);
        if (Sha256Hex(bytes) != expect) {
          throw Error(ErrorCode::kFormat, (dir / rel).string() + ": checksum does not match manifest");
        }
        digest.Update(rel + ":" + expect + "\n");
        Tensor img;
        try {
          img = DecodePpm(bytes);
        } catch (const Error& e) {
          throw Error(ErrorCode::kFormat, (dir / rel).string() + ": " + e.what());
        }
        if (std::string(kind) == "clean") {
          s.clean = img;
        } else if (std::string(kind) == "rain") {
          s.rainy = img;
        } else {
          const std::size_t mh = img.dim(1), mw = img.dim(2);
          std::vector<double> m(mh * mw);
          for (std::size_t i = 0; i < m.size(); ++i) m[i] = img.data()[i] >= 0.5 ? 1.0 : 0.0;
          s.mask = Tensor::FromData({1, mh, mw}, std::move(m));
        }
      }
      ds.samples.push_back(std::move(s));
    }
    ds.checksum = digest.HexDigest();
    if (manifest.at("dataset_checksum").get<std::string>() != ds.checksum) {
      throw Error(ErrorCode::kFormat, manifest_path.string() + ": dataset_checksum mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, manifest_path.string() + ": " + e.what());
  }
  if (ds.samples.empty()) throw Error(ErrorCode::kFormat, manifest_path.string() + ": no samples");
  ds.manifest = std::move(manifest);
  return ds;
}

}  // namespace rstb
