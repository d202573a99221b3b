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


#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "rstb/error.hpp"
#include "rstb/image_io.hpp"
#include "rstb/metrics.hpp"
#include "rstb/rain.hpp"

using namespace rstb;

namespace {

bool BitEqual(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) {
      return false;
    }
  }
  return true;
}

std::filesystem::path TempDir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("rstb_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("gen_background") {
  const Tensor a = GenBackground(3, 32, 48);
  CHECK(a.shape() == Shape{3, 32, 48});
  CHECK(BitEqual(a, GenBackground(3, 32, 48)));
  for (double v : a.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor x = GenBackground(2 * s, 64, 64), y = GenBackground(2 * s + 1, 64, 64);
    double diff = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) diff += std::abs(x.data()[i] - y.data()[i]);
    CHECK(diff / static_cast<double>(x.numel()) > 0.01);
  }
  CHECK_THROWS_AS(GenBackground(0, 30, 32), Error);
  CHECK_THROWS_AS(GenBackground(0, 32, 34), Error);
}

TEST_CASE("gen_rain") {
  RainParams p;
  p.seed = 9;
  SUBCASE("no streaks") {
    p.streak_density = 0.0;
    const RainLayer r = GenRain(p, 32, 32);
    for (double v : r.rain.data()) CHECK(v == 0.0);
    for (double v : r.mask.data()) CHECK(v == 0.0);
  }
  SUBCASE("intensity is monotone at fixed geometry") {
    p.intensity = 0.3;
    const RainLayer lo = GenRain(p, 64, 64);
    p.intensity = 0.6;
    const RainLayer hi = GenRain(p, 64, 64);
    double s_lo = 0.0, s_hi = 0.0;
    for (double v : lo.rain.data()) s_lo += v;
    for (double v : hi.rain.data()) s_hi += v;
    CHECK(s_lo > 0.0);
    CHECK(s_hi > s_lo);
  }
  SUBCASE("mask is exactly the thresholded rain layer") {
    const RainLayer r = GenRain(p, 64, 48);
    const std::size_t hw = 64 * 48;
    std::size_t on = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      double mx = 0.0;
      for (std::size_t c = 0; c < 3; ++c) mx = std::max(mx, r.rain.data()[c * hw + i]);
      CHECK(r.mask.data()[i] == (mx > kMaskThreshold ? 1.0 : 0.0));
      on += r.mask.data()[i] != 0.0;
    }
    CHECK(on > 0);
    for (double v : r.rain.data()) CHECK(v >= 0.0);
  }
  SUBCASE("validation") {
    p.angle_deg = 31;
    CHECK_THROWS_AS(GenRain(p, 32, 32), Error);
    p.angle_deg = 0;
    p.width_px = 3;
    CHECK_THROWS_AS(GenRain(p, 32, 32), Error);
    p.width_px = 2;
    p.intensity = 0.9;
    CHECK_THROWS_AS(GenRain(p, 32, 32), Error);
  }
}

TEST_CASE("sample pair invariants") {
  const RainParams p;
  for (std::size_t i = 0; i < 5; ++i) {
    const SamplePair s = MakeSample(p, 11, i, 32, 32);
    CHECK(BitEqual(s.rainy, MakeSample(p, 11, i, 32, 32).rainy));
    for (std::size_t k = 0; k < s.clean.numel(); ++k) {
      const double b = s.clean.data()[k], r = s.rain.data()[k], o = s.rainy.data()[k];
      CHECK(o == std::clamp(b + r, 0.0, 1.0));
      if (b + r <= 1.0) CHECK(std::abs((o - r) - b) <= 1e-12);
    }
  }
}

TEST_CASE("rain calibration: PSNR(O, B) within the recorded bounds") {
  const RainParams p;
  for (std::size_t i = 0; i < 50; ++i) {
    const SamplePair s = MakeSample(p, 2024, i, 64, 64);
    const double q = Psnr(s.rainy, s.clean);
    CHECK(q >= kCalibratedPsnrLowDb);
    CHECK(q <= kCalibratedPsnrHighDb);
  }
}

TEST_CASE("ppm round trip is lossless") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.1, 1.1);
  std::vector<double> v(3 * 5 * 7);
  for (double& x : v) x = u(rng);
  const Tensor img = Tensor::FromData({3, 5, 7}, v);
  const Tensor once = DecodePpm(EncodePpm(img));
  CHECK(BitEqual(once, Quantize(img)));
  CHECK(BitEqual(DecodePpm(EncodePpm(once)), once));
  CHECK(QuantizeChannel(0.5 / 255.0) == 1);  // ties round up
  CHECK(QuantizeChannel(-3.0) == 0);
  CHECK(QuantizeChannel(7.0) == 255);
  CHECK_THROWS_AS(DecodePpm("P5\n1 1\n255\n\x01"), Error);
  CHECK_THROWS_AS(DecodePpm("P6\n2 2\n255\n\x01\x02"), Error);
}

TEST_CASE("make_dataset writes a reproducible, verified dataset") {
  const auto dir = TempDir("dataset");
  const RainParams p;
  const Dataset a = MakeDataset(dir, 8, 64, 64, p, 5);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    files += e.is_regular_file() && e.path().extension() == ".ppm";
  }
  CHECK(files == 24);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  REQUIRE(a.samples.size() == 8);
  CHECK(a.samples[3].id == "0003");
  CHECK(a.samples[0].mask.shape() == Shape{1, 64, 64});

  const auto dir2 = TempDir("dataset2");
  const Dataset b = MakeDataset(dir2, 8, 64, 64, p, 5);
  CHECK(a.checksum == b.checksum);
  CHECK(a.manifest["files"] == b.manifest["files"]);

  const Dataset c = LoadDataset(dir);
  CHECK(c.checksum == a.checksum);
  CHECK(BitEqual(c.samples[7].rainy, a.samples[7].rainy));

  // Tampering is detected.
  WriteFileBytes(dir / "clean" / "0002.ppm", EncodePpm(Tensor::Zeros({3, 64, 64})));
  CHECK_THROWS_AS(LoadDataset(dir), Error);
  CHECK_THROWS_AS(LoadDataset(dir / "missing"), Error);
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("dilate mask") {
  std::vector<double> m(25, 0.0);
  m[12] = 1.0;
  const Tensor d = DilateMask(Tensor::FromData({1, 5, 5}, m), 1);
  double on = 0.0;
  for (double v : d.data()) on += v;
  CHECK(on == 9.0);
  CHECK(d.data()[6] == 1.0);
  CHECK(d.data()[0] == 0.0);
}
