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


#include "rstb/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "rstb/error.hpp"
#include "rstb/kernels.hpp"
#include "rstb/ops.hpp"

namespace rstb {
namespace {

void RequireSameShape(const Tensor& x, const Tensor& y, const char* what) {
  if (!x.defined() || !y.defined()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + ": undefined image");
  }
  if (x.shape() != y.shape()) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": shapes " +
                                               ShapeString(x.shape()) + " and " +
                                               ShapeString(y.shape()) + " differ");
  }
}

// Channel-mean grayscale plane of a C x H x W image.
std::vector<double> Grayscale(const Tensor& img) {
  const std::size_t c = img.dim(0), hw = img.dim(1) * img.dim(2);
  const auto v = img.data();
  std::vector<double> out(hw, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < hw; ++i) out[i] += v[k * hw + i];
  }
  for (double& g : out) g /= static_cast<double>(c);
  return out;
}

// Valid-mode separable Gaussian filter of an h x w plane.
std::vector<double> FilterValid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                const std::vector<double>& taps) {
  const std::size_t k = taps.size();
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += taps[j] * plane[y * w + x + j];
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += taps[j] * rows[(y + j) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

std::string CellName(const std::string& image, const Epsilon& eps) {
  return "(" + image + ", " + eps.ToString() + ")";
}

}  // namespace

double Psnr(const Tensor& x, const Tensor& y) {
  RequireSameShape(x, y, "psnr");
  const double mse = kernels::Active().sum_sq_diff(x.data().data(), y.data().data(), x.numel()) /
                     static_cast<double>(x.numel());
  if (mse < kPsnrCapMse) return kPsnrCapDb;
  return 10.0 * std::log10(1.0 / mse);
}

std::vector<double> SsimGaussianTaps() {
  std::vector<double> taps(kSsimWindow);
  const double mid = static_cast<double>(kSsimWindow / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - mid;
    taps[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

double Ssim(const Tensor& x, const Tensor& y) {
  RequireSameShape(x, y, "ssim");
  if (x.rank() != 3) {
    throw Error(ErrorCode::kShapeMismatch, "ssim expects C x H x W, got " + ShapeString(x.shape()));
  }
  const std::size_t h = x.dim(1), w = x.dim(2);
  if (h < kSsimWindow || w < kSsimWindow) {
    throw Error(ErrorCode::kInvalidArgument,
                "ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                    " is smaller than the " + std::to_string(kSsimWindow) + "x" +
                    std::to_string(kSsimWindow) + " window");
  }
  const auto taps = SsimGaussianTaps();
  const auto gx = Grayscale(x), gy = Grayscale(y);
  std::vector<double> xx(gx.size()), yy(gx.size()), xy(gx.size());
  for (std::size_t i = 0; i < gx.size(); ++i) {
    xx[i] = gx[i] * gx[i];
    yy[i] = gy[i] * gy[i];
    xy[i] = gx[i] * gy[i];
  }
  const auto mx = FilterValid(gx, h, w, taps), my = FilterValid(gy, h, w, taps);
  const auto exx = FilterValid(xx, h, w, taps), eyy = FilterValid(yy, h, w, taps);
  const auto exy = FilterValid(xy, h, w, taps);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = exx[i] - mx[i] * mx[i];
    const double vy = eyy[i] - my[i] * my[i];
    const double cxy = exy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + kSsimC1) * (2.0 * cxy + kSsimC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kSsimC1) * (vx + vy + kSsimC2));
  }
  return total / static_cast<double>(mx.size());
}

Tensor PerceptualDistance(const Tensor& x, const Tensor& y, const FeatureExtractor& features) {
  RequireSameShape(x, y, "perceptual distance");
  const auto fx = features.Extract(x);
  const auto fy = features.Extract(y);
  Tensor total;
  for (std::size_t l = 0; l < fx.size(); ++l) {
    Tensor d = MeanSquaredError(NormalizeChannels(fx[l]), NormalizeChannels(fy[l]));
    total = total.defined() ? Add(total, d) : d;
  }
  return total;
}

std::string Epsilon::ToString() const { return std::to_string(num) + "/" + std::to_string(den); }

Epsilon Epsilon::Parse(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
  };
  const std::string_view t = trim(text);
  auto parse_uint = [&](std::string_view s) {
    std::uint32_t v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || end != s.data() + s.size()) {
      throw Error(ErrorCode::kConfig,
                  "epsilon '" + std::string(text) + "' is not a rational of the form k/255");
    }
    return v;
  };
  Epsilon e;
  const auto slash = t.find('/');
  if (slash == std::string_view::npos) {
    e.num = parse_uint(t);
    if (e.num != 0) {
      throw Error(ErrorCode::kConfig,
                  "epsilon '" + std::string(text) + "' must be written as a rational k/255");
    }
    return e;
  }
  e.num = parse_uint(trim(t.substr(0, slash)));
  e.den = parse_uint(trim(t.substr(slash + 1)));
  if (e.den == 0) throw Error(ErrorCode::kConfig, "epsilon '" + std::string(text) + "' has zero denominator");
  if (e.num >= e.den) {
    throw Error(ErrorCode::kConfig, "epsilon '" + std::string(text) + "' must be below 1");
  }
  return e;
}

bool Epsilon::operator==(const Epsilon& other) const {
  return std::uint64_t{num} * other.den == std::uint64_t{other.num} * den;
}

std::strong_ordering Epsilon::operator<=>(const Epsilon& other) const {
  return std::uint64_t{num} * other.den <=> std::uint64_t{other.num} * den;
}

std::vector<Epsilon> ParseEpsilonList(std::string_view text) {
  std::vector<Epsilon> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string_view::npos ? text.size() : comma;
    out.push_back(Epsilon::Parse(text.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (out[i] == out[j]) {
        throw Error(ErrorCode::kConfig, "epsilon " + out[i].ToString() + " listed twice");
      }
    }
  }
  return out;
}

std::string MetricNameString(MetricName name) {
  switch (name) {
    case MetricName::kPsnrDb: return "psnr_db";
    case MetricName::kSsim: return "ssim";
    case MetricName::kLpips: return "lpips";
    case MetricName::kMiouPlaceholder: return "miou_placeholder";
  }
  return "unknown";
}

MetricTriple AggregateMap(const std::vector<ReportRow>& rows,
                          const std::vector<Epsilon>& epsilons) {
  if (epsilons.empty()) throw Error(ErrorCode::kInvalidArgument, "mAP needs a non-empty epsilon set");
  std::vector<std::string> images;
  std::map<std::pair<std::string, std::size_t>, std::vector<const ReportRow*>> cells;
  for (const auto& row : rows) {
    const auto it = std::find(epsilons.begin(), epsilons.end(), row.epsilon);
    if (it == epsilons.end()) continue;
    if (std::find(images.begin(), images.end(), row.image_id) == images.end()) {
      images.push_back(row.image_id);
    }
    cells[{row.image_id, static_cast<std::size_t>(it - epsilons.begin())}].push_back(&row);
  }
  if (images.empty()) throw Error(ErrorCode::kMissingCells, "no rows at any epsilon in the set");

  std::vector<std::string> problems;
  for (const auto& image : images) {
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
      const auto it = cells.find({image, e});
      if (it == cells.end()) {
        problems.push_back("missing " + CellName(image, epsilons[e]));
      } else if (it->second.size() > 1) {
        problems.push_back("repeated " + CellName(image, epsilons[e]));
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "mAP table incomplete:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw Error(ErrorCode::kMissingCells, msg);
  }

  MetricTriple map;
  const double n_img = static_cast<double>(images.size());
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    MetricTriple mean;
    for (const auto& image : images) {
      const ReportRow& r = *cells.at({image, e}).front();
      mean.psnr_db += r.psnr_db;
      mean.ssim += r.ssim;
      mean.lpips += r.lpips;
    }
    map.psnr_db += mean.psnr_db / n_img;
    map.ssim += mean.ssim / n_img;
    map.lpips += mean.lpips / n_img;
  }
  const double n_eps = static_cast<double>(epsilons.size());
  map.psnr_db /= n_eps;
  map.ssim /= n_eps;
  map.lpips /= n_eps;
  return map;
}

std::vector<std::pair<Epsilon, MetricTriple>> RobustnessReport::PerEpsilonMeans() const {
  std::vector<Epsilon> seen;
  for (const auto& r : rows) {
    if (std::find(seen.begin(), seen.end(), r.epsilon) == seen.end()) seen.push_back(r.epsilon);
  }
  std::sort(seen.begin(), seen.end());
  std::vector<std::pair<Epsilon, MetricTriple>> out;
  for (const auto& eps : seen) {
    MetricTriple m;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (!(r.epsilon == eps) || !r.ok()) continue;
      m.psnr_db += r.psnr_db;
      m.ssim += r.ssim;
      m.lpips += r.lpips;
      ++n;
    }
    if (n == 0) continue;
    m.psnr_db /= static_cast<double>(n);
    m.ssim /= static_cast<double>(n);
    m.lpips /= static_cast<double>(n);
    out.emplace_back(eps, m);
  }
  return out;
}

std::vector<std::string> RobustnessReport::FailedImages() const {
  std::set<std::string> failed;
  for (const auto& r : rows) {
    if (!r.ok()) failed.insert(r.image_id);
  }
  return {failed.begin(), failed.end()};
}

MetricTriple RobustnessReport::Map() const {
  const auto failed = FailedImages();
  std::vector<ReportRow> kept;
  for (const auto& r : rows) {
    if (!std::binary_search(failed.begin(), failed.end(), r.image_id)) kept.push_back(r);
  }
  return AggregateMap(kept, epsilons);
}

std::string FormatDouble(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

std::string RobustnessReport::ToCsv() const {
  std::ostringstream out;
  out << "image_id,epsilon_num,epsilon_den,objective,psnr_db,ssim,lpips,status\n";
  for (const auto& r : rows) {
    out << r.image_id << ',' << r.epsilon.num << ',' << r.epsilon.den << ',' << r.objective << ',';
    if (r.ok()) {
      out << FormatDouble(r.psnr_db) << ',' << FormatDouble(r.ssim) << ','
          << FormatDouble(r.lpips);
    } else {
      out << ",,";
    }
    out << ',' << r.status << '\n';
  }
  return out.str();
}

nlohmann::json RobustnessReport::Summary() const {
  auto triple = [](const MetricTriple& m) {
    return nlohmann::json{{"psnr_db", m.psnr_db}, {"ssim", m.ssim}, {"lpips", m.lpips}};
  };
  nlohmann::json j;
  j["dataset"] = dataset_id;
  j["objective"] = objective;
  j["psnr_cap_db"] = kPsnrCapDb;
  j["config"] = config;
  j["epsilons"] = nlohmann::json::array();
  for (const auto& e : epsilons) j["epsilons"].push_back(e.ToString());
  j["per_epsilon"] = nlohmann::json::array();
  for (const auto& [eps, m] : PerEpsilonMeans()) {
    auto entry = triple(m);
    entry["epsilon"] = eps.ToString();
    j["per_epsilon"].push_back(entry);
  }
  j["failures"] = nlohmann::json::array();
  for (const auto& r : rows) {
    if (!r.ok()) {
      j["failures"].push_back(
          {{"image_id", r.image_id}, {"epsilon", r.epsilon.ToString()}, {"status", r.status}});
    }
  }
  // Attacked cells that beat the same image's clean PSNR; expected empty.
  j["psnr_above_clean"] = nlohmann::json::array();
  for (const auto& r : rows) {
    if (!r.ok() || r.epsilon.num == 0) continue;
    for (const auto& base : rows) {
      if (base.ok() && base.epsilon.num == 0 && base.image_id == r.image_id &&
          r.psnr_db > base.psnr_db + 1e-9) {
        j["psnr_above_clean"].push_back({{"image_id", r.image_id}, {"epsilon", r.epsilon.ToString()}});
      }
    }
  }
  j["rows"] = rows.size();
  try {
    j["map"] = triple(Map());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kMissingCells) throw;
    j["map"] = nullptr;
  }
  return j;
}

}  // namespace rstb
