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


#include "rstb/image_io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rstb/error.hpp"

namespace rstb {

std::uint8_t QuantizeChannel(double v) {
  if (!(v > 0.0)) return 0;  // also maps NaN to 0
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

Tensor Quantize(const Tensor& image) {
  std::vector<double> out(image.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(QuantizeChannel(image.data()[i])) / 255.0;
  }
  return Tensor::FromData(image.shape(), std::move(out));
}

std::string EncodePpm(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 1)) {
    throw Error(ErrorCode::kShapeMismatch,
                "ppm needs a 3 x H x W or 1 x H x W image, got " + ShapeString(image.shape()));
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + 3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < 3; ++k) {
        const double v = image.at(c == 3 ? k : 0, y, x);
        out[header + (y * w + x) * 3 + k] = static_cast<char>(QuantizeChannel(v));
      }
    }
  }
  return out;
}

Tensor DecodePpm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      if (++digits > 9) break;
    }
    if (digits == 0 || digits > 9) throw Error(ErrorCode::kFormat, std::string("ppm: bad ") + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw Error(ErrorCode::kFormat, "ppm: missing P6 magic");
  }
  pos = 2;
  const std::size_t w = read_uint("width"), h = read_uint("height"), maxval = read_uint("maxval");
  if (maxval != 255) throw Error(ErrorCode::kFormat, "ppm: only maxval 255 is supported");
  if (w == 0 || h == 0) throw Error(ErrorCode::kFormat, "ppm: empty image");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error(ErrorCode::kFormat, "ppm: header not terminated");
  }
  ++pos;
  if (bytes.size() - pos != 3 * w * h) {
    throw Error(ErrorCode::kFormat, "ppm: expected " + std::to_string(3 * w * h) +
                                        " pixel bytes, found " + std::to_string(bytes.size() - pos));
  }
  std::vector<double> data(3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < 3; ++k) {
        const auto b = static_cast<unsigned char>(bytes[pos + (y * w + x) * 3 + k]);
        data[(k * h + y) * w + x] = static_cast<double>(b) / 255.0;
      }
    }
  }
  return Tensor::FromData({3, h, w}, std::move(data));
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed: " + path.string());
  return ss.str();
}

void WriteFileBytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

void WritePpm(const std::filesystem::path& path, const Tensor& image) {
  WriteFileBytes(path, EncodePpm(image));
}

Tensor ReadPpm(const std::filesystem::path& path) {
  try {
    return DecodePpm(ReadFileBytes(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFormat) {
      throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
    }
    throw;
  }
}

Tensor ReadMaskPpm(const std::filesystem::path& path) {
  const Tensor rgb = ReadPpm(path);
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  std::vector<double> m(h * w);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rgb.data()[i] >= 0.5 ? 1.0 : 0.0;
  return Tensor::FromData({1, h, w}, std::move(m));
}

}  // namespace rstb
