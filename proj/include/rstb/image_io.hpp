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

// Binary PPM (P6, maxval 255) I/O for C x H x W tensors on [0, 1].
// Writing quantizes with round-half-up to k/255; reading returns exactly
// k/255, so a read-write-read cycle is bitwise lossless.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rstb/tensor.hpp"

namespace rstb {

// floor(v * 255 + 0.5) after clamping v to [0, 1].
std::uint8_t QuantizeChannel(double v);

// Same shape, every value snapped to the nearest k/255 (ties up).
Tensor Quantize(const Tensor& image);

// 3 x H x W is written as RGB; 1 x H x W is replicated to grey.
std::string EncodePpm(const Tensor& image);
Tensor DecodePpm(const std::string& bytes);  // always 3 x H x W

void WritePpm(const std::filesystem::path& path, const Tensor& image);
Tensor ReadPpm(const std::filesystem::path& path);

// Binary mask stored as a grey PPM; returns 1 x H x W with values {0, 1}.
Tensor ReadMaskPpm(const std::filesystem::path& path);

std::string ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, const std::string& bytes);

}  // namespace rstb
