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

// Checkpoint container, all integers little-endian:
//
//   "RSTB" | u32 version | u32 n | n bytes canonical config JSON
//   u32 count | count x { u32 n | name | u32 rank | rank x u64 dim | f64 data }

#include <cstdint>
#include <filesystem>
#include <string>

#include "rstb/model.hpp"

namespace rstb {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string SerializeCheckpoint(const DerainModel& model);
DerainModel DeserializeCheckpoint(const std::string& bytes);

void SaveCheckpoint(const DerainModel& model, const std::filesystem::path& path);
DerainModel LoadCheckpoint(const std::filesystem::path& path);

}  // namespace rstb
