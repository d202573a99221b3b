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

#include "rstb/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "rstb/error.hpp"

namespace rstb {
namespace {

template <typename T>
void PutLe(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T Get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    Need(sizeof(T));
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string GetString(std::size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool AtEnd() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::kFormat, "checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string SerializeCheckpoint(const DerainModel& model) {
  std::string out = "RSTB";
  PutLe<std::uint32_t>(out, kCheckpointVersion);
  const std::string config = model.config().ToJson().dump();
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  const auto& params = model.parameters();
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) PutLe<std::uint64_t>(out, d);
    for (double v : p.value.data()) PutLe<double>(out, v);
  }
  return out;
}

DerainModel DeserializeCheckpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.GetString(4) != "RSTB") throw Error(ErrorCode::kFormat, "bad checkpoint magic");
  const auto version = in.Get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::string config_text = in.GetString(in.Get<std::uint32_t>());
  nlohmann::json config_json;
  try {
    config_json = nlohmann::json::parse(config_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("checkpoint config: ") + e.what());
  }
  DerainModel model(ModelConfig::FromJson(config_json));
  const auto count = in.Get<std::uint32_t>();
  if (count != model.parameters().size()) {
    throw Error(ErrorCode::kFormat, "checkpoint has " + std::to_string(count) +
                                        " tensors, config implies " +
                                        std::to_string(model.parameters().size()));
  }
  for (auto& p : model.parameters()) {
    const std::string name = in.GetString(in.Get<std::uint32_t>());
    if (name != p.name) throw Error(ErrorCode::kFormat, "expected tensor '" + p.name + "', found '" + name + "'");
    Shape shape(in.Get<std::uint32_t>());
    for (auto& d : shape) d = in.Get<std::uint64_t>();
    if (shape != p.value.shape()) {
      throw Error(ErrorCode::kFormat, "tensor '" + name + "' has shape " + ShapeString(shape) +
                                          ", expected " + ShapeString(p.value.shape()));
    }
    for (double& v : p.value.mutable_data()) v = in.Get<double>();
  }
  if (!in.AtEnd()) throw Error(ErrorCode::kFormat, "trailing bytes after checkpoint");
  return model;
}

void SaveCheckpoint(const DerainModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  const std::string bytes = SerializeCheckpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

DerainModel LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return DeserializeCheckpoint(ss.str());
}

}  // namespace rstb
