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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rstb/metrics.hpp"
#include "rstb/model.hpp"
#include "rstb/rain.hpp"
#include "rstb/tensor.hpp"

namespace rstb {

struct AdvTrainConfig {
  bool enabled = false;
  double lambda = 1.0;
  Epsilon epsilon{4};
  std::size_t steps = 5;  // inner PGD, alpha = eps/4

  bool operator==(const AdvTrainConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 1;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  AdvTrainConfig adv;
  double stage_weight = 0.1;       // intermediate stages
  double mask_loss_weight = 0.1;   // only used with a mask head
  double divergence_threshold = 1e6;
  Epsilon eval_epsilon{4};         // attacked PSNR in the log, LMSE
  std::size_t eval_steps = 20;
  std::uint64_t seed = 0;

  // Throws Error(kConfig).
  void Validate() const;

  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);

  bool operator==(const TrainConfig&) const = default;
};

class Adam {
 public:
  Adam(std::vector<NamedTensor>& params, double lr, double beta1, double beta2, double eps);

  // One update from the accumulated gradients. Parameters without a gradient
  // are left alone.
  void Step();
  std::size_t step_count() const { return t_; }

 private:
  std::vector<NamedTensor>& params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct LossTerms {
  Tensor total;
  double fidelity = 0.0;
  double mask = 0.0;
  double adv = 0.0;
  Tensor adv_delta;  // delta* of the inner maximization, when it ran
};

// Fidelity + mask + adversarial loss for one sample. The inner attack seed is
// only used when the adversarial term is active.
LossTerms LossTotal(DerainModel& model, const DatasetSample& sample, const TrainConfig& cfg,
                    std::uint64_t attack_seed);

struct TrainLogRow {
  std::size_t epoch = 0;  // 0 is the untrained model
  double fidelity_loss = 0.0;
  double mask_loss = 0.0;
  double adv_loss = 0.0;
  double total_loss = 0.0;
  double clean_psnr = 0.0;     // held-out mean, NaN when nothing is held out
  double attacked_psnr = 0.0;  // held-out mean under LMSE at eval_epsilon
};

struct TrainLog {
  bool mask_enabled = false;
  bool adv_enabled = false;
  std::vector<TrainLogRow> rows;

  // Disabled terms are written as empty fields.
  std::string ToCsv() const;
};

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::function<void(const TrainLogRow&)> on_epoch;
  std::size_t workers = 1;  // held-out scoring only
};

// Held-out count: max(1, n/8) for n >= 2, taken from the end of the list.
std::size_t HeldOutCount(std::size_t n);

// Mean fidelity loss over the samples, no graph.
double MeanFidelityLoss(const DerainModel& model, const std::vector<DatasetSample>& samples,
                        const TrainConfig& cfg);

TrainLog Train(DerainModel& model, const std::vector<DatasetSample>& samples,
               const TrainConfig& cfg, const TrainOptions& options = {});

std::filesystem::path EpochCheckpointPath(const std::filesystem::path& dir, std::size_t epoch);

}  // namespace rstb
