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

#include "rstb/train.hpp"

#include <atomic>
#include <cstdio>
#include <limits>
#include <mutex>
#include <cmath>
#include <random>
#include <thread>

#include "rstb/attack.hpp"
#include "rstb/checkpoint.hpp"
#include "rstb/error.hpp"
#include "rstb/image_io.hpp"
#include "rstb/ops.hpp"
#include "rstb/random.hpp"

namespace rstb {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5A1;
constexpr std::uint64_t kAdvStream = 0xADF;
constexpr std::uint64_t kEvalStream = 0xE7A;

const FeatureExtractor& SharedFeatures() {
  static const FeatureExtractor features;
  return features;
}

// Restores requires_grad on every parameter when the scope ends.
class FrozenParameters {
 public:
  explicit FrozenParameters(DerainModel& model) : model_(model) { model_.SetRequiresGrad(false); }
  ~FrozenParameters() { model_.SetRequiresGrad(true); }
  FrozenParameters(const FrozenParameters&) = delete;
  FrozenParameters& operator=(const FrozenParameters&) = delete;

 private:
  DerainModel& model_;
};

Tensor FidelityTerm(const StageOutputs& out, const Tensor& clean, double stage_weight) {
  Tensor total = MeanSquaredError(out.output(), clean);
  for (std::size_t t = 0; t + 1 < out.background.size(); ++t) {
    total = Add(total, ScalarMul(MeanSquaredError(out.background[t], clean), stage_weight));
  }
  return total;
}

Tensor MaskTarget(const Tensor& mask) {
  if (mask.rank() == 3 && mask.dim(0) == 1) return mask;
  if (mask.rank() != 3) throw Error(ErrorCode::kShapeMismatch, "rain mask must be C x H x W");
  const std::size_t hw = mask.dim(1) * mask.dim(2);
  std::vector<double> first(mask.data().begin(), mask.data().begin() + static_cast<std::ptrdiff_t>(hw));
  return Tensor::FromData({1, mask.dim(1), mask.dim(2)}, std::move(first));
}

Tensor MaskTerm(const StageOutputs& out, const Tensor& mask) {
  const Tensor target = MaskTarget(mask);
  Tensor total;
  for (std::size_t t = 0; t < out.mask_logits.size(); ++t) {
    Tensor bce = BceWithLogits(out.mask_logits[t], target);
    total = t == 0 ? bce : Add(total, bce);
  }
  return ScalarMul(total, 1.0 / static_cast<double>(out.mask_logits.size()));
}

std::uint64_t AdvSeed(std::uint64_t seed, std::size_t epoch, std::size_t index) {
  return DeriveSeed(DeriveSeed(DeriveSeed(seed, kAdvStream), epoch), index);
}

void RequireConfig(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kConfig, "train config: " + what);
}

std::string Field(bool enabled, double v) { return enabled ? FormatDouble(v) : std::string(); }

struct HeldOutScores {
  double clean = std::numeric_limits<double>::quiet_NaN();
  double attacked = std::numeric_limits<double>::quiet_NaN();
};

HeldOutScores ScoreHeldOut(DerainModel& model, const std::vector<DatasetSample>& held,
                           const TrainConfig& cfg, std::size_t workers) {
  HeldOutScores s;
  if (held.empty()) return s;
  FrozenParameters frozen(model);
  std::vector<double> clean(held.size()), attacked(held.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto run = [&] {
    for (std::size_t i = next++; i < held.size(); i = next++) {
      try {
        {
          NoGradGuard guard;
          clean[i] = Psnr(model.Restore(held[i].rainy), held[i].clean);
        }
        const auto budget = PerturbationBudget::ForEpsilon(
            cfg.eval_epsilon.value(), cfg.eval_steps, DeriveSeed(DeriveSeed(cfg.seed, kEvalStream), i));
        const auto result = PgdAttack(model, SharedFeatures(), held[i].rainy, budget, objective::Lmse{});
        attacked[i] = Psnr(result.adversarial_output, held[i].clean);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, held.size()));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n_threads; ++k) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  s.clean = s.attacked = 0.0;
  for (std::size_t i = 0; i < held.size(); ++i) {
    s.clean += clean[i];
    s.attacked += attacked[i];
  }
  s.clean /= static_cast<double>(held.size());
  s.attacked /= static_cast<double>(held.size());
  return s;
}

void CopyParameters(const DerainModel& from, DerainModel& to) {
  auto& dst = to.parameters();
  const auto& src = from.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto d = dst[i].value.mutable_data();
    auto s = src[i].value.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

}  // namespace

void TrainConfig::Validate() const {
  RequireConfig(epochs >= 1, "epochs must be >= 1");
  RequireConfig(batch_size >= 1, "batch_size must be >= 1");
  RequireConfig(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate must be > 0");
  RequireConfig(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
                "adam betas must lie in [0, 1)");
  RequireConfig(adam_eps > 0.0, "adam eps must be > 0");
  RequireConfig(std::isfinite(adv.lambda) && adv.lambda >= 0.0, "adv lambda must be >= 0");
  RequireConfig(!adv.enabled || adv.steps >= 1, "adv steps must be >= 1 when enabled");
  RequireConfig(adv.epsilon.den > 0 && adv.epsilon.value() < 1.0, "adv epsilon must lie in [0, 1)");
  RequireConfig(stage_weight >= 0.0 && mask_loss_weight >= 0.0, "loss weights must be >= 0");
  RequireConfig(divergence_threshold > 0.0, "divergence_threshold must be > 0");
  RequireConfig(eval_steps >= 1, "eval steps must be >= 1");
}

nlohmann::json TrainConfig::ToJson() const {
  return {
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"learning_rate", learning_rate},
      {"optimizer", {{"name", "adam"}, {"beta1", beta1}, {"beta2", beta2}, {"eps", adam_eps}}},
      {"adv",
       {{"enabled", adv.enabled},
        {"lambda", adv.lambda},
        {"epsilon", adv.epsilon.ToString()},
        {"steps", adv.steps},
        {"alpha_rule", "eps/4"}}},
      {"stage_weight", stage_weight},
      {"mask_loss_weight", mask_loss_weight},
      {"divergence_threshold", divergence_threshold},
      {"eval", {{"epsilon", eval_epsilon.ToString()}, {"steps", eval_steps}, {"objective", "lmse"}}},
      {"seed", seed},
  };
}

TrainConfig TrainConfig::FromJson(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      if (o.value("name", std::string("adam")) != "adam") {
        throw Error(ErrorCode::kConfig, "train config: only the adam optimizer is supported");
      }
      c.beta1 = o.value("beta1", c.beta1);
      c.beta2 = o.value("beta2", c.beta2);
      c.adam_eps = o.value("eps", c.adam_eps);
    }
    if (j.contains("adv")) {
      const auto& a = j.at("adv");
      c.adv.enabled = a.value("enabled", c.adv.enabled);
      c.adv.lambda = a.value("lambda", c.adv.lambda);
      if (a.contains("epsilon")) c.adv.epsilon = Epsilon::Parse(a.at("epsilon").get<std::string>());
      c.adv.steps = a.value("steps", c.adv.steps);
    }
    c.stage_weight = j.value("stage_weight", c.stage_weight);
    c.mask_loss_weight = j.value("mask_loss_weight", c.mask_loss_weight);
    c.divergence_threshold = j.value("divergence_threshold", c.divergence_threshold);
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      if (e.contains("epsilon")) c.eval_epsilon = Epsilon::Parse(e.at("epsilon").get<std::string>());
      c.eval_steps = e.value("steps", c.eval_steps);
    }
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("train config: ") + e.what());
  }
  c.Validate();
  return c;
}

Adam::Adam(std::vector<NamedTensor>& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value.numel(), 0.0);
    v_.emplace_back(p.value.numel(), 0.0);
  }
}

void Adam::Step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].value;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

LossTerms LossTotal(DerainModel& model, const DatasetSample& sample, const TrainConfig& cfg,
                    std::uint64_t attack_seed) {
  LossTerms terms;
  const StageOutputs out = model.Forward(sample.rainy);
  Tensor total = FidelityTerm(out, sample.clean, cfg.stage_weight);
  terms.fidelity = total.item();

  if (model.config().mask_head) {
    Tensor mask = ScalarMul(MaskTerm(out, sample.mask), cfg.mask_loss_weight);
    terms.mask = mask.item();
    total = Add(total, mask);
  }

  if (cfg.adv.enabled && cfg.adv.epsilon.num > 0) {
    const auto budget =
        PerturbationBudget::ForEpsilon(cfg.adv.epsilon.value(), cfg.adv.steps, attack_seed);
    AttackResult inner;
    {
      FrozenParameters frozen(model);
      inner = PgdAttack(model, SharedFeatures(), sample.rainy, budget, objective::Lmse{});
    }
    terms.adv_delta = inner.delta;
    const Tensor attacked = model.Restore(Add(sample.rainy, inner.delta));
    Tensor adv = ScalarMul(L2Norm(Sub(attacked, out.output())), cfg.adv.lambda);
    terms.adv = adv.item();
    total = Add(total, adv);
  }
  terms.total = total;
  return terms;
}

std::string TrainLog::ToCsv() const {
  std::string csv = "epoch,fidelity_loss,mask_loss,adv_loss,total_loss,clean_psnr,attacked_psnr\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.epoch) + "," + FormatDouble(r.fidelity_loss) + "," +
           Field(mask_enabled, r.mask_loss) + "," + Field(adv_enabled, r.adv_loss) + "," +
           FormatDouble(r.total_loss) + "," + FormatDouble(r.clean_psnr) + "," +
           FormatDouble(r.attacked_psnr) + "\n";
  }
  return csv;
}

std::size_t HeldOutCount(std::size_t n) {
  if (n < 2) return 0;
  return std::max<std::size_t>(1, n / 8);
}

double MeanFidelityLoss(const DerainModel& model, const std::vector<DatasetSample>& samples,
                        const TrainConfig& cfg) {
  if (samples.empty()) throw Error(ErrorCode::kInvalidArgument, "no samples");
  NoGradGuard guard;
  double sum = 0.0;
  for (const auto& s : samples) sum += FidelityTerm(model.Forward(s.rainy), s.clean, cfg.stage_weight).item();
  return sum / static_cast<double>(samples.size());
}

std::filesystem::path EpochCheckpointPath(const std::filesystem::path& dir, std::size_t epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04zu.ckpt", epoch);
  return dir / name;
}

TrainLog Train(DerainModel& model, const std::vector<DatasetSample>& samples,
               const TrainConfig& cfg, const TrainOptions& options) {
  cfg.Validate();
  const std::size_t n_held = HeldOutCount(samples.size());
  const std::vector<DatasetSample> train(samples.begin(),
                                         samples.end() - static_cast<std::ptrdiff_t>(n_held));
  const std::vector<DatasetSample> held(samples.end() - static_cast<std::ptrdiff_t>(n_held),
                                        samples.end());
  if (train.empty()) throw Error(ErrorCode::kInvalidArgument, "train: no training samples");

  TrainLog log;
  log.mask_enabled = model.config().mask_head;
  log.adv_enabled = cfg.adv.enabled;
  model.SetRequiresGrad(true);
  Adam adam(model.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  const std::size_t workers = std::max<std::size_t>(1, options.workers);

  std::filesystem::path last_good;
  DerainModel good = model.Clone();

  auto check = [&](double loss, std::size_t epoch, const std::string& id) {
    std::string where = "epoch " + std::to_string(epoch) + ", sample " + id;
    std::string keep = last_good.empty() ? std::string("no checkpoint written yet")
                                         : "last good checkpoint: " + last_good.string();
    if (!std::isfinite(loss)) {
      CopyParameters(good, model);
      throw Error(ErrorCode::kNonFinite, "non-finite training loss at " + where + "; " + keep);
    }
    if (loss > cfg.divergence_threshold) {
      CopyParameters(good, model);
      throw Error(ErrorCode::kDiverged, "training diverged at " + where + " (loss " +
                                            FormatDouble(loss) + " > " +
                                            FormatDouble(cfg.divergence_threshold) + "); " + keep);
    }
  };

  auto finish_row = [&](TrainLogRow& row, std::size_t count) {
    const double d = static_cast<double>(count);
    row.fidelity_loss /= d;
    row.mask_loss /= d;
    row.adv_loss /= d;
    row.total_loss /= d;
    const HeldOutScores scores = ScoreHeldOut(model, held, cfg, workers);
    row.clean_psnr = scores.clean;
    row.attacked_psnr = scores.attacked;
    log.rows.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
  };

  {
    TrainLogRow row;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const LossTerms terms = LossTotal(model, train[i], cfg, AdvSeed(cfg.seed, 0, i));
      const double total = terms.total.item();
      check(total, 0, train[i].id);
      row.fidelity_loss += terms.fidelity;
      row.mask_loss += terms.mask;
      row.adv_loss += terms.adv;
      row.total_loss += total;
    }
    finish_row(row, train.size());
  }

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(DeriveSeed(DeriveSeed(cfg.seed, kShuffleStream), epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    TrainLogRow row;
    row.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      model.ZeroGrad();
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        const LossTerms terms = LossTotal(model, train[i], cfg, AdvSeed(cfg.seed, epoch, i));
        const double total = terms.total.item();
        check(total, epoch, train[i].id);
        row.fidelity_loss += terms.fidelity;
        row.mask_loss += terms.mask;
        row.adv_loss += terms.adv;
        row.total_loss += total;
        (stop - start == 1 ? terms.total : ScalarMul(terms.total, scale)).Backward();
      }
      adam.Step();
    }
    if (!options.checkpoint_dir.empty()) {
      const auto path = EpochCheckpointPath(options.checkpoint_dir, epoch);
      WriteFileBytes(path, SerializeCheckpoint(model));
      last_good = path;
    }
    CopyParameters(model, good);
    finish_row(row, train.size());
  }
  return log;
}

}  // namespace rstb
