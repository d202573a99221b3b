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

// l-infinity PGD against a restoration model.
//
//   delta^0   ~ U(-eps, eps), projected
//   omega     = delta^t + alpha * sgn(grad_delta D)
//   delta^t+1 = clip(omega) to [max(-eps, -X), min(eps, 1 - X)]
//
// D is one of the objectives below, always ascended. The reference output
// f(X) is computed once per attack without gradient tracking.

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rstb/metrics.hpp"
#include "rstb/model.hpp"
#include "rstb/ops.hpp"
#include "rstb/tensor.hpp"

namespace rstb {

struct PerturbationBudget {
  double epsilon = 4.0 / 255.0;
  double alpha = 1.0 / 255.0;
  std::size_t steps = 20;
  std::uint64_t seed = 0;
  bool random_init = true;  // false starts from delta = 0

  // alpha = epsilon / 4, the default schedule.
  static PerturbationBudget ForEpsilon(double epsilon, std::size_t steps = 20,
                                       std::uint64_t seed = 0);
  void Validate() const;  // throws kInvalidArgument
};

namespace objective {

struct Lmse {};
struct Lpips {};
// Perturbation confined to `source`; pulls the features of f(X+delta) on
// `source` towards those of f(X) on `target`. Rects must have equal sizes.
struct ObjectSensitive {
  Rect source;
  Rect target;
};
enum class Inner { kLmse, kLpips };
// f(X + delta * mask) replaces f(X + delta) inside the inner objective.
struct Partial {
  Tensor mask;  // 1 x H x W, values exactly 0 or 1
  Inner inner = Inner::kLmse;
};
inline constexpr double kDefaultUnnoticeableLambda = 10.0;
struct Unnoticeable {
  double lambda = kDefaultUnnoticeableLambda;
};
struct InputClose {};

}  // namespace objective

using AttackObjective =
    std::variant<objective::Lmse, objective::Lpips, objective::ObjectSensitive,
                 objective::Partial, objective::Unnoticeable, objective::InputClose>;

std::string ObjectiveName(const AttackObjective& obj);

// Throws kInvalidArgument if `obj` cannot be applied to an image of this
// shape. Perceptual objectives need 3 x H x W with H, W >= 8 and divisible by 4.
void ValidateObjective(const AttackObjective& obj, const Shape& image_shape);

// Value to be ascended; differentiable in delta. `reference` is f(X).
Tensor ObjectiveValue(const AttackObjective& obj, const Restorer& model,
                      const FeatureExtractor& features, const Tensor& x, const Tensor& delta,
                      const Tensor& reference);
Tensor ObjectiveValue(const AttackObjective& obj, const Restorer& model,
                      const FeatureExtractor& features, const Tensor& x, const Tensor& delta);

struct AttackResult {
  Tensor delta;
  std::vector<double> trace;  // trace[t] = D at delta^t, t = 0..T
  double final_value = 0.0;   // D at the returned delta
  Tensor adversarial_input;   // X + delta
  Tensor adversarial_output;  // f(X + delta)
};

// Called with (t, delta^t) for t = 0..T after each projection.
using StepObserver = std::function<void(std::size_t, const Tensor&)>;

// For Partial and ObjectSensitive every delta^t is zero off the mask or
// source rect; Partial also masks inside the forward pass. Throws kNonFinite
// naming the step when the gradient or the objective stops being finite.
AttackResult PgdAttack(const Restorer& model, const FeatureExtractor& features, const Tensor& x,
                       const PerturbationBudget& budget, const AttackObjective& obj,
                       const StepObserver& observer = {});

// Objective description independent of any particular image; per-image
// data (the rain mask for Partial) is bound by Instantiate.
enum class ObjectiveKind { kLmse, kLpips, kObjectSensitive, kPartial, kUnnoticeable, kInputClose };

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kLmse;
  double lambda = objective::kDefaultUnnoticeableLambda;
  objective::Inner partial_inner = objective::Inner::kLmse;
  std::size_t mask_dilation = 1;  // rain mask dilation for Partial, pixels
  // ObjectSensitive rects; zero-sized means the default pair: source is the
  // top-left quarter, target the bottom-right quarter.
  Rect source, target;

  std::string Name() const;
  static ObjectiveSpec Parse(const std::string& name);
  nlohmann::json ToJson() const;
  static ObjectiveSpec FromJson(const nlohmann::json& j);
};

AttackObjective Instantiate(const ObjectiveSpec& spec, const Shape& image_shape,
                            const Tensor& rain_mask);

struct EvalImage {
  std::string id;
  Tensor rainy;  // X
  Tensor clean;  // Y
  Tensor mask;   // 1 x H x W rain mask
};

struct EvalOptions {
  std::vector<Epsilon> epsilons;
  std::size_t steps = 20;
  double alpha_ratio = 0.25;  // alpha = ratio * epsilon
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

// Attacks every image at every epsilon and scores f(X + delta) against Y.
// An epsilon = 0 baseline row (clean evaluation) is always recorded per
// image. Attack failures become rows with a failure status. `model` is
// shared read-only by the workers; its parameters must not require grad.
RobustnessReport EvaluateRobustness(const Restorer& model, const FeatureExtractor& features,
                                    const std::vector<EvalImage>& images,
                                    const ObjectiveSpec& spec, const EvalOptions& options);

// Per-attack seed, independent of worker scheduling.
std::uint64_t AttackSeed(std::uint64_t seed, std::size_t image_index, std::size_t eps_index);

// Writes prefix.f64 (raw little-endian doubles) and prefix.ppm, the latter
// visualizing (delta + eps) / (2 eps).
void WriteDeltaDump(const std::string& prefix, const Tensor& delta, double epsilon);

struct AttackSpec {
  ObjectiveSpec objective;
  std::vector<Epsilon> epsilons{{1, 255}, {2, 255}, {4, 255}, {8, 255}};
  std::string alpha_rule = "eps/4";
  std::size_t steps = 20;
  std::uint64_t seed = 0;
  std::string mask_source = "rain_mask_dilated";

  double AlphaRatio() const;  // parses alpha_rule "eps/k"
  nlohmann::json ToJson() const;
  static AttackSpec FromJson(const nlohmann::json& j);
};

}  // namespace rstb
