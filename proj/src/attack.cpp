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


#include "rstb/attack.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <mutex>
#include <random>
#include <thread>

#include "rstb/error.hpp"
#include "rstb/image_io.hpp"
#include "rstb/rain.hpp"
#include "rstb/random.hpp"

namespace rstb {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

Tensor RestoreAt(const Restorer& model, const Tensor& x, const Tensor& delta) {
  return model.Restore(Add(x, delta));
}

Tensor LmseTerm(const Tensor& out, const Tensor& reference) { return L2Norm(Sub(out, reference)); }

bool RectInside(const Rect& r, std::size_t h, std::size_t w) {
  return r.height > 0 && r.width > 0 && r.y + r.height <= h && r.x + r.width <= w;
}

std::string RectString(const Rect& r) {
  return "[y=" + std::to_string(r.y) + ", x=" + std::to_string(r.x) + ", " +
         std::to_string(r.height) + "x" + std::to_string(r.width) + "]";
}

void CheckPerceptualSize(std::size_t h, std::size_t w, const std::string& what) {
  if (h < 8 || w < 8 || h % 4 != 0 || w % 4 != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                what + ": perceptual distance needs sides >= 8 and divisible by 4, got " +
                    std::to_string(h) + "x" + std::to_string(w));
  }
}

// Zeroes delta outside the rect, in place.
void ProjectToRect(std::vector<double>& delta, const Shape& shape, const Rect& r) {
  const std::size_t c = shape[0], h = shape[1], w = shape[2];
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const bool inside = y >= r.y && y < r.y + r.height && x >= r.x && x < r.x + r.width;
        if (!inside) delta[(k * h + y) * w + x] = 0.0;
      }
    }
  }
}

void ApplyMaskInPlace(std::vector<double>& delta, const Tensor& mask) {
  const std::size_t hw = mask.numel();
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (mask.data()[i % hw] == 0.0) delta[i] = 0.0;
  }
}

double Sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

nlohmann::json RectJson(const Rect& r) { return {r.y, r.x, r.height, r.width}; }

Rect RectFromJson(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw Error(ErrorCode::kConfig, "rect must be [y, x, height, width]");
  }
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>(),
          j[3].get<std::size_t>()};
}

}  // namespace

PerturbationBudget PerturbationBudget::ForEpsilon(double epsilon, std::size_t steps,
                                                  std::uint64_t seed) {
  PerturbationBudget b;
  b.epsilon = epsilon;
  b.alpha = epsilon / 4.0;
  b.steps = steps;
  b.seed = seed;
  return b;
}

void PerturbationBudget::Validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "budget: epsilon must lie in (0, 1)");
  }
  if (!(alpha > 0.0 && alpha <= epsilon)) {
    throw Error(ErrorCode::kInvalidArgument, "budget: alpha must lie in (0, epsilon]");
  }
  if (steps == 0) throw Error(ErrorCode::kInvalidArgument, "budget: steps must be >= 1");
}

std::string ObjectiveName(const AttackObjective& obj) {
  return std::visit(
      Overloaded{
          [](const objective::Lmse&) -> std::string { return "lmse"; },
          [](const objective::Lpips&) -> std::string { return "lpips"; },
          [](const objective::ObjectSensitive&) -> std::string { return "object_sensitive"; },
          [](const objective::Partial& p) -> std::string {
            return p.inner == objective::Inner::kLmse ? "partial" : "partial_lpips";
          },
          [](const objective::Unnoticeable&) -> std::string { return "unnoticeable"; },
          [](const objective::InputClose&) -> std::string { return "input_close"; },
      },
      obj);
}

void ValidateObjective(const AttackObjective& obj, const Shape& shape) {
  if (shape.size() != 3) {
    throw Error(ErrorCode::kShapeMismatch, "attack image must be C x H x W, got " + ShapeString(shape));
  }
  const std::size_t h = shape[1], w = shape[2];
  const std::string name = ObjectiveName(obj);
  // Objectives without a perceptual term work on any C x H x W image.
  auto RequirePerceptualSize = [&](std::size_t ph, std::size_t pw, const std::string& what) {
    if (shape[0] != 3) {
      throw Error(ErrorCode::kInvalidArgument, what + ": perceptual distance needs 3 channels");
    }
    CheckPerceptualSize(ph, pw, what);
  };
  std::visit(
      Overloaded{
          [](const objective::Lmse&) {},
          [&](const objective::Lpips&) { RequirePerceptualSize(h, w, name); },
          [&](const objective::ObjectSensitive& o) {
            if (!RectInside(o.source, h, w) || !RectInside(o.target, h, w)) {
              throw Error(ErrorCode::kInvalidArgument,
                          name + ": rects " + RectString(o.source) + " and " +
                              RectString(o.target) + " must be non-empty and inside the image");
            }
            if (o.source.height != o.target.height || o.source.width != o.target.width) {
              throw Error(ErrorCode::kInvalidArgument,
                          name + ": source " + RectString(o.source) + " and target " +
                              RectString(o.target) + " differ in size");
            }
            RequirePerceptualSize(o.source.height, o.source.width, name);
          },
          [&](const objective::Partial& p) {
            if (!p.mask.defined() || p.mask.shape() != Shape{1, h, w}) {
              throw Error(ErrorCode::kInvalidArgument,
                          name + ": mask must be 1 x " + std::to_string(h) + " x " + std::to_string(w));
            }
            for (double m : p.mask.data()) {
              if (m != 0.0 && m != 1.0) {
                throw Error(ErrorCode::kInvalidArgument, name + ": mask must be {0, 1}-valued");
              }
            }
            if (p.inner == objective::Inner::kLpips) RequirePerceptualSize(h, w, name);
          },
          [&](const objective::Unnoticeable& u) {
            if (!std::isfinite(u.lambda) || u.lambda < 0.0) {
              throw Error(ErrorCode::kInvalidArgument, name + ": lambda must be finite and >= 0");
            }
            RequirePerceptualSize(h, w, name);
          },
          [](const objective::InputClose&) {},
      },
      obj);
}

Tensor ObjectiveValue(const AttackObjective& obj, const Restorer& model,
                      const FeatureExtractor& features, const Tensor& x, const Tensor& delta,
                      const Tensor& reference) {
  return std::visit(
      Overloaded{
          [&](const objective::Lmse&) { return LmseTerm(RestoreAt(model, x, delta), reference); },
          [&](const objective::Lpips&) {
            return PerceptualDistance(RestoreAt(model, x, delta), reference, features);
          },
          [&](const objective::ObjectSensitive& o) {
            const Tensor out = RestoreAt(model, x, delta);
            return ScalarMul(
                PerceptualDistance(Crop(out, o.source), Crop(reference, o.target), features), -1.0);
          },
          [&](const objective::Partial& p) {
            const Tensor out = RestoreAt(model, x, ApplyMask(delta, p.mask));
            return p.inner == objective::Inner::kLmse ? LmseTerm(out, reference)
                                                      : PerceptualDistance(out, reference, features);
          },
          [&](const objective::Unnoticeable& u) {
            const Tensor out = RestoreAt(model, x, delta);
            return Sub(PerceptualDistance(out, reference, features),
                       ScalarMul(LmseTerm(out, reference), u.lambda));
          },
          [&](const objective::InputClose&) {
            return ScalarMul(L2Norm(Sub(RestoreAt(model, x, delta), x)), -1.0);
          },
      },
      obj);
}

Tensor ObjectiveValue(const AttackObjective& obj, const Restorer& model,
                      const FeatureExtractor& features, const Tensor& x, const Tensor& delta) {
  Tensor reference;
  {
    NoGradGuard guard;
    reference = model.Restore(x).Detach();
  }
  return ObjectiveValue(obj, model, features, x, delta, reference);
}

AttackResult PgdAttack(const Restorer& model, const FeatureExtractor& features, const Tensor& x,
                       const PerturbationBudget& budget, const AttackObjective& obj,
                       const StepObserver& observer) {
  budget.Validate();
  ValidateObjective(obj, x.shape());
  for (double v : x.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "attack input must lie in [0, 1]");
    }
  }
  const Shape shape = x.shape();
  const std::size_t n = x.numel();
  const double eps = budget.epsilon;
  const Tensor xc = x.Detach();

  Tensor reference;
  {
    NoGradGuard guard;
    reference = model.Restore(xc).Detach();
  }

  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = std::max(-eps, -xc.data()[i]);
    hi[i] = std::min(eps, 1.0 - xc.data()[i]);
  }
  const auto* rect_obj = std::get_if<objective::ObjectSensitive>(&obj);
  const auto* partial = std::get_if<objective::Partial>(&obj);
  auto project = [&](std::vector<double>& d) {
    for (std::size_t i = 0; i < n; ++i) d[i] = std::min(std::max(d[i], lo[i]), hi[i]);
    if (rect_obj != nullptr) ProjectToRect(d, shape, rect_obj->source);
    if (partial != nullptr) ApplyMaskInPlace(d, partial->mask);
  };

  std::vector<double> delta(n, 0.0);
  if (budget.random_init) {
    std::mt19937_64 rng(budget.seed);
    for (double& d : delta) d = Uniform(rng, -eps, eps);
  }
  project(delta);
  if (observer) observer(0, Tensor::FromData(shape, delta));

  AttackResult result;
  for (std::size_t t = 0; t < budget.steps; ++t) {
    Tensor d = Tensor::FromData(shape, delta, true);
    const Tensor value = ObjectiveValue(obj, model, features, xc, d, reference);
    const double v = value.item();
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFinite, "objective is non-finite at PGD step " +
                                             std::to_string(t + 1) + " of " +
                                             std::to_string(budget.steps));
    }
    result.trace.push_back(v);
    value.Backward();
    const auto grad = d.grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      if (!std::isfinite(g)) {
        throw Error(ErrorCode::kNonFinite, "non-finite gradient at PGD step " +
                                               std::to_string(t + 1) + " of " +
                                               std::to_string(budget.steps));
      }
      delta[i] += budget.alpha * Sign(g);
    }
    project(delta);
    if (observer) observer(t + 1, Tensor::FromData(shape, delta));
  }

  result.delta = Tensor::FromData(shape, delta);
  {
    NoGradGuard guard;
    const double v = ObjectiveValue(obj, model, features, xc, result.delta, reference).item();
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFinite, "objective is non-finite after the final PGD step");
    }
    result.trace.push_back(v);
    result.final_value = v;
    result.adversarial_input = Add(xc, result.delta);
    result.adversarial_output = model.Restore(result.adversarial_input);
  }
  return result;
}

std::string ObjectiveSpec::Name() const {
  switch (kind) {
    case ObjectiveKind::kLmse: return "lmse";
    case ObjectiveKind::kLpips: return "lpips";
    case ObjectiveKind::kObjectSensitive: return "object_sensitive";
    case ObjectiveKind::kPartial:
      return partial_inner == objective::Inner::kLmse ? "partial" : "partial_lpips";
    case ObjectiveKind::kUnnoticeable: return "unnoticeable";
    case ObjectiveKind::kInputClose: return "input_close";
  }
  return "unknown";
}

ObjectiveSpec ObjectiveSpec::Parse(const std::string& name) {
  ObjectiveSpec s;
  if (name == "lmse") {
    s.kind = ObjectiveKind::kLmse;
  } else if (name == "lpips") {
    s.kind = ObjectiveKind::kLpips;
  } else if (name == "object_sensitive") {
    s.kind = ObjectiveKind::kObjectSensitive;
  } else if (name == "partial") {
    s.kind = ObjectiveKind::kPartial;
  } else if (name == "partial_lpips") {
    s.kind = ObjectiveKind::kPartial;
    s.partial_inner = objective::Inner::kLpips;
  } else if (name == "unnoticeable") {
    s.kind = ObjectiveKind::kUnnoticeable;
  } else if (name == "input_close") {
    s.kind = ObjectiveKind::kInputClose;
  } else {
    throw Error(ErrorCode::kConfig,
                "unknown objective '" + name +
                    "' (expected lmse, lpips, object_sensitive, partial, partial_lpips, "
                    "unnoticeable or input_close)");
  }
  return s;
}

nlohmann::json ObjectiveSpec::ToJson() const {
  nlohmann::json j{{"kind", Name()}};
  if (kind == ObjectiveKind::kUnnoticeable) j["lambda"] = lambda;
  if (kind == ObjectiveKind::kPartial) j["mask_dilation"] = mask_dilation;
  if (kind == ObjectiveKind::kObjectSensitive) {
    j["source"] = RectJson(source);
    j["target"] = RectJson(target);
  }
  return j;
}

ObjectiveSpec ObjectiveSpec::FromJson(const nlohmann::json& j) {
  try {
    if (j.is_string()) return Parse(j.get<std::string>());
    ObjectiveSpec s = Parse(j.at("kind").get<std::string>());
    s.lambda = j.value("lambda", s.lambda);
    s.mask_dilation = j.value("mask_dilation", s.mask_dilation);
    if (j.contains("source")) s.source = RectFromJson(j["source"]);
    if (j.contains("target")) s.target = RectFromJson(j["target"]);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("objective: ") + e.what());
  }
}

AttackObjective Instantiate(const ObjectiveSpec& spec, const Shape& shape, const Tensor& rain_mask) {
  if (shape.size() != 3) throw Error(ErrorCode::kShapeMismatch, "image must be C x H x W");
  const std::size_t h = shape[1], w = shape[2];
  AttackObjective obj;
  switch (spec.kind) {
    case ObjectiveKind::kLmse: obj = objective::Lmse{}; break;
    case ObjectiveKind::kLpips: obj = objective::Lpips{}; break;
    case ObjectiveKind::kObjectSensitive: {
      objective::ObjectSensitive o{spec.source, spec.target};
      if (o.source.height == 0 || o.source.width == 0) {
        const std::size_t rh = (h / 2) / 4 * 4, rw = (w / 2) / 4 * 4;
        o.source = {0, 0, rh, rw};
        o.target = {h - rh, w - rw, rh, rw};
      }
      obj = o;
      break;
    }
    case ObjectiveKind::kPartial: {
      if (!rain_mask.defined()) {
        throw Error(ErrorCode::kInvalidArgument, "partial objective needs a rain mask");
      }
      obj = objective::Partial{spec.mask_dilation > 0 ? DilateMask(rain_mask, spec.mask_dilation)
                                                      : rain_mask,
                               spec.partial_inner};
      break;
    }
    case ObjectiveKind::kUnnoticeable: obj = objective::Unnoticeable{spec.lambda}; break;
    case ObjectiveKind::kInputClose: obj = objective::InputClose{}; break;
  }
  ValidateObjective(obj, shape);
  return obj;
}

std::uint64_t AttackSeed(std::uint64_t seed, std::size_t image_index, std::size_t eps_index) {
  return DeriveSeed(DeriveSeed(seed, image_index), eps_index);
}

RobustnessReport EvaluateRobustness(const Restorer& model, const FeatureExtractor& features,
                                    const std::vector<EvalImage>& images,
                                    const ObjectiveSpec& spec, const EvalOptions& options) {
  if (options.epsilons.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "evaluate_robustness: epsilon set is empty");
  }
  if (!(options.alpha_ratio > 0.0 && options.alpha_ratio <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "evaluate_robustness: alpha ratio must lie in (0, 1]");
  }
  RobustnessReport report;
  report.objective = spec.Name();
  report.epsilons = options.epsilons;
  report.config = {{"objective", spec.ToJson()},
                   {"steps", options.steps},
                   {"alpha_ratio", options.alpha_ratio},
                   {"seed", options.seed}};

  struct Task {
    std::size_t image;
    std::size_t eps_index;  // index into options.epsilons; npos for the baseline
  };
  constexpr std::size_t kBaseline = static_cast<std::size_t>(-1);
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < images.size(); ++i) {
    tasks.push_back({i, kBaseline});
    for (std::size_t e = 0; e < options.epsilons.size(); ++e) {
      if (options.epsilons[e].num != 0) tasks.push_back({i, e});
    }
  }
  report.rows.resize(tasks.size());

  auto run = [&](const Task& task) {
    const EvalImage& img = images[task.image];
    ReportRow row;
    row.image_id = img.id;
    row.objective = report.objective;
    row.epsilon = task.eps_index == kBaseline ? Epsilon{0, 255} : options.epsilons[task.eps_index];
    try {
      Tensor output;
      if (task.eps_index == kBaseline) {
        NoGradGuard guard;
        output = model.Restore(img.rainy);
      } else {
        PerturbationBudget budget;
        budget.epsilon = row.epsilon.value();
        budget.alpha = options.alpha_ratio * budget.epsilon;
        budget.steps = options.steps;
        budget.seed = AttackSeed(options.seed, task.image, task.eps_index);
        const AttackObjective obj = Instantiate(spec, img.rainy.shape(), img.mask);
        output = PgdAttack(model, features, img.rainy, budget, obj).adversarial_output;
      }
      NoGradGuard guard;
      row.psnr_db = Psnr(output, img.clean);
      row.ssim = Ssim(output, img.clean);
      row.lpips = PerceptualDistance(output, img.clean, features).item();
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
      for (char& ch : row.status) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
    }
    return row;
  };

  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(tasks.size(), 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) report.rows[k] = run(tasks[k]);
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return report;
}

void WriteDeltaDump(const std::string& prefix, const Tensor& delta, double epsilon) {
  std::string raw(delta.numel() * 8, '\0');
  for (std::size_t i = 0; i < delta.numel(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(delta.data()[i]);
    for (int b = 0; b < 8; ++b) raw[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  WriteFileBytes(prefix + ".f64", raw);
  std::vector<double> vis(delta.numel());
  for (std::size_t i = 0; i < vis.size(); ++i) {
    vis[i] = epsilon > 0.0 ? (delta.data()[i] + epsilon) / (2.0 * epsilon) : 0.5;
  }
  WritePpm(prefix + ".ppm", Tensor::FromData(delta.shape(), std::move(vis)));
}

double AttackSpec::AlphaRatio() const {
  if (alpha_rule.rfind("eps/", 0) == 0) {
    try {
      std::size_t used = 0;
      const double k = std::stod(alpha_rule.substr(4), &used);
      if (used == alpha_rule.size() - 4 && k >= 1.0 && std::isfinite(k)) return 1.0 / k;
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::kConfig, "alpha rule '" + alpha_rule + "' must be eps/k with k >= 1");
}

nlohmann::json AttackSpec::ToJson() const {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : epsilons) eps.push_back(e.ToString());
  return {{"objective", objective.ToJson()}, {"epsilons", eps},
          {"alpha_rule", alpha_rule},        {"steps", steps},
          {"seed", seed},                    {"lambda", objective.lambda},
          {"mask_source", mask_source}};
}

AttackSpec AttackSpec::FromJson(const nlohmann::json& j) {
  AttackSpec s;
  try {
    if (j.contains("objective")) s.objective = ObjectiveSpec::FromJson(j["objective"]);
    if (j.contains("lambda")) s.objective.lambda = j["lambda"].get<double>();
    if (j.contains("epsilons")) {
      s.epsilons.clear();
      for (const auto& e : j["epsilons"]) s.epsilons.push_back(Epsilon::Parse(e.get<std::string>()));
    }
    s.alpha_rule = j.value("alpha_rule", s.alpha_rule);
    s.steps = j.value("steps", s.steps);
    s.seed = j.value("seed", s.seed);
    s.mask_source = j.value("mask_source", s.mask_source);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("attack spec: ") + e.what());
  }
  if (s.mask_source != "rain_mask_dilated" && s.mask_source != "rain_mask") {
    throw Error(ErrorCode::kConfig, "attack spec: mask_source must be rain_mask_dilated or rain_mask");
  }
  if (s.mask_source == "rain_mask") s.objective.mask_dilation = 0;
  if (s.steps == 0) throw Error(ErrorCode::kConfig, "attack spec: steps must be >= 1");
  s.AlphaRatio();
  return s;
}

}  // namespace rstb
