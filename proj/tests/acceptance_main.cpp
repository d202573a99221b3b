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

// Acceptance suite: one PASS/FAIL line per criterion. Usage:
//   rstb_acceptance [N ...]     (default: all criteria)
// Exit status is non-zero when any selected criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "cli.hpp"
#include "gradcheck.hpp"
#include "rstb/attack.hpp"
#include "rstb/checkpoint.hpp"
#include "rstb/checksum.hpp"
#include "rstb/error.hpp"
#include "rstb/image_io.hpp"
#include "rstb/metrics.hpp"
#include "rstb/ops.hpp"
#include "rstb/rain.hpp"
#include "rstb/train.hpp"
#include "toy_models.hpp"

namespace fs = std::filesystem;
using namespace rstb;
using rstb::testing::GradientOracle;
using rstb::testing::RandomTensor;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string Sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

void Log(const std::string& line) {
  std::cout << "  " << line << "\n";
  std::cout.flush();
}

// ---------------------------------------------------------------- data ----

std::vector<DatasetSample> Samples(std::uint64_t seed, std::size_t n, std::size_t side) {
  const RainParams params;
  std::vector<DatasetSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const SamplePair p = MakeSample(params, seed, i, side, side);
    char id[16];
    std::snprintf(id, sizeof(id), "%04zu", i);
    out.push_back({id, p.clean, p.rainy, p.mask});
  }
  return out;
}

std::vector<EvalImage> AsEval(const std::vector<DatasetSample>& samples) {
  std::vector<EvalImage> images;
  for (const auto& s : samples) images.push_back({s.id, s.rainy, s.clean, s.mask});
  return images;
}

std::string SamplesDigest(const std::vector<DatasetSample>& samples) {
  Sha256 h;
  for (const auto& s : samples) {
    for (const Tensor* t : {&s.clean, &s.rainy, &s.mask}) {
      const auto d = t->data();
      h.Update(std::string_view(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double)));
    }
  }
  return h.HexDigest();
}

// Trains (or reloads a model trained earlier in this ctest session).
DerainModel TrainCached(const ModelConfig& mc, const TrainConfig& tc,
                        const std::vector<DatasetSample>& data, double* train_seconds = nullptr) {
  const std::string key = Sha256Hex(mc.ToJson().dump() + "|" + tc.ToJson().dump() + "|" + SamplesDigest(data));
  const fs::path path = fs::path(RSTB_ACCEPTANCE_CACHE) / (key.substr(0, 24) + ".ckpt");
  if (fs::exists(path) && train_seconds == nullptr) {
    Log("reusing cached model " + path.filename().string());
    return LoadCheckpoint(path);
  }
  const auto start = Clock::now();
  DerainModel model(mc);
  Train(model, data, tc);
  if (train_seconds != nullptr) *train_seconds = Seconds(start);
  WriteFileBytes(path, SerializeCheckpoint(model));
  Log("trained " + mc.ToJson().dump() + " adv=" + (tc.adv.enabled ? "on" : "off") + " in " +
      Fmt(Seconds(start), 1) + " s");
  return model;
}

struct Sweep {
  double clean = 0.0;
  std::vector<std::pair<Epsilon, MetricTriple>> per_eps;  // excludes 0
  MetricTriple map;
  RobustnessReport report;
};

Sweep Evaluate(const DerainModel& model, const std::vector<DatasetSample>& samples,
               const std::string& objective, std::vector<Epsilon> eps, std::uint64_t seed = 0) {
  static const FeatureExtractor features;
  EvalOptions eo;
  eo.epsilons = std::move(eps);
  eo.steps = 20;
  eo.seed = seed;
  Sweep s;
  s.report = EvaluateRobustness(model, features, AsEval(samples), ObjectiveSpec::Parse(objective), eo);
  for (const auto& [e, m] : s.report.PerEpsilonMeans()) {
    if (e.num == 0) {
      s.clean = m.psnr_db;
    } else {
      s.per_eps.emplace_back(e, m);
    }
  }
  s.map = s.report.Map();
  return s;
}

// ---------------------------------------------------------- criterion 1 ----

Verdict Criterion1() {
  const auto start = Clock::now();
  constexpr int kInstances = 20;
  constexpr double kTol = 1e-3;
  std::mt19937_64 rng(2024);
  std::vector<std::string> bad;
  std::size_t families = 0;
  double worst = 0.0;

  auto run = [&](const std::string& name, std::vector<Tensor*> leaves, const std::function<void()>& draw,
                 const std::function<Tensor()>& build) {
    const auto s = GradientOracle(kInstances, leaves, draw, build);
    ++families;
    worst = std::max(worst, s.worst);
    if (s.accepted < kInstances || s.worst >= kTol) {
      bad.push_back(name + " (accepted " + std::to_string(s.accepted) + ", worst " + Sci(s.worst) + ")");
    }
  };

  Tensor a, b, s, w, k, bias, mask, target, lo, hi, g, m;
  auto proj = [&](const Tensor& t) { return Sum(Mul(t, w)); };
  auto draw_ab = [&] {
    a = RandomTensor({2, 3, 4}, rng);
    b = RandomTensor({2, 3, 4}, rng);
    s = RandomTensor({1}, rng);
    w = RandomTensor({2, 3, 4}, rng, -1, 1, false);
  };
  run("add", {&a, &b}, draw_ab, [&] { return proj(Add(a, b)); });
  run("sub", {&a, &b}, draw_ab, [&] { return proj(Sub(a, b)); });
  run("mul", {&a, &b}, draw_ab, [&] { return proj(Mul(a, b)); });
  run("mul scalar broadcast", {&a, &s}, draw_ab, [&] { return proj(Mul(a, s)); });
  run("scalar_mul", {&a}, draw_ab, [&] { return proj(ScalarMul(a, -1.7)); });
  run("add_scalar", {&a}, draw_ab, [&] { return proj(AddScalar(a, 0.3)); });
  run("relu", {&a}, draw_ab, [&] { return proj(Relu(a)); });
  run("sigmoid", {&a}, draw_ab, [&] { return proj(Sigmoid(ScalarMul(a, 3.0))); });
  run("clip", {&a}, draw_ab, [&] { return proj(Clip(a, -0.4, 0.4)); });
  run("clip_box", {&a}, [&] {
    draw_ab();
    lo = Tensor::Full({2, 3, 4}, -0.4);
    hi = RandomTensor({2, 3, 4}, rng, 0.1, 0.6, false);
  }, [&] { return proj(ClipBox(a, lo, hi)); });
  run("sum", {&a}, draw_ab, [&] { return Sum(a); });
  run("mean", {&a}, draw_ab, [&] { return Mean(a); });
  run("l2_norm", {&a}, draw_ab, [&] { return L2Norm(a); });
  run("mse", {&a, &b}, draw_ab, [&] { return MeanSquaredError(a, b); });
  run("bce_with_logits", {&a}, [&] {
    draw_ab();
    std::vector<double> t(24);
    for (double& v : t) v = rng() % 2 == 0 ? 0.0 : 1.0;
    target = Tensor::FromData({2, 3, 4}, std::move(t));
  }, [&] { return BceWithLogits(ScalarMul(a, 4.0), target); });

  for (std::size_t dil : {1, 2, 3}) {
    Tensor x;
    run("conv2d dilation " + std::to_string(dil), {&x, &k, &bias}, [&] {
      x = RandomTensor({2, 7, 6}, rng);
      k = RandomTensor({3, 2, 3, 3}, rng);
      bias = RandomTensor({3}, rng);
      w = RandomTensor({3, 7, 6}, rng, -1, 1, false);
    }, [&, dil] { return proj(Conv2d(x, k, bias, dil, dil)); });
  }

  Tensor x;
  auto draw_x = [&] {
    x = RandomTensor({3, 4, 8}, rng);
    w = RandomTensor({3, 4, 8}, rng, -1, 1, false);
  };
  auto proj_any = [&](const Tensor& t) {
    std::mt19937_64 prng(99);
    return Sum(Mul(t, RandomTensor(t.shape(), prng, -1, 1, false)));
  };
  const std::pair<const char*, PoolOp> pools[] = {{"pool channel avg", PoolOp::kChannelGlobalAvg},
                                                  {"pool channel max", PoolOp::kChannelGlobalMax},
                                                  {"pool spatial avg", PoolOp::kSpatialChannelAvg},
                                                  {"pool spatial max", PoolOp::kSpatialChannelMax}};
  for (const auto& [name, op] : pools) {
    run(name, {&x}, draw_x, [&, op = op] { return proj_any(Pool(op, x)); });
  }
  run("avg_pool2", {&x}, draw_x, [&] { return proj_any(AvgPool2(x)); });
  run("crop", {&x}, draw_x, [&] { return proj_any(Crop(x, Rect{1, 2, 2, 3})); });
  run("normalize_channels", {&x}, draw_x, [&] { return proj_any(NormalizeChannels(x)); });
  run("expand_channels", {&g}, [&] { g = RandomTensor({3, 1, 1}, rng); },
      [&] { return proj_any(ExpandChannels(g, 4, 8)); });
  run("expand_spatial", {&m}, [&] { m = RandomTensor({1, 4, 8}, rng); },
      [&] { return proj_any(ExpandSpatial(m, 3)); });
  run("concat_channels", {&x, &m}, [&] {
    draw_x();
    m = RandomTensor({1, 4, 8}, rng);
  }, [&] { return proj_any(ConcatChannels({x, m, x})); });
  run("apply_mask", {&x}, [&] {
    draw_x();
    std::vector<double> mv(32);
    for (double& v : mv) v = rng() % 2 == 0 ? 0.0 : 1.0;
    mask = Tensor::FromData({1, 4, 8}, std::move(mv));
  }, [&] { return proj_any(ApplyMask(x, mask)); });

  const FeatureExtractor fe;
  Tensor p, q;
  run("perceptual_distance", {&p, &q}, [&] {
    p = RandomTensor({3, 8, 8}, rng, 0, 1);
    q = RandomTensor({3, 8, 8}, rng, 0, 1);
  }, [&] { return ScalarMul(PerceptualDistance(p, q, fe), 1e3); });

  // Full model forward: the default configuration, then random variants.
  std::unique_ptr<DerainModel> model;
  Tensor o;
  run("model forward, default config", {&o}, [&] {
    model = std::make_unique<DerainModel>(ModelConfig{});
    o = RandomTensor({3, 8, 8}, rng, 0, 1);
  }, [&] { return L2Norm(model->Restore(o)); });
  int draw = 0;
  const Attention kinds[] = {Attention::kNone, Attention::kSeMul, Attention::kSeAdd, Attention::kCbamLite};
  const std::vector<std::size_t> dils[] = {{1}, {1, 2}, {1, 2, 3}, {2, 3}};
  run("model forward, random configs", {&o}, [&] {
    ModelConfig c;
    c.base_width = 4;
    c.num_stages = 1 + draw % 3;
    c.depth_per_stage = 2;
    c.attention = kinds[draw % 4];
    c.dilation_set = dils[(draw / 4) % 4];
    c.mask_head = draw % 3 == 0;
    c.seed = 500 + static_cast<std::uint64_t>(draw);
    ++draw;
    model = std::make_unique<DerainModel>(c);
    o = RandomTensor({3, 8, 8}, rng, 0, 1);
  }, [&] { return L2Norm(model->Restore(o)); });

  {
    std::vector<Tensor*> leaves;
    std::unique_ptr<DerainModel> pm;
    Tensor in;
    const auto st = [&] {
      // A fresh model per instance, so the leaf set changes with each draw.
      rstb::testing::OracleStats total;
      for (int i = 0; i < kInstances; ++i) {
        ModelConfig c;
        c.base_width = 4;
        c.num_stages = 2;
        c.depth_per_stage = 1;
        c.attention = kinds[i % 4];
        c.mask_head = true;
        c.seed = 900 + static_cast<std::uint64_t>(i);
        pm = std::make_unique<DerainModel>(c);
        pm->SetRequiresGrad(true);
        leaves.clear();
        for (auto& np : pm->parameters()) leaves.push_back(&np.value);
        const auto one = GradientOracle(1, leaves, [&] { in = RandomTensor({3, 8, 8}, rng, 0, 1, false); }, [&] {
          const auto out = pm->Forward(in);
          return Add(L2Norm(out.output()), Mean(out.mask_logits.back()));
        });
        total.accepted += one.accepted;
        total.redrawn += one.redrawn;
        total.worst = std::max(total.worst, one.worst);
      }
      return total;
    }();
    ++families;
    worst = std::max(worst, st.worst);
    if (st.accepted < kInstances || st.worst >= kTol) {
      bad.push_back("model parameters (accepted " + std::to_string(st.accepted) + ", worst " + Fmt(st.worst, 6) + ")");
    }
  }

  const double secs = Seconds(start);
  Verdict v;
  v.pass = bad.empty() && secs < 120.0;
  v.detail = std::to_string(families) + " op families x " + std::to_string(kInstances) +
             " instances, worst rel err " + Sci(worst) + ", " + Fmt(secs, 1) + " s (< 120 s)";
  for (const auto& b2 : bad) v.detail += "; FAILED " + b2;
  return v;
}

// ---------------------------------------------------------- criterion 2 ----

Verdict Criterion2() {
  constexpr int kAttacks = 50;
  std::mt19937_64 rng(77);
  const FeatureExtractor fe;
  const char* kinds[] = {"lmse", "lpips", "object_sensitive", "partial", "partial_lpips", "unnoticeable",
                         "input_close"};
  const Attention atts[] = {Attention::kNone, Attention::kSeMul, Attention::kSeAdd, Attention::kCbamLite};
  const std::vector<std::size_t> dils[] = {{1}, {1, 2}, {1, 2, 3}};
  const RainParams rain;
  std::size_t steps_checked = 0, box_violations = 0, support_violations = 0, masked_attacks = 0;
  std::map<std::string, int> per_kind;
  for (int i = 0; i < kAttacks; ++i) {
    ModelConfig c;
    c.base_width = 4 + 2 * (rng() % 3);
    c.num_stages = 1 + rng() % 3;
    c.depth_per_stage = 1 + rng() % 2;
    c.attention = atts[rng() % 4];
    c.dilation_set = dils[rng() % 3];
    c.mask_head = rng() % 2 == 0;
    c.seed = rng();
    const DerainModel model(c);
    const std::size_t h = 32 + 4 * (rng() % 9), w = 32 + 4 * (rng() % 9);
    const SamplePair sample = MakeSample(rain, rng(), rng() % 100, h, w);
    const std::string kind = kinds[i % 7];
    ++per_kind[kind];
    const AttackObjective obj = Instantiate(ObjectiveSpec::Parse(kind), sample.rainy.shape(), sample.mask);
    const double eps = static_cast<double>(1u << (rng() % 5)) / 255.0;  // 1..16 / 255
    PerturbationBudget budget = PerturbationBudget::ForEpsilon(eps, 1 + rng() % 8, rng());
    budget.random_init = rng() % 4 != 0;

    // Support of a masked attack, as a per-pixel predicate.
    std::function<bool(std::size_t, std::size_t)> on_support;
    if (const auto* p = std::get_if<objective::Partial>(&obj)) {
      const Tensor m = p->mask;
      on_support = [m, w](std::size_t y, std::size_t x) { return m.data()[y * w + x] != 0.0; };
    } else if (const auto* os = std::get_if<objective::ObjectSensitive>(&obj)) {
      const Rect r = os->source;
      on_support = [r](std::size_t y, std::size_t x) {
        return y >= r.y && y < r.y + r.height && x >= r.x && x < r.x + r.width;
      };
    }
    if (on_support) ++masked_attacks;

    const auto xv = sample.rainy.data();
    const auto check = [&](const Tensor& delta) {
      const auto d = delta.data();
      for (std::size_t k = 0; k < d.size(); ++k) {
        const double adv = xv[k] + d[k];
        if (!(std::abs(d[k]) <= eps) || !(adv >= 0.0 && adv <= 1.0)) ++box_violations;
        if (on_support) {
          const std::size_t y = (k / w) % h, x = k % w;
          if (!on_support(y, x) && std::bit_cast<std::uint64_t>(d[k]) != 0) ++support_violations;
        }
      }
    };
    const AttackResult r = PgdAttack(model, fe, sample.rainy, budget, obj, [&](std::size_t, const Tensor& d) {
      ++steps_checked;
      check(d);
    });
    check(r.delta);
  }
  Verdict v;
  v.pass = box_violations == 0 && support_violations == 0;
  v.detail = std::to_string(kAttacks) + " attacks (" + std::to_string(masked_attacks) + " masked), " +
             std::to_string(steps_checked) + " iterates checked: " + std::to_string(box_violations) +
             " box violations, " + std::to_string(support_violations) + " non-zero off-support entries";
  return v;
}

// ---------------------------------------------------------- criterion 3 ----

double GridMax(double lo, double hi, const std::function<double(double)>& g) {
  double best = -std::numeric_limits<double>::infinity();
  constexpr int kPoints = 10000;
  for (int i = 0; i < kPoints; ++i) best = std::max(best, g(lo + (hi - lo) * i / (kPoints - 1)));
  return best;
}

Verdict Criterion3() {
  // Toy suite fixed in advance: the identity and the sigmoid scalar toys,
  // five pixel values, four budgets, the three objectives defined on a
  // 1 x 1 x 1 image, three seeds. T = 20, alpha = eps/4, random start.
  const FeatureExtractor fe;
  struct Toy {
    const char* name;
    rstb::testing::FunctionRestorer model;
    std::function<double(double)> f;
  };
  const Toy toys[] = {{"identity", rstb::testing::IdentityToy(), [](double x) { return x; }},
                      {"sigmoid", rstb::testing::SigmoidToy(), rstb::testing::ToyScalar}};
  std::size_t cases = 0, hits = 0;
  std::map<std::string, std::pair<int, int>> by_objective;
  std::string worst_case;
  double worst_gap = 0.0;
  for (const auto& toy : toys) {
    for (double x : {0.02, 0.3, 0.5, 0.71, 0.995}) {
      for (double eps : {1.0 / 255.0, 4.0 / 255.0, 8.0 / 255.0, 0.05}) {
        const double lo = std::max(-eps, -x), hi = std::min(eps, 1.0 - x);
        const auto& f = toy.f;
        const std::function<double(double)> lmse = [&](double u) { return std::abs(f(x + u) - f(x)); };
        const std::function<double(double)> close = [&](double u) { return -std::abs(f(x + u) - x); };
        const std::pair<AttackObjective, const std::function<double(double)>*> objs[] = {
            {objective::Lmse{}, &lmse},
            {objective::Partial{Tensor::Full({1, 1, 1}, 1.0)}, &lmse},
            {objective::InputClose{}, &close}};
        for (const auto& [obj, g] : objs) {
          const double best = GridMax(lo, hi, *g);
          for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const auto r = PgdAttack(toy.model, fe, Tensor::FromData({1, 1, 1}, {x}),
                                     PerturbationBudget::ForEpsilon(eps, 20, seed), obj);
            const double gap = best - r.final_value;
            const bool ok = gap <= 0.01 * std::abs(best);
            ++cases;
            hits += ok;
            auto& tally = by_objective[ObjectiveName(obj)];
            ++tally.second;
            tally.first += ok;
            if (!ok && gap > worst_gap) {
              worst_gap = gap;
              worst_case = std::string(toy.name) + " x=" + Fmt(x, 3) + " eps=" + Fmt(eps, 4) + " " +
                           ObjectiveName(obj) + ": pgd " + Fmt(r.final_value, 5) + " vs grid " + Fmt(best, 5);
            }
          }
        }
      }
    }
  }

  // FGSM half: T = 1, alpha = eps, delta0 = 0 against an independent oracle
  // built from the closed-form toy derivative.
  std::size_t fgsm_cases = 0, fgsm_equal = 0;
  const auto& sig = toys[1];
  for (double x : {0.02, 0.3, 0.5, 0.71, 0.995}) {
    for (double eps : {1.0 / 255.0, 4.0 / 255.0, 8.0 / 255.0, 0.05}) {
      PerturbationBudget b;
      b.epsilon = eps;
      b.alpha = eps;
      b.steps = 1;
      b.random_init = false;
      const auto r = PgdAttack(sig.model, fe, Tensor::FromData({1, 1, 1}, {x}), b, objective::InputClose{});
      // d/du -|f(x+u) - x| at u = 0 is -sgn(f(x) - x) f'(x).
      const double diff = rstb::testing::ToyScalar(x) - x;
      const double grad = -(diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0) * rstb::testing::ToyScalarDerivative(x);
      const double step = grad > 0 ? eps : grad < 0 ? -eps : 0.0;
      const double expect = std::min(std::max(step, std::max(-eps, -x)), std::min(eps, 1.0 - x));
      ++fgsm_cases;
      fgsm_equal += std::bit_cast<std::uint64_t>(r.delta.item()) == std::bit_cast<std::uint64_t>(expect);
    }
  }

  Verdict v;
  v.pass = hits == cases && fgsm_equal == fgsm_cases;
  v.detail = "grid oracle: " + std::to_string(hits) + "/" + std::to_string(cases) + " cases within 1% (";
  bool first = true;
  for (const auto& [name, t] : by_objective) {
    v.detail += (first ? "" : ", ") + name + " " + std::to_string(t.first) + "/" + std::to_string(t.second);
    first = false;
  }
  v.detail += "); FGSM bitwise: " + std::to_string(fgsm_equal) + "/" + std::to_string(fgsm_cases);
  if (!worst_case.empty()) v.detail += "; worst miss " + worst_case + " (sign-PGD stops at the local maximum of its start basin)";
  return v;
}

// ---------------------------------------------------------- criterion 4 ----

Verdict Criterion4() {
  const double psnr = Psnr(Tensor::Full({3, 16, 16}, 0.5), Tensor::Full({3, 16, 16}, 0.6));
  const double ssim = Ssim(Tensor::Full({3, 16, 16}, 0.5), Tensor::Full({3, 16, 16}, 0.25));

  // mAP against a brute-force double mean over random rows.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_map_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t images = 1 + rng() % 20;
    std::vector<Epsilon> eps;
    for (std::uint32_t k = 1; k <= 1 + rng() % 6; ++k) eps.push_back({k * 2});
    std::vector<ReportRow> rows;
    double sp = 0, ss = 0, sl = 0;
    for (std::size_t i = 0; i < images; ++i) {
      for (const auto& e : eps) {
        ReportRow r;
        r.image_id = std::to_string(i);
        r.epsilon = e;
        r.objective = "lmse";
        r.psnr_db = 10 + 30 * u(rng);
        r.ssim = u(rng);
        r.lpips = u(rng);
        sp += r.psnr_db;
        ss += r.ssim;
        sl += r.lpips;
        rows.push_back(r);
      }
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    const double n = static_cast<double>(images * eps.size());
    const MetricTriple m = AggregateMap(rows, eps);
    worst_map_err = std::max({worst_map_err, std::abs(m.psnr_db - sp / n), std::abs(m.ssim - ss / n),
                              std::abs(m.lpips - sl / n)});
  }
  Verdict v;
  v.pass = std::abs(psnr - 20.0) <= 1e-9 && std::abs(ssim - 0.80013) <= 1e-4 && worst_map_err <= 1e-12;
  v.detail = "PSNR(uniform 0.1) = " + Fmt(psnr, 12) + " dB, SSIM(0.5, 0.25) = " + Fmt(ssim, 6) +
             ", max |mAP - brute force| = " + Fmt(worst_map_err, 15);
  return v;
}

// ------------------------------------------------------------ shared data ----

std::size_t Workers() { return std::max(1u, std::thread::hardware_concurrency()); }

TrainConfig PlainTrain(std::size_t epochs, std::uint64_t seed) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.seed = seed;
  tc.eval_steps = 1;  // the per-epoch held-out log is not scored here
  return tc;
}

std::string DescribeSweep(const Sweep& s) {
  std::string out = "clean " + Fmt(s.clean, 3);
  for (const auto& [e, m] : s.per_eps) out += ", " + e.ToString() + " " + Fmt(m.psnr_db, 3);
  return out;
}

// The plain default model shared by criteria 5 and 9.
DerainModel PlainDefaultModel() {
  ModelConfig mc;
  return TrainCached(mc, PlainTrain(100, 1001), Samples(1001, 16, 64));
}

// ---------------------------------------------------------- criterion 5 ----

Verdict Criterion5() {
  const auto start = Clock::now();
  DerainModel model = PlainDefaultModel();
  model.SetRequiresGrad(false);
  const Sweep s = Evaluate(model, Samples(2002, 16, 64), "lmse", {{1}, {2}, {4}, {8}});
  Log("lmse sweep: " + DescribeSweep(s));

  const double drop1 = s.clean - s.per_eps.front().second.psnr_db;
  bool monotone = true;
  for (std::size_t i = 1; i < s.per_eps.size(); ++i) {
    monotone = monotone && s.per_eps[i].second.psnr_db <= s.per_eps[i - 1].second.psnr_db;
  }
  const double secs = Seconds(start);
  Verdict v;
  v.pass = drop1 >= 2.0 && monotone && secs < 15 * 60;
  v.detail = "drop at 1/255 = " + Fmt(drop1, 3) + " dB (need >= 2), monotone " + (monotone ? "yes" : "no") +
             ", drop at 8/255 = " + Fmt(s.clean - s.per_eps.back().second.psnr_db, 3) + " dB, " +
             Fmt(secs, 0) + " s";
  return v;
}

// ---------------------------------------------------------- criterion 6 ----

Verdict Criterion6() {
  const auto start = Clock::now();
  const auto train = Samples(3003, 64, 32);
  const auto test = Samples(3004, 16, 32);
  ModelConfig mc;
  mc.seed = 6;
  TrainConfig plain_cfg = PlainTrain(30, 6);
  TrainConfig adv_cfg = plain_cfg;
  adv_cfg.adv.enabled = true;

  DerainModel plain = TrainCached(mc, plain_cfg, train);
  DerainModel adv = TrainCached(mc, adv_cfg, train);
  plain.SetRequiresGrad(false);
  adv.SetRequiresGrad(false);
  const Sweep sp = Evaluate(plain, test, "lmse", {{4}});
  const Sweep sa = Evaluate(adv, test, "lmse", {{4}});
  Log("plain: " + DescribeSweep(sp));
  Log("adv:   " + DescribeSweep(sa));

  const double att_p = sp.per_eps.front().second.psnr_db;
  const double att_a = sa.per_eps.front().second.psnr_db;
  const double secs = Seconds(start);
  Verdict v;
  v.pass = att_a >= att_p + 1.0 && sa.clean <= sp.clean && secs < 45 * 60;
  v.detail = "attacked 4/255: adv " + Fmt(att_a, 3) + " vs plain " + Fmt(att_p, 3) + " dB (need +1), clean: adv " +
             Fmt(sa.clean, 3) + " vs plain " + Fmt(sp.clean, 3) + " dB, " + Fmt(secs, 0) + " s";
  return v;
}

// ---------------------------------------------------------- criterion 7 ----

Verdict Criterion7() {
  const auto train = Samples(7007, 48, 32);
  const auto test = Samples(7008, 16, 32);
  struct Variant {
    std::string name;
    ModelConfig config;
  };
  ModelConfig base;
  ModelConfig dil1 = base;
  dil1.dilation_set = {1};
  ModelConfig no_att = base;
  no_att.attention = Attention::kNone;
  ModelConfig mask = base;
  mask.mask_head = true;
  const std::vector<Variant> variants = {{"base", base}, {"dil_1", dil1}, {"attn_none", no_att}, {"mask_on", mask}};

  std::map<std::string, std::vector<double>> map_psnr;
  for (std::uint64_t seed : {71, 72, 73}) {
    for (const auto& var : variants) {
      ModelConfig mc = var.config;
      mc.seed = seed;
      DerainModel model = TrainCached(mc, PlainTrain(20, seed), train);
      model.SetRequiresGrad(false);
      const Sweep s = Evaluate(model, test, "lmse", {{1}, {2}, {4}, {8}}, seed);
      map_psnr[var.name].push_back(s.map.psnr_db);
      Log("seed " + std::to_string(seed) + " " + var.name + ": mAP-PSNR " + Fmt(s.map.psnr_db, 3) + " (" +
          DescribeSweep(s) + ")");
    }
  }

  // Each check: wins of `better` over `worse` across seeds.
  struct Check {
    std::string label, better, worse;
  };
  const std::vector<Check> checks = {{"dilations {1,2,3} >= {1}", "base", "dil_1"},
                                     {"se_add >= no attention", "base", "attn_none"},
                                     {"mask-free >= mask-supervised", "base", "mask_on"}};
  Verdict v{true, ""};
  for (const auto& c : checks) {
    int wins = 0;
    for (std::size_t i = 0; i < 3; ++i) wins += map_psnr[c.better][i] >= map_psnr[c.worse][i];
    const bool ok = wins >= 2;
    v.pass = v.pass && ok;
    if (!v.detail.empty()) v.detail += "; ";
    v.detail += c.label + " " + std::to_string(wins) + "/3" + (ok ? "" : " REVERSED");
  }
  return v;
}

// ---------------------------------------------------------- criterion 8 ----

std::map<std::string, std::string> ArtifactBytes(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".csv" || ext == ".json")) {
      files[fs::relative(entry.path(), dir).generic_string()] = ReadFileBytes(entry.path());
    }
  }
  return files;
}

Verdict Criterion8() {
  const fs::path root = fs::path(RSTB_ACCEPTANCE_CACHE) / "criterion8";
  fs::remove_all(root);
  auto cli = [&](std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::Run(args, out, err);
    if (code != cli::kExitOk) throw Error(ErrorCode::kIo, "rstb " + args[0] + " exited " + std::to_string(code) + ": " + err.str());
  };
  const std::string data = (root / "data").string();
  cli({"gen-data", "--out", data, "--count", "6", "--height", "32", "--width", "32", "--seed", "8"});
  cli({"train", "--config", "stages_2", "--data", data, "--out", (root / "m").string(), "--epochs", "2", "--seed", "8"});
  const std::string ckpt = "m=" + (root / "m" / "model.ckpt").string();
  for (const char* run : {"run_a", "run_b"}) {
    cli({"bench", "--ckpt", ckpt, "--data", data, "--out", (root / run).string(), "--objective",
         "lmse,lpips,partial", "--eps", "1/255,4/255", "--steps", "4", "--seed", "8", "--workers",
         std::to_string(Workers())});
  }
  const auto a = ArtifactBytes(root / "run_a");
  const auto b = ArtifactBytes(root / "run_b");
  std::size_t equal = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    equal += it != b.end() && it->second == bytes;
  }
  Verdict v;
  v.pass = !a.empty() && a.size() == b.size() && equal == a.size();
  v.detail = std::to_string(equal) + "/" + std::to_string(a.size()) + " CSV/JSON artifacts byte-identical (" +
             std::to_string(b.size()) + " in second run)";
  return v;
}

// ---------------------------------------------------------- criterion 9 ----

Verdict Criterion9() {
  DerainModel model = PlainDefaultModel();
  model.SetRequiresGrad(false);
  const auto test = Samples(9009, 16, 64);
  const Sweep u = Evaluate(model, test, "unnoticeable", {{4}});
  const Sweep l = Evaluate(model, test, "lpips", {{4}});
  std::map<std::string, const ReportRow*> lp;
  for (const auto& r : l.report.rows) {
    if (r.epsilon.num != 0) lp[r.image_id] = &r;
  }
  std::size_t both = 0, higher_psnr = 0, higher_lpips = 0, n = 0;
  for (const auto& r : u.report.rows) {
    if (r.epsilon.num == 0) continue;
    const ReportRow& o = *lp.at(r.image_id);
    ++n;
    higher_psnr += r.psnr_db > o.psnr_db;
    higher_lpips += r.lpips > o.lpips;
    both += r.psnr_db > o.psnr_db && r.lpips > o.lpips;
  }
  Log("unnoticeable: psnr " + Fmt(u.per_eps.front().second.psnr_db, 3) + " lpips " +
      Fmt(u.per_eps.front().second.lpips, 6) + "; lpips attack: psnr " + Fmt(l.per_eps.front().second.psnr_db, 3) +
      " lpips " + Fmt(l.per_eps.front().second.lpips, 6));
  Verdict v;
  v.pass = n == 16 && both * 10 >= n * 6;
  v.detail = std::to_string(both) + "/" + std::to_string(n) + " images with both higher PSNR and higher lpips (need >= 60%); higher PSNR " +
             std::to_string(higher_psnr) + "/" + std::to_string(n) + ", higher lpips " + std::to_string(higher_lpips) + "/" +
             std::to_string(n);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria = {Criterion1, Criterion2, Criterion3, Criterion4, Criterion5,
                                                          Criterion6, Criterion7, Criterion8, Criterion9};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion '" << argv[i] << "' (expected 1.." << criteria.size() << ")\n";
      return 2;
    }
    selected.push_back(n);
  }
  if (selected.empty()) {
    for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) selected.push_back(n);
  }
  fs::create_directories(RSTB_ACCEPTANCE_CACHE);

  int failures = 0;
  for (int n : selected) {
    Verdict v;
    try {
      v = criteria[n - 1]();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << "CRITERION " << n << ": " << (v.pass ? "PASS" : "FAIL") << " - " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
