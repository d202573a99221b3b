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

#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "presets.hpp"
#include "rstb/attack.hpp"
#include "rstb/checkpoint.hpp"
#include "rstb/checksum.hpp"
#include "rstb/error.hpp"
#include "rstb/image_io.hpp"
#include "rstb/metrics.hpp"
#include "rstb/rain.hpp"
#include "rstb/train.hpp"

namespace rstb::cli {
namespace fs = std::filesystem;
namespace {

using nlohmann::json;

struct Options {
  std::string config;
  std::string data;
  std::vector<std::string> ckpts;
  std::string eps;
  std::string objective;
  std::optional<double> lambda;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string out;
  std::optional<std::size_t> count, height, width, epochs;
  std::vector<std::string> inputs;
};

struct Seed {
  std::uint64_t value = 0;
  std::string source = "config";
};

// --seed beats RSTB_SEED, which beats the config file.
Seed ResolveSeed(const Options& o, std::uint64_t config_seed) {
  if (o.seed) return {*o.seed, "flag"};
  if (const char* env = std::getenv("RSTB_SEED"); env != nullptr && *env != '\0') {
    std::uint64_t v = 0;
    const std::string text(env);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw Error(ErrorCode::kConfig, "RSTB_SEED is not an unsigned integer: '" + text + "'");
    }
    return {v, "env"};
  }
  return {config_seed, "config"};
}

void RequirePath(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(ErrorCode::kConfig, what + " is required");
  if (!fs::exists(path)) throw Error(ErrorCode::kIo, what + " not found: " + path);
}

json ParseJsonFile(const std::string& path) {
  try {
    return json::parse(ReadFileBytes(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, path + ": " + e.what());
  }
}

// A JSON file, or the name of a preset (optionally "preset:<name>").
std::pair<RunConfig, json> LoadRunConfig(const std::string& ref) {
  if (ref.empty()) return {Presets().at("default"), {{"preset", "default"}}};
  if (fs::exists(ref)) {
    return {RunConfig::FromJson(ParseJsonFile(ref)), {{"path", ref}, {"sha256", Sha256File(ref)}}};
  }
  const std::string name = ref.rfind("preset:", 0) == 0 ? ref.substr(7) : ref;
  const auto it = Presets().find(name);
  if (it == Presets().end()) {
    throw Error(ErrorCode::kIo, "config not found: " + ref + " (neither a file nor a preset)");
  }
  return {it->second, {{"preset", name}}};
}

void WriteJson(const fs::path& path, const json& j) { WriteFileBytes(path, j.dump(2) + "\n"); }

void WriteRunJson(const fs::path& out, const std::string& command, const json& config,
                  const json& inputs, const Seed& seed) {
  WriteJson(out / "run.json", {{"tool", "rstb"},
                               {"version", kVersion},
                               {"command", command},
                               {"config", config},
                               {"inputs", inputs},
                               {"seed", seed.value},
                               {"seed_source", seed.source}});
}

std::string ModelName(const std::string& spec, std::string* path) {
  if (const auto eq = spec.find('='); eq != std::string::npos) {
    *path = spec.substr(eq + 1);
    return spec.substr(0, eq);
  }
  *path = spec;
  const fs::path p(spec);
  if (p.filename() == "model.ckpt" && p.has_parent_path() && !p.parent_path().filename().empty()) {
    return p.parent_path().filename().string();
  }
  return p.stem().string();
}

std::vector<EvalImage> EvalImages(const Dataset& ds) {
  std::vector<EvalImage> images;
  for (const auto& s : ds.samples) images.push_back({s.id, s.rainy, s.clean, s.mask});
  return images;
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  return parts;
}

void ApplyAttackFlags(const Options& o, AttackSpec& spec) {
  if (!o.objective.empty()) {
    const double lambda = spec.objective.lambda;
    spec.objective = ObjectiveSpec::Parse(o.objective);
    spec.objective.lambda = lambda;
  }
  if (o.lambda) spec.objective.lambda = *o.lambda;
  if (!o.eps.empty()) spec.epsilons = ParseEpsilonList(o.eps);
  if (o.steps) spec.steps = *o.steps;
  if (spec.steps == 0) throw Error(ErrorCode::kConfig, "--steps must be >= 1");
}

// Runs one model x objective sweep and writes <name>__<objective>.{csv,json}.
bool RunSweep(const std::string& name, const DerainModel& model, const Dataset& ds,
              const AttackSpec& spec, std::size_t workers, const fs::path& out, std::ostream& log) {
  static const FeatureExtractor features;
  EvalOptions eo;
  eo.epsilons = spec.epsilons;
  eo.steps = spec.steps;
  eo.alpha_ratio = spec.AlphaRatio();
  eo.seed = spec.seed;
  eo.workers = workers;
  RobustnessReport report = EvaluateRobustness(model, features, EvalImages(ds), spec.objective, eo);
  report.dataset_id = ds.checksum;
  json summary = report.Summary();
  summary["model"] = name;
  summary["model_checksum"] = model.Checksum();
  summary["model_config"] = model.config().ToJson();
  const std::string stem = name + "__" + spec.objective.Name();
  WriteFileBytes(out / (stem + ".csv"), report.ToCsv());
  WriteJson(out / (stem + ".json"), summary);
  const auto failed = report.FailedImages();
  log << stem << ": " << report.rows.size() << " rows";
  if (!summary["map"].is_null()) log << ", mAP-PSNR " << FormatDouble(summary["map"]["psnr_db"].get<double>());
  if (!failed.empty()) log << ", " << failed.size() << " image(s) failed";
  log << "\n";
  return failed.empty() && summary["failures"].empty();
}

int CmdGenData(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  DataConfig dc;
  json config_input = {{"preset", "builtin"}};
  if (!o.config.empty()) {
    RequirePath(o.config, "config");
    dc = DataConfig::FromJson(ParseJsonFile(o.config));
    config_input = {{"path", o.config}, {"sha256", Sha256File(o.config)}};
  }
  if (o.count) dc.count = *o.count;
  if (o.height) dc.height = *o.height;
  if (o.width) dc.width = *o.width;
  const Seed seed = ResolveSeed(o, dc.seed);
  dc.seed = seed.value;
  const Dataset ds = MakeDataset(o.out, dc.count, dc.height, dc.width, dc.rain, dc.seed);
  WriteRunJson(o.out, "gen-data", dc.ToJson(), {{"config", config_input}}, seed);
  out << "dataset " << ds.checksum << ": " << ds.samples.size() << " samples in " << o.out << "\n";
  return kExitOk;
}

int CmdTrain(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  RequirePath(o.data, "dataset");
  auto [rc, config_input] = LoadRunConfig(o.config);
  const Seed seed = ResolveSeed(o, rc.seed);
  rc.ApplySeed(seed.value);
  if (o.lambda) rc.train.adv.lambda = *o.lambda;
  if (!o.eps.empty()) {
    const auto eps = ParseEpsilonList(o.eps);
    if (eps.size() != 1) throw Error(ErrorCode::kConfig, "train takes a single --eps value");
    rc.train.adv.epsilon = eps[0];
  }
  if (o.steps) rc.train.adv.steps = *o.steps;
  if (o.epochs) rc.train.epochs = *o.epochs;
  rc.model.Validate();
  rc.train.Validate();

  const Dataset ds = LoadDataset(o.data);
  DerainModel model(rc.model);
  TrainOptions opts;
  opts.checkpoint_dir = fs::path(o.out) / "checkpoints";
  opts.workers = o.workers;
  opts.on_epoch = [&](const TrainLogRow& r) {
    out << "epoch " << r.epoch << ": fidelity " << FormatDouble(r.fidelity_loss) << ", total "
        << FormatDouble(r.total_loss) << ", held-out psnr " << FormatDouble(r.clean_psnr)
        << " clean / " << FormatDouble(r.attacked_psnr) << " attacked\n";
  };
  const TrainLog log = Train(model, ds.samples, rc.train, opts);
  WriteFileBytes(fs::path(o.out) / "train_log.csv", log.ToCsv());
  WriteFileBytes(fs::path(o.out) / "model.ckpt", SerializeCheckpoint(model));
  WriteRunJson(o.out, "train", rc.ToJson(),
               {{"config", config_input}, {"dataset", {{"path", o.data}, {"checksum", ds.checksum}}}},
               seed);
  out << "model " << model.Checksum() << " written to " << (fs::path(o.out) / "model.ckpt").string()
      << "\n";
  return kExitOk;
}

int CmdAttack(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  if (o.ckpts.size() != 1) throw Error(ErrorCode::kConfig, "attack takes exactly one --ckpt");
  std::string ckpt;
  const std::string name = ModelName(o.ckpts[0], &ckpt);
  RequirePath(ckpt, "checkpoint");
  RequirePath(o.data, "dataset");
  auto [rc, config_input] = LoadRunConfig(o.config);
  const Seed seed = ResolveSeed(o, rc.seed);
  rc.ApplySeed(seed.value);
  AttackSpec spec = rc.attack;
  ApplyAttackFlags(o, spec);

  DerainModel model = LoadCheckpoint(ckpt);
  model.SetRequiresGrad(false);
  const Dataset ds = LoadDataset(o.data);
  const bool ok = RunSweep(name, model, ds, spec, o.workers, o.out, out);
  WriteRunJson(o.out, "attack", {{"attack", spec.ToJson()}, {"model", name}},
               {{"config", config_input},
                {"dataset", {{"path", o.data}, {"checksum", ds.checksum}}},
                {"checkpoints", {{name, {{"path", ckpt}, {"sha256", Sha256File(ckpt)}}}}}},
               seed);
  return ok ? kExitOk : kExitPartial;
}

int CmdBench(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  std::vector<std::pair<std::string, std::string>> models;  // name, path
  std::vector<std::string> objectives;
  AttackSpec spec;
  std::uint64_t config_seed = 0;
  json config_input = {{"preset", "builtin"}};
  if (!o.config.empty()) {
    RequirePath(o.config, "config");
    const json j = ParseJsonFile(o.config);
    config_input = {{"path", o.config}, {"sha256", Sha256File(o.config)}};
    try {
      spec = AttackSpec::FromJson(j.value("attack", json::object()));
      for (const auto& m : j.value("models", json::array())) {
        models.emplace_back(m.at("name").get<std::string>(), m.at("ckpt").get<std::string>());
      }
      for (const auto& ob : j.value("objectives", json::array())) objectives.push_back(ob.get<std::string>());
      config_seed = j.value("seed", config_seed);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, o.config + ": " + e.what());
    }
  }
  for (const auto& c : o.ckpts) {
    std::string path;
    std::string name = ModelName(c, &path);
    models.emplace_back(std::move(name), std::move(path));
  }
  if (!o.objective.empty()) objectives = SplitList(o.objective);
  if (objectives.empty()) objectives.push_back(spec.objective.Name());
  if (models.empty()) throw Error(ErrorCode::kConfig, "bench needs at least one --ckpt or config model");
  std::set<std::string> names;
  for (const auto& [name, path] : models) {
    if (!names.insert(name).second) throw Error(ErrorCode::kConfig, "duplicate model name: " + name);
    RequirePath(path, "checkpoint");
  }
  RequirePath(o.data, "dataset");
  const Seed seed = ResolveSeed(o, config_seed);
  spec.seed = seed.value;
  Options flags = o;
  flags.objective.clear();
  ApplyAttackFlags(flags, spec);

  // Parse every objective before the first (slow) sweep.
  std::vector<AttackSpec> specs;
  for (const auto& name : objectives) {
    AttackSpec s = spec;
    const double lambda = s.objective.lambda;
    s.objective = ObjectiveSpec::Parse(name);
    s.objective.lambda = lambda;
    specs.push_back(s);
  }

  const Dataset ds = LoadDataset(o.data);
  bool ok = true;
  json checkpoints = json::object();
  for (const auto& [name, path] : models) {
    DerainModel model = LoadCheckpoint(path);
    model.SetRequiresGrad(false);
    checkpoints[name] = {{"path", path}, {"sha256", Sha256File(path)}};
    for (const auto& s : specs) ok = RunSweep(name, model, ds, s, o.workers, o.out, out) && ok;
  }
  json resolved = {{"attack", spec.ToJson()}, {"objectives", objectives}, {"models", json::array()}};
  for (const auto& [name, path] : models) resolved["models"].push_back({{"name", name}, {"ckpt", path}});
  WriteRunJson(o.out, "bench", resolved,
               {{"config", config_input},
                {"dataset", {{"path", o.data}, {"checksum", ds.checksum}}},
                {"checkpoints", checkpoints}},
               seed);
  return ok ? kExitOk : kExitPartial;
}

struct ReportInput {
  std::string file;
  json summary;
};

std::vector<ReportInput> CollectReports(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    RequirePath(in, "report input");
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto& p = e.path();
        if (p.extension() == ".json" && p.filename() != "run.json") found.push_back(p.string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) throw Error(ErrorCode::kConfig, "report needs at least one report JSON");
  std::vector<ReportInput> reports;
  for (const auto& f : files) {
    json j = ParseJsonFile(f);
    for (const char* key : {"model", "objective", "dataset", "map", "per_epsilon"}) {
      if (!j.contains(key)) throw Error(ErrorCode::kFormat, f + ": not a report (missing '" + key + "')");
    }
    reports.push_back({f, std::move(j)});
  }
  return reports;
}

std::string Cell(const json& map, const char* key) {
  return map.is_null() ? std::string("n/a") : FormatDouble(map.at(key).get<double>());
}

int CmdReport(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw Error(ErrorCode::kConfig, "--out is required");
  const auto reports = CollectReports(o.inputs);
  const std::string dataset = reports[0].summary["dataset"];
  for (const auto& r : reports) {
    if (r.summary["dataset"] != dataset) {
      throw Error(ErrorCode::kConfig, "mixed dataset checksums: " + reports[0].file + " has " + dataset +
                                          ", " + r.file + " has " +
                                          r.summary["dataset"].get<std::string>());
    }
  }

  std::set<std::string> objective_set;
  std::map<std::string, std::map<std::string, const json*>> table;  // model -> objective -> summary
  for (const auto& r : reports) {
    const std::string model = r.summary["model"], objective = r.summary["objective"];
    objective_set.insert(objective);
    if (!table[model].emplace(objective, &r.summary).second) {
      throw Error(ErrorCode::kConfig, "report: " + model + " x " + objective + " appears twice");
    }
  }
  const std::vector<std::string> objectives(objective_set.begin(), objective_set.end());

  // Rows sorted by mAP-PSNR (averaged over the model's objectives), descending.
  std::vector<std::pair<double, std::string>> order;
  for (const auto& [model, cells] : table) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [obj, s] : cells) {
      if ((*s)["map"].is_null()) continue;
      sum += (*s)["map"]["psnr_db"].get<double>();
      ++n;
    }
    order.emplace_back(n == 0 ? -std::numeric_limits<double>::infinity() : sum / static_cast<double>(n), model);
  }
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });

  std::string md = "| model |", sep = "|---|", csv = "model";
  for (const auto& obj : objectives) {
    md += " " + obj + " mAP-PSNR | " + obj + " mAP-SSIM | " + obj + " mAP-LPIPS |";
    sep += "---|---|---|";
    csv += "," + obj + "_map_psnr_db," + obj + "_map_ssim," + obj + "_map_lpips";
  }
  md += "\n" + sep + "\n";
  csv += "\n";
  for (const auto& [score, model] : order) {
    md += "| " + model + " |";
    csv += model;
    for (const auto& obj : objectives) {
      const auto it = table[model].find(obj);
      const json map = it == table[model].end() ? json(nullptr) : (*it->second)["map"];
      const std::string p = Cell(map, "psnr_db"), s = Cell(map, "ssim"), l = Cell(map, "lpips");
      md += " " + p + " | " + s + " | " + l + " |";
      csv += "," + (p == "n/a" ? "" : p) + "," + (s == "n/a" ? "" : s) + "," + (l == "n/a" ? "" : l);
    }
    md += "\n";
    csv += "\n";
  }

  std::string curves = "model,objective,epsilon_num,epsilon_den,psnr_db,ssim,lpips\n";
  for (const auto& [score, model] : order) {
    for (const auto& [obj, s] : table[model]) {
      for (const auto& e : (*s)["per_epsilon"]) {
        const Epsilon eps = Epsilon::Parse(e["epsilon"].get<std::string>());
        curves += model + "," + obj + "," + std::to_string(eps.num) + "," + std::to_string(eps.den) + "," +
                  FormatDouble(e["psnr_db"].get<double>()) + "," + FormatDouble(e["ssim"].get<double>()) +
                  "," + FormatDouble(e["lpips"].get<double>()) + "\n";
      }
    }
  }

  const fs::path dir(o.out);
  WriteFileBytes(dir / "comparison.md", md);
  WriteFileBytes(dir / "comparison.csv", csv);
  WriteFileBytes(dir / "curves.csv", curves);
  json inputs = json::object();
  for (const auto& r : reports) inputs[r.file] = Sha256File(r.file);
  WriteRunJson(o.out, "report", {{"dataset", dataset}, {"objectives", objectives}},
               {{"reports", inputs}}, Seed{0, "none"});
  out << md;
  return kExitOk;
}

void AddSeedWorkers(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.seed, "Seed (overrides RSTB_SEED and the config)");
  cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Robustness benchmark for deraining models", "rstb"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic rain dataset");
  gen->add_option("--config", o.config, "Data config JSON");
  gen->add_option("--out", o.out, "Output dataset directory")->required();
  gen->add_option("--count", o.count, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--height", o.height, "Image height");
  gen->add_option("--width", o.width, "Image width");
  AddSeedWorkers(gen, o);

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", o.config, "Run config JSON or preset name");
  train->add_option("--data", o.data, "Dataset directory")->required();
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--lambda", o.lambda, "Adversarial loss weight");
  train->add_option("--eps", o.eps, "Adversarial training budget, e.g. 4/255");
  train->add_option("--steps", o.steps, "Inner PGD steps");
  train->add_option("--epochs", o.epochs, "Epochs");
  AddSeedWorkers(train, o);

  auto* attack = app.add_subcommand("attack", "Attack one model over a dataset");
  attack->add_option("--config", o.config, "Run config JSON or preset name");
  attack->add_option("--ckpt", o.ckpts, "Checkpoint, optionally name=path")->required();
  attack->add_option("--data", o.data, "Dataset directory")->required();
  attack->add_option("--out", o.out, "Output directory")->required();
  attack->add_option("--objective", o.objective, "Attack objective");
  attack->add_option("--eps", o.eps, "Budgets, e.g. 1/255,2/255,4/255,8/255");
  attack->add_option("--lambda", o.lambda, "Unnoticeable-attack lambda");
  attack->add_option("--steps", o.steps, "PGD steps");
  AddSeedWorkers(attack, o);

  auto* bench = app.add_subcommand("bench", "Sweep models x objectives x budgets");
  bench->add_option("--config", o.config, "Bench config JSON");
  bench->add_option("--ckpt", o.ckpts, "Checkpoints, optionally name=path (repeatable)");
  bench->add_option("--data", o.data, "Dataset directory")->required();
  bench->add_option("--out", o.out, "Output directory")->required();
  bench->add_option("--objective", o.objective, "Comma-separated objectives");
  bench->add_option("--eps", o.eps, "Budgets, e.g. 1/255,2/255,4/255,8/255");
  bench->add_option("--lambda", o.lambda, "Unnoticeable-attack lambda");
  bench->add_option("--steps", o.steps, "PGD steps");
  AddSeedWorkers(bench, o);

  auto* report = app.add_subcommand("report", "Merge report JSONs into comparison tables");
  report->add_option("inputs", o.inputs, "Report JSON files or directories")->required();
  report->add_option("--out", o.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (gen->parsed()) return CmdGenData(o, out);
    if (train->parsed()) return CmdTrain(o, out);
    if (attack->parsed()) return CmdAttack(o, out);
    if (bench->parsed()) return CmdBench(o, out);
    return CmdReport(o, out);
  } catch (const Error& e) {
    err << "rstb: error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "rstb: error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace rstb::cli
