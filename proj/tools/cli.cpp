/*
 * Copyright 2026 The FGDI Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#ifndef FGDI_VERSION
#define FGDI_VERSION "unknown"
#endif

namespace fgdi::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string resume;
  std::string checkpoint;
  std::string data;
  std::optional<double> budget_minutes;
  bool full_epochs = false;
};

bool deterministic() {
  const char* v = std::getenv("FGDI_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("failed writing " + file.string());
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(file.string() + ": " + e.what());
  }
}

config::ExperimentConfig load(const Options& opt) {
  config::ExperimentConfig cfg = config::load_config(opt.config);
  if (opt.seed) cfg.seeds = {*opt.seed};
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  if (opt.full_epochs) cfg.train.plan = pipeline::StagePlan::full();
  cfg.validate();
  return cfg;
}

synth::DatasetFamily family_for(const config::ExperimentConfig& cfg, const Options& opt) {
  if (!opt.data.empty()) return synth::load_family(opt.data);
  return synth::build_family(cfg.data);
}

ordered_json metrics_json(const eval::Metrics& m) {
  ordered_json cmc = ordered_json::object();
  for (std::size_t i = 0; i < m.ks.size(); ++i) cmc["R" + std::to_string(m.ks[i])] = m.cmc[i];
  return {{"mAP", m.mAP},
          {"cmc", cmc},
          {"num_queries", m.num_queries},
          {"dropped_queries", m.dropped_queries},
          {"random_rank1", m.random_rank1}};
}

std::string stage_label(const std::vector<std::string>& stages) {
  if (stages.empty()) return "untrained";
  std::string s;
  for (const auto& st : stages) s += (s.empty() ? "" : "+") + st;
  return s;
}

std::string slug(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') out += c;
    else if (c == '+') out += "plus_";
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

/// Manifest describing one run directory. It is created before training and
/// sealed on completion; a sealed manifest is never rewritten.
class RunManifest {
 public:
  RunManifest(fs::path dir, const config::ExperimentConfig& cfg, const std::string& setting)
      : file_(dir / "manifest.json") {
    if (fs::exists(file_)) {
      const json old = read_json(file_);
      if (old.value("status", "") == "complete")
        throw IoError(file_.string() + " belongs to a completed run; choose another --out");
    }
    j_["config_hash"] = config::config_hash(cfg);
    j_["train_config_hash"] = cfg.effective_train().hash();
    j_["code_version"] = FGDI_VERSION;
    j_["setting"] = setting;
    j_["seeds"] = cfg.seeds;
    j_["protocol"] = cfg.protocol;
    if (cfg.toggles) j_["toggles"] = json::parse(config::to_json(*cfg.toggles));
    const auto plan = cfg.effective_train().plan;
    j_["schedule"] = plan.initial_epochs > 0 ? "three-stage" : "two-stage";
    j_["epochs"] = {plan.initial_epochs, plan.id_token_epochs, plan.domain_token_epochs,
                    plan.finetune_epochs};
    j_["deterministic"] = deterministic();
    j_["started_at"] = now_utc();
    j_["finished_at"] = nullptr;
    j_["status"] = "running";
    j_["artifacts"] = json::array();
    j_["stages"] = json::object();
    write_text(dir / "config.json", config::to_json(cfg) + "\n");
    flush();
  }

  void add_artifact(const fs::path& p) {
    j_["artifacts"].push_back(fs::relative(p, file_.parent_path()).generic_string());
  }
  void set_stages(std::uint64_t seed, const std::vector<std::string>& stages) {
    j_["stages"][std::to_string(seed)] = stages;
  }
  void complete() {
    j_["finished_at"] = now_utc();
    j_["status"] = "complete";
    flush();
  }

 private:
  void flush() { write_text(file_, j_.dump(2) + "\n"); }

  fs::path file_;
  ordered_json j_;
};

struct SeedOutcome {
  eval::Metrics metrics;
  std::vector<std::string> stages;
};

/// Trains one seed on the held-out split, writing log, checkpoints and
/// evaluation into `dir`.
SeedOutcome train_seed(const pipeline::TrainConfig& tc, const synth::DatasetSplit& split,
                       const fs::path& dir, bool checkpoints, std::optional<Model> resume,
                       const ordered_json& tags, RunManifest& manifest) {
  fs::create_directories(dir);
  pipeline::StageCallback on_stage;
  if (checkpoints) {
    on_stage = [&](const Model& m, const std::string& stage) {
      const fs::path p = dir / ("ckpt_" + stage + ".fgdi");
      pipeline::save_checkpoint(m, p);
      manifest.add_artifact(p);
    };
  }
  auto r = pipeline::train(tc, split, std::move(resume), on_stage);
  r.log.record_wall_time = !deterministic();
  r.log.write(dir / "metrics.jsonl");
  manifest.add_artifact(dir / "metrics.jsonl");

  SeedOutcome out;
  out.metrics = eval::evaluate(r.model, split);
  out.stages = r.model.stages;
  ordered_json e = tags;
  e["seed"] = tc.seed;
  e["stages"] = r.model.stages;
  e["label"] = stage_label(r.model.stages);
  e["target_domain"] = split.held_out_domain;
  e["metrics"] = metrics_json(out.metrics);
  write_text(dir / "eval.json", e.dump(2) + "\n");
  manifest.add_artifact(dir / "eval.json");
  return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Options& opt) {
  const auto cfg = load(opt);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const auto family = synth::build_family(cfg.data);
  const fs::path archive = out / "dataset.fgdi";
  synth::save_family(family, archive);
  ordered_json m;
  m["config_hash"] = config::config_hash(cfg);
  m["archive"] = archive.filename().string();
  std::ifstream in(archive, std::ios::binary);
  std::stringstream bytes;
  bytes << in.rdbuf();
  m["archive_digest"] = fnv1a_hex(bytes.str());
  m["geometry"] = {family.geometry.height, family.geometry.width, family.geometry.channels};
  m["source_domains"] = cfg.data.source_domains;
  m["held_out_domain"] = cfg.data.held_out_domain;
  ordered_json doms = ordered_json::array();
  for (const auto& d : family.domains)
    doms.push_back({{"domain_id", d.spec.domain_id},
                    {"identities", d.identities.size()},
                    {"train", d.train.size()},
                    {"query", d.query.size()},
                    {"gallery", d.gallery.size()}});
  m["domains"] = doms;
  write_text(out / "dataset.json", m.dump(2) + "\n");
  write_text(out / "config.json", config::to_json(cfg) + "\n");
  std::cout << "wrote " << archive.string() << "\n";
  return kOk;
}

int cmd_train(const Options& opt) {
  const auto cfg = load(opt);
  const fs::path out = cfg.output_dir;
  const auto family = family_for(cfg, opt);
  const pipeline::TrainConfig base = cfg.effective_train();
  RunManifest manifest(out, cfg, cfg.toggles ? "custom" : "default");

  if (cfg.protocol != "holdout") {
    if (!opt.resume.empty()) throw ConfigError("--resume is only supported with the holdout protocol");
    const eval::Protocol mode = eval::protocol_from_string(cfg.protocol);
    eval::Trainer trainer = [&](const synth::DatasetSplit& split, std::uint64_t seed) {
      pipeline::TrainConfig tc = base;
      tc.seed = seed;
      auto r = pipeline::train(tc, split);
      r.log.record_wall_time = !deterministic();
      const fs::path dir = out / ("seed_" + std::to_string(seed)) /
                           ("target_" + std::to_string(split.held_out_domain));
      fs::create_directories(dir);
      r.log.write(dir / "metrics.jsonl");
      manifest.add_artifact(dir / "metrics.jsonl");
      manifest.set_stages(seed, r.model.stages);
      return r.model;
    };
    const auto report = eval::run_protocol(family, mode, trainer, cfg.seeds, cfg.p1_sources);
    write_text(out / "report.json", report.to_json() + "\n");
    manifest.add_artifact(out / "report.json");
    manifest.complete();
    std::cout << cfg.protocol << " mAP " << report.mAP << " R1 " << report.cmc[0] << "\n";
    return kOk;
  }

  const auto split = holdout_split(family, cfg.data);
  std::optional<Model> resume;
  if (!opt.resume.empty()) {
    if (cfg.seeds.size() != 1) throw ConfigError("--resume needs exactly one seed");
    const auto data = pipeline::TrainingData::from(split);
    resume = pipeline::load_checkpoint(opt.resume, pipeline::init_model_for(base, data).dims);
  }
  ordered_json tags = {{"group", "train"}, {"setting", "default"}, {"protocol", "holdout"}};
  for (std::uint64_t seed : cfg.seeds) {
    pipeline::TrainConfig tc = base;
    tc.seed = seed;
    const fs::path dir = out / ("seed_" + std::to_string(seed));
    const auto r = train_seed(tc, split, dir, true, resume, tags, manifest);
    manifest.set_stages(seed, r.stages);
    std::cout << "seed " << seed << " [" << stage_label(r.stages) << "] mAP " << r.metrics.mAP
              << " R1 " << r.metrics.cmc[0] << "\n";
  }
  manifest.complete();
  return kOk;
}

int cmd_eval(const Options& opt) {
  if (opt.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  const auto cfg = load(opt);
  const auto family = family_for(cfg, opt);
  const auto split = holdout_split(family, cfg.data);
  const auto data = pipeline::TrainingData::from(split);
  const auto expected = pipeline::init_model_for(cfg.effective_train(), data);
  const Model model = pipeline::load_checkpoint(opt.checkpoint, expected.dims);
  if (model.label_pids != data.label_pids)
    throw ConfigError("checkpoint identities do not match the configured dataset");
  const auto metrics = eval::evaluate(model, split);
  ordered_json e;
  e["checkpoint"] = fs::path(opt.checkpoint).filename().string();
  e["config_hash"] = model.config_hash;
  e["stages"] = model.stages;
  e["label"] = stage_label(model.stages);
  e["protocol"] = "holdout";
  e["target_domain"] = split.held_out_domain;
  e["metrics"] = metrics_json(metrics);
  const std::string text = e.dump(2) + "\n";
  if (!opt.out.empty()) write_text(fs::path(opt.out) / "eval.json", text);
  std::cout << text;
  return kOk;
}

struct AblationRow {
  std::string group;
  std::string setting;
  config::Toggles toggles;
};

std::vector<AblationRow> ablation_rows(const config::ExperimentConfig& cfg) {
  const config::Toggles full = cfg.toggles.value_or(config::Toggles{});
  std::vector<AblationRow> rows;
  if (cfg.sweep.toggle_grid)
    for (const auto& nt : config::ablation_grid(full)) rows.push_back({"components", nt.name, nt.toggles});
  for (double b : cfg.sweep.betas) {
    config::Toggles t = full;
    t.beta = b;
    std::ostringstream name;
    name << "beta=" << b;
    rows.push_back({"beta", name.str(), t});
  }
  for (int e : cfg.sweep.init_epochs) {
    config::Toggles t = full;
    t.three_stage = true;
    t.init_epochs = e;
    rows.push_back({"init_epochs", "init_epochs=" + std::to_string(e), t});
  }
  return rows;
}

std::string delta_vs_baseline(const config::Toggles& t) {
  std::string d;
  auto add = [&](bool on, const char* name) {
    if (on) d += (d.empty() ? "" : ";") + std::string(name);
  };
  add(t.three_stage, "three_stage");
  add(t.grl, "grl");
  add(t.apn, "apn");
  return d.empty() ? "none" : d;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_ablate(const Options& opt) {
  const auto cfg = load(opt);
  const fs::path out = cfg.output_dir;
  const auto rows = ablation_rows(cfg);
  if (rows.empty()) throw ConfigError("sweep selects no runs");
  const auto family = family_for(cfg, opt);
  const auto split = holdout_split(family, cfg.data);

  double estimate = 0.0;
  for (const auto& row : rows)
    estimate += estimate_run_seconds(config::apply_toggles(cfg.train, row.toggles), split) *
                static_cast<double>(cfg.seeds.size());
  const double estimate_min = estimate / 60.0;
  if (opt.budget_minutes && estimate_min > *opt.budget_minutes) {
    std::cerr << "refusing: " << rows.size() * cfg.seeds.size() << " runs estimated at "
              << fmt(estimate_min) << " min exceed the budget of " << *opt.budget_minutes << " min\n";
    return kConfigError;
  }
  std::cerr << rows.size() * cfg.seeds.size() << " runs, estimated " << fmt(estimate_min) << " min\n";

  std::string csv =
      "group,setting,seed,three_stage,grl,apn,apn_variant,beta,init_epochs,delta_vs_baseline,"
      "mAP,R1,R5,R10\n";
  std::map<std::string, ordered_json> series;
  std::vector<std::string> series_order;
  for (const auto& row : rows) {
    config::ExperimentConfig run_cfg = cfg;
    run_cfg.toggles = row.toggles;
    const fs::path dir = out / row.group / slug(row.setting);
    RunManifest manifest(dir, run_cfg, row.setting);
    const pipeline::TrainConfig base = run_cfg.effective_train();
    ordered_json tags = {{"group", row.group},
                         {"setting", row.setting},
                         {"protocol", "holdout"},
                         {"toggles", json::parse(config::to_json(row.toggles))}};
    double map_sum = 0.0, r1_sum = 0.0;
    for (std::uint64_t seed : cfg.seeds) {
      pipeline::TrainConfig tc = base;
      tc.seed = seed;
      const auto r = train_seed(tc, split, dir / ("seed_" + std::to_string(seed)), false,
                                std::nullopt, tags, manifest);
      manifest.set_stages(seed, r.stages);
      const auto& t = row.toggles;
      csv += row.group + ",\"" + row.setting + "\"," + std::to_string(seed) + "," +
             (t.three_stage ? "1" : "0") + "," + (t.grl ? "1" : "0") + "," + (t.apn ? "1" : "0") +
             "," + losses::to_string(t.apn_variant) + "," + fmt(t.beta) + "," +
             std::to_string(t.init_epochs) + "," + delta_vs_baseline(t) + "," + fmt(r.metrics.mAP) +
             "," + fmt(r.metrics.cmc[0]) + "," + fmt(r.metrics.cmc[1]) + "," + fmt(r.metrics.cmc[2]) +
             "\n";
      map_sum += r.metrics.mAP;
      r1_sum += r.metrics.cmc[0];
      std::cerr << row.setting << " seed " << seed << " mAP " << fmt(r.metrics.mAP) << "\n";
    }
    manifest.complete();
    if (!series.count(row.group)) {
      series_order.push_back(row.group);
      series[row.group] = {{"name", row.group}, {"x", json::array()}, {"mAP", json::array()},
                           {"R1", json::array()}};
    }
    auto& s = series[row.group];
    if (row.group == "beta") s["x"].push_back(row.toggles.beta);
    else if (row.group == "init_epochs") s["x"].push_back(row.toggles.init_epochs);
    else s["x"].push_back(row.setting);
    const double n = static_cast<double>(cfg.seeds.size());
    s["mAP"].push_back(map_sum / n);
    s["R1"].push_back(r1_sum / n);
  }
  write_text(out / "ablation.csv", csv);
  ordered_json plot;
  plot["y_metric"] = "mean over seeds";
  plot["seeds"] = cfg.seeds;
  plot["series"] = ordered_json::array();
  for (const auto& g : series_order) plot["series"].push_back(series[g]);
  write_text(out / "plot_data.json", plot.dump(2) + "\n");
  std::cout << "wrote " << (out / "ablation.csv").string() << "\n";
  return kOk;
}

int cmd_report(const Options& opt) {
  const fs::path dir = opt.out;
  if (dir.empty()) throw ConfigError("report needs --out <run dir>");
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() == "eval.json") files.push_back(entry.path());
  if (files.empty()) throw IoError(dir.string() + " holds no evaluation results");
  std::sort(files.begin(), files.end());

  struct Agg {
    std::vector<double> map, r1, r5, r10;
  };
  // section (stage label) -> (group, setting) -> values, in first-seen order
  std::vector<std::string> sections;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> keys;
  std::map<std::string, std::map<std::pair<std::string, std::string>, Agg>> aggs;
  for (const auto& f : files) {
    const json e = read_json(f);
    const std::string label = e.value("label", "unknown");
    const std::string group = e.value("group", "eval");
    const std::string setting = e.value("setting", fs::relative(f.parent_path(), dir).generic_string());
    const json& m = e.at("metrics");
    if (!aggs.count(label)) sections.push_back(label);
    auto key = std::make_pair(group, setting);
    auto& sec = aggs[label];
    if (!sec.count(key)) keys[label].push_back(key);
    Agg& a = sec[key];
    a.map.push_back(m.at("mAP"));
    a.r1.push_back(m.at("cmc").at("R1"));
    a.r5.push_back(m.at("cmc").at("R5"));
    a.r10.push_back(m.at("cmc").at("R10"));
  }
  auto stats = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return std::array<double, 3>{s / static_cast<double>(v.size()), *std::min_element(v.begin(), v.end()),
                                 *std::max_element(v.begin(), v.end())};
  };
  std::ostringstream text;
  std::string csv = "stages,group,setting,seeds,metric,mean,min,max\n";
  ordered_json js = ordered_json::array();
  for (const auto& label : sections) {
    text << "Stages: " << label << "\n";
    char line[256];
    std::snprintf(line, sizeof line, "%-12s %-18s %5s  %-26s %-26s %-8s %-8s\n", "Setting", "Method",
                  "seeds", "mAP mean [min, max]", "R1 mean [min, max]", "R5", "R10");
    text << line << std::string(110, '-') << "\n";
    for (const auto& key : keys[label]) {
      const Agg& a = aggs[label][key];
      const auto m = stats(a.map), r1 = stats(a.r1), r5 = stats(a.r5), r10 = stats(a.r10);
      std::snprintf(line, sizeof line,
                    "%-12s %-18s %5zu  %5.1f [%5.1f, %5.1f]        %5.1f [%5.1f, %5.1f]        %5.1f    %5.1f\n",
                    key.first.c_str(), key.second.c_str(), a.map.size(), 100 * m[0], 100 * m[1],
                    100 * m[2], 100 * r1[0], 100 * r1[1], 100 * r1[2], 100 * r5[0], 100 * r10[0]);
      text << line;
      ordered_json row = {{"stages", label}, {"group", key.first}, {"setting", key.second},
                          {"seeds", a.map.size()}};
      const std::pair<const char*, std::array<double, 3>> metrics[] = {
          {"mAP", m}, {"R1", r1}, {"R5", r5}, {"R10", r10}};
      for (const auto& [name, s] : metrics) {
        csv += label + "," + key.first + ",\"" + key.second + "\"," + std::to_string(a.map.size()) +
               "," + name + "," + fmt(s[0]) + "," + fmt(s[1]) + "," + fmt(s[2]) + "\n";
        row[name] = {{"mean", s[0]}, {"min", s[1]}, {"max", s[2]}};
      }
      js.push_back(row);
    }
    text << "\n";
  }
  write_text(dir / "report.csv", csv);
  write_text(dir / "report.json", js.dump(2) + "\n");
  std::cout << text.str();
  return kOk;
}

}  // namespace

synth::DatasetSplit holdout_split(const synth::DatasetFamily& family, const synth::DataConfig& data) {
  return family.split(data.source_domains, data.held_out_domain, false);
}

double estimate_run_seconds(const pipeline::TrainConfig& cfg, const synth::DatasetSplit& split) {
  pipeline::TrainConfig probe = cfg;
  probe.plan = {1, 1, 1, 1};
  probe.iterations_per_epoch = 1;
  const auto t0 = std::chrono::steady_clock::now();
  pipeline::train(probe, split);
  const double per_iteration =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 4.0;
  const auto& p = cfg.plan;
  const int epochs = p.initial_epochs + p.id_token_epochs + p.domain_token_epochs + p.finetune_epochs;
  const int iters = cfg.iterations_per_epoch > 0
                        ? cfg.iterations_per_epoch
                        : std::max<int>(1, static_cast<int>(split.train_size()) / (cfg.P * cfg.K));
  return per_iteration * iters * epochs;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"fgdi"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Domain-invariant prompt learning experiments on synthetic ReID data"};
  app.require_subcommand(1);
  Options opt;
  auto config_opt = [&](CLI::App* c, bool required) {
    auto* o = c->add_option("--config", opt.config, "experiment JSON");
    if (required) o->required();
    c->add_option("--seed", opt.seed, "replace the configured seed list with one seed");
    c->add_option("--out", opt.out, "output directory");
    c->add_flag("--full-epochs", opt.full_epochs, "use the full 3/120/30/60 schedule");
  };
  auto* synth = app.add_subcommand("synth", "render the dataset family to an archive");
  config_opt(synth, true);
  auto* train = app.add_subcommand("train", "train every configured seed");
  config_opt(train, true);
  train->add_option("--resume", opt.resume, "checkpoint to continue from");
  train->add_option("--data", opt.data, "dataset archive written by synth");
  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on the held-out domain");
  config_opt(evalc, true);
  evalc->add_option("--checkpoint", opt.checkpoint, "checkpoint file")->required();
  evalc->add_option("--data", opt.data, "dataset archive written by synth");
  auto* ablate = app.add_subcommand("ablate", "run the component grid and sweeps");
  config_opt(ablate, true);
  ablate->add_option("--budget-minutes", opt.budget_minutes, "refuse grids estimated above this");
  ablate->add_option("--data", opt.data, "dataset archive written by synth");
  auto* report = app.add_subcommand("report", "aggregate evaluation results of a run directory");
  report->add_option("--out", opt.out, "run directory")->required();
  auto* schema = app.add_subcommand("schema", "print the configuration JSON schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }
  try {
    if (deterministic()) Eigen::setNbThreads(1);
    if (*synth) return cmd_synth(opt);
    if (*train) return cmd_train(opt);
    if (*evalc) return cmd_eval(opt);
    if (*ablate) return cmd_ablate(opt);
    if (*report) return cmd_report(opt);
    if (*schema) {
      std::cout << config::schema();
      return kOk;
    }
  } catch (const NumericError& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return kRuntimeAbort;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  }
  return kConfigError;
}

}  // namespace fgdi::cli
