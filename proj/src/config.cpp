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

#include "fgdi/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace fgdi::config {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<NamedToggles> ablation_grid(const Toggles& full) {
  Toggles baseline = full;
  baseline.three_stage = false;
  baseline.grl = false;
  baseline.apn = false;
  Toggles a = baseline;
  a.three_stage = true;
  Toggles b = full;
  b.three_stage = false;
  Toggles ab_no_c = full;
  ab_no_c.apn = false;
  return {{"baseline", baseline}, {"+A", a}, {"+B", b}, {"+A+B w/o C", ab_no_c}, {"+A+B", full}};
}

pipeline::TrainConfig apply_toggles(pipeline::TrainConfig cfg, const Toggles& t) {
  cfg.plan.initial_epochs = t.three_stage ? t.init_epochs : 0;
  cfg.use_grl = t.grl;
  if (!t.grl) cfg.weights.alpha = 0.0;
  if (!t.grl && !t.apn) cfg.plan.domain_token_epochs = 0;
  cfg.weights.beta = t.apn ? t.beta : 0.0;
  cfg.weights.apn_variant = t.apn_variant;
  return cfg;
}

pipeline::TrainConfig ExperimentConfig::effective_train() const {
  return toggles ? apply_toggles(train, *toggles) : train;
}

void ExperimentConfig::validate() const {
  if (schema_version != kSchemaVersion)
    throw ConfigError("schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                      std::to_string(kSchemaVersion) + ")");
  data.validate();
  effective_train().validate();
  if (protocol != "holdout" && protocol != "P1" && protocol != "P2" && protocol != "P3")
    throw ConfigError("protocol must be one of holdout, P1, P2, P3");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (toggles && toggles->init_epochs < 0) throw ConfigError("ablation.init_epochs must be >= 0");
  for (int e : sweep.init_epochs)
    if (e < 0) throw ConfigError("sweep.init_epochs entries must be >= 0");
  for (double b : sweep.betas)
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("sweep.betas entries must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// Strict reader
// ---------------------------------------------------------------------------

namespace {

/// Walks one JSON object, remembering which keys were consumed so leftovers
/// can be reported.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void opt(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    read(key, out);
  }

  template <class T>
  void req(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError("missing required field '" + child(key) + "'");
    read(key, out);
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader sub(const char* key) {
    seen_.insert(key);
    return Reader(j_.at(key), child(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + child(k) + "'");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  template <class T>
  void read(const char* key, T& out) {
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("field '" + child(key) + "' has the wrong type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_data(Reader r, synth::DataConfig& d) {
  r.opt("seed", d.seed);
  r.opt("num_domains", d.num_domains);
  r.opt("source_domains", d.source_domains);
  r.opt("held_out_domain", d.held_out_domain);
  r.opt("pids_per_domain", d.pids_per_domain);
  r.opt("held_out_pids", d.held_out_pids);
  r.opt("images_per_pid", d.images_per_pid);
  r.opt("held_out_cameras", d.held_out_cameras);
  r.opt("latent_dim", d.latent_dim);
  r.opt("height", d.geometry.height);
  r.opt("width", d.geometry.width);
  r.opt("channels", d.geometry.channels);
  r.finish();
}

void read_variant(Reader& r, const char* key, losses::ApnVariant& v) {
  std::string name = losses::to_string(v);
  r.opt(key, name);
  try {
    v = losses::apn_variant_from_string(name);
  } catch (const Error&) {
    throw ConfigError("field '" + r.child(key) + "' must be one of ED, CS, CONTRASTIVE, APNCE");
  }
}

void read_train(Reader r, pipeline::TrainConfig& t) {
  if (r.has("epochs")) {
    Reader e = r.sub("epochs");
    e.opt("initial", t.plan.initial_epochs);
    e.opt("id_tokens", t.plan.id_token_epochs);
    e.opt("domain_tokens", t.plan.domain_token_epochs);
    e.opt("finetune", t.plan.finetune_epochs);
    e.finish();
  }
  r.opt("P", t.P);
  r.opt("K", t.K);
  if (r.has("lr")) {
    Reader l = r.sub("lr");
    l.opt("initial", t.lr.initial);
    l.opt("prompt", t.lr.prompt);
    l.opt("finetune", t.lr.finetune);
    l.opt("floor_ratio", t.lr.floor_ratio);
    l.finish();
  }
  r.opt("grl_lambda", t.grl_lambda);
  r.opt("use_grl", t.use_grl);
  r.opt("phase_b_reversal", t.phase_b_reversal);
  r.opt("iterations_per_epoch", t.iterations_per_epoch);
  if (r.has("loss")) {
    Reader l = r.sub("loss");
    l.opt("alpha", t.weights.alpha);
    l.opt("beta", t.weights.beta);
    l.opt("margin", t.weights.margin);
    l.opt("smoothing_eps", t.weights.smoothing_eps);
    l.opt("i2tce_smoothing", t.weights.i2tce_smoothing);
    read_variant(l, "apn_variant", t.weights.apn_variant);
    l.finish();
  }
  if (r.has("model")) {
    Reader m = r.sub("model");
    m.opt("patch", t.model.patch);
    m.opt("patch_embed", t.model.patch_embed);
    m.opt("hidden1", t.model.hidden1);
    m.opt("hidden2", t.model.hidden2);
    m.opt("embed_dim", t.model.embed_dim);
    m.opt("token_dim", t.model.token_dim);
    m.opt("text_blocks", t.model.text_blocks);
    m.opt("mlp_ratio", t.model.mlp_ratio);
    m.opt("id_tokens_per_pid", t.model.id_tokens_per_pid);
    m.opt("domain_tokens", t.model.domain_tokens);
    m.opt("inv_temperature", t.model.inv_temperature);
    m.finish();
  }
  r.finish();
}

void read_toggles(Reader r, Toggles& t) {
  r.opt("three_stage", t.three_stage);
  r.opt("grl", t.grl);
  r.opt("apn", t.apn);
  read_variant(r, "apn_variant", t.apn_variant);
  r.opt("beta", t.beta);
  r.opt("init_epochs", t.init_epochs);
  r.finish();
}

ordered_json toggles_json(const Toggles& t) {
  return {{"three_stage", t.three_stage},
          {"grl", t.grl},
          {"apn", t.apn},
          {"apn_variant", losses::to_string(t.apn_variant)},
          {"beta", t.beta},
          {"init_epochs", t.init_epochs}};
}

ordered_json canonical(const ExperimentConfig& c) {
  const auto& d = c.data;
  const auto& t = c.train;
  ordered_json j;
  j["schema_version"] = c.schema_version;
  j["data"] = {{"seed", d.seed},
               {"num_domains", d.num_domains},
               {"source_domains", d.source_domains},
               {"held_out_domain", d.held_out_domain},
               {"pids_per_domain", d.pids_per_domain},
               {"held_out_pids", d.held_out_pids},
               {"images_per_pid", d.images_per_pid},
               {"held_out_cameras", d.held_out_cameras},
               {"latent_dim", d.latent_dim},
               {"height", d.geometry.height},
               {"width", d.geometry.width},
               {"channels", d.geometry.channels}};
  ordered_json train;
  train["epochs"] = {{"initial", t.plan.initial_epochs},
                     {"id_tokens", t.plan.id_token_epochs},
                     {"domain_tokens", t.plan.domain_token_epochs},
                     {"finetune", t.plan.finetune_epochs}};
  train["P"] = t.P;
  train["K"] = t.K;
  train["lr"] = {{"initial", t.lr.initial},
                 {"prompt", t.lr.prompt},
                 {"finetune", t.lr.finetune},
                 {"floor_ratio", t.lr.floor_ratio}};
  train["grl_lambda"] = t.grl_lambda;
  train["use_grl"] = t.use_grl;
  train["phase_b_reversal"] = t.phase_b_reversal;
  train["iterations_per_epoch"] = t.iterations_per_epoch;
  train["loss"] = {{"alpha", t.weights.alpha},
                   {"beta", t.weights.beta},
                   {"margin", t.weights.margin},
                   {"smoothing_eps", t.weights.smoothing_eps},
                   {"i2tce_smoothing", t.weights.i2tce_smoothing},
                   {"apn_variant", losses::to_string(t.weights.apn_variant)}};
  train["model"] = {{"patch", t.model.patch},
                    {"patch_embed", t.model.patch_embed},
                    {"hidden1", t.model.hidden1},
                    {"hidden2", t.model.hidden2},
                    {"embed_dim", t.model.embed_dim},
                    {"token_dim", t.model.token_dim},
                    {"text_blocks", t.model.text_blocks},
                    {"mlp_ratio", t.model.mlp_ratio},
                    {"id_tokens_per_pid", t.model.id_tokens_per_pid},
                    {"domain_tokens", t.model.domain_tokens},
                    {"inv_temperature", t.model.inv_temperature}};
  j["train"] = train;
  j["protocol"] = c.protocol;
  j["p1_sources"] = c.p1_sources;
  j["output_dir"] = c.output_dir;
  j["seeds"] = c.seeds;
  if (c.toggles) j["ablation"] = toggles_json(*c.toggles);
  j["sweep"] = {{"toggle_grid", c.sweep.toggle_grid},
                {"betas", c.sweep.betas},
                {"init_epochs", c.sweep.init_epochs}};
  return j;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader r(j, "");
  r.req("schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("schema_version " + std::to_string(c.schema_version) + " is not supported");
  if (!r.has("data")) throw ConfigError("missing required field 'data'");
  read_data(r.sub("data"), c.data);
  if (!r.has("train")) throw ConfigError("missing required field 'train'");
  read_train(r.sub("train"), c.train);
  r.opt("protocol", c.protocol);
  r.opt("p1_sources", c.p1_sources);
  r.opt("output_dir", c.output_dir);
  r.opt("seeds", c.seeds);
  if (r.has("ablation")) {
    Toggles t;
    read_toggles(r.sub("ablation"), t);
    c.toggles = t;
  }
  if (r.has("sweep")) {
    Reader s = r.sub("sweep");
    s.opt("toggle_grid", c.sweep.toggle_grid);
    s.opt("betas", c.sweep.betas);
    s.opt("init_epochs", c.sweep.init_epochs);
    s.finish();
  }
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const ExperimentConfig& cfg) { return canonical(cfg).dump(2); }

std::string to_json(const Toggles& t) { return toggles_json(t).dump(); }

std::string config_hash(const ExperimentConfig& cfg) {
  ordered_json j = canonical(cfg);
  j.erase("output_dir");  // where results go does not change them
  return fnv1a_hex(j.dump());
}

const std::string& schema() {
  static const std::string text = R"({
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "fgdi experiment",
  "type": "object",
  "additionalProperties": false,
  "required": ["schema_version", "data", "train"],
  "properties": {
    "schema_version": {"const": 1},
    "data": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "num_domains": {"type": "integer", "minimum": 2},
        "source_domains": {"type": "array", "items": {"type": "integer"}, "minItems": 2},
        "held_out_domain": {"type": "integer"},
        "pids_per_domain": {"type": "integer", "minimum": 1},
        "held_out_pids": {"type": "integer", "minimum": 1},
        "images_per_pid": {"type": "integer", "minimum": 4},
        "held_out_cameras": {"type": "integer", "minimum": 2},
        "latent_dim": {"type": "integer", "minimum": 1},
        "height": {"type": "integer"},
        "width": {"type": "integer"},
        "channels": {"type": "integer"}
      }
    },
    "train": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "epochs": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "initial": {"type": "integer", "minimum": 0},
            "id_tokens": {"type": "integer", "minimum": 0},
            "domain_tokens": {"type": "integer", "minimum": 0},
            "finetune": {"type": "integer", "minimum": 0}
          }
        },
        "P": {"type": "integer", "minimum": 2},
        "K": {"type": "integer", "minimum": 2},
        "lr": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "initial": {"type": "number", "exclusiveMinimum": 0},
            "prompt": {"type": "number", "exclusiveMinimum": 0},
            "finetune": {"type": "number", "exclusiveMinimum": 0},
            "floor_ratio": {"type": "number", "minimum": 0}
          }
        },
        "grl_lambda": {"type": "number", "minimum": 0},
        "use_grl": {"type": "boolean"},
        "phase_b_reversal": {"type": "boolean"},
        "iterations_per_epoch": {"type": "integer", "minimum": 0},
        "loss": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "alpha": {"type": "number", "minimum": 0},
            "beta": {"type": "number", "minimum": 0, "maximum": 1},
            "margin": {"type": "number", "minimum": 0},
            "smoothing_eps": {"type": "number", "minimum": 0, "maximum": 1},
            "i2tce_smoothing": {"type": "number", "minimum": 0, "maximum": 1},
            "apn_variant": {"enum": ["ED", "CS", "CONTRASTIVE", "APNCE"]}
          }
        },
        "model": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "patch": {"type": "integer", "minimum": 1},
            "patch_embed": {"type": "integer", "minimum": 1},
            "hidden1": {"type": "integer", "minimum": 1},
            "hidden2": {"type": "integer", "minimum": 1},
            "embed_dim": {"type": "integer", "minimum": 1},
            "token_dim": {"type": "integer", "minimum": 1},
            "text_blocks": {"type": "integer", "minimum": 1},
            "mlp_ratio": {"type": "integer", "minimum": 1},
            "id_tokens_per_pid": {"type": "integer", "minimum": 1},
            "domain_tokens": {"type": "integer", "minimum": 1},
            "inv_temperature": {"type": "number", "exclusiveMinimum": 0}
          }
        }
      }
    },
    "protocol": {"enum": ["holdout", "P1", "P2", "P3"]},
    "p1_sources": {"type": "array", "items": {"type": "integer"}},
    "output_dir": {"type": "string", "minLength": 1},
    "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
    "ablation": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "three_stage": {"type": "boolean"},
        "grl": {"type": "boolean"},
        "apn": {"type": "boolean"},
        "apn_variant": {"enum": ["ED", "CS", "CONTRASTIVE", "APNCE"]},
        "beta": {"type": "number", "minimum": 0, "maximum": 1},
        "init_epochs": {"type": "integer", "minimum": 0}
      }
    },
    "sweep": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "toggle_grid": {"type": "boolean"},
        "betas": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "init_epochs": {"type": "array", "items": {"type": "integer", "minimum": 0}}
      }
    }
  }
}
)";
  return text;
}

}  // namespace fgdi::config
