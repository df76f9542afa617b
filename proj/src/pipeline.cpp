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

#include "fgdi/pipeline.hpp"

#include "fgdi/optim.hpp"

#include "binary_io.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace fgdi::pipeline {

using losses::BatchLabels;

void StagePlan::validate() const {
  if (initial_epochs < 0 || id_token_epochs < 0 || domain_token_epochs < 0 || finetune_epochs < 0)
    throw ConfigError("stage epochs must be >= 0");
}

void TrainConfig::validate() const {
  plan.validate();
  weights.validate();
  if (P < 2) throw ConfigError("train.P must be >= 2");
  if (K < 2) throw ConfigError("train.K must be >= 2");
  if (!(grl_lambda >= 0.0)) throw ConfigError("train.grl_lambda must be >= 0");
  if (!(lr.initial > 0 && lr.prompt > 0 && lr.finetune > 0))
    throw ConfigError("learning rates must be > 0");
  if (iterations_per_epoch < 0) throw ConfigError("iterations_per_epoch must be >= 0");
}

std::string TrainConfig::hash() const {
  std::ostringstream s;
  s.precision(17);
  s << plan.initial_epochs << ' ' << plan.id_token_epochs << ' ' << plan.domain_token_epochs << ' '
    << plan.finetune_epochs << '|' << weights.alpha << ' ' << weights.beta << ' ' << weights.margin
    << ' ' << weights.smoothing_eps << ' ' << weights.i2tce_smoothing << ' '
    << losses::to_string(weights.apn_variant) << '|' << P << ' ' << K << '|' << lr.initial << ' '
    << lr.prompt << ' ' << lr.finetune << ' ' << lr.floor_ratio << '|' << seed << '|' << grl_lambda
    << ' ' << use_grl << ' ' << phase_b_reversal << ' ' << iterations_per_epoch << '|'
    << model.patch << ' ' << model.patch_embed << ' ' << model.hidden1 << ' ' << model.hidden2
    << ' ' << model.embed_dim << ' ' << model.token_dim << ' ' << model.text_blocks << ' '
    << model.mlp_ratio << ' ' << model.id_tokens_per_pid << ' ' << model.domain_tokens << ' '
    << model.inv_temperature;
  return fnv1a_hex(s.str());
}

// ---------------------------------------------------------------------------

std::string MetricLog::to_jsonl() const {
  std::string out;
  for (const EpochRecord& r : records_) {
    nlohmann::ordered_json j;
    j["stage"] = r.stage;
    j["phase"] = r.phase;
    j["epoch"] = r.epoch;
    j["loss_total"] = r.loss_total;
    nlohmann::ordered_json comps = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.components) comps[k] = v;
    j["loss_components"] = comps;
    j["lr"] = r.lr;
    j["seed"] = r.seed;
    j["wall_ms"] = record_wall_time ? r.wall_ms : 0.0;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void MetricLog::write(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << to_jsonl();
}

// ---------------------------------------------------------------------------

TrainingData TrainingData::from(const synth::DatasetSplit& split) {
  TrainingData d;
  d.geometry = split.geometry;
  const auto flat = split.flat_train();
  if (flat.empty()) throw ConfigError("training split has no samples");
  d.images.resize(static_cast<Index>(flat.size()), split.geometry.size());
  std::map<int, int> label_of;
  std::vector<int> pool_of_sample;
  for (std::size_t pool = 0; pool < split.train.size(); ++pool)
    for (std::size_t i = 0; i < split.train[pool].size(); ++i)
      pool_of_sample.push_back(static_cast<int>(pool));
  for (std::size_t i = 0; i < flat.size(); ++i) {
    require_shape(flat[i]->pixels.size() == split.geometry.size(), "training sample size mismatch");
    d.images.row(static_cast<Index>(i)) = flat[i]->pixels;
    auto [it, inserted] = label_of.emplace(flat[i]->pid, static_cast<int>(label_of.size()));
    if (inserted) {
      d.label_pids.push_back(flat[i]->pid);
      d.label_domain.push_back(pool_of_sample[i]);
    }
    d.labels.push_back(it->second);
  }
  d.domain_ids = split.train_domains;
  return d;
}

Model init_model_for(const TrainConfig& cfg, const TrainingData& data) {
  enc::ModelDims dims = cfg.model;
  dims.geometry = data.geometry;
  dims.num_pids = data.num_pids();
  dims.num_domains = data.num_domains();
  Model m = init_model(dims, cfg.seed);
  m.label_pids = data.label_pids;
  m.label_domain = data.label_domain;
  m.domain_ids = data.domain_ids;
  m.config_hash = cfg.hash();
  return m;
}

namespace {

int iterations_per_epoch(const TrainConfig& cfg, const TrainingData& data) {
  if (cfg.iterations_per_epoch > 0) return cfg.iterations_per_epoch;
  return std::max<int>(1, static_cast<int>(data.size()) / (cfg.P * cfg.K));
}

Matrix take_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

void apply_updates(optim::Adam& adam, Model& model, const ad::Tape& tape, const enc::Binder& binder,
                   double lr) {
  auto index = model.parameter_index();
  for (const auto& e : binder.entries()) {
    if (!e.trainable) continue;
    adam.step(e.name, *index.at(e.name), tape.grad(e.var), lr);
  }
}

void check_finite(double v, const std::string& stage, const std::string& phase, int epoch,
                  const std::string& component) {
  if (!std::isfinite(v))
    throw NumericError("non-finite loss in stage '" + stage + "' phase '" + phase + "' epoch " +
                       std::to_string(epoch) + " component '" + component + "'");
}

/// Accumulates per-iteration loss components into one epoch record.
class EpochMeter {
 public:
  void add(const std::vector<std::pair<std::string, double>>& comps, double total) {
    if (sums_.empty()) sums_.assign(comps.begin(), comps.end());
    else
      for (std::size_t i = 0; i < comps.size(); ++i) sums_[i].second += comps[i].second;
    total_ += total;
    ++count_;
  }
  EpochRecord finish(std::string stage, std::string phase, int epoch, double lr,
                     std::uint64_t seed, double wall_ms) const {
    EpochRecord r{std::move(stage), std::move(phase), epoch, total_ / count_, sums_, lr, seed, wall_ms};
    for (auto& c : r.components) c.second /= count_;
    return r;
  }

 private:
  std::vector<std::pair<std::string, double>> sums_;
  double total_ = 0.0;
  int count_ = 0;
};

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::vector<int> batch_labels(const TrainingData& data, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(data.labels[static_cast<std::size_t>(i)]);
  return out;
}

/// Image-tower stages share the sampling loop; `objective` builds the loss
/// from (logits, features, labels) and returns its node plus logged terms.
template <class Objective>
void image_stage(const TrainConfig& cfg, Model& model, const TrainingData& data, MetricLog& log,
                 const std::string& stage, int epochs, double base_lr, std::uint64_t stream,
                 Objective&& objective) {
  if (epochs <= 0) return;
  const synth::PkSampler sampler(data.labels, cfg.P, cfg.K);
  std::mt19937_64 rng(synth::mix_seed(cfg.seed, stream));
  optim::Adam adam;
  const int iters = iterations_per_epoch(cfg, data);
  const long long total_steps = static_cast<long long>(iters) * epochs;
  long long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochMeter meter;
    double lr = base_lr;
    for (int it = 0; it < iters; ++it, ++step) {
      const std::vector<int> idx = sampler.sample(rng);
      const BatchLabels labels = BatchLabels::from(batch_labels(data, idx));
      ad::Tape tape;
      enc::Binder binder(tape);
      const enc::ImageGraph ig = enc::bind_image(binder, model.image, true);
      const enc::LinearGraph head = enc::bind_linear(binder, model.id_head, true, "id_head.");
      const ad::Var v = enc::image_forward(ig, tape.constant(take_rows(data.images, idx)), model.dims);
      const ad::Var logits = enc::linear_forward(head, v);
      auto [loss, comps] = objective(logits, v, labels);
      for (const auto& [name, value] : comps) check_finite(value, stage, "-", epoch, name);
      check_finite(loss.scalar(), stage, "-", epoch, "total");
      meter.add(comps, loss.scalar());
      tape.backward(loss);
      lr = optim::cosine_lr(base_lr, step, total_steps, cfg.lr.floor_ratio);
      apply_updates(adam, model, tape, binder, lr);
    }
    log.add(meter.finish(stage, "-", epoch, lr, cfg.seed, elapsed_ms(t0)));
  }
}

void prompt_phase(const TrainConfig& cfg, Model& model, const TrainingData& data, MetricLog& log,
                  const Matrix& features, PromptPhase which) {
  const bool domain_phase = which == PromptPhase::DomainTokens;
  const int epochs = domain_phase ? cfg.plan.domain_token_epochs : cfg.plan.id_token_epochs;
  if (epochs <= 0) return;
  const std::string phase = domain_phase ? "domain_tokens" : "id_tokens";
  const synth::PkSampler sampler(data.labels, cfg.P, cfg.K);
  std::mt19937_64 rng(synth::mix_seed(cfg.seed, domain_phase ? 0x20b : 0x20a));
  optim::Adam adam;
  const int iters = iterations_per_epoch(cfg, data);
  const long long total_steps = static_cast<long long>(iters) * epochs;
  long long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochMeter meter;
    double lr = cfg.lr.prompt;
    for (int it = 0; it < iters; ++it, ++step) {
      const std::vector<int> idx = sampler.sample(rng);
      const BatchStep r =
          prompt_batch_step(cfg, model, take_rows(features, idx), batch_labels(data, idx), which);
      for (const auto& [name, value] : r.components) check_finite(value, "prompt", phase, epoch, name);
      check_finite(r.loss, "prompt", phase, epoch, "total");
      meter.add(r.components, r.loss);
      lr = optim::cosine_lr(cfg.lr.prompt, step, total_steps, cfg.lr.floor_ratio);
      auto index = model.parameter_index();
      for (const auto& [name, grad] : r.grads) adam.step(name, *index.at(name), grad, lr);
    }
    log.add(meter.finish("prompt", phase, epoch, lr, cfg.seed, elapsed_ms(t0)));
  }
}

std::vector<enc::Prompt> all_prompts(const Model& model, bool with_domain) {
  std::vector<enc::Prompt> out;
  for (int label = 0; label < model.prompts.num_pids(); ++label) {
    const int dom = model.label_domain.at(static_cast<std::size_t>(label));
    out.push_back(enc::build_prompt(model.prompts, label,
                                    with_domain ? std::optional<int>(dom) : std::nullopt));
  }
  return out;
}

}  // namespace

BatchStep prompt_batch_step(const TrainConfig& cfg, const Model& model, const Matrix& features,
                            const std::vector<int>& labels_in, PromptPhase which) {
  require_shape(features.rows() == static_cast<Index>(labels_in.size()),
                "prompt_batch_step: feature/label count mismatch");
  const bool domain_phase = which == PromptPhase::DomainTokens;
  const bool reverse = domain_phase ? cfg.phase_b_reversal : cfg.use_grl;
  const double scale = model.dims.inv_temperature;
  const BatchLabels labels = BatchLabels::from(labels_in);
  std::vector<enc::Prompt> prompts;
  std::vector<int> domain_classes;
  for (int label : labels.unique_pids) {
    const int dom = model.label_domain.at(static_cast<std::size_t>(label));
    prompts.push_back(enc::build_prompt(model.prompts, label,
                                        domain_phase ? std::optional<int>(dom) : std::nullopt));
    domain_classes.push_back(dom);
  }
  ad::Tape tape;
  enc::Binder binder(tape);
  const enc::TextGraph tg =
      enc::bind_text(binder, model.text, model.prompts, false, !domain_phase, domain_phase);
  const enc::LinearGraph dh = enc::bind_linear(binder, model.domain_head, true, "domain_head.");
  const ad::Var v = tape.constant(features);
  const ad::Var t_ids = enc::text_forward(tg, prompts);
  const ad::Var t_batch = ad::gather_rows(t_ids, labels.unique_row);

  const auto i2t = losses::loss_i2t(v.value(), t_batch.value(), scale);
  const ad::Var i2t_in[] = {v, t_batch};
  const ad::Var l_i2t = ad::scalar_node(i2t_in, i2t.value, i2t.grads);

  const auto t2i = losses::loss_t2i(v.value(), t_ids.value(), labels, scale);
  const ad::Var t2i_in[] = {v, t_ids};
  const ad::Var l_t2i = ad::scalar_node(t2i_in, t2i.value, t2i.grads);

  const ad::Var routed = reverse ? ad::gradient_reversal(t_ids, cfg.grl_lambda) : t_ids;
  const ad::Var logits = enc::linear_forward(dh, routed);
  const auto dom = losses::loss_domain(logits.value(), domain_classes);
  const ad::Var dom_in[] = {logits};
  const ad::Var l_dom = ad::scalar_node(dom_in, dom.value, dom.grads);

  const ad::Var loss = ad::add(ad::add(l_i2t, l_t2i), ad::scale(l_dom, cfg.weights.alpha));
  BatchStep out;
  out.loss = loss.scalar();
  out.components = {{"i2t", i2t.value}, {"t2i", t2i.value}, {"domain", dom.value}};
  if (!std::isfinite(out.loss)) return out;
  tape.backward(loss);
  for (const auto& e : binder.entries())
    if (e.trainable) out.grads.emplace_back(e.name, tape.grad(e.var));
  return out;
}

void run_stage_initial(const TrainConfig& cfg, Model& model, const TrainingData& data,
                       MetricLog& log) {
  const losses::LossWeights& w = cfg.weights;
  image_stage(cfg, model, data, log, "initial", cfg.plan.initial_epochs, cfg.lr.initial, 0x101,
              [&](ad::Var logits, ad::Var v, const BatchLabels& labels) {
                const auto id = losses::loss_id(logits.value(), labels.pids, w.smoothing_eps);
                const auto tri = losses::loss_triplet(v.value(), labels.pids, w.margin);
                const ad::Var in_id[] = {logits};
                const ad::Var in_tri[] = {v};
                const ad::Var loss = ad::add(ad::scalar_node(in_id, id.value, id.grads),
                                             ad::scalar_node(in_tri, tri.value, tri.grads));
                return std::pair{loss, std::vector<std::pair<std::string, double>>{
                                           {"id", id.value}, {"tri", tri.value}}};
              });
  if (cfg.plan.initial_epochs > 0) model.stages.push_back("initial");
}

void run_stage_prompt(const TrainConfig& cfg, Model& model, const TrainingData& data,
                      MetricLog& log) {
  // Image features are fixed for the whole stage.
  const Matrix features = enc::encode_images(model.image, data.images, model.dims);
  prompt_phase(cfg, model, data, log, features, PromptPhase::IdTokens);
  prompt_phase(cfg, model, data, log, features, PromptPhase::DomainTokens);
  model.stages.push_back("prompt");
}

void run_stage_finetune(const TrainConfig& cfg, Model& model, const TrainingData& data,
                        MetricLog& log) {
  const losses::LossWeights& w = cfg.weights;
  const double scale = model.dims.inv_temperature;
  const auto pos_prompts = all_prompts(model, false);
  const auto neg_prompts = all_prompts(model, true);
  const Matrix t_pos = enc::encode_prompts(model.text, model.prompts, pos_prompts);
  const Matrix t_neg = enc::encode_prompts(model.text, model.prompts, neg_prompts);
  image_stage(cfg, model, data, log, "finetune", cfg.plan.finetune_epochs, cfg.lr.finetune, 0x303,
              [&](ad::Var logits, ad::Var v, const BatchLabels& labels) {
                losses::Stage3Inputs<double> in;
                in.id_logits = logits.value();
                in.V = v.value();
                in.T_all = t_pos;
                in.pos_star = take_rows(t_pos, labels.unique_pids);
                in.neg_star = take_rows(t_neg, labels.unique_pids);
                losses::Stage3Terms<double> terms;
                const auto r = losses::loss_stage3(in, labels, w, scale, &terms);
                const ad::Var inputs[] = {logits, v};
                const ad::Var loss = ad::scalar_node(inputs, r.value, {r.grads[0], r.grads[1]});
                return std::pair{loss, std::vector<std::pair<std::string, double>>{
                                           {"id", terms.id},
                                           {"tri", terms.tri},
                                           {"i2tce", terms.i2tce},
                                           {"apn", terms.apn}}};
              });
  if (cfg.plan.finetune_epochs > 0) model.stages.push_back("finetune");
}

TrainResult train(const TrainConfig& cfg, const synth::DatasetSplit& split,
                  std::optional<Model> resume, const StageCallback& on_stage) {
  cfg.validate();
  const TrainingData data = TrainingData::from(split);
  TrainResult result;
  if (resume) {
    result.model = std::move(*resume);
    if (result.model.label_pids != data.label_pids)
      throw ConfigError("resume: checkpoint identities do not match the training data");
  } else {
    result.model = init_model_for(cfg, data);
  }
  Model& m = result.model;
  const bool past_initial = m.has_stage("initial") || m.has_stage("prompt") || m.has_stage("finetune");
  auto done = [&](const std::string& stage) {
    if (on_stage && m.has_stage(stage)) on_stage(m, stage);
  };
  if (!past_initial) {
    run_stage_initial(cfg, m, data, result.log);
    done("initial");
  }
  if (!m.has_stage("prompt") && !m.has_stage("finetune")) {
    run_stage_prompt(cfg, m, data, result.log);
    done("prompt");
  }
  if (!m.has_stage("finetune")) {
    run_stage_finetune(cfg, m, data, result.log);
    done("finetune");
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[9] = "FGDICKPT";

nlohmann::ordered_json dims_json(const enc::ModelDims& d) {
  return {{"height", d.geometry.height},
          {"width", d.geometry.width},
          {"channels", d.geometry.channels},
          {"patch", d.patch},
          {"patch_embed", d.patch_embed},
          {"hidden1", d.hidden1},
          {"hidden2", d.hidden2},
          {"embed_dim", d.embed_dim},
          {"token_dim", d.token_dim},
          {"text_blocks", d.text_blocks},
          {"mlp_ratio", d.mlp_ratio},
          {"M", d.id_tokens_per_pid},
          {"N", d.domain_tokens},
          {"num_pids", d.num_pids},
          {"num_domains", d.num_domains},
          {"inv_temperature", d.inv_temperature}};
}

enc::ModelDims dims_from_json(const nlohmann::json& j) {
  enc::ModelDims d;
  d.geometry.height = j.at("height");
  d.geometry.width = j.at("width");
  d.geometry.channels = j.at("channels");
  d.patch = j.at("patch");
  d.patch_embed = j.at("patch_embed");
  d.hidden1 = j.at("hidden1");
  d.hidden2 = j.at("hidden2");
  d.embed_dim = j.at("embed_dim");
  d.token_dim = j.at("token_dim");
  d.text_blocks = j.at("text_blocks");
  d.mlp_ratio = j.at("mlp_ratio");
  d.id_tokens_per_pid = j.at("M");
  d.domain_tokens = j.at("N");
  d.num_pids = j.at("num_pids");
  d.num_domains = j.at("num_domains");
  d.inv_temperature = j.at("inv_temperature");
  return d;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& file) {
  Model& m = const_cast<Model&>(model);
  nlohmann::ordered_json manifest;
  manifest["format"] = "fgdi-checkpoint";
  manifest["version"] = 1;
  manifest["dims"] = dims_json(m.dims);
  manifest["stages"] = m.stages;
  manifest["config_hash"] = m.config_hash;
  manifest["label_pids"] = m.label_pids;
  manifest["label_domain"] = m.label_domain;
  manifest["domain_ids"] = m.domain_ids;
  manifest["text_frozen"] = m.text.frozen;
  nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  m.visit_parameters([&](const std::string& name, Matrix& a) {
    arrays.push_back({{"name", name}, {"rows", a.rows()}, {"cols", a.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(a.size()) * 8;
  });
  manifest["arrays"] = arrays;
  const std::string text = manifest.dump();
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + file.string());
  io::write_header(out, kMagic, text);
  m.visit_parameters([&](const std::string&, Matrix& a) {
    for (Index k = 0; k < a.size(); ++k) io::write_f64(out, a.data()[k]);
  });
  if (!out) throw IoError("failed writing checkpoint " + file.string());
}

Model load_checkpoint(const std::filesystem::path& file,
                      const std::optional<enc::ModelDims>& expected) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + file.string());
  const nlohmann::json manifest = nlohmann::json::parse(io::read_header(in, kMagic, file.string()));
  if (manifest.at("version") != 1) throw IoError("unsupported checkpoint version");

  const enc::ModelDims dims = dims_from_json(manifest.at("dims"));
  if (expected) {
    auto mismatch = [](const std::string& what, auto a, auto b) {
      if (a != b)
        throw ConfigError("checkpoint " + what + " = " + std::to_string(a) +
                          " does not match configured " + std::to_string(b));
    };
    mismatch("num_pids", dims.num_pids, expected->num_pids);
    mismatch("num_domains", dims.num_domains, expected->num_domains);
    mismatch("M", dims.id_tokens_per_pid, expected->id_tokens_per_pid);
    mismatch("N", dims.domain_tokens, expected->domain_tokens);
    mismatch("embed_dim", dims.embed_dim, expected->embed_dim);
    mismatch("token_dim", dims.token_dim, expected->token_dim);
    if (!(dims == *expected)) throw ConfigError("checkpoint architecture does not match configuration");
  }
  Model m = init_model(dims, 0);
  m.stages = manifest.at("stages").get<std::vector<std::string>>();
  m.config_hash = manifest.at("config_hash");
  m.label_pids = manifest.at("label_pids").get<std::vector<int>>();
  m.label_domain = manifest.at("label_domain").get<std::vector<int>>();
  m.domain_ids = manifest.at("domain_ids").get<std::vector<int>>();
  m.text.frozen = manifest.at("text_frozen");
  const auto& arrays = manifest.at("arrays");
  std::size_t i = 0;
  m.visit_parameters([&](const std::string& name, Matrix& a) {
    if (i >= arrays.size() || arrays[i].at("name") != name)
      throw IoError("checkpoint array layout mismatch at " + name);
    const Index rows = arrays[i].at("rows");
    const Index cols = arrays[i].at("cols");
    if (rows != a.rows() || cols != a.cols())
      throw IoError("checkpoint array " + name + " has unexpected shape");
    for (Index k = 0; k < a.size(); ++k) a.data()[k] = io::read_f64(in);
    ++i;
  });
  if (i != arrays.size()) throw IoError("checkpoint has extra arrays");
  return m;
}

}  // namespace fgdi::pipeline
