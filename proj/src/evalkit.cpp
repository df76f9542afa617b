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

#include "fgdi/evalkit.hpp"

#include "binary_io.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace fgdi::eval {

std::vector<SampleMeta> metadata(std::span<const synth::ImageSample> samples) {
  std::vector<SampleMeta> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.pid, s.camera_id, s.domain_id});
  return out;
}

double average_precision(std::span<const char> ranked_relevance) {
  int hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (!ranked_relevance[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) throw ConfigError("average_precision: no relevant entry");
  return sum / hits;
}

double compute_map(const std::vector<std::vector<char>>& ranked_relevance) {
  if (ranked_relevance.empty()) throw ConfigError("compute_map: no valid queries");
  double total = 0.0;
  for (const auto& r : ranked_relevance) total += average_precision(r);
  return total / static_cast<double>(ranked_relevance.size());
}

std::vector<double> compute_cmc(const std::vector<std::vector<char>>& ranked_relevance,
                                const std::vector<int>& ks) {
  if (ranked_relevance.empty()) throw ConfigError("compute_cmc: no valid queries");
  std::vector<double> out(ks.size(), 0.0);
  for (const auto& r : ranked_relevance) {
    const auto first = std::find(r.begin(), r.end(), char{1});
    if (first == r.end()) throw ConfigError("compute_cmc: query without relevant entry");
    const auto rank = static_cast<int>(first - r.begin()) + 1;
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (rank <= ks[i]) out[i] += 1.0;
  }
  for (double& v : out) v /= static_cast<double>(ranked_relevance.size());
  return out;
}

Metrics summarize(const RankingResult& r) {
  Metrics m;
  m.mAP = compute_map(r);
  m.cmc = compute_cmc(r, m.ks);
  m.num_queries = static_cast<int>(r.size());
  m.dropped_queries = r.dropped_queries;
  double chance = 0.0;
  for (const auto& rel : r.relevance)
    chance += static_cast<double>(std::count(rel.begin(), rel.end(), char{1})) /
              static_cast<double>(rel.size());
  m.random_rank1 = chance / static_cast<double>(r.size());
  return m;
}

Matrix extract_features(const Model& model, std::span<const synth::ImageSample> samples) {
  const Index n = static_cast<Index>(samples.size());
  const Index pixels = model.dims.geometry.size();
  Matrix batch(n, pixels);
  for (Index i = 0; i < n; ++i) {
    const auto& px = samples[static_cast<std::size_t>(i)].pixels;
    require_shape(px.size() == pixels, "extract_features: sample size does not match the model");
    batch.row(i) = px;
  }
  return enc::encode_images(model.image, batch, model.dims);
}

Metrics evaluate(const Model& model, const synth::DatasetSplit& split) {
  const Matrix q = extract_features(model, split.query);
  const Matrix g = extract_features(model, split.gallery);
  const auto qm = metadata(split.query);
  const auto gm = metadata(split.gallery);
  return summarize(rank(q, g, std::span<const SampleMeta>(qm), std::span<const SampleMeta>(gm)));
}

// ---------------------------------------------------------------------------

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::P1: return "P1";
    case Protocol::P2: return "P2";
    case Protocol::P3: return "P3";
  }
  return "?";
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "P1" || s == "P1-like") return Protocol::P1;
  if (s == "P2" || s == "P2-like") return Protocol::P2;
  if (s == "P3" || s == "P3-like") return Protocol::P3;
  throw ConfigError("unknown protocol '" + s + "' (expected P1, P2 or P3)");
}

std::vector<synth::DatasetSplit> protocol_splits(const synth::DatasetFamily& family, Protocol mode,
                                                 const std::vector<int>& p1_sources) {
  const int n = static_cast<int>(family.domains.size());
  if (n < 2) throw ConfigError("protocol needs at least 2 domains, family has " + std::to_string(n));
  std::vector<synth::DatasetSplit> out;
  if (mode == Protocol::P1) {
    std::vector<int> sources = p1_sources;
    if (sources.empty())
      for (int d = 0; d + 1 < n; ++d) sources.push_back(d);
    for (int d : sources)
      if (d < 0 || d >= n) throw ConfigError("P1 source domain out of range");
    for (int t = 0; t < n; ++t)
      if (std::find(sources.begin(), sources.end(), t) == sources.end())
        out.push_back(family.split(sources, t, true));
    if (out.empty()) throw ConfigError("P1 needs at least one domain outside the sources");
    return out;
  }
  for (int t = 0; t < n; ++t) {
    std::vector<int> sources;
    for (int d = 0; d < n; ++d)
      if (d != t) sources.push_back(d);
    out.push_back(family.split(sources, t, mode == Protocol::P3));
  }
  return out;
}

EvalReport run_protocol(const synth::DatasetFamily& family, Protocol mode, const Trainer& trainer,
                        const std::vector<std::uint64_t>& seeds,
                        const std::vector<int>& p1_sources) {
  if (seeds.empty()) throw ConfigError("run_protocol: empty seed list");
  const auto splits = protocol_splits(family, mode, p1_sources);
  EvalReport report;
  report.mode = mode;
  report.seeds = seeds;
  report.cmc.assign(report.ks.size(), 0.0);
  for (std::uint64_t seed : seeds) {
    for (const auto& split : splits) {
      const Model model = trainer(split, seed);
      TargetResult t;
      t.seed = seed;
      t.target_domain = split.held_out_domain;
      t.source_domains = split.train_domains;
      t.train_size = split.train_size();
      t.metrics = evaluate(model, split);
      report.mAP += t.metrics.mAP;
      for (std::size_t i = 0; i < report.cmc.size(); ++i) report.cmc[i] += t.metrics.cmc[i];
      report.targets.push_back(std::move(t));
    }
  }
  const double count = static_cast<double>(report.targets.size());
  report.mAP /= count;
  for (double& v : report.cmc) v /= count;
  return report;
}

EvalReport run_protocol(const synth::DatasetFamily& family, Protocol mode,
                        const pipeline::TrainConfig& cfg, const std::vector<std::uint64_t>& seeds,
                        const std::vector<int>& p1_sources) {
  return run_protocol(
      family, mode,
      [&](const synth::DatasetSplit& split, std::uint64_t seed) {
        pipeline::TrainConfig c = cfg;
        c.seed = seed;
        return pipeline::train(c, split).model;
      },
      seeds, p1_sources);
}

namespace {

nlohmann::ordered_json metrics_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["mAP"] = m.mAP;
  nlohmann::ordered_json cmc = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < m.ks.size(); ++i) cmc["R" + std::to_string(m.ks[i])] = m.cmc[i];
  j["cmc"] = cmc;
  j["num_queries"] = m.num_queries;
  j["dropped_queries"] = m.dropped_queries;
  j["random_rank1"] = m.random_rank1;
  return j;
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["protocol"] = to_string(mode);
  j["seeds"] = seeds;
  j["mAP"] = mAP;
  nlohmann::ordered_json cmc_j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < ks.size() && i < cmc.size(); ++i)
    cmc_j["R" + std::to_string(ks[i])] = cmc[i];
  j["cmc"] = cmc_j;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& t : targets) {
    nlohmann::ordered_json e;
    e["seed"] = t.seed;
    e["target_domain"] = t.target_domain;
    e["source_domains"] = t.source_domains;
    e["train_size"] = t.train_size;
    e["metrics"] = metrics_json(t.metrics);
    per.push_back(e);
  }
  j["targets"] = per;
  return j.dump(2);
}

void write_features(const std::filesystem::path& file, const Matrix& features,
                    std::span<const SampleMeta> meta) {
  require_shape(features.rows() == static_cast<Index>(meta.size()), "write_features: meta size");
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  for (Index r = 0; r < features.rows(); ++r)
    for (Index c = 0; c < features.cols(); ++c) io::write_f64(out, features(r, c));
  if (!out) throw IoError("failed writing " + file.string());

  nlohmann::ordered_json side;
  side["rows"] = features.rows();
  side["cols"] = features.cols();
  side["dtype"] = "float64-le";
  side["order"] = "row-major";
  std::vector<int> pids, cams, doms;
  for (const auto& m : meta) {
    pids.push_back(m.pid);
    cams.push_back(m.camera_id);
    doms.push_back(m.domain_id);
  }
  side["pids"] = pids;
  side["camera_ids"] = cams;
  side["domain_ids"] = doms;
  std::ofstream js(file.string() + ".json");
  if (!js) throw IoError("cannot write " + file.string() + ".json");
  js << side.dump(2) << '\n';
}

}  // namespace fgdi::eval
