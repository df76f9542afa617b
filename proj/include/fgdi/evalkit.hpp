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

#pragma once

// Retrieval evaluation: camera-filtered ranking, CMC, mAP, and the
// cross-domain protocol runner.

#include "fgdi/common.hpp"
#include "fgdi/model.hpp"
#include "fgdi/pipeline.hpp"
#include "fgdi/synthdata.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace fgdi::eval {

struct SampleMeta {
  int pid = 0;
  int camera_id = 0;
  int domain_id = 0;
};

std::vector<SampleMeta> metadata(std::span<const synth::ImageSample> samples);

/// Per-query ordering of valid gallery entries. Queries with no relevant
/// valid gallery entry are dropped and counted.
struct RankingResult {
  std::vector<int> query_index;                 // kept queries
  std::vector<std::vector<int>> order;          // gallery indices, best first
  std::vector<std::vector<char>> relevance;     // aligned with order
  int dropped_queries = 0;

  std::size_t size() const { return order.size(); }
};

/// Ranks gallery rows by descending dot product with each query row; ties go
/// to the lower gallery index. Same-pid same-camera gallery entries are
/// removed before ranking.
template <typename DQ, typename DG>
RankingResult rank(const Eigen::MatrixBase<DQ>& query, const Eigen::MatrixBase<DG>& gallery,
                   std::span<const SampleMeta> query_meta, std::span<const SampleMeta> gallery_meta) {
  using Scalar = typename DQ::Scalar;
  require_shape(query.rows() == static_cast<Index>(query_meta.size()), "rank: query meta size");
  require_shape(gallery.rows() == static_cast<Index>(gallery_meta.size()), "rank: gallery meta size");
  require_shape(query.cols() == gallery.cols() || gallery.rows() == 0 || query.rows() == 0,
                "rank: feature dim mismatch");
  RankingResult out;
  const MatrixX<Scalar> scores = query * gallery.transpose();
  for (Index q = 0; q < query.rows(); ++q) {
    const SampleMeta& qm = query_meta[static_cast<std::size_t>(q)];
    std::vector<int> valid;
    bool any_relevant = false;
    for (Index g = 0; g < gallery.rows(); ++g) {
      const SampleMeta& gm = gallery_meta[static_cast<std::size_t>(g)];
      if (gm.pid == qm.pid && gm.camera_id == qm.camera_id) continue;
      valid.push_back(static_cast<int>(g));
      any_relevant = any_relevant || gm.pid == qm.pid;
    }
    if (!any_relevant) {
      ++out.dropped_queries;
      continue;
    }
    std::stable_sort(valid.begin(), valid.end(),
                     [&](int a, int b) { return scores(q, a) > scores(q, b); });
    std::vector<char> rel(valid.size());
    for (std::size_t i = 0; i < valid.size(); ++i)
      rel[i] = gallery_meta[static_cast<std::size_t>(valid[i])].pid == qm.pid;
    out.query_index.push_back(static_cast<int>(q));
    out.order.push_back(std::move(valid));
    out.relevance.push_back(std::move(rel));
  }
  return out;
}

/// AP of one ranked relevance list: (1/R) * sum_k precision@k * rel(k).
double average_precision(std::span<const char> ranked_relevance);

/// Mean AP over ranked relevance lists. Throws on zero queries or a list
/// without any relevant entry.
double compute_map(const std::vector<std::vector<char>>& ranked_relevance);
inline double compute_map(const RankingResult& r) { return compute_map(r.relevance); }

/// Rank-k accuracies for each k.
std::vector<double> compute_cmc(const std::vector<std::vector<char>>& ranked_relevance,
                                const std::vector<int>& ks = {1, 5, 10});
inline std::vector<double> compute_cmc(const RankingResult& r, const std::vector<int>& ks = {1, 5, 10}) {
  return compute_cmc(r.relevance, ks);
}

/// Reference AP computed straight from unsorted scores: each relevant item's
/// precision counts the items placed at or above it (higher score, or equal
/// score with lower index). Quadratic, shares no code with compute_map.
template <typename Scalar>
double oracle_ap(std::span<const Scalar> scores, std::span<const char> relevance) {
  if (scores.size() != relevance.size()) throw ShapeError("oracle_ap: size mismatch");
  const std::size_t n = scores.size();
  int num_relevant = 0;
  for (char r : relevance) num_relevant += r ? 1 : 0;
  if (num_relevant == 0) throw ConfigError("oracle_ap: no relevant items");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!relevance[i]) continue;
    int above = 0;
    int relevant_above = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const bool ahead = scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
      if (!ahead) continue;
      ++above;
      if (relevance[j]) ++relevant_above;
    }
    total += static_cast<double>(relevant_above) / above;
  }
  return total / num_relevant;
}

struct Metrics {
  double mAP = 0.0;
  std::vector<int> ks{1, 5, 10};
  std::vector<double> cmc;
  int num_queries = 0;
  int dropped_queries = 0;
  /// Expected Rank-1 of a uniformly random ordering.
  double random_rank1 = 0.0;
};

Metrics summarize(const RankingResult& r);

/// Unit-norm image features, one row per sample.
Matrix extract_features(const Model& model, std::span<const synth::ImageSample> samples);

/// Query/gallery evaluation of `split`.
Metrics evaluate(const Model& model, const synth::DatasetSplit& split);

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

enum class Protocol { P1, P2, P3 };
std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);

struct TargetResult {
  std::uint64_t seed = 0;
  int target_domain = 0;
  std::vector<int> source_domains;
  std::size_t train_size = 0;
  Metrics metrics;
};

struct EvalReport {
  Protocol mode = Protocol::P2;
  std::vector<std::uint64_t> seeds;
  std::vector<TargetResult> targets;
  double mAP = 0.0;          // mean over targets and seeds
  std::vector<int> ks{1, 5, 10};
  std::vector<double> cmc;   // mean over targets and seeds

  std::string to_json() const;
};

/// Trains a model on a split for one seed.
using Trainer = std::function<Model(const synth::DatasetSplit& split, std::uint64_t seed)>;

/// Splits the family per protocol. P1: train once on `p1_sources` with their
/// full pools, test on every other domain. P2: leave one domain out, train
/// pools only. P3: as P2 with source test pools merged into training.
/// An empty `p1_sources` means all domains but the last.
std::vector<synth::DatasetSplit> protocol_splits(const synth::DatasetFamily& family, Protocol mode,
                                                 const std::vector<int>& p1_sources = {});

EvalReport run_protocol(const synth::DatasetFamily& family, Protocol mode, const Trainer& trainer,
                        const std::vector<std::uint64_t>& seeds,
                        const std::vector<int>& p1_sources = {});

/// Convenience overload training with pipeline::train.
EvalReport run_protocol(const synth::DatasetFamily& family, Protocol mode,
                        const pipeline::TrainConfig& cfg, const std::vector<std::uint64_t>& seeds,
                        const std::vector<int>& p1_sources = {});

/// Writes features as raw little-endian float64 (row-major) to `file` and a
/// JSON sidecar `<file>.json` with shape and per-row pid/camera/domain.
void write_features(const std::filesystem::path& file, const Matrix& features,
                    std::span<const SampleMeta> meta);

}  // namespace fgdi::eval
