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

// Three-stage training: image-encoder warm-up, prompt learning (ID tokens
// with reversed domain gradients, then domain tokens), and image-encoder
// fine-tuning guided by invariant (positive) and domain (negative) prompts.

#include "fgdi/losses.hpp"
#include "fgdi/model.hpp"
#include "fgdi/synthdata.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fgdi::pipeline {

struct StagePlan {
  int initial_epochs = 3;
  int id_token_epochs = 40;
  int domain_token_epochs = 10;
  int finetune_epochs = 20;

  /// Full-length schedule (3 / 120 / 30 / 60).
  static StagePlan full() { return {3, 120, 30, 60}; }
  /// Epoch-balanced schedule (3 / 96 / 24 / 57).
  static StagePlan balanced() { return {3, 96, 24, 57}; }
  void validate() const;
};

struct LearningRates {
  double initial = 1e-3;
  double prompt = 3e-3;
  double finetune = 1e-3;
  double floor_ratio = 0.01;  // cosine decay floor
};

struct TrainConfig {
  StagePlan plan;
  losses::LossWeights weights;
  int P = 8;
  int K = 4;
  LearningRates lr;
  std::uint64_t seed = 0;
  double grl_lambda = 1.0;
  bool use_grl = true;             // route the domain term through gradient reversal
  bool phase_b_reversal = false;   // reverse the domain term while learning domain tokens
  int iterations_per_epoch = 0;    // 0: train size / (P*K)
  enc::ModelDims model;            // architecture; pid/domain counts come from the data

  void validate() const;
  /// Stable hex digest of every field, recorded as model provenance.
  std::string hash() const;
};

struct EpochRecord {
  std::string stage;
  std::string phase;
  int epoch = 0;
  double loss_total = 0.0;
  std::vector<std::pair<std::string, double>> components;
  double lr = 0.0;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
};

/// Per-epoch training trace, serialised as JSON lines.
class MetricLog {
 public:
  /// When false, wall_ms is written as 0 so logs of identical runs compare
  /// byte-equal.
  bool record_wall_time = true;

  void add(EpochRecord r) { records_.push_back(std::move(r)); }
  const std::vector<EpochRecord>& records() const { return records_; }
  std::string to_jsonl() const;
  void write(const std::filesystem::path& file) const;

 private:
  std::vector<EpochRecord> records_;
};

/// Flattened training pools with contiguous labels.
struct TrainingData {
  synth::ImageGeometry geometry;
  Matrix images;                    // one sample per row
  std::vector<int> labels;          // contiguous 0..num_pids-1
  std::vector<int> label_pids;      // label -> global pid
  std::vector<int> label_domain;    // label -> domain class
  std::vector<int> domain_ids;      // domain class -> dataset domain id

  static TrainingData from(const synth::DatasetSplit& split);
  int num_pids() const { return static_cast<int>(label_pids.size()); }
  int num_domains() const { return static_cast<int>(domain_ids.size()); }
  Index size() const { return images.rows(); }
};

/// Model with dims completed from the data and metadata attached.
Model init_model_for(const TrainConfig& cfg, const TrainingData& data);

enum class PromptPhase { IdTokens, DomainTokens };

/// Loss and gradients of one training batch.
struct BatchStep {
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> components;
  std::vector<std::pair<std::string, Matrix>> grads;  // trainable parameters by name
};

/// One prompt-stage batch on fixed image features (rows aligned with the
/// contiguous `labels`). The id-token phase trains id tokens and the domain
/// head with the domain term reversed when `use_grl`; the domain-token phase
/// trains domain tokens and the head on full prompts.
BatchStep prompt_batch_step(const TrainConfig& cfg, const Model& model, const Matrix& features,
                            const std::vector<int>& labels, PromptPhase phase);

void run_stage_initial(const TrainConfig& cfg, Model& model, const TrainingData& data,
                       MetricLog& log);
void run_stage_prompt(const TrainConfig& cfg, Model& model, const TrainingData& data,
                      MetricLog& log);
void run_stage_finetune(const TrainConfig& cfg, Model& model, const TrainingData& data,
                        MetricLog& log);

struct TrainResult {
  Model model;
  MetricLog log;
};

/// Called after each completed stage with its name.
using StageCallback = std::function<void(const Model&, const std::string& stage)>;

/// Runs the stages in order. Stages already listed in `resume->stages` are
/// skipped, which is how a checkpoint continues.
TrainResult train(const TrainConfig& cfg, const synth::DatasetSplit& data,
                  std::optional<Model> resume = std::nullopt, const StageCallback& on_stage = {});

// ---------------------------------------------------------------------------
// Checkpoints: "FGDICKPT" magic, u64 manifest length, JSON manifest, then
// every array as little-endian float64 in column-major order.
// ---------------------------------------------------------------------------

void save_checkpoint(const Model& model, const std::filesystem::path& file);

/// Loads and validates the manifest. When `expected` is given its
/// architecture, M, N, num_pids and num_domains must match.
Model load_checkpoint(const std::filesystem::path& file,
                      const std::optional<enc::ModelDims>& expected = std::nullopt);

}  // namespace fgdi::pipeline
