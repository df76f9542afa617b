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

// Experiment configuration: a versioned JSON document covering data, training,
// evaluation protocol, seeds, ablation toggles and sweeps.

#include "fgdi/pipeline.hpp"
#include "fgdi/synthdata.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fgdi::config {

inline constexpr int kSchemaVersion = 1;

/// Switches mirroring the component ablation: A = three-stage schedule,
/// B = domain-adversarial prompts plus prompt-guided fine-tuning, C = the
/// anchor/positive/negative term.
struct Toggles {
  bool three_stage = true;
  bool grl = true;
  bool apn = true;
  losses::ApnVariant apn_variant = losses::ApnVariant::ED;
  double beta = 0.3;
  int init_epochs = 3;

  bool operator==(const Toggles&) const = default;
};

struct NamedToggles {
  std::string name;
  Toggles toggles;
};

/// The five ablation rows: baseline, +A, +B, +A+B w/o C, +A+B. Each row
/// starts from `full` and switches components off.
std::vector<NamedToggles> ablation_grid(const Toggles& full = {});

/// Overrides the schedule and loss weights implied by `t`.
pipeline::TrainConfig apply_toggles(pipeline::TrainConfig cfg, const Toggles& t);

struct SweepConfig {
  bool toggle_grid = true;
  std::vector<double> betas;      // empty: no beta sweep
  std::vector<int> init_epochs;   // empty: no initial-epoch sweep
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  synth::DataConfig data;
  pipeline::TrainConfig train;
  /// "holdout" (data.source_domains -> data.held_out_domain) or P1/P2/P3.
  std::string protocol = "holdout";
  std::vector<int> p1_sources;
  std::string output_dir = "runs";
  std::vector<std::uint64_t> seeds{0};
  std::optional<Toggles> toggles;
  SweepConfig sweep;

  /// Training config with toggles applied.
  pipeline::TrainConfig effective_train() const;
  void validate() const;
};

/// Parses and validates. Unknown keys and missing required keys raise
/// ConfigError naming the offending path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& file);

/// Canonical JSON (all fields, fixed key order).
std::string to_json(const ExperimentConfig& cfg);
std::string to_json(const Toggles& t);

/// Stable digest of the canonical JSON.
std::string config_hash(const ExperimentConfig& cfg);

/// The published JSON Schema of the configuration document.
const std::string& schema();

}  // namespace fgdi::config
