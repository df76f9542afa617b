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

// Experiment runner behind the `fgdi` executable.

#include "fgdi/config.hpp"
#include "fgdi/evalkit.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fgdi::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeAbort = 2, kIoError = 3 };

/// Parses argv and runs one subcommand; returns the process exit code.
/// Errors are reported on stderr.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args exclude the program name

/// Held-out split of the configured family.
synth::DatasetSplit holdout_split(const synth::DatasetFamily& family, const synth::DataConfig& data);

/// Wall-clock estimate for one training run, from a timed one-iteration
/// probe of every stage.
double estimate_run_seconds(const pipeline::TrainConfig& cfg, const synth::DatasetSplit& split);

}  // namespace fgdi::cli
