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

#include "fgdi/encoders.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace fgdi {

/// Everything a training run produces. Parameters are addressed by
/// qualified names ("image.w1", "prompt.id_tokens", ...), which are also the
/// checkpoint array names and the optimizer state keys.
struct Model {
  enc::ModelDims dims;
  enc::ImageEncoderParams image;
  enc::TextEncoderParams text;
  enc::PromptBank prompts;
  enc::LinearParams domain_head;
  enc::LinearParams id_head;

  std::vector<int> label_pids;     // training label -> global pid
  std::vector<int> label_domain;   // training label -> domain class (home domain)
  std::vector<int> domain_ids;     // domain class -> dataset domain id
  std::vector<std::string> stages; // stages completed, in order
  std::string config_hash;

  template <class F>
  void visit_parameters(F&& f) {
    image.visit([&](const char* n, Matrix& m) { f(std::string("image.") + n, m); });
    text.visit([&](const char* n, Matrix& m) { f(std::string("text.") + n, m); });
    f(std::string("prompt.id_tokens"), prompts.id_tokens);
    f(std::string("prompt.domain_tokens"), prompts.domain_tokens);
    domain_head.visit([&](const char* n, Matrix& m) { f(std::string("domain_head.") + n, m); });
    id_head.visit([&](const char* n, Matrix& m) { f(std::string("id_head.") + n, m); });
  }

  std::unordered_map<std::string, Matrix*> parameter_index();
  /// Copy of every parameter keyed by name.
  std::unordered_map<std::string, Matrix> snapshot() const;
  bool has_stage(const std::string& stage) const;
};

/// Fresh model for `dims` (num_pids / num_domains filled in).
Model init_model(const enc::ModelDims& dims, std::uint64_t seed);

/// Names whose values differ bitwise between two snapshots.
std::vector<std::string> changed_parameters(const std::unordered_map<std::string, Matrix>& before,
                                            const std::unordered_map<std::string, Matrix>& after);

}  // namespace fgdi
