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

#include "fgdi/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace fgdi {

std::unordered_map<std::string, Matrix*> Model::parameter_index() {
  std::unordered_map<std::string, Matrix*> index;
  visit_parameters([&](const std::string& name, Matrix& m) { index.emplace(name, &m); });
  return index;
}

std::unordered_map<std::string, Matrix> Model::snapshot() const {
  std::unordered_map<std::string, Matrix> out;
  const_cast<Model*>(this)->visit_parameters(
      [&](const std::string& name, Matrix& m) { out.emplace(name, m); });
  return out;
}

bool Model::has_stage(const std::string& stage) const {
  return std::find(stages.begin(), stages.end(), stage) != stages.end();
}

Model init_model(const enc::ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  Model m;
  m.dims = dims;
  m.image = enc::init_image_encoder(dims, seed);
  m.prompts = enc::init_prompt_bank(dims, seed);
  m.text = enc::init_text_encoder(dims, enc::max_prompt_length(m.prompts), seed);
  m.domain_head = enc::init_linear(dims.embed_dim, dims.num_domains,
                                   1.0 / std::sqrt(static_cast<double>(dims.embed_dim)), seed ^ 0xd);
  m.id_head = enc::init_linear(dims.embed_dim, dims.num_pids,
                               1.0 / std::sqrt(static_cast<double>(dims.embed_dim)), seed ^ 0x1d);
  return m;
}

std::vector<std::string> changed_parameters(const std::unordered_map<std::string, Matrix>& before,
                                            const std::unordered_map<std::string, Matrix>& after) {
  std::vector<std::string> changed;
  for (const auto& [name, m] : before) {
    auto it = after.find(name);
    const bool same = it != after.end() && it->second.rows() == m.rows() &&
                      it->second.cols() == m.cols() &&
                      std::memcmp(it->second.data(), m.data(),
                                  sizeof(double) * static_cast<std::size_t>(m.size())) == 0;
    if (!same) changed.push_back(name);
  }
  std::sort(changed.begin(), changed.end());
  return changed;
}

}  // namespace fgdi
