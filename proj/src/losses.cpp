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

#include "fgdi/losses.hpp"

#include <map>

namespace fgdi::losses {

std::string to_string(ApnVariant v) {
  switch (v) {
    case ApnVariant::ED: return "ED";
    case ApnVariant::CS: return "CS";
    case ApnVariant::Contrastive: return "CONTRASTIVE";
    case ApnVariant::Apnce: return "APNCE";
  }
  return "?";
}

ApnVariant apn_variant_from_string(const std::string& name) {
  if (name == "ED") return ApnVariant::ED;
  if (name == "CS") return ApnVariant::CS;
  if (name == "CONTRASTIVE") return ApnVariant::Contrastive;
  if (name == "APNCE") return ApnVariant::Apnce;
  throw ConfigError("unknown apn variant '" + name + "' (expected ED, CS, CONTRASTIVE or APNCE)");
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0,1]");
  if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
  if (!(smoothing_eps >= 0.0 && smoothing_eps < 1.0))
    throw ConfigError("smoothing_eps must be in [0,1)");
  if (!(i2tce_smoothing >= 0.0 && i2tce_smoothing < 1.0))
    throw ConfigError("i2tce_smoothing must be in [0,1)");
}

BatchLabels BatchLabels::from(std::vector<int> pids, std::vector<int> domain_ids) {
  BatchLabels l;
  if (!domain_ids.empty() && domain_ids.size() != pids.size())
    throw ShapeError("BatchLabels: domain id count mismatch");
  std::map<int, int> rows;
  for (int p : pids) rows.emplace(p, 0);
  int next = 0;
  for (auto& [pid, row] : rows) {
    row = next++;
    l.unique_pids.push_back(pid);
  }
  l.positives.resize(rows.size());
  for (std::size_t i = 0; i < pids.size(); ++i) {
    const int row = rows.at(pids[i]);
    l.unique_row.push_back(row);
    l.positives[static_cast<std::size_t>(row)].push_back(static_cast<int>(i));
  }
  l.pids = std::move(pids);
  l.domain_ids = std::move(domain_ids);
  return l;
}

}  // namespace fgdi::losses
