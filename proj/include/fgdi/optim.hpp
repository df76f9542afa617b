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

#include "fgdi/common.hpp"

#include <string>
#include <unordered_map>

namespace fgdi::optim {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with per-parameter state keyed by name. A parameter whose gradient
/// has always been zero is left bitwise unchanged.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::string& name, Matrix& param, const Matrix& grad, double lr);

 private:
  struct State {
    Matrix m, v;
    long long t = 0;
  };
  AdamConfig cfg_;
  std::unordered_map<std::string, State> state_;
};

/// Cosine decay from `base` to `base * floor_ratio` over `total` steps.
double cosine_lr(double base, long long step, long long total, double floor_ratio = 0.01);

}  // namespace fgdi::optim
