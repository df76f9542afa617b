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

#include "fgdi/optim.hpp"

#include <cmath>
#include <numbers>

namespace fgdi::optim {

void Adam::step(const std::string& name, Matrix& param, const Matrix& grad, double lr) {
  require_shape(param.rows() == grad.rows() && param.cols() == grad.cols(),
                "Adam: gradient shape mismatch for " + name);
  State& s = state_[name];
  if (s.t == 0) {
    s.m = Matrix::Zero(param.rows(), param.cols());
    s.v = Matrix::Zero(param.rows(), param.cols());
  }
  ++s.t;
  s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * grad;
  s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
  param.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + cfg_.eps);
}

double cosine_lr(double base, long long step, long long total, double floor_ratio) {
  if (total <= 1) return base;
  const double progress = static_cast<double>(step) / static_cast<double>(total - 1);
  const double floor = base * floor_ratio;
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace fgdi::optim
