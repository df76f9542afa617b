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

// Random instances of every loss with their finite-difference error.

#include "fgdi/losses.hpp"

#include "support.hpp"

#include <functional>
#include <vector>

namespace fgdi::losses::test_cases {

using fgdi::test::numeric_gradient;
using fgdi::test::random_matrix;
using fgdi::test::random_pk_labels;
using fgdi::test::random_unit_rows;
using fgdi::test::relative_error;

struct GradCase {
  const char* name;
  // Returns the loss for the given inputs, with analytic grads when asked.
  std::function<LossResult<double>(const std::vector<Matrix>&)> fn;
  std::vector<Matrix> inputs;
};

inline double max_grad_error(const GradCase& c) {
  const auto r = c.fn(c.inputs);
  double worst = 0.0;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    auto f = [&](const Matrix& x) {
      auto in = c.inputs;
      in[k] = x;
      return c.fn(in).value;
    };
    worst = std::max(worst, relative_error(r.grads[k], numeric_gradient(f, c.inputs[k], 1e-5)));
  }
  return worst;
}

/// One random instance of each loss, B <= 8 and d <= 8.
inline std::vector<GradCase> random_cases(std::mt19937_64& rng) {
  const int P = test::uniform_int(rng, 2, 4);
  const int K = 2;
  const int d = test::uniform_int(rng, 2, 8);
  const int num_ids = P + test::uniform_int(rng, 0, 3);
  const auto pids = random_pk_labels(rng, P, K, num_ids);
  const auto labels = BatchLabels::from(pids);
  const int b = P * K;
  const int u = static_cast<int>(labels.num_unique());
  const double scale = 3.0;
  std::vector<int> domains;
  for (int i = 0; i < u; ++i) domains.push_back(test::uniform_int(rng, 0, 2));
  LossWeights w;

  std::vector<GradCase> cases;
  cases.push_back({"i2t", [=](const auto& in) { return loss_i2t(in[0], in[1], scale); },
                   {random_unit_rows(rng, b, d), random_unit_rows(rng, b, d)}});
  cases.push_back({"t2i", [=](const auto& in) { return loss_t2i(in[0], in[1], labels, scale); },
                   {random_unit_rows(rng, b, d), random_unit_rows(rng, u, d)}});
  cases.push_back({"domain", [=](const auto& in) { return loss_domain(in[0], domains); },
                   {random_matrix(rng, u, 3)}});
  cases.push_back({"id", [=](const auto& in) { return loss_id(in[0], pids, 0.1); },
                   {random_matrix(rng, b, num_ids)}});
  cases.push_back({"triplet", [=](const auto& in) { return loss_triplet(in[0], pids, 0.3); },
                   {random_unit_rows(rng, b, d)}});
  cases.push_back({"i2tce", [=](const auto& in) { return loss_i2tce(in[0], in[1], pids, scale, 0.1); },
                   {random_unit_rows(rng, b, d), random_unit_rows(rng, num_ids, d)}});
  cases.push_back({"apn_triplet_ed",
                   [=](const auto& in) { return loss_apn_triplet(in[0], in[1], in[2], 0.3, ApnVariant::ED); },
                   {random_unit_rows(rng, b, d), random_unit_rows(rng, b, d), random_unit_rows(rng, b, d)}});
  cases.push_back({"apn_triplet_cs",
                   [=](const auto& in) { return loss_apn_triplet(in[0], in[1], in[2], 0.3, ApnVariant::CS); },
                   {random_unit_rows(rng, b, d), random_unit_rows(rng, b, d), random_unit_rows(rng, b, d)}});
  cases.push_back({"apn_contrastive",
                   [=](const auto& in) {
                     return loss_apn_contrastive(in[0], in[1], in[2], labels.unique_row, scale);
                   },
                   {random_unit_rows(rng, b, d), random_unit_rows(rng, u, d), random_unit_rows(rng, u, d)}});
  cases.push_back({"apnce",
                   [=](const auto& in) { return loss_apnce(in[0], in[1], in[2], labels.unique_row, scale, 0.1); },
                   {random_unit_rows(rng, b, d), random_unit_rows(rng, u, d), random_unit_rows(rng, u, d)}});
  cases.push_back({"stage2",
                   [=](const auto& in) {
                     return loss_stage2<double>(in[0], in[1], labels, in[2], domains, w, scale);
                   },
                   {random_unit_rows(rng, b, d), random_unit_rows(rng, u, d), random_matrix(rng, u, 3)}});
  cases.push_back({"stage_initial",
                   [=](const auto& in) { return loss_stage_initial<double>(in[0], in[1], pids, w); },
                   {random_matrix(rng, b, num_ids), random_unit_rows(rng, b, d)}});
  for (auto variant : {ApnVariant::ED, ApnVariant::Contrastive, ApnVariant::Apnce}) {
    LossWeights w3 = w;
    w3.apn_variant = variant;
    cases.push_back({"stage3",
                     [=](const auto& in) {
                       return loss_stage3(Stage3Inputs<double>{in[0], in[1], in[2], in[3], in[4]}, labels, w3,
                                          scale);
                     },
                     {random_matrix(rng, b, num_ids), random_unit_rows(rng, b, d),
                      random_unit_rows(rng, num_ids, d), random_unit_rows(rng, u, d),
                      random_unit_rows(rng, u, d)}});
  }
  return cases;
}

}  // namespace fgdi::losses::test_cases
