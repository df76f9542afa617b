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

// Test helpers: finite-difference gradients and small random generators.

#include "fgdi/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace fgdi::test {

/// Central differences of scalar f at x.
template <class F>
Matrix numeric_gradient(F&& f, const Matrix& x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

/// max |a - n| / max(max|a|, max|n|); 0 when both vanish.
inline double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
  if (scale == 0.0) return 0.0;
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

inline Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Matrix random_unit_rows(std::mt19937_64& rng, Index rows, Index cols) {
  Matrix m = random_matrix(rng, rows, cols);
  for (Index r = 0; r < rows; ++r) m.row(r).normalize();
  return m;
}

/// P identities with K samples each, shuffled; ids drawn from [0, num_ids).
inline std::vector<int> random_pk_labels(std::mt19937_64& rng, int P, int K, int num_ids) {
  std::vector<int> ids(static_cast<std::size_t>(num_ids));
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<int> out;
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < K; ++k) out.push_back(ids[static_cast<std::size_t>(p)]);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace fgdi::test
