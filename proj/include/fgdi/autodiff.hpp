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

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tape owns every intermediate value produced during one forward pass.
// Nodes only reference earlier nodes, so a reverse sweep over insertion
// order is a valid topological order for backpropagation.

#include "fgdi/common.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fgdi::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Receives the upstream gradient of the node and pushes contributions
  /// into its parents via accumulate().
  using Backward = std::function<void(const Matrix& upstream, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Matrix value);

  /// Records an op output. The node tracks gradients iff any parent does.
  Var record(Matrix value, std::span<const Var> parents, Backward backward);

  /// Seeds d(root)/d(root) = 1 and sweeps backward. root must be 1x1.
  void backward(Var root);

  void accumulate(Var target, const Matrix& contribution);

  /// Gradient of the last backward() root w.r.t. v; zeros when v received none.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }
  const Matrix& value(Var v) const { return nodes_.at(v.id_).value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise and linear algebra.
Var matmul(Var a, Var b);
Var matmul_transposed(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast 1 x c over rows
Var scale(Var a, double factor);
Var relu(Var a);
Var sum(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

// Row-wise normalizations.
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
Var normalize_rows(Var x, double eps = 1e-12);

// Indexing and layout.
Var gather_rows(Var x, std::span<const int> rows);
Var concat_rows(std::span<const Var> parts);

/// Images stored one per row in (h, w, c) row-major order become one row per
/// patch, patches enumerated row-major over the patch grid.
Var patchify(Var images, int height, int width, int channels, int patch);

/// Regroups consecutive blocks of `group` rows into single rows, i.e. a
/// row-major reshape from (n*group) x c to n x (group*c).
Var merge_row_groups(Var x, int group);

/// Single-head scaled dot-product attention over n sequences stacked as
/// (n*seq_len) rows. Keys at positions >= lengths[s] are masked out.
Var masked_attention(Var q, Var k, Var v, int seq_len, std::span<const int> lengths);

/// Scalar node with externally computed gradients, one per input in order.
/// This is how closed-form losses enter a graph.
Var scalar_node(std::span<const Var> inputs, double value, std::vector<Matrix> grads);

/// Identity forward; backward multiplies the upstream gradient by -lambda.
Var gradient_reversal(Var x, double lambda);

}  // namespace fgdi::ad
