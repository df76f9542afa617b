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

#include "fgdi/autodiff.hpp"

#include <cmath>
#include <limits>

namespace fgdi::ad {

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  require_shape(rows() == 1 && cols() == 1, "Var::scalar on non-scalar");
  return value()(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) needs = needs || nodes_.at(p.id_).requires_grad;
  Node node{std::move(value), {}, needs, false, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(Var target, const Matrix& contribution) {
  Node& n = nodes_.at(target.id_);
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = contribution;
    n.has_grad = true;
  } else {
    n.grad += contribution;
  }
}

void Tape::backward(Var root) {
  require_shape(root.rows() == 1 && root.cols() == 1, "backward root must be scalar");
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(root, Matrix::Ones(1, 1));
  for (int i = root.id_; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad || !n.backward) continue;
    n.backward(n.grad, *this);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id_);
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var matmul(Var a, Var b) {
  require_shape(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  const Var parents[] = {a, b};
  return a.tape().record(a.value() * b.value(), parents, [a, b](const Matrix& g, Tape& t) {
    t.accumulate(a, g * b.value().transpose());
    t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_transposed(Var a, Var b) {
  require_shape(a.cols() == b.cols(), "matmul_transposed: inner dimension mismatch");
  const Var parents[] = {a, b};
  return a.tape().record(a.value() * b.value().transpose(), parents,
                         [a, b](const Matrix& g, Tape& t) {
                           t.accumulate(a, g * b.value());
                           t.accumulate(b, g.transpose() * a.value());
                         });
}

Var add(Var a, Var b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  const Var parents[] = {a, b};
  return a.tape().record(a.value() + b.value(), parents, [a, b](const Matrix& g, Tape& t) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  const Var parents[] = {a, b};
  return a.tape().record(a.value() - b.value(), parents, [a, b](const Matrix& g, Tape& t) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var add_row(Var a, Var row) {
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  const Var parents[] = {a, row};
  return a.tape().record(std::move(out), parents, [a, row](const Matrix& g, Tape& t) {
    t.accumulate(a, g);
    t.accumulate(row, g.colwise().sum());
  });
}

Var scale(Var a, double factor) {
  const Var parents[] = {a};
  return a.tape().record(a.value() * factor, parents,
                         [a, factor](const Matrix& g, Tape& t) { t.accumulate(a, g * factor); });
}

Var relu(Var a) {
  const Var parents[] = {a};
  return a.tape().record(a.value().cwiseMax(0.0), parents, [a](const Matrix& g, Tape& t) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Var parents[] = {a};
  return a.tape().record(std::move(out), parents, [a](const Matrix& g, Tape& t) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Index n = x.rows();
  const Index c = x.cols();
  require_shape(gain.rows() == 1 && gain.cols() == c && bias.rows() == 1 && bias.cols() == c,
                "layer_norm_rows: affine shape mismatch");
  Matrix xhat(n, c);
  Vector inv_std(n);
  for (Index r = 0; r < n; ++r) {
    const double mean = x.value().row(r).mean();
    const RowVector centered = x.value().row(r).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(c);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const Var parents[] = {x, gain, bias};
  return x.tape().record(
      std::move(out), parents, [x, gain, bias, xhat, inv_std](const Matrix& g, Tape& t) {
        const Index cols = xhat.cols();
        t.accumulate(gain, (g.array() * xhat.array()).colwise().sum().matrix());
        t.accumulate(bias, g.colwise().sum());
        const Matrix dxhat = (g.array().rowwise() * gain.value().row(0).array()).matrix();
        Matrix dx(xhat.rows(), cols);
        for (Index r = 0; r < xhat.rows(); ++r) {
          const double s1 = dxhat.row(r).sum();
          const double s2 = dxhat.row(r).dot(xhat.row(r));
          dx.row(r) = (inv_std(r) / static_cast<double>(cols)) *
                      (static_cast<double>(cols) * dxhat.row(r).array() - s1 -
                       xhat.row(r).array() * s2)
                          .matrix();
        }
        t.accumulate(x, dx);
      });
}

Var normalize_rows(Var x, double eps) {
  const Vector norms = x.value().rowwise().norm().cwiseMax(eps);
  Matrix out = x.value().array().colwise() / norms.array();
  const Var parents[] = {x};
  Matrix y = out;
  return x.tape().record(std::move(out), parents, [x, y, norms](const Matrix& g, Tape& t) {
    const Vector proj = (g.array() * y.array()).rowwise().sum();
    Matrix dx = g - (y.array().colwise() * proj.array()).matrix();
    dx.array().colwise() /= norms.array();
    t.accumulate(x, dx);
  });
}

Var gather_rows(Var x, std::span<const int> rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require_shape(rows[i] >= 0 && rows[i] < x.rows(), "gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = x.value().row(rows[i]);
  }
  const Var parents[] = {x};
  std::vector<int> idx(rows.begin(), rows.end());
  return x.tape().record(std::move(out), parents, [x, idx](const Matrix& g, Tape& t) {
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) dx.row(idx[i]) += g.row(static_cast<Index>(i));
    t.accumulate(x, dx);
  });
}

Var concat_rows(std::span<const Var> parts) {
  require_shape(!parts.empty(), "concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index total = 0;
  for (const Var& p : parts) {
    require_shape(p.cols() == cols, "concat_rows: column mismatch");
    total += p.rows();
  }
  Matrix out(total, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), parts, [ps](const Matrix& g, Tape& t) {
    Index off = 0;
    for (const Var& p : ps) {
      t.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

namespace {

struct PatchLayout {
  int height, width, channels, patch;
  int grid_w() const { return width / patch; }
  int count() const { return (height / patch) * grid_w(); }
  int dim() const { return patch * patch * channels; }
  // Column of pixel element (h, w, c) in an image row.
  int pixel(int h, int w, int c) const { return (h * width + w) * channels + c; }
  // Column within a patch row for in-patch offsets.
  int within(int dh, int dw, int c) const { return (dh * patch + dw) * channels + c; }
};

}  // namespace

Var patchify(Var images, int height, int width, int channels, int patch) {
  const PatchLayout lay{height, width, channels, patch};
  require_shape(height % patch == 0 && width % patch == 0, "patchify: patch does not tile image");
  require_shape(images.cols() == static_cast<Index>(height) * width * channels,
                "patchify: image size mismatch");
  const Index n = images.rows();
  const int count = lay.count();
  Matrix out(n * count, lay.dim());
  for (Index b = 0; b < n; ++b) {
    for (int p = 0; p < count; ++p) {
      const int h0 = (p / lay.grid_w()) * patch;
      const int w0 = (p % lay.grid_w()) * patch;
      for (int dh = 0; dh < patch; ++dh)
        for (int dw = 0; dw < patch; ++dw)
          for (int c = 0; c < channels; ++c)
            out(b * count + p, lay.within(dh, dw, c)) =
                images.value()(b, lay.pixel(h0 + dh, w0 + dw, c));
    }
  }
  const Var parents[] = {images};
  return images.tape().record(std::move(out), parents, [images, lay](const Matrix& g, Tape& t) {
    const int count = lay.count();
    Matrix dx = Matrix::Zero(images.rows(), images.cols());
    for (Index b = 0; b < images.rows(); ++b)
      for (int p = 0; p < count; ++p) {
        const int h0 = (p / lay.grid_w()) * lay.patch;
        const int w0 = (p % lay.grid_w()) * lay.patch;
        for (int dh = 0; dh < lay.patch; ++dh)
          for (int dw = 0; dw < lay.patch; ++dw)
            for (int c = 0; c < lay.channels; ++c)
              dx(b, lay.pixel(h0 + dh, w0 + dw, c)) = g(b * count + p, lay.within(dh, dw, c));
      }
    t.accumulate(images, dx);
  });
}

Var merge_row_groups(Var x, int group) {
  require_shape(group > 0 && x.rows() % group == 0, "merge_row_groups: rows not divisible");
  const Index n = x.rows() / group;
  const Index c = x.cols();
  Matrix out(n, group * c);
  for (Index r = 0; r < n; ++r)
    for (int j = 0; j < group; ++j) out.block(r, j * c, 1, c) = x.value().row(r * group + j);
  const Var parents[] = {x};
  return x.tape().record(std::move(out), parents, [x, group, n, c](const Matrix& g, Tape& t) {
    Matrix dx(x.rows(), c);
    for (Index r = 0; r < n; ++r)
      for (int j = 0; j < group; ++j) dx.row(r * group + j) = g.block(r, j * c, 1, c);
    t.accumulate(x, dx);
  });
}

Var masked_attention(Var q, Var k, Var v, int seq_len, std::span<const int> lengths) {
  const Index n = static_cast<Index>(lengths.size());
  require_shape(q.rows() == n * seq_len && k.rows() == q.rows() && v.rows() == q.rows(),
                "masked_attention: row count mismatch");
  require_shape(q.cols() == k.cols(), "masked_attention: q/k width mismatch");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  std::vector<Matrix> attn(static_cast<std::size_t>(n));
  Matrix out(q.rows(), v.cols());
  for (Index s = 0; s < n; ++s) {
    const int len = lengths[static_cast<std::size_t>(s)];
    require_shape(len >= 1 && len <= seq_len, "masked_attention: invalid sequence length");
    const Index off = s * seq_len;
    Matrix scores = q.value().middleRows(off, seq_len) *
                    k.value().middleRows(off, len).transpose() * inv_sqrt;
    const Vector mx = scores.rowwise().maxCoeff();
    scores = (scores.colwise() - mx).array().exp().matrix();
    const Vector z = scores.rowwise().sum();
    scores.array().colwise() /= z.array();
    out.middleRows(off, seq_len) = scores * v.value().middleRows(off, len);
    attn[static_cast<std::size_t>(s)] = std::move(scores);
  }
  const Var parents[] = {q, k, v};
  std::vector<int> lens(lengths.begin(), lengths.end());
  return q.tape().record(
      std::move(out), parents, [q, k, v, seq_len, lens, attn, inv_sqrt](const Matrix& g, Tape& t) {
        Matrix dq = Matrix::Zero(q.rows(), q.cols());
        Matrix dk = Matrix::Zero(k.rows(), k.cols());
        Matrix dv = Matrix::Zero(v.rows(), v.cols());
        for (std::size_t s = 0; s < lens.size(); ++s) {
          const Index off = static_cast<Index>(s) * seq_len;
          const int len = lens[s];
          const Matrix& a = attn[s];
          const auto go = g.middleRows(off, seq_len);
          dv.middleRows(off, len) = a.transpose() * go;
          const Matrix da = go * v.value().middleRows(off, len).transpose();
          const Vector rowdot = (da.array() * a.array()).rowwise().sum();
          const Matrix ds = (a.array() * (da.colwise() - rowdot).array()).matrix() * inv_sqrt;
          dq.middleRows(off, seq_len) = ds * k.value().middleRows(off, len);
          dk.middleRows(off, len) = ds.transpose() * q.value().middleRows(off, seq_len);
        }
        t.accumulate(q, dq);
        t.accumulate(k, dk);
        t.accumulate(v, dv);
      });
}

Var scalar_node(std::span<const Var> inputs, double value, std::vector<Matrix> grads) {
  require_shape(!inputs.empty() && inputs.size() == grads.size(), "scalar_node: gradient count");
  for (std::size_t i = 0; i < inputs.size(); ++i)
    require_shape(grads[i].rows() == inputs[i].rows() && grads[i].cols() == inputs[i].cols(),
                  "scalar_node: gradient shape mismatch");
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return inputs.front().tape().record(Matrix::Constant(1, 1, value), inputs,
                                      [ins, grads = std::move(grads)](const Matrix& g, Tape& t) {
                                        for (std::size_t i = 0; i < ins.size(); ++i)
                                          t.accumulate(ins[i], g(0, 0) * grads[i]);
                                      });
}

Var gradient_reversal(Var x, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("gradient reversal strength must be >= 0");
  const Var parents[] = {x};
  return x.tape().record(x.value(), parents,
                         [x, lambda](const Matrix& g, Tape& t) { t.accumulate(x, -lambda * g); });
}

}  // namespace fgdi::ad
