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

// Metric-learning and cross-modal objectives with closed-form gradients.
//
// Every loss returns its value together with the gradient w.r.t. each matrix
// input, in the order the inputs appear in the signature. Batch reduction is
// the arithmetic mean throughout. The similarity s(x, y) used by the
// contrastive terms is `scale * x.y`, scale being the inverse temperature.

#include "fgdi/common.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace fgdi::losses {

enum class ApnVariant { ED, CS, Contrastive, Apnce };

std::string to_string(ApnVariant v);
ApnVariant apn_variant_from_string(const std::string& name);

struct LossWeights {
  double alpha = 0.01;          // domain term weight in the prompt stage
  double beta = 0.3;            // apn / i2tce mix in the fine-tune stage
  double margin = 0.3;          // hinge margin for both triplet losses
  double smoothing_eps = 0.1;   // label smoothing of the ID loss
  double i2tce_smoothing = 0.0; // optional smoothing of q in i2tce / apnce
  ApnVariant apn_variant = ApnVariant::ED;

  void validate() const;
};

template <typename Scalar>
struct LossResult {
  Scalar value{};
  std::vector<MatrixX<Scalar>> grads;
};

/// Per-batch identity bookkeeping. unique_pids is ascending, so the row
/// layout of per-identity tables does not depend on batch order.
struct BatchLabels {
  std::vector<int> pids;
  std::vector<int> domain_ids;
  std::vector<int> unique_pids;
  std::vector<int> unique_row;               // sample -> row in unique_pids
  std::vector<std::vector<int>> positives;   // unique row -> sample indices

  static BatchLabels from(std::vector<int> pids, std::vector<int> domain_ids = {});
  Index size() const { return static_cast<Index>(pids.size()); }
  Index num_unique() const { return static_cast<Index>(unique_pids.size()); }
};

namespace detail {

template <typename Scalar>
VectorX<Scalar> row_logsumexp(const MatrixX<Scalar>& m) {
  const VectorX<Scalar> mx = m.rowwise().maxCoeff();
  VectorX<Scalar> out(m.rows());
  for (Index r = 0; r < m.rows(); ++r)
    out(r) = mx(r) + std::log((m.row(r).array() - mx(r)).exp().sum());
  return out;
}

template <typename Scalar>
MatrixX<Scalar> row_softmax(const MatrixX<Scalar>& m) {
  const VectorX<Scalar> lse = row_logsumexp(m);
  return (m.colwise() - lse).array().exp().matrix();
}

/// One-hot targets with `eps` mass spread uniformly over the other classes.
template <typename Scalar>
MatrixX<Scalar> smoothed_targets(const std::vector<int>& cls, Index num_classes, Scalar eps) {
  if (eps > Scalar(0) && num_classes < 2)
    throw ConfigError("label smoothing needs at least two classes");
  const Scalar off = num_classes > 1 ? eps / Scalar(num_classes - 1) : Scalar(0);
  MatrixX<Scalar> q = MatrixX<Scalar>::Constant(static_cast<Index>(cls.size()), num_classes, off);
  for (std::size_t i = 0; i < cls.size(); ++i) {
    if (cls[i] < 0 || cls[i] >= num_classes) throw ShapeError("class index out of range");
    q(static_cast<Index>(i), cls[i]) = Scalar(1) - eps;
  }
  return q;
}

/// Mean over rows of -sum_k q_k log softmax(logits)_k, with gradient.
template <typename Scalar>
LossResult<Scalar> soft_cross_entropy(const MatrixX<Scalar>& logits, const MatrixX<Scalar>& q) {
  const Index n = logits.rows();
  const VectorX<Scalar> lse = row_logsumexp(logits);
  const MatrixX<Scalar> logp = logits.colwise() - lse;
  LossResult<Scalar> r;
  r.value = -(q.array() * logp.array()).sum() / Scalar(n);
  // Rows of q sum to one, so d/dlogits = softmax - q.
  MatrixX<Scalar> g = logp.array().exp().matrix() - q;
  r.grads.push_back(g / Scalar(n));
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Prompt-learning objectives
// ---------------------------------------------------------------------------

/// Image-to-text contrastive loss; row i of T is the prompt of sample i.
/// grads: {dV, dT}
template <typename DV, typename DT>
LossResult<typename DV::Scalar> loss_i2t(const Eigen::MatrixBase<DV>& V,
                                         const Eigen::MatrixBase<DT>& T,
                                         typename DV::Scalar scale) {
  using Scalar = typename DV::Scalar;
  require_shape(V.rows() == T.rows() && V.cols() == T.cols(), "loss_i2t: shape mismatch");
  require_shape(V.rows() > 0, "loss_i2t: empty batch");
  const Index b = V.rows();
  const MatrixX<Scalar> s = scale * V * T.transpose();
  const VectorX<Scalar> lse = detail::row_logsumexp<Scalar>(s);
  LossResult<Scalar> r;
  r.value = (lse - s.diagonal()).sum() / Scalar(b);
  MatrixX<Scalar> ds = detail::row_softmax<Scalar>(s);
  ds.diagonal().array() -= Scalar(1);
  ds /= Scalar(b);
  r.grads.push_back(scale * ds * T);
  r.grads.push_back(scale * ds.transpose() * V);
  return r;
}

/// Text-to-image loss with multiple positives per identity. Row u of T_ids is
/// the prompt feature of labels.unique_pids[u]. grads: {dV, dT_ids}
template <typename DV, typename DT>
LossResult<typename DV::Scalar> loss_t2i(const Eigen::MatrixBase<DV>& V,
                                         const Eigen::MatrixBase<DT>& T_ids,
                                         const BatchLabels& labels,
                                         typename DV::Scalar scale) {
  using Scalar = typename DV::Scalar;
  require_shape(V.rows() == labels.size(), "loss_t2i: label count mismatch");
  require_shape(T_ids.rows() == labels.num_unique(), "loss_t2i: one text row per unique pid");
  require_shape(V.cols() == T_ids.cols(), "loss_t2i: feature dim mismatch");
  const Index u = T_ids.rows();
  const MatrixX<Scalar> s = scale * T_ids * V.transpose();  // u x B
  const VectorX<Scalar> lse = detail::row_logsumexp<Scalar>(s);
  MatrixX<Scalar> ds = detail::row_softmax<Scalar>(s);
  Scalar total(0);
  for (Index y = 0; y < u; ++y) {
    const auto& pos = labels.positives[static_cast<std::size_t>(y)];
    if (pos.empty()) throw ShapeError("loss_t2i: empty positive set");
    const Scalar w = Scalar(1) / Scalar(pos.size());
    Scalar mean_pos(0);
    for (int p : pos) {
      mean_pos += s(y, p) * w;
      ds(y, p) -= w;
    }
    total += lse(y) - mean_pos;
  }
  ds /= Scalar(u);
  LossResult<Scalar> r;
  r.value = total / Scalar(u);
  r.grads.push_back(scale * ds.transpose() * T_ids);
  r.grads.push_back(scale * ds * V);
  return r;
}

/// Softmax cross-entropy over domain classes. grads: {dlogits}
template <typename DL>
LossResult<typename DL::Scalar> loss_domain(const Eigen::MatrixBase<DL>& logits,
                                            const std::vector<int>& domain_classes) {
  using Scalar = typename DL::Scalar;
  require_shape(logits.rows() == static_cast<Index>(domain_classes.size()),
                "loss_domain: label count mismatch");
  require_shape(logits.rows() > 0, "loss_domain: empty batch");
  const MatrixX<Scalar> q = detail::smoothed_targets<Scalar>(domain_classes, logits.cols(), Scalar(0));
  return detail::soft_cross_entropy<Scalar>(logits, q);
}

/// ID classification loss with label smoothing. grads: {dlogits}
template <typename DL>
LossResult<typename DL::Scalar> loss_id(const Eigen::MatrixBase<DL>& logits,
                                        const std::vector<int>& pids,
                                        typename DL::Scalar eps) {
  using Scalar = typename DL::Scalar;
  require_shape(logits.rows() == static_cast<Index>(pids.size()), "loss_id: label count mismatch");
  require_shape(logits.rows() > 0, "loss_id: empty batch");
  if (!(eps >= Scalar(0) && eps < Scalar(1))) throw ConfigError("smoothing eps must be in [0,1)");
  const MatrixX<Scalar> q = detail::smoothed_targets<Scalar>(pids, logits.cols(), eps);
  return detail::soft_cross_entropy<Scalar>(logits, q);
}

/// Batch-hard triplet loss on Euclidean distances. grads: {dV}
template <typename DV>
LossResult<typename DV::Scalar> loss_triplet(const Eigen::MatrixBase<DV>& V,
                                             const std::vector<int>& pids,
                                             typename DV::Scalar margin) {
  using Scalar = typename DV::Scalar;
  const Index b = V.rows();
  require_shape(b == static_cast<Index>(pids.size()), "loss_triplet: label count mismatch");
  MatrixX<Scalar> dist(b, b);
  for (Index i = 0; i < b; ++i)
    for (Index j = 0; j < b; ++j) dist(i, j) = (V.row(i) - V.row(j)).norm();

  LossResult<Scalar> r;
  r.grads.push_back(MatrixX<Scalar>::Zero(b, V.cols()));
  MatrixX<Scalar>& g = r.grads.back();
  Scalar total(0);
  for (Index i = 0; i < b; ++i) {
    Index hard_pos = -1;
    Index hard_neg = -1;
    for (Index j = 0; j < b; ++j) {
      if (j == i) continue;
      if (pids[static_cast<std::size_t>(j)] == pids[static_cast<std::size_t>(i)]) {
        if (hard_pos < 0 || dist(i, j) > dist(i, hard_pos)) hard_pos = j;
      } else if (hard_neg < 0 || dist(i, j) < dist(i, hard_neg)) {
        hard_neg = j;
      }
    }
    if (hard_neg < 0) throw ShapeError("loss_triplet: anchor without a negative (single pid batch)");
    if (hard_pos < 0) throw ShapeError("loss_triplet: anchor without a positive");
    const Scalar h = dist(i, hard_pos) - dist(i, hard_neg) + margin;
    if (h <= Scalar(0)) continue;
    total += h;
    // Zero-length differences contribute a zero subgradient.
    if (dist(i, hard_pos) > Scalar(0)) {
      const RowVectorX<Scalar> u = (V.row(i) - V.row(hard_pos)) / dist(i, hard_pos);
      g.row(i) += u;
      g.row(hard_pos) -= u;
    }
    if (dist(i, hard_neg) > Scalar(0)) {
      const RowVectorX<Scalar> u = (V.row(i) - V.row(hard_neg)) / dist(i, hard_neg);
      g.row(i) -= u;
      g.row(hard_neg) += u;
    }
  }
  r.value = total / Scalar(b);
  g /= Scalar(b);
  return r;
}

/// Image-to-text cross-entropy against one prompt per training identity.
/// grads: {dV, dT_all}
template <typename DV, typename DT>
LossResult<typename DV::Scalar> loss_i2tce(const Eigen::MatrixBase<DV>& V,
                                           const Eigen::MatrixBase<DT>& T_all,
                                           const std::vector<int>& pids,
                                           typename DV::Scalar scale,
                                           typename DV::Scalar eps = 0) {
  using Scalar = typename DV::Scalar;
  require_shape(V.cols() == T_all.cols(), "loss_i2tce: feature dim mismatch");
  require_shape(V.rows() == static_cast<Index>(pids.size()), "loss_i2tce: label count mismatch");
  const MatrixX<Scalar> s = scale * V * T_all.transpose();
  const MatrixX<Scalar> q = detail::smoothed_targets<Scalar>(pids, T_all.rows(), eps);
  LossResult<Scalar> ce = detail::soft_cross_entropy<Scalar>(s, q);
  LossResult<Scalar> r;
  r.value = ce.value;
  r.grads.push_back(scale * ce.grads[0] * T_all);
  r.grads.push_back(scale * ce.grads[0].transpose() * V);
  return r;
}

// ---------------------------------------------------------------------------
// Bidirectional anchor / positive / negative objectives
// ---------------------------------------------------------------------------

/// Triplet apn loss. ED: hinge on Euclidean distances; CS: hinge on cosine
/// similarities with the sign arranged so the loss falls as anchors approach
/// positives. grads: {dA, dP, dN}
template <typename DA, typename DP, typename DN>
LossResult<typename DA::Scalar> loss_apn_triplet(const Eigen::MatrixBase<DA>& A,
                                                 const Eigen::MatrixBase<DP>& P,
                                                 const Eigen::MatrixBase<DN>& N,
                                                 typename DA::Scalar margin,
                                                 ApnVariant variant) {
  using Scalar = typename DA::Scalar;
  require_shape(A.rows() == P.rows() && A.rows() == N.rows() && A.cols() == P.cols() &&
                    A.cols() == N.cols(),
                "loss_apn_triplet: shape mismatch");
  require_shape(A.rows() > 0, "loss_apn_triplet: empty batch");
  if (variant != ApnVariant::ED && variant != ApnVariant::CS)
    throw ConfigError("loss_apn_triplet: variant must be ED or CS");
  const Index b = A.rows();
  LossResult<Scalar> r;
  MatrixX<Scalar> ga = MatrixX<Scalar>::Zero(b, A.cols());
  MatrixX<Scalar> gp = ga;
  MatrixX<Scalar> gn = ga;
  Scalar total(0);
  for (Index i = 0; i < b; ++i) {
    const RowVectorX<Scalar> a = A.row(i);
    const RowVectorX<Scalar> p = P.row(i);
    const RowVectorX<Scalar> n = N.row(i);
    if (variant == ApnVariant::ED) {
      const Scalar dp = (a - p).norm();
      const Scalar dn = (a - n).norm();
      const Scalar h = dp - dn + margin;
      if (h <= Scalar(0)) continue;
      total += h;
      if (dp > Scalar(0)) {
        const RowVectorX<Scalar> u = (a - p) / dp;
        ga.row(i) += u;
        gp.row(i) -= u;
      }
      if (dn > Scalar(0)) {
        const RowVectorX<Scalar> u = (a - n) / dn;
        ga.row(i) -= u;
        gn.row(i) += u;
      }
    } else {
      const Scalar na = a.norm();
      const Scalar np = p.norm();
      const Scalar nn = n.norm();
      require_shape(na > Scalar(0) && np > Scalar(0) && nn > Scalar(0),
                    "loss_apn_triplet: zero vector in cosine variant");
      const Scalar cp = a.dot(p) / (na * np);
      const Scalar cn = a.dot(n) / (na * nn);
      const Scalar h = cn - cp + margin;
      if (h <= Scalar(0)) continue;
      total += h;
      // d cos(x, y) / dx = y / (|x||y|) - cos(x, y) x / |x|^2
      ga.row(i) += n / (na * nn) - cn * a / (na * na);
      gn.row(i) += a / (na * nn) - cn * n / (nn * nn);
      ga.row(i) -= p / (na * np) - cp * a / (na * na);
      gp.row(i) -= a / (na * np) - cp * p / (np * np);
    }
  }
  r.value = total / Scalar(b);
  r.grads.push_back(ga / Scalar(b));
  r.grads.push_back(gp / Scalar(b));
  r.grads.push_back(gn / Scalar(b));
  return r;
}

/// Contrastive apn loss. The candidate set is the per-sample positives
/// (P_star[pid_to_row[i]], first B rows) followed by all negatives; anchor i
/// targets candidate i. grads: {dA, dP_star, dN_star}
template <typename DA, typename DP, typename DN>
LossResult<typename DA::Scalar> loss_apn_contrastive(const Eigen::MatrixBase<DA>& A,
                                                     const Eigen::MatrixBase<DP>& P_star,
                                                     const Eigen::MatrixBase<DN>& N_star,
                                                     const std::vector<int>& pid_to_row,
                                                     typename DA::Scalar scale) {
  using Scalar = typename DA::Scalar;
  const Index b = A.rows();
  const Index mu = N_star.rows();
  if (mu == 0) throw ShapeError("loss_apn_contrastive: empty negative set");
  require_shape(P_star.rows() == mu, "loss_apn_contrastive: positives/negatives misaligned");
  require_shape(static_cast<Index>(pid_to_row.size()) == b, "loss_apn_contrastive: row map size");
  require_shape(A.cols() == P_star.cols() && A.cols() == N_star.cols(),
                "loss_apn_contrastive: feature dim mismatch");
  MatrixX<Scalar> cand(b + mu, A.cols());
  for (Index i = 0; i < b; ++i) {
    const int row = pid_to_row[static_cast<std::size_t>(i)];
    require_shape(row >= 0 && row < mu, "loss_apn_contrastive: row map out of range");
    cand.row(i) = P_star.row(row);
  }
  cand.bottomRows(mu) = N_star;
  const MatrixX<Scalar> s = scale * A * cand.transpose();
  const VectorX<Scalar> lse = detail::row_logsumexp<Scalar>(s);
  LossResult<Scalar> r;
  r.value = (lse - s.leftCols(b).diagonal()).sum() / Scalar(b);
  MatrixX<Scalar> ds = detail::row_softmax<Scalar>(s);
  ds.leftCols(b).diagonal().array() -= Scalar(1);
  ds /= Scalar(b);
  const MatrixX<Scalar> dcand = scale * ds.transpose() * A;
  MatrixX<Scalar> dp = MatrixX<Scalar>::Zero(mu, A.cols());
  for (Index i = 0; i < b; ++i) dp.row(pid_to_row[static_cast<std::size_t>(i)]) += dcand.row(i);
  r.grads.push_back(scale * ds * cand);
  r.grads.push_back(std::move(dp));
  r.grads.push_back(dcand.bottomRows(mu));
  return r;
}

/// Fused apn / i2tce loss: cross-entropy over the M_u positive prompts with
/// the negatives appended to the softmax denominator. grads: {dA, dP_star, dN_star}
template <typename DA, typename DP, typename DN>
LossResult<typename DA::Scalar> loss_apnce(const Eigen::MatrixBase<DA>& A,
                                           const Eigen::MatrixBase<DP>& P_star,
                                           const Eigen::MatrixBase<DN>& N_star,
                                           const std::vector<int>& pid_to_row,
                                           typename DA::Scalar scale,
                                           typename DA::Scalar eps = 0) {
  using Scalar = typename DA::Scalar;
  const Index b = A.rows();
  const Index mu = P_star.rows();
  require_shape(mu > 0 && N_star.rows() == mu, "loss_apnce: positives/negatives misaligned");
  require_shape(static_cast<Index>(pid_to_row.size()) == b, "loss_apnce: row map size");
  require_shape(A.cols() == P_star.cols() && A.cols() == N_star.cols(),
                "loss_apnce: feature dim mismatch");
  MatrixX<Scalar> cand(2 * mu, A.cols());
  cand.topRows(mu) = P_star;
  cand.bottomRows(mu) = N_star;
  const MatrixX<Scalar> s = scale * A * cand.transpose();
  MatrixX<Scalar> q = MatrixX<Scalar>::Zero(b, 2 * mu);
  q.leftCols(mu) = detail::smoothed_targets<Scalar>(pid_to_row, mu, eps);
  LossResult<Scalar> ce = detail::soft_cross_entropy<Scalar>(s, q);
  const MatrixX<Scalar> dcand = scale * ce.grads[0].transpose() * A;
  LossResult<Scalar> r;
  r.value = ce.value;
  r.grads.push_back(scale * ce.grads[0] * cand);
  r.grads.push_back(dcand.topRows(mu));
  r.grads.push_back(dcand.bottomRows(mu));
  return r;
}

// ---------------------------------------------------------------------------
// Stage compositions
// ---------------------------------------------------------------------------

/// Prompt-stage objective: i2t + t2i + alpha * domain. The domain logits are
/// whatever the caller routed through the classifier (reversed or not); this
/// function is the plain sum. grads: {dV, dT_ids, dDomainLogits}
template <typename Scalar>
LossResult<Scalar> loss_stage2(const MatrixX<Scalar>& V, const MatrixX<Scalar>& T_ids,
                               const BatchLabels& labels, const MatrixX<Scalar>& domain_logits,
                               const std::vector<int>& domain_classes, const LossWeights& w,
                               Scalar scale) {
  MatrixX<Scalar> t_batch(V.rows(), T_ids.cols());
  for (Index i = 0; i < V.rows(); ++i)
    t_batch.row(i) = T_ids.row(labels.unique_row[static_cast<std::size_t>(i)]);
  const auto i2t = loss_i2t(V, t_batch, scale);
  const auto t2i = loss_t2i(V, T_ids, labels, scale);
  const auto dom = loss_domain(domain_logits, domain_classes);
  const Scalar alpha(w.alpha);
  LossResult<Scalar> r;
  r.value = i2t.value + t2i.value + alpha * dom.value;
  MatrixX<Scalar> dt = t2i.grads[1];
  for (Index i = 0; i < V.rows(); ++i)
    dt.row(labels.unique_row[static_cast<std::size_t>(i)]) += i2t.grads[1].row(i);
  r.grads.push_back(i2t.grads[0] + t2i.grads[0]);
  r.grads.push_back(std::move(dt));
  r.grads.push_back(alpha * dom.grads[0]);
  return r;
}

/// Initial-stage objective: ID loss + batch-hard triplet. grads: {dLogits, dV}
template <typename Scalar>
LossResult<Scalar> loss_stage_initial(const MatrixX<Scalar>& id_logits, const MatrixX<Scalar>& V,
                                      const std::vector<int>& pids, const LossWeights& w) {
  const auto id = loss_id(id_logits, pids, Scalar(w.smoothing_eps));
  const auto tri = loss_triplet(V, pids, Scalar(w.margin));
  LossResult<Scalar> r;
  r.value = id.value + tri.value;
  r.grads.push_back(id.grads[0]);
  r.grads.push_back(tri.grads[0]);
  return r;
}

/// Inputs of the fine-tune objective. pos_star / neg_star hold one row per
/// labels.unique_pids entry; T_all one invariant prompt per training pid.
template <typename Scalar>
struct Stage3Inputs {
  MatrixX<Scalar> id_logits;
  MatrixX<Scalar> V;
  MatrixX<Scalar> T_all;
  MatrixX<Scalar> pos_star;
  MatrixX<Scalar> neg_star;
};

/// Per-term values of the fine-tune objective, useful for logging.
template <typename Scalar>
struct Stage3Terms {
  Scalar id{}, tri{}, i2tce{}, apn{};
};

/// Fine-tune objective: id + tri + (1-beta) i2tce + beta apn, or
/// id + tri + apnce for the fused variant.
/// grads: {dLogits, dV, dT_all, dPosStar, dNegStar}
template <typename Scalar>
LossResult<Scalar> loss_stage3(const Stage3Inputs<Scalar>& in, const BatchLabels& labels,
                               const LossWeights& w, Scalar scale,
                               Stage3Terms<Scalar>* terms = nullptr) {
  const Index b = in.V.rows();
  const auto id = loss_id(in.id_logits, labels.pids, Scalar(w.smoothing_eps));
  const auto tri = loss_triplet(in.V, labels.pids, Scalar(w.margin));
  LossResult<Scalar> r;
  r.grads.push_back(id.grads[0]);
  r.grads.push_back(tri.grads[0]);
  r.grads.push_back(MatrixX<Scalar>::Zero(in.T_all.rows(), in.T_all.cols()));
  r.grads.push_back(MatrixX<Scalar>::Zero(in.pos_star.rows(), in.pos_star.cols()));
  r.grads.push_back(MatrixX<Scalar>::Zero(in.neg_star.rows(), in.neg_star.cols()));
  Stage3Terms<Scalar> t;
  t.id = id.value;
  t.tri = tri.value;

  if (w.apn_variant == ApnVariant::Apnce) {
    const auto fused = loss_apnce(in.V, in.pos_star, in.neg_star, labels.unique_row, scale,
                                  Scalar(w.i2tce_smoothing));
    t.apn = fused.value;
    r.value = id.value + tri.value + fused.value;
    r.grads[1] += fused.grads[0];
    r.grads[3] += fused.grads[1];
    r.grads[4] += fused.grads[2];
  } else {
    const Scalar beta(w.beta);
    const auto ce = loss_i2tce(in.V, in.T_all, labels.pids, scale, Scalar(w.i2tce_smoothing));
    LossResult<Scalar> apn;
    if (w.apn_variant == ApnVariant::Contrastive) {
      apn = loss_apn_contrastive(in.V, in.pos_star, in.neg_star, labels.unique_row, scale);
    } else {
      MatrixX<Scalar> p(b, in.V.cols());
      MatrixX<Scalar> n(b, in.V.cols());
      for (Index i = 0; i < b; ++i) {
        p.row(i) = in.pos_star.row(labels.unique_row[static_cast<std::size_t>(i)]);
        n.row(i) = in.neg_star.row(labels.unique_row[static_cast<std::size_t>(i)]);
      }
      LossResult<Scalar> per_sample = loss_apn_triplet(in.V, p, n, Scalar(w.margin), w.apn_variant);
      apn.value = per_sample.value;
      apn.grads.push_back(per_sample.grads[0]);
      apn.grads.push_back(MatrixX<Scalar>::Zero(in.pos_star.rows(), in.V.cols()));
      apn.grads.push_back(MatrixX<Scalar>::Zero(in.neg_star.rows(), in.V.cols()));
      for (Index i = 0; i < b; ++i) {
        const int row = labels.unique_row[static_cast<std::size_t>(i)];
        apn.grads[1].row(row) += per_sample.grads[1].row(i);
        apn.grads[2].row(row) += per_sample.grads[2].row(i);
      }
    }
    t.i2tce = ce.value;
    t.apn = apn.value;
    r.value = id.value + tri.value + (Scalar(1) - beta) * ce.value + beta * apn.value;
    r.grads[1] += (Scalar(1) - beta) * ce.grads[0] + beta * apn.grads[0];
    r.grads[2] += (Scalar(1) - beta) * ce.grads[1];
    r.grads[3] += beta * apn.grads[1];
    r.grads[4] += beta * apn.grads[2];
  }
  if (terms) *terms = t;
  return r;
}

}  // namespace fgdi::losses
