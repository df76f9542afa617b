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

#include "loss_cases.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace fgdi::losses {
namespace {

using test::numeric_gradient;
using test::random_matrix;
using test::random_pk_labels;
using test::random_unit_rows;
using test::relative_error;

constexpr double kLn2 = 0.69314718055994530942;

Matrix ones(Index r, Index c) { return Matrix::Ones(r, c); }
Matrix zeros(Index r, Index c) { return Matrix::Zero(r, c); }

// Independent brute-force references, written straight from the loss
// definitions with explicit loops.

double ref_logsumexp(const std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

double ref_t2i(const Matrix& V, const Matrix& T_ids, const BatchLabels& l, double scale) {
  double total = 0.0;
  for (Index y = 0; y < T_ids.rows(); ++y) {
    std::vector<double> s;
    for (Index a = 0; a < V.rows(); ++a) s.push_back(scale * T_ids.row(y).dot(V.row(a)));
    const double lse = ref_logsumexp(s);
    double inner = 0.0;
    int count = 0;
    for (Index p = 0; p < V.rows(); ++p)
      if (l.pids[static_cast<std::size_t>(p)] == l.unique_pids[static_cast<std::size_t>(y)]) {
        inner += s[static_cast<std::size_t>(p)] - lse;
        ++count;
      }
    total += -inner / count;
  }
  return total / static_cast<double>(T_ids.rows());
}

double ref_single_positive(const Matrix& V, const Matrix& T, double scale) {
  // Text-to-image with one positive per row: -mean_y log softmax_col(s)[y,y].
  double total = 0.0;
  for (Index y = 0; y < T.rows(); ++y) {
    std::vector<double> s;
    for (Index a = 0; a < V.rows(); ++a) s.push_back(scale * T.row(y).dot(V.row(a)));
    total += ref_logsumexp(s) - s[static_cast<std::size_t>(y)];
  }
  return total / static_cast<double>(T.rows());
}

double ref_triplet(const Matrix& V, const std::vector<int>& pids, double margin) {
  double total = 0.0;
  for (Index i = 0; i < V.rows(); ++i) {
    double hardest_pos = 0.0, hardest_neg = 1e300;
    for (Index j = 0; j < V.rows(); ++j) {
      const double d = (V.row(i) - V.row(j)).norm();
      if (pids[static_cast<std::size_t>(i)] == pids[static_cast<std::size_t>(j)]) {
        if (j != i) hardest_pos = std::max(hardest_pos, d);
      } else {
        hardest_neg = std::min(hardest_neg, d);
      }
    }
    total += std::max(0.0, hardest_pos - hardest_neg + margin);
  }
  return total / static_cast<double>(V.rows());
}

double ref_ce(const Matrix& logits, const std::vector<int>& cls, double eps) {
  const Index c = logits.cols();
  double total = 0.0;
  for (Index r = 0; r < logits.rows(); ++r) {
    std::vector<double> rowv;
    for (Index k = 0; k < c; ++k) rowv.push_back(logits(r, k));
    const double lse = ref_logsumexp(rowv);
    for (Index k = 0; k < c; ++k) {
      const double q = k == cls[static_cast<std::size_t>(r)] ? 1 - eps : eps / static_cast<double>(c - 1);
      total -= q * (logits(r, k) - lse);
    }
  }
  return total / static_cast<double>(logits.rows());
}

// --- spec examples ------------------------------------------------------------

TEST(LossI2t, HandCaseTwoByTwo) {
  const Matrix V = Matrix::Identity(2, 2) * std::sqrt(2.0);
  const Matrix T = Matrix::Identity(2, 2) * std::sqrt(2.0);
  // s = [[2,0],[0,2]] with scale 1.
  const double expected = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
  EXPECT_NEAR(loss_i2t(V, T, 1.0).value, expected, 1e-15);
  EXPECT_NEAR(expected, 0.12692801104297263, 1e-15);
}

TEST(LossI2t, EqualSimilaritiesGiveLogB) {
  const Matrix V = ones(5, 3);
  EXPECT_NEAR(loss_i2t(V, V, 2.0).value, std::log(5.0), 1e-12);
}

TEST(LossI2t, ShapeMismatchThrows) {
  EXPECT_THROW(loss_i2t(ones(2, 3), ones(3, 3), 1.0), ShapeError);
}

TEST(LossT2i, CollapsesToSinglePositiveWhenEachPidOnce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int b = test::uniform_int(rng, 2, 8);
    std::vector<int> pids(static_cast<std::size_t>(b));
    std::iota(pids.begin(), pids.end(), 0);
    std::shuffle(pids.begin(), pids.end(), rng);
    const auto labels = BatchLabels::from(pids);
    const Matrix V = random_unit_rows(rng, b, 6);
    const Matrix T_ids = random_unit_rows(rng, b, 6);
    Matrix T_batch(b, 6);
    for (int i = 0; i < b; ++i) T_batch.row(i) = T_ids.row(labels.unique_row[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(loss_t2i(V, T_ids, labels, 5.0).value, ref_single_positive(V, T_batch, 5.0), 1e-9);
  }
}

TEST(LossT2i, EqualSimilaritiesGiveLogB) {
  const auto labels = BatchLabels::from({0, 0, 1, 2, 2, 2});
  EXPECT_NEAR(loss_t2i(ones(6, 3), ones(3, 3), labels, 3.0).value, std::log(6.0), 1e-12);
}

TEST(LossT2i, TwoPidsTwoImagesHandCase) {
  // s = T V^T chosen by hand: rows are pids 0 and 1, columns samples.
  const auto labels = BatchLabels::from({0, 1, 0, 1});
  const Matrix V = Matrix::Identity(4, 4);
  Matrix T(2, 4);
  T << 1.0, 0.2, 0.5, -0.3,
       0.1, 0.7, 0.0, 0.9;
  const auto lse = [](double a, double b, double c, double d) {
    return std::log(std::exp(a) + std::exp(b) + std::exp(c) + std::exp(d));
  };
  const double l0 = lse(1.0, 0.2, 0.5, -0.3) - (1.0 + 0.5) / 2;
  const double l1 = lse(0.1, 0.7, 0.0, 0.9) - (0.7 + 0.9) / 2;
  EXPECT_NEAR(loss_t2i(V, T, labels, 1.0).value, (l0 + l1) / 2, 1e-14);
}

TEST(LossDomain, UniformLogitsGiveLogClasses) {
  EXPECT_NEAR(loss_domain(zeros(3, 4), {0, 1, 3}).value, std::log(4.0), 1e-15);
}

TEST(LossDomain, ConfidentTrueClassApproachesZero) {
  Matrix logits = zeros(1, 3);
  logits(0, 2) = 60.0;
  EXPECT_LT(loss_domain(logits, {2}).value, 1e-20);
}

TEST(LossDomain, RandomCaseMatchesReference) {
  std::mt19937_64 rng(4);
  const Matrix logits = random_matrix(rng, 3, 3);
  EXPECT_NEAR(loss_domain(logits, {2, 0, 1}).value, ref_ce(logits, {2, 0, 1}, 0.0), 1e-14);
}

TEST(LossDomain, InvalidClassThrows) {
  EXPECT_THROW(loss_domain(zeros(1, 3), {3}), ShapeError);
  EXPECT_THROW(loss_domain(zeros(1, 3), {-1}), ShapeError);
}

TEST(LossId, SmoothingValues) {
  EXPECT_NEAR(loss_id(zeros(2, 7), {1, 4}, 0.0).value, std::log(7.0), 1e-14);
  EXPECT_NEAR(loss_id(zeros(1, 2), {0}, 0.1).value, kLn2, 1e-15);
  std::mt19937_64 rng(5);
  const Matrix logits = random_matrix(rng, 3, 4);
  EXPECT_NEAR(loss_id(logits, {3, 1, 0}, 0.1).value, ref_ce(logits, {3, 1, 0}, 0.1), 1e-14);
  EXPECT_THROW(loss_id(logits, {3, 1, 4}, 0.1), ShapeError);
}

TEST(LossTriplet, TrivialCases) {
  EXPECT_NEAR(loss_triplet(ones(4, 3), {0, 0, 1, 1}, 0.3).value, 0.3, 1e-15);
  Matrix far(4, 2);
  far << 1, 0, 1, 0, -1, 0, -1, 0;
  EXPECT_EQ(loss_triplet(far, {0, 0, 1, 1}, 0.3).value, 0.0);
  EXPECT_THROW(loss_triplet(ones(3, 2), {1, 1, 1}, 0.3), ShapeError);
}

TEST(LossTriplet, FourPointHandCase) {
  Matrix V(4, 2);
  V << 0.0, 0.0,
       1.0, 0.0,
       0.0, 0.5,
       2.0, 0.0;
  const std::vector<int> pids{0, 0, 1, 1};
  // Anchor 0: pos d=1, neg min(0.5, 2)=0.5 -> 0.8. Anchor 1: pos 1, neg min(sqrt(1.25),1)=1 -> 0.3.
  // Anchor 2: pos sqrt(4.25), neg min(0.5, sqrt(1.25)) = 0.5 -> sqrt(4.25) - 0.2.
  // Anchor 3: pos sqrt(4.25), neg min(2, 1) = 1 -> sqrt(4.25) - 0.7.
  const double expected = (0.8 + 0.3 + (std::sqrt(4.25) - 0.2) + (std::sqrt(4.25) - 0.7)) / 4;
  EXPECT_NEAR(loss_triplet(V, pids, 0.3).value, expected, 1e-14);
  EXPECT_NEAR(ref_triplet(V, pids, 0.3), expected, 1e-14);
}

TEST(LossI2tce, UniformAndHandCases) {
  EXPECT_NEAR(loss_i2tce(ones(3, 2), ones(5, 2), {0, 4, 2}, 2.0).value, std::log(5.0), 1e-13);
  Matrix V(1, 2), T(2, 2);
  V << 1, 0;
  T << 1, 0, 0, 1;
  EXPECT_NEAR(loss_i2tce(V, T, {0}, 3.0).value, std::log(1 + std::exp(-3.0)), 1e-15);
}

TEST(LossApnTriplet, HandCases) {
  Matrix a(1, 2), p(1, 2), n(1, 2);
  a << 1, 0;
  p << 1, 0;
  n << 0, 1;
  EXPECT_EQ(loss_apn_triplet(a, p, n, 0.3, ApnVariant::ED).value, 0.0);
  EXPECT_EQ(loss_apn_triplet(a, p, n, 0.3, ApnVariant::CS).value, 0.0);
  // n close to a: ED hinge active with value 0 - |a-n| + m.
  Matrix near(1, 2);
  near << 1, 0.1;
  EXPECT_NEAR(loss_apn_triplet(a, p, near, 0.3, ApnVariant::ED).value, 0.3 - 0.1, 1e-15);
  EXPECT_THROW(loss_apn_triplet(a, p, n, 0.3, ApnVariant::Contrastive), ConfigError);
}

TEST(LossApnTriplet, DecreasesAsAnchorApproachesPositive) {
  Matrix p(1, 2), n(1, 2);
  p << 1, 0;
  n << 0, 1;
  for (auto variant : {ApnVariant::ED, ApnVariant::CS}) {
    double prev = 1e9;
    for (double t = 0.0; t <= 1.0; t += 0.1) {
      Matrix a(1, 2);
      a << t, 1 - t;
      a.row(0).normalize();
      const double v = loss_apn_triplet(a, p, n, 0.3, variant).value;
      EXPECT_LE(v, prev + 1e-15);
      prev = v;
    }
  }
}

TEST(LossApnContrastive, Cases) {
  const Matrix A = ones(2, 3);
  EXPECT_NEAR(loss_apn_contrastive(A, ones(2, 3), ones(2, 3), {0, 1}, 2.0).value,
              std::log(4.0), 1e-13);
  EXPECT_THROW(loss_apn_contrastive(A, Matrix(0, 3), Matrix(0, 3), {0, 0}, 2.0), ShapeError);

  std::mt19937_64 rng(6);
  const Matrix a = random_unit_rows(rng, 3, 4), ps = random_unit_rows(rng, 2, 4), ns = random_unit_rows(rng, 2, 4);
  const std::vector<int> row{1, 0, 1};
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> s;
    for (int j = 0; j < 3; ++j) s.push_back(5.0 * a.row(i).dot(ps.row(row[static_cast<std::size_t>(j)])));
    for (int j = 0; j < 2; ++j) s.push_back(5.0 * a.row(i).dot(ns.row(j)));
    expected += ref_logsumexp(s) - s[static_cast<std::size_t>(i)];
  }
  EXPECT_NEAR(loss_apn_contrastive(a, ps, ns, row, 5.0).value, expected / 3, 1e-13);
}

TEST(LossApnce, DuplicatedNegativesAddLogTwo) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix a = random_unit_rows(rng, 6, 5);
    const Matrix ps = random_unit_rows(rng, 3, 5);
    const std::vector<int> row{0, 1, 2, 0, 1, 2};
    const double with_dupes = loss_apnce(a, ps, ps, row, 7.0).value;
    const double positives_only = loss_i2tce(a, ps, row, 7.0).value;
    EXPECT_NEAR(with_dupes, positives_only + kLn2, 1e-9);
    const Matrix ns = random_unit_rows(rng, 3, 5);
    EXPECT_GE(loss_apnce(a, ps, ns, row, 7.0).value, positives_only);
  }
  EXPECT_THROW(loss_apnce(ones(2, 2), ones(2, 2), ones(1, 2), {0, 1}, 1.0),
               ShapeError);
}

TEST(LossApnce, RandomInstanceMatchesBruteForce) {
  std::mt19937_64 rng(8);
  const Matrix a = random_unit_rows(rng, 4, 3), ps = random_unit_rows(rng, 2, 3), ns = random_unit_rows(rng, 2, 3);
  const std::vector<int> row{1, 1, 0, 0};
  double expected = 0.0;
  for (int i = 0; i < 4; ++i) {
    std::vector<double> s;
    for (int j = 0; j < 2; ++j) s.push_back(4.0 * a.row(i).dot(ps.row(j)));
    for (int j = 0; j < 2; ++j) s.push_back(4.0 * a.row(i).dot(ns.row(j)));
    expected += ref_logsumexp(s) - s[static_cast<std::size_t>(row[static_cast<std::size_t>(i)])];
  }
  EXPECT_NEAR(loss_apnce(a, ps, ns, row, 4.0).value, expected / 4, 1e-13);
}

TEST(LossStage2, AlphaZeroIsPairSum) {
  std::mt19937_64 rng(9);
  const auto labels = BatchLabels::from({3, 1, 3, 1});
  const Matrix V = random_unit_rows(rng, 4, 5), T = random_unit_rows(rng, 2, 5);
  const Matrix logits = random_matrix(rng, 2, 3);
  LossWeights w;
  w.alpha = 0.0;
  Matrix tb(4, 5);
  for (int i = 0; i < 4; ++i) tb.row(i) = T.row(labels.unique_row[static_cast<std::size_t>(i)]);
  const double expected = loss_i2t(V, tb, 14.0).value + loss_t2i(V, T, labels, 14.0).value;
  EXPECT_EQ(loss_stage2<double>(V, T, labels, logits, {0, 2}, w, 14.0).value, expected);
}

TEST(LossStageInitial, IdenticalFeaturesUniformLogits) {
  LossWeights w;
  w.smoothing_eps = 0.0;
  const auto r = loss_stage_initial<double>(zeros(4, 9), ones(4, 3), {0, 0, 1, 1}, w);
  EXPECT_NEAR(r.value, w.margin + std::log(9.0), 1e-14);
}

TEST(LossStage3, BetaZeroIsBitwiseBaselineComposition) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pids = random_pk_labels(rng, 3, 2, 6);
    const auto labels = BatchLabels::from(pids);
    Stage3Inputs<double> in;
    in.id_logits = random_matrix(rng, 6, 6);
    in.V = random_unit_rows(rng, 6, 4);
    in.T_all = random_unit_rows(rng, 6, 4);
    in.pos_star = random_unit_rows(rng, 3, 4);
    in.neg_star = random_unit_rows(rng, 3, 4);
    LossWeights w;
    w.beta = 0.0;
    for (auto variant : {ApnVariant::ED, ApnVariant::CS, ApnVariant::Contrastive}) {
      w.apn_variant = variant;
      const auto r = loss_stage3(in, labels, w, 14.0);
      const double baseline = loss_id(in.id_logits, pids, w.smoothing_eps).value +
                              loss_triplet(in.V, pids, w.margin).value +
                              loss_i2tce(in.V, in.T_all, pids, 14.0).value;
      EXPECT_EQ(r.value, baseline);
    }
  }
}

TEST(LossStage3, BetaOneDropsI2tce) {
  std::mt19937_64 rng(11);
  const auto pids = random_pk_labels(rng, 2, 2, 4);
  const auto labels = BatchLabels::from(pids);
  Stage3Inputs<double> in{random_matrix(rng, 4, 4), random_unit_rows(rng, 4, 3), random_unit_rows(rng, 4, 3),
                          random_unit_rows(rng, 2, 3), random_unit_rows(rng, 2, 3)};
  LossWeights w;
  w.beta = 1.0;
  const auto a = loss_stage3(in, labels, w, 14.0);
  in.T_all = random_unit_rows(rng, 4, 3);
  const auto b = loss_stage3(in, labels, w, 14.0);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(b.grads[2].cwiseAbs().maxCoeff(), 0.0);
}

TEST(LossStage3, FusedVariantReplacesWeightedTerms) {
  std::mt19937_64 rng(12);
  const auto pids = random_pk_labels(rng, 2, 3, 5);
  const auto labels = BatchLabels::from(pids);
  Stage3Inputs<double> in{random_matrix(rng, 6, 5), random_unit_rows(rng, 6, 3), random_unit_rows(rng, 5, 3),
                          random_unit_rows(rng, 2, 3), random_unit_rows(rng, 2, 3)};
  LossWeights w;
  w.apn_variant = ApnVariant::Apnce;
  const double expected = loss_id(in.id_logits, pids, w.smoothing_eps).value +
                          loss_triplet(in.V, pids, w.margin).value +
                          loss_apnce(in.V, in.pos_star, in.neg_star, labels.unique_row, 14.0).value;
  EXPECT_NEAR(loss_stage3(in, labels, w, 14.0).value, expected, 1e-14);
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.beta = 1.5;
  EXPECT_THROW(w.validate(), ConfigError);
  w = {};
  w.alpha = -1;
  EXPECT_THROW(w.validate(), ConfigError);
  EXPECT_EQ(apn_variant_from_string("CONTRASTIVE"), ApnVariant::Contrastive);
  EXPECT_THROW(apn_variant_from_string("xyz"), ConfigError);
}

TEST(BatchLabels, PositiveSets) {
  const auto l = BatchLabels::from({7, 2, 7, 5});
  EXPECT_EQ(l.unique_pids, (std::vector<int>{2, 5, 7}));
  EXPECT_EQ(l.unique_row, (std::vector<int>{2, 0, 2, 1}));
  EXPECT_EQ(l.positives[2], (std::vector<int>{0, 2}));
}

// --- gradients against finite differences -----------------------------------

using test_cases::max_grad_error;
using test_cases::random_cases;

TEST(LossGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int instance = 0; instance < 20; ++instance)
    for (const auto& c : random_cases(rng)) EXPECT_LT(max_grad_error(c), 1e-4) << c.name << " #" << instance;
}

// --- properties ------------------------------------------------------------

TEST(LossProperties, NonNegativeAndPermutationInvariant) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pids = random_pk_labels(rng, 3, 2, 5);
    const Matrix V = random_unit_rows(rng, 6, 4);
    const Matrix T_all = random_unit_rows(rng, 5, 4);
    const Matrix logits = random_matrix(rng, 6, 5);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix Vp(6, 4), Lp(6, 5);
    std::vector<int> pp(6);
    for (int i = 0; i < 6; ++i) {
      Vp.row(i) = V.row(perm[static_cast<std::size_t>(i)]);
      Lp.row(i) = logits.row(perm[static_cast<std::size_t>(i)]);
      pp[static_cast<std::size_t>(i)] = pids[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    const auto la = BatchLabels::from(pids), lb = BatchLabels::from(pp);
    const Matrix T_ids = random_unit_rows(rng, la.num_unique(), 4);

    const double tri = loss_triplet(V, pids, 0.3).value;
    EXPECT_GE(tri, 0.0);
    EXPECT_NEAR(tri, loss_triplet(Vp, pp, 0.3).value, 1e-12);
    EXPECT_NEAR(tri, ref_triplet(V, pids, 0.3), 1e-12);
    const double id = loss_id(logits, pids, 0.1).value;
    EXPECT_GE(id, 0.0);
    EXPECT_NEAR(id, loss_id(Lp, pp, 0.1).value, 1e-12);
    const double ce = loss_i2tce(V, T_all, pids, 14.0).value;
    EXPECT_NEAR(ce, loss_i2tce(Vp, T_all, pp, 14.0).value, 1e-12);
    const double t2i = loss_t2i(V, T_ids, la, 14.0).value;
    EXPECT_GE(t2i, 0.0);
    EXPECT_NEAR(t2i, loss_t2i(Vp, T_ids, lb, 14.0).value, 1e-12);
    EXPECT_NEAR(t2i, ref_t2i(V, T_ids, la, 14.0), 1e-12);
  }
}

TEST(LossProperties, HingeInactiveGivesZeroAndZeroGradient) {
  Matrix a(2, 2), p(2, 2), n(2, 2);
  a << 1, 0, 0, 1;
  p = a;
  n << -1, 0, 0, -1;
  for (auto variant : {ApnVariant::ED, ApnVariant::CS}) {
    const auto r = loss_apn_triplet(a, p, n, 0.3, variant);
    EXPECT_EQ(r.value, 0.0);
    for (const auto& g : r.grads) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
  }
}

}  // namespace
}  // namespace fgdi::losses
