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

#include "fgdi/encoders.hpp"
#include "fgdi/model.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <limits>

namespace fgdi::enc {
namespace {

using test::numeric_gradient;
using test::random_matrix;
using test::relative_error;

// Small enough for finite differences over every parameter.
ModelDims tiny_dims() {
  ModelDims d;
  d.geometry = {8, 4, 2};
  d.patch = 4;
  d.patch_embed = 3;
  d.hidden1 = 6;
  d.hidden2 = 5;
  d.embed_dim = 4;
  d.token_dim = 6;
  d.text_blocks = 2;
  d.mlp_ratio = 2;
  d.num_pids = 3;
  d.num_domains = 2;
  return d;
}

bool find_entry(const Binder& binder, const std::string& name, ad::Var* out) {
  for (const auto& e : binder.entries())
    if (e.name == name) {
      *out = e.var;
      return true;
    }
  return false;
}

TEST(ModelDimsTest, DefaultsAndValidation) {
  ModelDims d;
  EXPECT_EQ(d.id_tokens_per_pid, 4);
  EXPECT_EQ(d.domain_tokens, 1);
  EXPECT_EQ(d.embed_dim, 32);
  EXPECT_DOUBLE_EQ(d.inv_temperature, 14.0);
  d.num_pids = 2;
  d.num_domains = 2;
  EXPECT_NO_THROW(d.validate());
  d.patch = 5;
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(ImageEncoder, UnitNormRowsAndDuplicateRows) {
  ModelDims dims;
  dims.num_pids = 2;
  dims.num_domains = 2;
  const auto params = init_image_encoder(dims, 1);
  std::mt19937_64 rng(1);
  Matrix batch = random_matrix(rng, 5, dims.geometry.size()).cwiseAbs().cwiseMin(1.0);
  batch.row(4) = batch.row(1);
  const Matrix f = encode_images(params, batch, dims);
  ASSERT_EQ(f.rows(), 5);
  ASSERT_EQ(f.cols(), dims.embed_dim);
  for (Index r = 0; r < f.rows(); ++r) EXPECT_NEAR(f.row(r).norm(), 1.0, 1e-6);
  // Blocked matrix products may round differently per row position.
  EXPECT_LT((f.row(4) - f.row(1)).cwiseAbs().maxCoeff(), 1e-14);

  batch(2, 7) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(encode_images(params, batch, dims), NumericError);
}

TEST(ImageEncoder, ParameterGradientsMatchFiniteDifferences) {
  const ModelDims dims = tiny_dims();
  const ImageEncoderParams params = init_image_encoder(dims, 3);
  std::mt19937_64 rng(3);
  const Matrix batch = random_matrix(rng, 3, dims.geometry.size()).cwiseAbs();
  const Matrix weights = random_matrix(rng, 3, dims.embed_dim);

  ad::Tape tape;
  Binder binder(tape);
  const ImageGraph g = bind_image(binder, params, true);
  const ad::Var out = image_forward(g, tape.constant(batch), dims);
  const double value = out.value().cwiseProduct(weights).sum();
  tape.backward(ad::sum(ad::scalar_node(std::vector<ad::Var>{out}, value, {weights})));

  ImageEncoderParams probe = params;
  std::size_t k = 0;
  probe.visit([&](const char* name, Matrix& m) {
    const Matrix original = m;
    auto f = [&](const Matrix& x) {
      m = x;
      const double v = encode_images(probe, batch, dims).cwiseProduct(weights).sum();
      m = original;
      return v;
    };
    const Matrix analytic = tape.grad(binder.entries()[k++].var);
    EXPECT_LT(relative_error(analytic, numeric_gradient(f, original)), 1e-4) << name;
  });
}

TEST(Prompts, TemplateLengthsAndLearnableCounts) {
  ModelDims dims;
  dims.num_pids = 5;
  dims.num_domains = 3;
  const PromptBank bank = init_prompt_bank(dims, 0);
  const Prompt plain = build_prompt(bank, 3, std::nullopt);
  const Prompt full = build_prompt(bank, 3, 1);
  // "a photo of a" + 4 id tokens + "person" + "."
  EXPECT_EQ(plain.length(), 4 + 4 + 2);
  EXPECT_EQ(plain.learnable, 4);
  // ... "person from" + 1 domain token + "dataset ."
  EXPECT_EQ(full.length(), 4 + 4 + 2 + 1 + 2);
  EXPECT_EQ(full.learnable, plain.learnable + 1);
  EXPECT_EQ(max_prompt_length(bank), full.length());
  EXPECT_EQ(full.rows.front(), token_id("a"));
  EXPECT_EQ(full.rows.back(), token_id("."));

  EXPECT_THROW(build_prompt(bank, 5, std::nullopt), ShapeError);
  EXPECT_THROW(build_prompt(bank, 0, 3), ShapeError);
  EXPECT_THROW(build_prompt(bank, -1, std::nullopt), ShapeError);
  EXPECT_THROW(token_id("zebra"), ConfigError);
}

TEST(Prompts, EmbeddingsPickTheRightTables) {
  ModelDims dims;
  dims.num_pids = 4;
  dims.num_domains = 2;
  const PromptBank bank = init_prompt_bank(dims, 1);
  const TextEncoderParams text = init_text_encoder(dims, max_prompt_length(bank), 1);
  const Matrix e = prompt_embeddings(build_prompt(bank, 2, 1), text, bank);
  EXPECT_EQ(e.row(0), text.token_embedding.row(token_id("a")));
  for (int m = 0; m < 4; ++m) EXPECT_EQ(e.row(4 + m), bank.id_tokens.row(2 * 4 + m));
  EXPECT_EQ(e.row(10), bank.domain_tokens.row(1));
}

// Layer norm over small-magnitude token rows is strongly curved, so the text
// tower needs a finer difference step than the default.
constexpr double kTextStep = 1e-6;

class TextEncoderTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dims = tiny_dims();
    bank = init_prompt_bank(dims, 4);
    // Larger tokens than the default init so the features depend visibly on them.
    bank.id_tokens *= 20.0;
    bank.domain_tokens *= 20.0;
    text = init_text_encoder(dims, max_prompt_length(bank), 4);
  }
  ModelDims dims;
  PromptBank bank;
  TextEncoderParams text;
};

TEST_F(TextEncoderTest, UnitNormAndPaddingInvariance) {
  const std::vector<Prompt> alone{build_prompt(bank, 1, std::nullopt)};
  const std::vector<Prompt> mixed{build_prompt(bank, 0, 1), build_prompt(bank, 1, std::nullopt),
                                  build_prompt(bank, 1, std::nullopt)};
  const Matrix a = encode_prompts(text, bank, alone);
  const Matrix b = encode_prompts(text, bank, mixed);
  ASSERT_EQ(a.cols(), dims.embed_dim);
  for (Index r = 0; r < b.rows(); ++r) EXPECT_NEAR(b.row(r).norm(), 1.0, 1e-6);
  EXPECT_LT((a.row(0) - b.row(1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(b.row(1), b.row(2));
  EXPECT_THROW(encode_prompts(text, bank, std::vector<Prompt>{}), ShapeError);
  EXPECT_THROW(encode_prompts(text, bank, std::vector<Prompt>{Prompt{}}), ShapeError);
}

TEST_F(TextEncoderTest, FrozenWeightsGetNoGradientTokensDo) {
  const std::vector<Prompt> prompts{build_prompt(bank, 0, 1), build_prompt(bank, 2, std::nullopt)};
  std::mt19937_64 rng(5);
  const Matrix weights = random_matrix(rng, 2, dims.embed_dim);
  ad::Tape tape;
  Binder binder(tape);
  const TextGraph g = bind_text(binder, text, bank, true, true, true);
  const ad::Var out = text_forward(g, prompts);
  const double value = out.value().cwiseProduct(weights).sum();
  tape.backward(ad::sum(ad::scalar_node(std::vector<ad::Var>{out}, value, {weights})));

  ASSERT_TRUE(text.frozen);
  for (const auto& e : binder.entries()) {
    if (e.name.rfind("text.", 0) == 0) {
      EXPECT_FALSE(e.trainable) << e.name;
      EXPECT_EQ(tape.grad(e.var).cwiseAbs().maxCoeff(), 0.0) << e.name;
    }
  }
  ad::Var ids;
  ASSERT_TRUE(find_entry(binder, "prompt.id_tokens", &ids));
  const Matrix gid = tape.grad(ids);
  EXPECT_GT(gid.topRows(4).cwiseAbs().maxCoeff(), 0.0);        // pid 0
  EXPECT_EQ(gid.middleRows(4, 4).cwiseAbs().maxCoeff(), 0.0);   // pid 1 unused
  EXPECT_GT(gid.bottomRows(4).cwiseAbs().maxCoeff(), 0.0);      // pid 2
}

TEST_F(TextEncoderTest, TokenGradientsMatchFiniteDifferences) {
  const std::vector<Prompt> prompts{build_prompt(bank, 0, 1), build_prompt(bank, 2, std::nullopt),
                                    build_prompt(bank, 1, 0)};
  std::mt19937_64 rng(6);
  const Matrix weights = random_matrix(rng, 3, dims.embed_dim);
  ad::Tape tape;
  Binder binder(tape);
  const TextGraph g = bind_text(binder, text, bank, false, true, true);
  const ad::Var out = text_forward(g, prompts);
  const double value = out.value().cwiseProduct(weights).sum();
  tape.backward(ad::sum(ad::scalar_node(std::vector<ad::Var>{out}, value, {weights})));
  ad::Var ids, doms;
  find_entry(binder, "prompt.id_tokens", &ids);
  find_entry(binder, "prompt.domain_tokens", &doms);

  auto id_loss = [&](const Matrix& x) {
    PromptBank b = bank;
    b.id_tokens = x;
    return encode_prompts(text, b, prompts).cwiseProduct(weights).sum();
  };
  auto dom_loss = [&](const Matrix& x) {
    PromptBank b = bank;
    b.domain_tokens = x;
    return encode_prompts(text, b, prompts).cwiseProduct(weights).sum();
  };
  EXPECT_LT(relative_error(tape.grad(ids), numeric_gradient(id_loss, bank.id_tokens, kTextStep)), 1e-4);
  EXPECT_LT(relative_error(tape.grad(doms), numeric_gradient(dom_loss, bank.domain_tokens, kTextStep)), 1e-4);
}

TEST_F(TextEncoderTest, UnfrozenWeightGradientsMatchFiniteDifferences) {
  text.frozen = false;
  const std::vector<Prompt> prompts{build_prompt(bank, 0, 1), build_prompt(bank, 2, std::nullopt)};
  std::mt19937_64 rng(7);
  const Matrix weights = random_matrix(rng, 2, dims.embed_dim);
  ad::Tape tape;
  Binder binder(tape);
  const TextGraph g = bind_text(binder, text, bank, true, false, false);
  const ad::Var out = text_forward(g, prompts);
  const double value = out.value().cwiseProduct(weights).sum();
  tape.backward(ad::sum(ad::scalar_node(std::vector<ad::Var>{out}, value, {weights})));

  TextEncoderParams probe = text;
  probe.visit([&](const char* name, Matrix& m) {
    ad::Var v;
    ASSERT_TRUE(find_entry(binder, std::string("text.") + name, &v)) << name;
    const Matrix original = m;
    auto f = [&](const Matrix& x) {
      m = x;
      const double r = encode_prompts(probe, bank, prompts).cwiseProduct(weights).sum();
      m = original;
      return r;
    };
    EXPECT_LT(relative_error(tape.grad(v), numeric_gradient(f, original, kTextStep)), 1e-4) << name;
  });
}

TEST_F(TextEncoderTest, PromptBankIsolation) {
  const std::vector<Prompt> prompts{build_prompt(bank, 0, 1), build_prompt(bank, 1, 1),
                                    build_prompt(bank, 2, std::nullopt)};
  const Matrix before = encode_prompts(text, bank, prompts);
  PromptBank changed = bank;
  changed.id_tokens.middleRows(4, 4).array() += 0.5;
  const Matrix after = encode_prompts(text, changed, prompts);
  EXPECT_EQ(before.row(0), after.row(0));
  EXPECT_EQ(before.row(2), after.row(2));
  EXPECT_GT((before.row(1) - after.row(1)).norm(), 0.0);
}

TEST(DomainClassifier, AffineMapAndGradients) {
  LinearParams zero{Matrix::Zero(4, 3), Matrix::Zero(1, 3)};
  std::mt19937_64 rng(8);
  const Matrix feats = random_matrix(rng, 5, 4);
  EXPECT_EQ(domain_classify(zero, feats).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(domain_classify(zero, random_matrix(rng, 2, 5)), ShapeError);

  const LinearParams p{random_matrix(rng, 4, 3), random_matrix(rng, 1, 3)};
  const Matrix weights = random_matrix(rng, 5, 3);
  ad::Tape tape;
  Binder binder(tape);
  const LinearGraph g = bind_linear(binder, p, true, "head.");
  const ad::Var x = tape.parameter(feats);
  const ad::Var out = linear_forward(g, x);
  EXPECT_TRUE(out.value().isApprox(domain_classify(p, feats), 1e-14));
  const double value = out.value().cwiseProduct(weights).sum();
  tape.backward(ad::sum(ad::scalar_node(std::vector<ad::Var>{out}, value, {weights})));
  auto wf = [&](const Matrix& w) { return domain_classify({w, p.b}, feats).cwiseProduct(weights).sum(); };
  auto bf = [&](const Matrix& b) { return domain_classify({p.w, b}, feats).cwiseProduct(weights).sum(); };
  auto xf = [&](const Matrix& f) { return domain_classify(p, f).cwiseProduct(weights).sum(); };
  EXPECT_LT(relative_error(tape.grad(g.w), numeric_gradient(wf, p.w)), 1e-6);
  EXPECT_LT(relative_error(tape.grad(g.b), numeric_gradient(bf, p.b)), 1e-6);
  EXPECT_LT(relative_error(tape.grad(x), numeric_gradient(xf, feats)), 1e-6);
}

TEST(ModelInit, DeterministicAndConsistentDims) {
  ModelDims dims;
  dims.num_pids = 6;
  dims.num_domains = 3;
  Model a = init_model(dims, 9);
  Model b = init_model(dims, 9);
  EXPECT_EQ(a.prompts.id_tokens.rows(), 6 * 4);
  EXPECT_EQ(a.prompts.domain_tokens.rows(), 3);
  EXPECT_EQ(a.domain_head.w.cols(), 3);
  EXPECT_EQ(a.image.proj.cols(), a.text.proj.cols());
  EXPECT_TRUE(a.text.frozen);
  const auto sa = a.snapshot();
  const auto sb = b.snapshot();
  EXPECT_TRUE(changed_parameters(sa, sb).empty());
  b.prompts.id_tokens(0, 0) += 1.0;
  EXPECT_EQ(changed_parameters(sa, b.snapshot()), (std::vector<std::string>{"prompt.id_tokens"}));
}

}  // namespace
}  // namespace fgdi::enc
