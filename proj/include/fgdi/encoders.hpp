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

// Miniature dual encoder sharing one embedding space.
//
// Image tower: 4x4 patch embedding, two ReLU layers, linear projection.
// Text tower: token + positional embeddings, pre-norm self-attention blocks,
// pooled at the final token, linear projection. Both towers emit rows of
// unit L2 norm.

#include "fgdi/autodiff.hpp"
#include "fgdi/common.hpp"
#include "fgdi/synthdata.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fgdi::enc {

struct ModelDims {
  synth::ImageGeometry geometry;
  int patch = 4;
  int patch_embed = 8;
  int hidden1 = 128;
  int hidden2 = 64;
  int embed_dim = 32;
  int token_dim = 32;
  int text_blocks = 2;
  int mlp_ratio = 2;
  int id_tokens_per_pid = 4;  // M
  int domain_tokens = 1;      // N
  int num_pids = 0;
  int num_domains = 0;
  double inv_temperature = 14.0;

  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ImageEncoderParams {
  Matrix patch_w, patch_b, w1, b1, w2, b2, proj;

  template <class F>
  void visit(F&& f) {
    f("patch_w", patch_w); f("patch_b", patch_b);
    f("w1", w1); f("b1", b1);
    f("w2", w2); f("b2", b2);
    f("proj", proj);
  }
};

struct TextBlockParams {
  Matrix ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;

  template <class F>
  void visit(F&& f) {
    f("ln1_g", ln1_g); f("ln1_b", ln1_b);
    f("wq", wq); f("wk", wk); f("wv", wv); f("wo", wo);
    f("ln2_g", ln2_g); f("ln2_b", ln2_b);
    f("fc1_w", fc1_w); f("fc1_b", fc1_b);
    f("fc2_w", fc2_w); f("fc2_b", fc2_b);
  }
};

struct TextEncoderParams {
  Matrix token_embedding;  // vocabulary x token_dim
  Matrix positional;       // max_len x token_dim
  std::vector<TextBlockParams> blocks;
  Matrix lnf_g, lnf_b, proj;
  bool frozen = true;

  template <class F>
  void visit(F&& f) {
    f("token_embedding", token_embedding);
    f("positional", positional);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string prefix = "block" + std::to_string(i) + ".";
      blocks[i].visit([&](const char* n, Matrix& m) { f((prefix + n).c_str(), m); });
    }
    f("lnf_g", lnf_g); f("lnf_b", lnf_b);
    f("proj", proj);
  }
};

/// Learnable prompt tokens. Row pid*M + m of id_tokens is token m of pid;
/// row d*N + n of domain_tokens is token n of domain class d.
struct PromptBank {
  Matrix id_tokens;
  Matrix domain_tokens;
  int tokens_per_pid = 4;
  int tokens_per_domain = 1;

  int num_pids() const { return static_cast<int>(id_tokens.rows()) / tokens_per_pid; }
  int num_domains() const { return static_cast<int>(domain_tokens.rows()) / tokens_per_domain; }
};

/// Single affine map, used for the domain classifier and the ID head.
struct LinearParams {
  Matrix w;  // in x out
  Matrix b;  // 1 x out

  template <class F>
  void visit(F&& f) {
    f("w", w); f("b", b);
  }
};

struct GrlConfig {
  double lambda = 1.0;
};

// ---------------------------------------------------------------------------
// Prompt template
// ---------------------------------------------------------------------------

/// Fixed word list of the toy tokenizer; index 0 is the padding token.
const std::vector<std::string>& vocabulary();
int token_id(const std::string& word);

/// Rows into the stacked token source table
/// [vocabulary embeddings; id_tokens; domain_tokens].
struct Prompt {
  std::vector<int> rows;
  int learnable = 0;
  int length() const { return static_cast<int>(rows.size()); }
};

/// "a photo of a [X]1..[X]M person ." or, with a domain,
/// "a photo of a [X]1..[X]M person from [D]1..[D]N dataset ."
Prompt build_prompt(const PromptBank& bank, int pid, std::optional<int> domain);

/// Longest prompt the template can produce for the bank's M and N.
int max_prompt_length(const PromptBank& bank);

/// Token embeddings of a prompt, one row per position.
Matrix prompt_embeddings(const Prompt& prompt, const TextEncoderParams& text,
                         const PromptBank& bank);

// ---------------------------------------------------------------------------
// Graph construction
// ---------------------------------------------------------------------------

/// Places parameters on a tape and remembers which ones are trainable.
class Binder {
 public:
  struct Entry {
    std::string name;
    ad::Var var;
    bool trainable = false;
  };

  explicit Binder(ad::Tape& tape) : tape_(tape) {}
  ad::Var bind(const std::string& name, const Matrix& value, bool trainable);
  ad::Tape& tape() { return tape_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  ad::Tape& tape_;
  std::vector<Entry> entries_;
};

struct ImageGraph {
  ad::Var patch_w, patch_b, w1, b1, w2, b2, proj;
};
struct TextBlockGraph {
  ad::Var ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
};
struct TextGraph {
  ad::Var positional;
  std::vector<TextBlockGraph> blocks;
  ad::Var lnf_g, lnf_b, proj;
  ad::Var token_table;  // vocabulary, id tokens and domain tokens stacked
};
struct LinearGraph {
  ad::Var w, b;
};

ImageGraph bind_image(Binder& b, const ImageEncoderParams& p, bool trainable,
                      const std::string& prefix = "image.");
TextGraph bind_text(Binder& b, const TextEncoderParams& p, const PromptBank& bank,
                    bool text_trainable, bool id_tokens_trainable, bool domain_tokens_trainable);
LinearGraph bind_linear(Binder& b, const LinearParams& p, bool trainable, const std::string& prefix);

ad::Var image_forward(const ImageGraph& g, ad::Var images, const ModelDims& dims);
ad::Var text_forward(const TextGraph& g, std::span<const Prompt> prompts);
ad::Var linear_forward(const LinearGraph& g, ad::Var x);

// ---------------------------------------------------------------------------
// Inference entry points
// ---------------------------------------------------------------------------

/// Unit-norm features of a B x (H*W*C) batch. Throws NumericError on
/// non-finite input.
Matrix encode_images(const ImageEncoderParams& params, const Matrix& batch, const ModelDims& dims);

/// Unit-norm features, one row per prompt.
Matrix encode_prompts(const TextEncoderParams& params, const PromptBank& bank,
                      std::span<const Prompt> prompts);

/// Raw logits; softmax lives inside the losses.
Matrix domain_classify(const LinearParams& params, const Matrix& text_features);

// ---------------------------------------------------------------------------
// Initialisation
// ---------------------------------------------------------------------------

ImageEncoderParams init_image_encoder(const ModelDims& dims, std::uint64_t seed);
TextEncoderParams init_text_encoder(const ModelDims& dims, int max_len, std::uint64_t seed);
/// Prompt tokens drawn from N(0, 0.02^2).
PromptBank init_prompt_bank(const ModelDims& dims, std::uint64_t seed);
LinearParams init_linear(int in, int out, double stddev, std::uint64_t seed);

}  // namespace fgdi::enc
