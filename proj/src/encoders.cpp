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

#include <cmath>
#include <random>
#include <unordered_map>

namespace fgdi::enc {

void ModelDims::validate() const {
  if (patch < 1 || geometry.height % patch != 0 || geometry.width % patch != 0)
    throw ConfigError("model.patch must tile the image");
  if (patch_embed < 1 || hidden1 < 1 || hidden2 < 1 || embed_dim < 1 || token_dim < 1)
    throw ConfigError("model dimensions must be positive");
  if (text_blocks < 0 || mlp_ratio < 1) throw ConfigError("invalid text tower shape");
  if (id_tokens_per_pid < 1 || domain_tokens < 1)
    throw ConfigError("prompt token counts must be >= 1");
  if (num_pids < 1 || num_domains < 1) throw ConfigError("model needs >= 1 pid and domain");
  if (!(inv_temperature > 0.0)) throw ConfigError("inverse temperature must be > 0");
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "<pad>",   "a",      "photo",   "of",     "person",  "from",    "dataset", ".",
      "the",     "picture", "image",  "man",    "woman",   "walking", "standing", "in",
      "street",  "camera", "view",    "front",  "back",    "side",    "wearing", "with",
      "shirt",   "pants",  "jacket",  "bag",    "red",     "blue",    "green",   "black",
      "white",   "gray",   "yellow",  "dark",   "light",   "long",    "short",   "hair",
      "shoes",   "coat",   "dress",   "skirt",  "hat",     "carrying", "holding", "near",
      "outdoor", "indoor", "day",     "night",  "crowd",   "alone",   "left",    "right",
      "top",     "bottom", "striped", "plain",  "bright",  "blurry",  "low",     "high"};
  return words;
}

int token_id(const std::string& word) {
  static const std::unordered_map<std::string, int> index = [] {
    std::unordered_map<std::string, int> m;
    const auto& v = vocabulary();
    for (std::size_t i = 0; i < v.size(); ++i) m.emplace(v[i], static_cast<int>(i));
    return m;
  }();
  auto it = index.find(word);
  if (it == index.end()) throw ConfigError("word not in vocabulary: " + word);
  return it->second;
}

Prompt build_prompt(const PromptBank& bank, int pid, std::optional<int> domain) {
  if (pid < 0 || pid >= bank.num_pids())
    throw ShapeError("build_prompt: pid " + std::to_string(pid) + " out of range");
  if (domain && (*domain < 0 || *domain >= bank.num_domains()))
    throw ShapeError("build_prompt: domain " + std::to_string(*domain) + " out of range");
  const int vocab = static_cast<int>(vocabulary().size());
  const int id_base = vocab;
  const int dom_base = vocab + static_cast<int>(bank.id_tokens.rows());
  Prompt p;
  for (const char* w : {"a", "photo", "of", "a"}) p.rows.push_back(token_id(w));
  for (int m = 0; m < bank.tokens_per_pid; ++m) p.rows.push_back(id_base + pid * bank.tokens_per_pid + m);
  p.learnable = bank.tokens_per_pid;
  p.rows.push_back(token_id("person"));
  if (domain) {
    p.rows.push_back(token_id("from"));
    for (int n = 0; n < bank.tokens_per_domain; ++n)
      p.rows.push_back(dom_base + *domain * bank.tokens_per_domain + n);
    p.learnable += bank.tokens_per_domain;
    p.rows.push_back(token_id("dataset"));
  }
  p.rows.push_back(token_id("."));
  return p;
}

int max_prompt_length(const PromptBank& bank) {
  return 4 + bank.tokens_per_pid + 2 + bank.tokens_per_domain + 2;
}

Matrix prompt_embeddings(const Prompt& prompt, const TextEncoderParams& text,
                         const PromptBank& bank) {
  const Index vocab = text.token_embedding.rows();
  Matrix out(prompt.length(), text.token_embedding.cols());
  for (int i = 0; i < prompt.length(); ++i) {
    Index r = prompt.rows[static_cast<std::size_t>(i)];
    if (r < vocab) {
      out.row(i) = text.token_embedding.row(r);
    } else if ((r -= vocab) < bank.id_tokens.rows()) {
      out.row(i) = bank.id_tokens.row(r);
    } else {
      out.row(i) = bank.domain_tokens.row(r - bank.id_tokens.rows());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ad::Var Binder::bind(const std::string& name, const Matrix& value, bool trainable) {
  ad::Var v = trainable ? tape_.parameter(value) : tape_.constant(value);
  entries_.push_back(Entry{name, v, trainable});
  return v;
}

ImageGraph bind_image(Binder& b, const ImageEncoderParams& p, bool trainable,
                      const std::string& prefix) {
  ImageGraph g;
  g.patch_w = b.bind(prefix + "patch_w", p.patch_w, trainable);
  g.patch_b = b.bind(prefix + "patch_b", p.patch_b, trainable);
  g.w1 = b.bind(prefix + "w1", p.w1, trainable);
  g.b1 = b.bind(prefix + "b1", p.b1, trainable);
  g.w2 = b.bind(prefix + "w2", p.w2, trainable);
  g.b2 = b.bind(prefix + "b2", p.b2, trainable);
  g.proj = b.bind(prefix + "proj", p.proj, trainable);
  return g;
}

TextGraph bind_text(Binder& b, const TextEncoderParams& p, const PromptBank& bank,
                    bool text_trainable, bool id_tokens_trainable, bool domain_tokens_trainable) {
  const bool t = text_trainable && !p.frozen;
  TextGraph g;
  const ad::Var vocab = b.bind("text.token_embedding", p.token_embedding, t);
  const ad::Var ids = b.bind("prompt.id_tokens", bank.id_tokens, id_tokens_trainable);
  const ad::Var doms = b.bind("prompt.domain_tokens", bank.domain_tokens, domain_tokens_trainable);
  const ad::Var parts[] = {vocab, ids, doms};
  g.token_table = ad::concat_rows(parts);
  g.positional = b.bind("text.positional", p.positional, t);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string pre = "text.block" + std::to_string(i) + ".";
    const TextBlockParams& bp = p.blocks[i];
    TextBlockGraph bg;
    bg.ln1_g = b.bind(pre + "ln1_g", bp.ln1_g, t);
    bg.ln1_b = b.bind(pre + "ln1_b", bp.ln1_b, t);
    bg.wq = b.bind(pre + "wq", bp.wq, t);
    bg.wk = b.bind(pre + "wk", bp.wk, t);
    bg.wv = b.bind(pre + "wv", bp.wv, t);
    bg.wo = b.bind(pre + "wo", bp.wo, t);
    bg.ln2_g = b.bind(pre + "ln2_g", bp.ln2_g, t);
    bg.ln2_b = b.bind(pre + "ln2_b", bp.ln2_b, t);
    bg.fc1_w = b.bind(pre + "fc1_w", bp.fc1_w, t);
    bg.fc1_b = b.bind(pre + "fc1_b", bp.fc1_b, t);
    bg.fc2_w = b.bind(pre + "fc2_w", bp.fc2_w, t);
    bg.fc2_b = b.bind(pre + "fc2_b", bp.fc2_b, t);
    g.blocks.push_back(bg);
  }
  g.lnf_g = b.bind("text.lnf_g", p.lnf_g, t);
  g.lnf_b = b.bind("text.lnf_b", p.lnf_b, t);
  g.proj = b.bind("text.proj", p.proj, t);
  return g;
}

LinearGraph bind_linear(Binder& b, const LinearParams& p, bool trainable, const std::string& prefix) {
  return LinearGraph{b.bind(prefix + "w", p.w, trainable), b.bind(prefix + "b", p.b, trainable)};
}

ad::Var image_forward(const ImageGraph& g, ad::Var images, const ModelDims& dims) {
  using namespace ad;
  const auto& geo = dims.geometry;
  const int patches = (geo.height / dims.patch) * (geo.width / dims.patch);
  Var x = patchify(images, geo.height, geo.width, geo.channels, dims.patch);
  x = relu(add_row(matmul(x, g.patch_w), g.patch_b));
  x = merge_row_groups(x, patches);
  x = relu(add_row(matmul(x, g.w1), g.b1));
  x = relu(add_row(matmul(x, g.w2), g.b2));
  return normalize_rows(matmul(x, g.proj));
}

ad::Var text_forward(const TextGraph& g, std::span<const Prompt> prompts) {
  using namespace ad;
  require_shape(!prompts.empty(), "encode_prompts: no prompts");
  int seq_len = 0;
  for (const Prompt& p : prompts) {
    require_shape(p.length() > 0, "encode_prompts: empty sequence");
    seq_len = std::max(seq_len, p.length());
  }
  require_shape(seq_len <= g.positional.rows(), "encode_prompts: prompt longer than positional table");
  const int pad = token_id("<pad>");
  std::vector<int> token_rows;
  std::vector<int> pos_rows;
  std::vector<int> lengths;
  std::vector<int> last;
  for (std::size_t s = 0; s < prompts.size(); ++s) {
    const Prompt& p = prompts[s];
    for (int i = 0; i < seq_len; ++i) {
      token_rows.push_back(i < p.length() ? p.rows[static_cast<std::size_t>(i)] : pad);
      pos_rows.push_back(i);
    }
    lengths.push_back(p.length());
    last.push_back(static_cast<int>(s) * seq_len + p.length() - 1);
  }
  Var x = add(gather_rows(g.token_table, token_rows), gather_rows(g.positional, pos_rows));
  for (const TextBlockGraph& b : g.blocks) {
    Var h = layer_norm_rows(x, b.ln1_g, b.ln1_b);
    Var a = masked_attention(matmul(h, b.wq), matmul(h, b.wk), matmul(h, b.wv), seq_len, lengths);
    x = add(x, matmul(a, b.wo));
    h = layer_norm_rows(x, b.ln2_g, b.ln2_b);
    h = relu(add_row(matmul(h, b.fc1_w), b.fc1_b));
    x = add(x, add_row(matmul(h, b.fc2_w), b.fc2_b));
  }
  Var pooled = layer_norm_rows(gather_rows(x, last), g.lnf_g, g.lnf_b);
  return normalize_rows(matmul(pooled, g.proj));
}

ad::Var linear_forward(const LinearGraph& g, ad::Var x) {
  require_shape(x.cols() == g.w.rows(), "linear: feature dimension mismatch");
  return ad::add_row(ad::matmul(x, g.w), g.b);
}

// ---------------------------------------------------------------------------

Matrix encode_images(const ImageEncoderParams& params, const Matrix& batch, const ModelDims& dims) {
  if (!batch.allFinite()) throw NumericError("encode_images: non-finite input");
  if (batch.rows() == 0) return Matrix(0, dims.embed_dim);
  ad::Tape tape;
  Binder binder(tape);
  const ImageGraph g = bind_image(binder, params, false);
  return image_forward(g, tape.constant(batch), dims).value();
}

Matrix encode_prompts(const TextEncoderParams& params, const PromptBank& bank,
                      std::span<const Prompt> prompts) {
  ad::Tape tape;
  Binder binder(tape);
  const TextGraph g = bind_text(binder, params, bank, false, false, false);
  return text_forward(g, prompts).value();
}

Matrix domain_classify(const LinearParams& params, const Matrix& text_features) {
  require_shape(text_features.cols() == params.w.rows(), "domain_classify: feature dim mismatch");
  Matrix out = text_features * params.w;
  out.rowwise() += params.b.row(0);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Matrix gaussian(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = n(rng);
  return m;
}

}  // namespace

ImageEncoderParams init_image_encoder(const ModelDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(synth::mix_seed(seed, 0x1a6e));
  const int patch_dim = dims.patch * dims.patch * dims.geometry.channels;
  const int patches = (dims.geometry.height / dims.patch) * (dims.geometry.width / dims.patch);
  const int flat = patches * dims.patch_embed;
  ImageEncoderParams p;
  p.patch_w = gaussian(patch_dim, dims.patch_embed, std::sqrt(2.0 / patch_dim), rng);
  p.patch_b = Matrix::Zero(1, dims.patch_embed);
  p.w1 = gaussian(flat, dims.hidden1, std::sqrt(2.0 / flat), rng);
  p.b1 = Matrix::Zero(1, dims.hidden1);
  p.w2 = gaussian(dims.hidden1, dims.hidden2, std::sqrt(2.0 / dims.hidden1), rng);
  p.b2 = Matrix::Zero(1, dims.hidden2);
  p.proj = gaussian(dims.hidden2, dims.embed_dim, std::sqrt(1.0 / dims.hidden2), rng);
  return p;
}

TextEncoderParams init_text_encoder(const ModelDims& dims, int max_len, std::uint64_t seed) {
  std::mt19937_64 rng(synth::mix_seed(seed, 0x7e47));
  const int d = dims.token_dim;
  const int hidden = d * dims.mlp_ratio;
  TextEncoderParams p;
  p.token_embedding = gaussian(static_cast<Index>(vocabulary().size()), d, 0.02, rng);
  p.positional = gaussian(max_len, d, 0.01, rng);
  for (int i = 0; i < dims.text_blocks; ++i) {
    TextBlockParams b;
    b.ln1_g = Matrix::Ones(1, d);
    b.ln1_b = Matrix::Zero(1, d);
    b.wq = gaussian(d, d, std::sqrt(1.0 / d), rng);
    b.wk = gaussian(d, d, std::sqrt(1.0 / d), rng);
    b.wv = gaussian(d, d, std::sqrt(1.0 / d), rng);
    b.wo = gaussian(d, d, std::sqrt(1.0 / d), rng);
    b.ln2_g = Matrix::Ones(1, d);
    b.ln2_b = Matrix::Zero(1, d);
    b.fc1_w = gaussian(d, hidden, std::sqrt(2.0 / d), rng);
    b.fc1_b = Matrix::Zero(1, hidden);
    b.fc2_w = gaussian(hidden, d, std::sqrt(1.0 / hidden), rng);
    b.fc2_b = Matrix::Zero(1, d);
    p.blocks.push_back(std::move(b));
  }
  p.lnf_g = Matrix::Ones(1, d);
  p.lnf_b = Matrix::Zero(1, d);
  p.proj = gaussian(d, dims.embed_dim, std::sqrt(1.0 / d), rng);
  return p;
}

PromptBank init_prompt_bank(const ModelDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(synth::mix_seed(seed, 0x9a0b));
  PromptBank bank;
  bank.tokens_per_pid = dims.id_tokens_per_pid;
  bank.tokens_per_domain = dims.domain_tokens;
  bank.id_tokens = gaussian(static_cast<Index>(dims.num_pids) * dims.id_tokens_per_pid,
                            dims.token_dim, 0.02, rng);
  bank.domain_tokens = gaussian(static_cast<Index>(dims.num_domains) * dims.domain_tokens,
                                dims.token_dim, 0.02, rng);
  return bank;
}

LinearParams init_linear(int in, int out, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(synth::mix_seed(seed, 0x11ea));
  return LinearParams{gaussian(in, out, stddev, rng), Matrix::Zero(1, out)};
}

}  // namespace fgdi::enc
