#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cteg/params.hpp"
#include "cteg/tensor.hpp"

namespace cteg {

/// Parameters of one transformer block. Weight matrices are stored [in, out]
/// and applied as H W + b with row-vector activations.
struct BlockParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;

  static BlockParams create(ParamStore& store, const std::string& prefix, int width, int ffn_width,
                            Rng& rng) {
    const auto w = static_cast<std::size_t>(width);
    const auto f = static_cast<std::size_t>(ffn_width);
    BlockParams p;
    p.wq = store.create(prefix + ".attn.wq", {w, w}, rng);
    p.bq = store.create_zeros(prefix + ".attn.bq", {w});
    p.wk = store.create(prefix + ".attn.wk", {w, w}, rng);
    p.bk = store.create_zeros(prefix + ".attn.bk", {w});
    p.wv = store.create(prefix + ".attn.wv", {w, w}, rng);
    p.bv = store.create_zeros(prefix + ".attn.bv", {w});
    p.wo = store.create(prefix + ".attn.wo", {w, w}, rng);
    p.bo = store.create_zeros(prefix + ".attn.bo", {w});
    p.ln1_gain = store.create_filled(prefix + ".ln1.gain", {w}, 1.0);
    p.ln1_bias = store.create_zeros(prefix + ".ln1.bias", {w});
    p.ln2_gain = store.create_filled(prefix + ".ln2.gain", {w}, 1.0);
    p.ln2_bias = store.create_zeros(prefix + ".ln2.bias", {w});
    p.ffn_w1 = store.create(prefix + ".ffn.w1", {w, f}, rng);
    p.ffn_b1 = store.create_zeros(prefix + ".ffn.b1", {f});
    p.ffn_w2 = store.create(prefix + ".ffn.w2", {f, w}, rng);
    p.ffn_b2 = store.create_zeros(prefix + ".ffn.b2", {w});
    return p;
  }

  static BlockParams load(const ParamStore& store, const std::string& prefix) {
    BlockParams p;
    p.wq = store.get(prefix + ".attn.wq");
    p.bq = store.get(prefix + ".attn.bq");
    p.wk = store.get(prefix + ".attn.wk");
    p.bk = store.get(prefix + ".attn.bk");
    p.wv = store.get(prefix + ".attn.wv");
    p.bv = store.get(prefix + ".attn.bv");
    p.wo = store.get(prefix + ".attn.wo");
    p.bo = store.get(prefix + ".attn.bo");
    p.ln1_gain = store.get(prefix + ".ln1.gain");
    p.ln1_bias = store.get(prefix + ".ln1.bias");
    p.ln2_gain = store.get(prefix + ".ln2.gain");
    p.ln2_bias = store.get(prefix + ".ln2.bias");
    p.ffn_w1 = store.get(prefix + ".ffn.w1");
    p.ffn_b1 = store.get(prefix + ".ffn.b1");
    p.ffn_w2 = store.get(prefix + ".ffn.w2");
    p.ffn_b2 = store.get(prefix + ".ffn.b2");
    return p;
  }
};

/// Gates applied to attention logits: none, a per-key vector [n] broadcast
/// over query rows and heads, or a full per-(query,key) matrix [n, n].
struct GateInput {
  const Tensor* vector = nullptr;
  const Tensor* matrix = nullptr;

  static GateInput none() { return {}; }
  static GateInput per_key(const Tensor& v) { return {&v, nullptr}; }
  static GateInput per_pair(const Tensor& m) { return {nullptr, &m}; }
};

struct AttentionResult {
  std::vector<Tensor> att_heads;  // per head, [n, n] rows summing to 1
  Tensor hidden;                  // block output, [n, width]
};

/// One multi-head self-attention block. Scaled logits are multiplied by the
/// key's gate before the softmax; the rest is the standard residual block.
/// post_norm selects the BERT-style ordering (residual then norm); the gate
/// network uses the pre-norm variant.
inline AttentionResult attention_block(const BlockParams& p, const Tensor& input, int heads,
                                       const GateInput& gates, bool post_norm) {
  const std::size_t width = input.dim(1);
  const std::size_t d_k = width / static_cast<std::size_t>(heads);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));

  const Tensor attn_in =
      post_norm ? input : layer_norm(input, p.ln1_gain, p.ln1_bias);
  const Tensor q = add_rowvec(matmul(attn_in, p.wq), p.bq);
  const Tensor k = add_rowvec(matmul(attn_in, p.wk), p.bk);
  const Tensor v = add_rowvec(matmul(attn_in, p.wv), p.bv);

  AttentionResult result;
  std::vector<Tensor> contexts;
  for (int h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * d_k;
    const Tensor qh = slice_cols(q, off, d_k);
    const Tensor kh = slice_cols(k, off, d_k);
    const Tensor vh = slice_cols(v, off, d_k);
    Tensor logits = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
    if (gates.vector) logits = mul_rowvec(logits, *gates.vector);
    else if (gates.matrix) logits = mul(logits, *gates.matrix);
    const Tensor att = softmax(logits);
    result.att_heads.push_back(att);
    contexts.push_back(matmul(att, vh));
  }
  const Tensor merged = heads == 1 ? contexts[0] : concat_cols(contexts);
  const Tensor attn_out = add_rowvec(matmul(merged, p.wo), p.bo);

  Tensor h1;
  if (post_norm) {
    h1 = layer_norm(add(input, attn_out), p.ln1_gain, p.ln1_bias);
  } else {
    h1 = add(input, attn_out);
  }

  const Tensor ffn_in = post_norm ? h1 : layer_norm(h1, p.ln2_gain, p.ln2_bias);
  const Tensor ffn =
      add_rowvec(matmul(gelu(add_rowvec(matmul(ffn_in, p.ffn_w1), p.ffn_b1)), p.ffn_w2), p.ffn_b2);

  if (post_norm) {
    result.hidden = layer_norm(add(h1, ffn), p.ln2_gain, p.ln2_bias);
  } else {
    result.hidden = add(h1, ffn);
  }
  return result;
}

}  // namespace cteg
