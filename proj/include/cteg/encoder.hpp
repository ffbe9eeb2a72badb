#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cteg/config.hpp"
#include "cteg/preprocess.hpp"
#include "cteg/transformer.hpp"

namespace cteg {

/// Trace of one encode() call: the per-layer attention maps plus the pooled
/// sentence representation s = maxpool(H^M).
struct EncodeResult {
  Tensor rep;                               // [d_model]
  std::vector<AttentionResult> layers;      // one per encoder layer
};

/// M-layer transformer sentence encoder with gated self-attention. Word and
/// learned absolute-position embeddings are summed and layer-normed, then M
/// post-norm blocks run with the mode's gating, and the token axis is
/// max-pooled into the sentence representation.
class Encoder {
 public:
  Encoder() = default;

  static Encoder create(ParamStore& store, const EncoderConfig& cfg, int vocab_size,
                        int max_length, Rng& rng) {
    cfg.validate();
    Encoder enc;
    enc.cfg_ = cfg;
    const auto d = static_cast<std::size_t>(cfg.d_model);
    enc.word_table_ = store.create("embed.word", {static_cast<std::size_t>(vocab_size), d}, rng);
    enc.abs_pos_table_ =
        store.create("embed.abs_pos", {static_cast<std::size_t>(max_length), d}, rng);
    enc.emb_ln_gain_ = store.create_filled("embed.ln.gain", {d}, 1.0);
    enc.emb_ln_bias_ = store.create_zeros("embed.ln.bias", {d});
    for (int l = 0; l < cfg.layers; ++l) {
      enc.blocks_.push_back(
          BlockParams::create(store, "enc.l" + std::to_string(l), cfg.d_model, cfg.ffn_width, rng));
    }
    return enc;
  }

  static Encoder load(const ParamStore& store, const EncoderConfig& cfg) {
    Encoder enc;
    enc.cfg_ = cfg;
    enc.word_table_ = store.get("embed.word");
    enc.abs_pos_table_ = store.get("embed.abs_pos");
    enc.emb_ln_gain_ = store.get("embed.ln.gain");
    enc.emb_ln_bias_ = store.get("embed.ln.bias");
    for (int l = 0; l < cfg.layers; ++l) {
      enc.blocks_.push_back(BlockParams::load(store, "enc.l" + std::to_string(l)));
    }
    return enc;
  }

  const EncoderConfig& config() const { return cfg_; }

  /// Encode a sentence under the given mode. `gates` must be a [n] vector for
  /// EGA and FHG, an [n, n] matrix for QGG, and absent for NONE.
  EncodeResult encode(const EncodedInstance& e, GateMode mode,
                      const std::optional<Tensor>& gates) const {
    require(e.length() >= 1, "empty_input", "cannot encode an empty sentence");
    switch (mode) {
      case GateMode::NONE:
        require(!gates.has_value(), "bad_mode", "mode none does not take gates");
        break;
      case GateMode::EGA:
      case GateMode::FHG:
        require(gates && gates->rank() == 1 &&
                    gates->dim(0) == static_cast<std::size_t>(e.length()),
                "bad_mode", "per-token gate vector required");
        break;
      case GateMode::QGG:
        require(gates && gates->rank() == 2 &&
                    gates->dim(0) == static_cast<std::size_t>(e.length()) &&
                    gates->dim(1) == static_cast<std::size_t>(e.length()),
                "bad_mode", "per-pair gate matrix required");
        break;
    }

    Tensor h = layer_norm(add(embed(word_table_, e.token_ids), embed(abs_pos_table_, e.abs_pos)),
                          emb_ln_gain_, emb_ln_bias_);
    GateInput gate_input = GateInput::none();
    if (mode == GateMode::EGA) gate_input = GateInput::per_key(*gates);
    else if (mode == GateMode::QGG) gate_input = GateInput::per_pair(*gates);

    EncodeResult result;
    for (const auto& block : blocks_) {
      AttentionResult layer = attention_block(block, h, cfg_.heads, gate_input, /*post_norm=*/true);
      h = layer.hidden;
      result.layers.push_back(std::move(layer));
    }
    if (mode == GateMode::FHG) h = mul_colvec(h, *gates);
    result.rep = maxpool_rows(h);
    return result;
  }

 private:
  EncoderConfig cfg_;
  Tensor word_table_, abs_pos_table_, emb_ln_gain_, emb_ln_bias_;
  std::vector<BlockParams> blocks_;
};

}  // namespace cteg
