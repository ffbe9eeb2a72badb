#pragma once

#include <string>
#include <vector>

#include "cteg/config.hpp"
#include "cteg/preprocess.hpp"
#include "cteg/transformer.hpp"

namespace cteg {

/// Entity-guided gate network. Relative-position and syntactic-tag embeddings
/// are concatenated per token, projected, run through a small pre-norm
/// transformer encoder, and a sigmoid head yields one gate per token, each
/// strictly inside (0, 1). Gates depend only on entity features, never on the
/// words themselves.
///
/// In QGG mode the same machinery produces a per-(query,key) gate matrix: the
/// syntactic feature of pair (i, k) is the query word's tag with respect to
/// the entity the key belongs to, or "other" when the key is not an entity.
class GateNet {
 public:
  GateNet() = default;

  static GateNet create(ParamStore& store, const GateConfig& cfg, int max_length,
                        int tag_vocab_size, bool qgg, Rng& rng) {
    cfg.validate();
    GateNet g;
    g.cfg_ = cfg;
    g.qgg_ = qgg;
    const auto pos_rows = static_cast<std::size_t>(2 * max_length + 1);
    const auto tag_rows = static_cast<std::size_t>(tag_vocab_size);
    const auto d_pos = static_cast<std::size_t>(cfg.d_pos);
    const auto d_syn = static_cast<std::size_t>(cfg.d_syn);
    const bool use_pos = qgg || cfg.features != GateFeatures::SYN_ONLY;
    const bool use_tags = !qgg && cfg.features != GateFeatures::POS_ONLY;
    if (use_pos) {
      g.pos1_table_ = store.create("gate.embed.pos1", {pos_rows, d_pos}, rng);
      g.pos2_table_ = store.create("gate.embed.pos2", {pos_rows, d_pos}, rng);
    }
    if (use_tags) {
      g.tag1_table_ = store.create("gate.embed.tag1", {tag_rows, d_syn}, rng);
      g.tag2_table_ = store.create("gate.embed.tag2", {tag_rows, d_syn}, rng);
    }
    if (qgg) g.rel_table_ = store.create("gate.embed.rel", {tag_rows, d_syn}, rng);
    const int in_width = qgg ? 2 * cfg.d_pos + cfg.d_syn : cfg.input_width();
    g.proj_w_ = store.create(
        "gate.proj.w", {static_cast<std::size_t>(in_width), static_cast<std::size_t>(cfg.hidden)},
        rng);
    g.proj_b_ = store.create_zeros("gate.proj.b", {static_cast<std::size_t>(cfg.hidden)});
    for (int l = 0; l < cfg.layers; ++l) {
      g.blocks_.push_back(
          BlockParams::create(store, "gate.l" + std::to_string(l), cfg.hidden, 2 * cfg.hidden, rng));
    }
    g.head_w_ = store.create("gate.head.w", {static_cast<std::size_t>(cfg.hidden)}, rng);
    g.head_b_ = store.create_zeros("gate.head.b", {1});
    return g;
  }

  static GateNet load(const ParamStore& store, const GateConfig& cfg, bool qgg) {
    GateNet g;
    g.cfg_ = cfg;
    g.qgg_ = qgg;
    const bool use_pos = qgg || cfg.features != GateFeatures::SYN_ONLY;
    const bool use_tags = !qgg && cfg.features != GateFeatures::POS_ONLY;
    if (use_pos) {
      g.pos1_table_ = store.get("gate.embed.pos1");
      g.pos2_table_ = store.get("gate.embed.pos2");
    }
    if (use_tags) {
      g.tag1_table_ = store.get("gate.embed.tag1");
      g.tag2_table_ = store.get("gate.embed.tag2");
    }
    if (qgg) g.rel_table_ = store.get("gate.embed.rel");
    g.proj_w_ = store.get("gate.proj.w");
    g.proj_b_ = store.get("gate.proj.b");
    for (int l = 0; l < cfg.layers; ++l) {
      g.blocks_.push_back(BlockParams::load(store, "gate.l" + std::to_string(l)));
    }
    g.head_w_ = store.get("gate.head.w");
    g.head_b_ = store.get("gate.head.b");
    return g;
  }

  const GateConfig& config() const { return cfg_; }
  bool is_qgg() const { return qgg_; }

  /// Per-token feature vectors e_i^p: embedding lookups concatenated to width
  /// 2*d_pos + 2*d_syn (or the selected subset).
  Tensor embed_entity_features(const EncodedInstance& e) const {
    std::vector<Tensor> parts;
    if (cfg_.features != GateFeatures::SYN_ONLY) {
      parts.push_back(embed(pos1_table_, e.pos1_idx));
      parts.push_back(embed(pos2_table_, e.pos2_idx));
    }
    if (cfg_.features != GateFeatures::POS_ONLY) {
      parts.push_back(embed(tag1_table_, e.tag1_ids));
      parts.push_back(embed(tag2_table_, e.tag2_ids));
    }
    return parts.size() == 1 ? parts[0] : concat_cols(parts);
  }

  /// Entity-guided gates G = (g_1..g_n) for a sentence, shape [n].
  Tensor compute_gates(const EncodedInstance& e) const {
    require(e.length() >= 1, "empty_input", "cannot gate an empty sentence");
    return run_head(embed_entity_features(e));
  }

  /// Query-guided gate matrix, shape [n, n]; row i gates the keys of query i.
  Tensor query_guided_gates(const EncodedInstance& e) const {
    require(e.length() >= 1, "empty_input", "cannot gate an empty sentence");
    const int n = e.length();
    const Tensor pos1 = embed(pos1_table_, e.pos1_idx);
    const Tensor pos2 = embed(pos2_table_, e.pos2_idx);
    constexpr int kOtherTag = 1;
    std::vector<Tensor> rows;
    rows.reserve(n);
    for (int i = 0; i < n; ++i) {
      std::vector<int> rel_ids(n, kOtherTag);
      for (int k = 0; k < n; ++k) {
        if (e.in_span1(k)) rel_ids[k] = e.tag1_ids[i];
        else if (e.in_span2(k)) rel_ids[k] = e.tag2_ids[i];
      }
      const Tensor rel = embed(rel_table_, rel_ids);
      rows.push_back(run_head(concat_cols({pos1, pos2, rel})));
    }
    return stack_rows(rows);
  }

 private:
  Tensor run_head(const Tensor& features) const {
    Tensor h = add_rowvec(matmul(features, proj_w_), proj_b_);
    for (const auto& block : blocks_) {
      h = attention_block(block, h, cfg_.heads, GateInput::none(), /*post_norm=*/false).hidden;
    }
    return sigmoid(affine_rows(h, head_w_, head_b_));
  }

  GateConfig cfg_;
  bool qgg_ = false;
  Tensor pos1_table_, pos2_table_, tag1_table_, tag2_table_, rel_table_;
  Tensor proj_w_, proj_b_;
  std::vector<BlockParams> blocks_;
  Tensor head_w_, head_b_;
};

}  // namespace cteg
