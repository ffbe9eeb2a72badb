#include <catch2/catch_amalgamated.hpp>

#include "cteg/gatenet.hpp"
#include "cteg/gradcheck.hpp"
#include "test_util.hpp"

using namespace cteg;
using Catch::Approx;

namespace {

GateConfig small_gate_config() {
  GateConfig cfg;
  cfg.d_pos = 2;
  cfg.d_syn = 2;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  return cfg;
}

Preprocessor make_prep(const AnnotatedInstance& inst, int max_length = 20) {
  Dataset d;
  d[inst.relation].push_back(inst);
  return Preprocessor(build_vocab(d), TagVocabulary::from_dataset(d), max_length);
}

}  // namespace

TEST_CASE("entity feature embedding has width 2*d_pos + 2*d_syn") {
  const auto inst = cteg_test::table2_instance();
  Preprocessor prep = make_prep(inst);
  ParamStore store;
  Rng rng(1);
  const GateConfig cfg = small_gate_config();
  const GateNet net = GateNet::create(store, cfg, prep.max_length(), prep.tags().size(), false, rng);
  const Tensor e = net.embed_entity_features(prep.encode(inst));
  REQUIRE(e.rank() == 2);
  CHECK(e.dim(0) == 8);
  CHECK(e.dim(1) == static_cast<std::size_t>(2 * cfg.d_pos + 2 * cfg.d_syn));
}

TEST_CASE("tokens with identical features embed identically, tags differ in the tag block") {
  AnnotatedInstance inst;
  inst.tokens = {"a", "b", "c", "d"};
  inst.span1 = {0, 0};
  inst.span2 = {3, 3};
  inst.relation = "r";
  inst.dep_edges = {{-1, 1, "root"}, {1, 0, "nsubj"}, {1, 2, "det"}, {1, 3, "nmod"}};
  Preprocessor prep = make_prep(inst);
  ParamStore store;
  Rng rng(2);
  const GateConfig cfg = small_gate_config();
  const GateNet net = GateNet::create(store, cfg, prep.max_length(), prep.tags().size(), false, rng);

  EncodedInstance enc = prep.encode(inst);
  // force two tokens to share the full feature tuple
  enc.pos1_idx[2] = enc.pos1_idx[1];
  enc.pos2_idx[2] = enc.pos2_idx[1];
  enc.tag1_ids[2] = enc.tag1_ids[1];
  enc.tag2_ids[2] = enc.tag2_ids[1];
  const Tensor same = net.embed_entity_features(enc);
  for (std::size_t j = 0; j < same.dim(1); ++j) CHECK(same.at(1, j) == same.at(2, j));

  // now differ only in tag1: position block must stay equal, tag block differ
  enc.tag1_ids[2] = enc.tag1_ids[1] == 0 ? 1 : 0;
  const Tensor diff = net.embed_entity_features(enc);
  const std::size_t pos_block = static_cast<std::size_t>(2 * cfg.d_pos);
  for (std::size_t j = 0; j < pos_block; ++j) CHECK(diff.at(1, j) == diff.at(2, j));
  bool tag_block_differs = false;
  for (std::size_t j = pos_block; j < diff.dim(1); ++j) {
    if (diff.at(1, j) != diff.at(2, j)) tag_block_differs = true;
  }
  CHECK(tag_block_differs);
}

TEST_CASE("gates stay strictly inside (0,1) and match the sentence length") {
  Rng data_rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const AnnotatedInstance inst = cteg_test::random_instance(data_rng);
    Preprocessor prep = make_prep(inst);
    ParamStore store;
    Rng rng(trial);
    const GateNet net =
        GateNet::create(store, small_gate_config(), prep.max_length(), prep.tags().size(), false, rng);
    const Tensor g = net.compute_gates(prep.encode(inst));
    REQUIRE(g.rank() == 1);
    REQUIRE(g.dim(0) == static_cast<std::size_t>(inst.length()));
    for (std::size_t i = 0; i < g.dim(0); ++i) {
      CHECK(g.at(i) > 0.0);
      CHECK(g.at(i) < 1.0);
    }
  }
}

TEST_CASE("zero head weights give gates of exactly one half") {
  const auto inst = cteg_test::table2_instance();
  Preprocessor prep = make_prep(inst);
  ParamStore store;
  Rng rng(3);
  const GateNet net =
      GateNet::create(store, small_gate_config(), prep.max_length(), prep.tags().size(), false, rng);
  auto& head_w = store.get("gate.head.w").mutable_values();
  std::fill(head_w.begin(), head_w.end(), 0.0);
  const Tensor g = net.compute_gates(prep.encode(inst));
  for (std::size_t i = 0; i < g.dim(0); ++i) CHECK(g.at(i) == 0.5);
}

TEST_CASE("gates depend on entity features, never on word identity") {
  auto inst_a = cteg_test::table2_instance();
  auto inst_b = inst_a;
  for (auto& t : inst_b.tokens) t = "x_" + t;  // same structure, different words

  Dataset d;
  d["r"].push_back(inst_a);
  d["r"].push_back(inst_b);
  Preprocessor prep(build_vocab(d), TagVocabulary::from_dataset(d), 20);

  ParamStore store;
  Rng rng(5);
  const GateNet net =
      GateNet::create(store, small_gate_config(), prep.max_length(), prep.tags().size(), false, rng);
  const Tensor ga = net.compute_gates(prep.encode(inst_a));
  const Tensor gb = net.compute_gates(prep.encode(inst_b));
  CHECK(ga.values() == gb.values());  // bitwise
}

TEST_CASE("gate computation is deterministic") {
  const auto inst = cteg_test::table2_instance();
  Preprocessor prep = make_prep(inst);
  ParamStore store;
  Rng rng(11);
  const GateNet net =
      GateNet::create(store, small_gate_config(), prep.max_length(), prep.tags().size(), false, rng);
  const Tensor a = net.compute_gates(prep.encode(inst));
  const Tensor b = net.compute_gates(prep.encode(inst));
  CHECK(a.values() == b.values());
}

TEST_CASE("gradient check through compute_gates") {
  const auto inst = cteg_test::table2_instance();
  Preprocessor prep = make_prep(inst);
  ParamStore store;
  Rng rng(13);
  const GateNet net =
      GateNet::create(store, small_gate_config(), prep.max_length(), prep.tags().size(), false, rng);
  const EncodedInstance enc = prep.encode(inst);
  const auto f = [&]() { return sum(mul(net.compute_gates(enc), net.compute_gates(enc))); };
  const GradCheckResult r = grad_check(f, store, 1e-5);
  INFO("worst " << r.worst_param << " analytic " << r.analytic << " numeric " << r.numeric);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("pos-only and syn-only ablations select their feature block") {
  const auto inst = cteg_test::table2_instance();
  Preprocessor prep = make_prep(inst);

  GateConfig pos_cfg = small_gate_config();
  pos_cfg.features = GateFeatures::POS_ONLY;
  ParamStore pos_store;
  Rng rng1(21);
  const GateNet pos_net =
      GateNet::create(pos_store, pos_cfg, prep.max_length(), prep.tags().size(), false, rng1);
  CHECK(pos_net.embed_entity_features(prep.encode(inst)).dim(1) ==
        static_cast<std::size_t>(2 * pos_cfg.d_pos));
  CHECK_FALSE(pos_store.has("gate.embed.tag1"));

  GateConfig syn_cfg = small_gate_config();
  syn_cfg.features = GateFeatures::SYN_ONLY;
  ParamStore syn_store;
  Rng rng2(22);
  const GateNet syn_net =
      GateNet::create(syn_store, syn_cfg, prep.max_length(), prep.tags().size(), false, rng2);
  CHECK(syn_net.embed_entity_features(prep.encode(inst)).dim(1) ==
        static_cast<std::size_t>(2 * syn_cfg.d_syn));
  CHECK_FALSE(syn_store.has("gate.embed.pos1"));
}

// ---------------------------------------------------------------------------
// QGG

TEST_CASE("query-guided gates form an n-by-n matrix in (0,1)") {
  const auto inst = cteg_test::table2_instance();
  Preprocessor prep = make_prep(inst);
  ParamStore store;
  Rng rng(31);
  const GateNet net =
      GateNet::create(store, small_gate_config(), prep.max_length(), prep.tags().size(), true, rng);
  const Tensor g = net.query_guided_gates(prep.encode(inst));
  REQUIRE(g.rank() == 2);
  const auto n = static_cast<std::size_t>(inst.length());
  REQUIRE(g.dim(0) == n);
  REQUIRE(g.dim(1) == n);
  for (std::size_t i = 0; i < n * n; ++i) {
    CHECK(g.at(i) > 0.0);
    CHECK(g.at(i) < 1.0);
  }
}

TEST_CASE("QGG rows coincide exactly for queries with identical tag pairs") {
  const auto inst = cteg_test::table2_instance();
  Preprocessor prep = make_prep(inst);
  ParamStore store;
  Rng rng(33);
  const GateNet net =
      GateNet::create(store, small_gate_config(), prep.max_length(), prep.tags().size(), true, rng);
  const EncodedInstance enc = prep.encode(inst);
  const Tensor g = net.query_guided_gates(enc);
  // queries "is" and "a" both carry (other, other), so the per-key feature
  // sequences of their rows are identical
  REQUIRE(enc.tag1_ids[1] == enc.tag1_ids[2]);
  REQUIRE(enc.tag2_ids[1] == enc.tag2_ids[2]);
  for (std::size_t k = 0; k < g.dim(1); ++k) CHECK(g.at(1, k) == g.at(2, k));
  // "mathematician" carries tag1=nsubj, which the rule routes through the
  // entity keys, so its row must differ
  bool differs = false;
  for (std::size_t k = 0; k < g.dim(1); ++k) {
    if (g.at(3, k) != g.at(1, k)) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("a token's tags only influence its own QGG query row") {
  // token 5 ("works") lies outside both spans, so its tag ids enter the
  // computation only through rel(5, k) at the entity keys of row 5
  const auto inst = cteg_test::table2_instance();
  Preprocessor prep = make_prep(inst);
  ParamStore store;
  Rng rng(35);
  const GateNet net =
      GateNet::create(store, small_gate_config(), prep.max_length(), prep.tags().size(), true, rng);
  EncodedInstance enc = prep.encode(inst);
  const Tensor before = net.query_guided_gates(enc);
  enc.tag1_ids[5] = enc.tag1_ids[5] == 0 ? 1 : 0;
  const Tensor after = net.query_guided_gates(enc);
  bool row5_differs = false;
  for (std::size_t i = 0; i < before.dim(0); ++i) {
    for (std::size_t k = 0; k < before.dim(1); ++k) {
      if (i == 5) {
        if (before.at(i, k) != after.at(i, k)) row5_differs = true;
      } else {
        CHECK(before.at(i, k) == after.at(i, k));
      }
    }
  }
  CHECK(row5_differs);
  CHECK(net.query_guided_gates(enc).values() == after.values());  // deterministic
}
