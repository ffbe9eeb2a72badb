#pragma once

#include <optional>
#include <vector>

#include "cteg/config.hpp"
#include "cteg/encoder.hpp"
#include "cteg/gatenet.hpp"
#include "cteg/preprocess.hpp"
#include "cteg/protohead.hpp"

namespace cteg {

struct QueryForward {
  Tensor rep;    // s^q
  Tensor delta;  // [N]
  int gold = -1;
};

struct EpisodeForward {
  Tensor prototypes;  // [N, d_model]
  std::vector<QueryForward> queries;

  std::vector<int> predictions() const {
    std::vector<int> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(predict(q.delta));
    return out;
  }
};

/// The full classifier: gate network + gated encoder + prototypical head.
class Model {
 public:
  Model() = default;

  static Model create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    Rng rng(derive_seed(seed, 0));
    m.encoder_ = Encoder::create(m.params_, cfg.encoder, cfg.vocab_size, cfg.max_length, rng);
    if (cfg.encoder.mode != GateMode::NONE) {
      m.gate_net_ = GateNet::create(m.params_, cfg.gate, cfg.max_length, cfg.tag_vocab_size,
                                    cfg.encoder.mode == GateMode::QGG, rng);
    }
    m.head_ = ProtoHead::create(m.params_, cfg.n_way, rng);
    return m;
  }

  /// Rebind a model to parameters restored from a checkpoint.
  static Model from_params(const ModelConfig& cfg, ParamStore params) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    m.params_ = std::move(params);
    m.encoder_ = Encoder::load(m.params_, cfg.encoder);
    if (cfg.encoder.mode != GateMode::NONE) {
      m.gate_net_ = GateNet::load(m.params_, cfg.gate, cfg.encoder.mode == GateMode::QGG);
    }
    m.head_ = ProtoHead::load(m.params_);
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const GateNet& gate_net() const { return gate_net_; }
  const ProtoHead& head() const { return head_; }

  /// Per-token gate vector (EGA/FHG and the pos/syn feature ablations).
  Tensor gates(const EncodedInstance& e) const {
    require(cfg_.encoder.mode == GateMode::EGA || cfg_.encoder.mode == GateMode::FHG, "bad_mode",
            "per-token gates require an entity-guided gate mode, not " +
                to_string(cfg_.encoder.mode));
    return gate_net_.compute_gates(e);
  }

  /// Sentence representation under the configured mode.
  EncodeResult encode(const EncodedInstance& e) const {
    switch (cfg_.encoder.mode) {
      case GateMode::NONE:
        return encoder_.encode(e, GateMode::NONE, std::nullopt);
      case GateMode::QGG:
        return encoder_.encode(e, GateMode::QGG, gate_net_.query_guided_gates(e));
      case GateMode::EGA:
      case GateMode::FHG:
        return encoder_.encode(e, cfg_.encoder.mode, gate_net_.compute_gates(e));
    }
    fail("bad_mode", "unreachable encoder mode");
  }

  /// Mode/gate override for equivalence tests and ablation probes.
  EncodeResult encode_with(const EncodedInstance& e, GateMode mode,
                           const std::optional<Tensor>& gates) const {
    return encoder_.encode(e, mode, gates);
  }

  /// Forward an episode: prototypes from the support sets, then the distance
  /// distribution for each query. Instances are borrowed.
  EpisodeForward forward_episode(
      const std::vector<std::vector<const EncodedInstance*>>& support,
      const std::vector<std::pair<const EncodedInstance*, int>>& queries) const {
    require(static_cast<int>(support.size()) == cfg_.n_way, "bad_episode_shape",
            "episode way count " + std::to_string(support.size()) + " != model n_way " +
                std::to_string(cfg_.n_way));
    std::vector<Tensor> protos;
    protos.reserve(support.size());
    for (const auto& group : support) {
      std::vector<Tensor> reps;
      reps.reserve(group.size());
      for (const EncodedInstance* inst : group) reps.push_back(encode(*inst).rep);
      protos.push_back(prototype(reps));
    }
    EpisodeForward fwd;
    fwd.prototypes = stack_rows(protos);
    for (const auto& [inst, gold] : queries) {
      QueryForward qf;
      qf.rep = encode(*inst).rep;
      qf.delta = distance_distribution(qf.rep, fwd.prototypes);
      qf.gold = gold;
      fwd.queries.push_back(std::move(qf));
    }
    return fwd;
  }

 private:
  ModelConfig cfg_;
  ParamStore params_;
  Encoder encoder_;
  GateNet gate_net_;
  ProtoHead head_;
};

}  // namespace cteg
