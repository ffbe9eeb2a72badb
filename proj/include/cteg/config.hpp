#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cteg/error.hpp"

namespace cteg {

/// Where and how gates act in the encoder.
///   EGA  — gates scale attention logits in every layer (the full model)
///   NONE — no gates and no entity information at all
///   FHG  — ungated layers; gates scale the final hidden states before pooling
///   QGG  — per-(query,key) gate matrix scales attention logits
enum class GateMode { EGA, NONE, FHG, QGG };

/// Which feature blocks feed the gate network.
enum class GateFeatures { BOTH, POS_ONLY, SYN_ONLY };

inline std::string to_string(GateMode m) {
  switch (m) {
    case GateMode::EGA: return "ega";
    case GateMode::NONE: return "none";
    case GateMode::FHG: return "fhg";
    case GateMode::QGG: return "qgg";
  }
  return "ega";
}

inline GateMode gate_mode_from_string(const std::string& s) {
  if (s == "ega") return GateMode::EGA;
  if (s == "none") return GateMode::NONE;
  if (s == "fhg") return GateMode::FHG;
  if (s == "qgg") return GateMode::QGG;
  fail("bad_mode", "unknown encoder mode '" + s + "'");
}

inline std::string to_string(GateFeatures f) {
  switch (f) {
    case GateFeatures::BOTH: return "both";
    case GateFeatures::POS_ONLY: return "pos";
    case GateFeatures::SYN_ONLY: return "syn";
  }
  return "both";
}

inline GateFeatures gate_features_from_string(const std::string& s) {
  if (s == "both") return GateFeatures::BOTH;
  if (s == "pos") return GateFeatures::POS_ONLY;
  if (s == "syn") return GateFeatures::SYN_ONLY;
  fail("bad_gate_features", "unknown gate feature selection '" + s + "'");
}

/// Gate-network hyperparameters. Paper scale is d_pos=d_syn=50, hidden 230,
/// 2 heads; desk-scale defaults below.
struct GateConfig {
  int d_pos = 8;
  int d_syn = 8;
  int hidden = 32;
  int heads = 2;
  int layers = 1;
  GateFeatures features = GateFeatures::BOTH;

  int input_width() const {
    switch (features) {
      case GateFeatures::POS_ONLY: return 2 * d_pos;
      case GateFeatures::SYN_ONLY: return 2 * d_syn;
      default: return 2 * d_pos + 2 * d_syn;
    }
  }

  void validate() const {
    require(d_pos > 0 && d_syn > 0 && hidden > 0 && heads > 0 && layers > 0, "bad_gate_config",
            "gate config fields must be positive");
    require(hidden % heads == 0, "bad_gate_config", "gate hidden size must divide by head count");
  }
};

/// Sentence-encoder hyperparameters. Paper scale is M=12, d_model=768;
/// desk-scale defaults below.
struct EncoderConfig {
  int d_model = 64;
  int layers = 2;  // M
  int heads = 2;
  int d_k = 32;    // per-head width; d_model = heads * d_k
  int ffn_width = 128;
  GateMode mode = GateMode::EGA;

  void validate() const {
    require(d_model > 0 && layers >= 1 && heads > 0 && d_k > 0 && ffn_width > 0,
            "bad_encoder_config", "encoder config fields must be positive");
    require(d_model == heads * d_k, "bad_encoder_config",
            "d_model must equal heads * d_k (" + std::to_string(d_model) +
                " != " + std::to_string(heads) + " * " + std::to_string(d_k) + ")");
  }
};

enum class Schedule { TWO_PHASE, JOINT };

inline std::string to_string(Schedule s) { return s == Schedule::JOINT ? "joint" : "two_phase"; }

inline Schedule schedule_from_string(const std::string& s) {
  if (s == "two_phase") return Schedule::TWO_PHASE;
  if (s == "joint") return Schedule::JOINT;
  fail("bad_schedule", "unknown schedule '" + s + "'");
}

/// Ablation switches. At most one of the encoder-side switches may be set;
/// CAT_OFF is independent and disables the confusing-relation and KL terms.
enum class Ablation { CAT_OFF, EGA_OFF, POS_ONLY, SYN_ONLY, QGG, FHG };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::CAT_OFF: return "cat_off";
    case Ablation::EGA_OFF: return "ega_off";
    case Ablation::POS_ONLY: return "pos_only";
    case Ablation::SYN_ONLY: return "syn_only";
    case Ablation::QGG: return "qgg";
    case Ablation::FHG: return "fhg";
  }
  return "cat_off";
}

inline Ablation ablation_from_string(const std::string& s) {
  if (s == "cat_off") return Ablation::CAT_OFF;
  if (s == "ega_off") return Ablation::EGA_OFF;
  if (s == "pos_only") return Ablation::POS_ONLY;
  if (s == "syn_only") return Ablation::SYN_ONLY;
  if (s == "qgg") return Ablation::QGG;
  if (s == "fhg") return Ablation::FHG;
  fail("bad_ablation", "unknown ablation '" + s + "'");
}

struct TrainConfig {
  int n_way = 5;
  int k_shot = 5;
  int n_query = 5;  // queries per way; the paper never states this
  double lr = 1e-3;
  double weight_decay = 1e-6;
  int steps = 600;
  std::uint64_t seed = 1;
  Schedule schedule = Schedule::TWO_PHASE;
  std::set<Ablation> ablation;
  int eval_every = 0;      // 0 = no periodic evaluation
  int eval_episodes = 50;
  // Eq-faithful alternative: softmax over raw (un-negated) distances.
  bool literal_delta_softmax = false;
  // Restrict the confusion phase to the projection parameters only.
  bool cat_projection_only = false;

  bool cat_enabled() const { return !ablation.count(Ablation::CAT_OFF); }

  GateMode encoder_mode() const {
    if (ablation.count(Ablation::EGA_OFF)) return GateMode::NONE;
    if (ablation.count(Ablation::QGG)) return GateMode::QGG;
    if (ablation.count(Ablation::FHG)) return GateMode::FHG;
    return GateMode::EGA;
  }

  GateFeatures gate_features() const {
    if (ablation.count(Ablation::POS_ONLY)) return GateFeatures::POS_ONLY;
    if (ablation.count(Ablation::SYN_ONLY)) return GateFeatures::SYN_ONLY;
    return GateFeatures::BOTH;
  }

  void validate() const {
    require(n_way >= 1 && k_shot >= 1 && n_query >= 1, "bad_train_config",
            "N, K, Q must be positive");
    require(steps >= 0, "bad_train_config", "steps must be non-negative");
    int exclusive = 0;
    for (Ablation a : {Ablation::EGA_OFF, Ablation::POS_ONLY, Ablation::SYN_ONLY, Ablation::QGG,
                       Ablation::FHG}) {
      exclusive += ablation.count(a) ? 1 : 0;
    }
    require(exclusive <= 1, "bad_train_config",
            "at most one of ega_off/pos_only/syn_only/qgg/fhg may be set");
  }
};

/// Everything needed to rebuild a model: architecture + data-derived sizes.
struct ModelConfig {
  EncoderConfig encoder;
  GateConfig gate;
  int n_way = 5;
  int vocab_size = 0;
  int tag_vocab_size = 0;
  int max_length = 100;

  void validate() const {
    encoder.validate();
    gate.validate();
    require(n_way >= 1, "bad_model_config", "n_way must be positive");
    require(vocab_size >= 2, "bad_model_config", "vocabulary must include pad and unk");
    require(tag_vocab_size >= 2, "bad_model_config", "tag vocabulary must include self and other");
    require(max_length >= 2, "bad_model_config", "max_length too small");
  }
};

// ---------------------------------------------------------------------------
// JSON round-trips (field names are the config-file schema)

inline void to_json(nlohmann::json& j, const GateConfig& c) {
  j = {{"d_pos", c.d_pos},   {"d_syn", c.d_syn},   {"hidden", c.hidden},
       {"heads", c.heads},   {"layers", c.layers}, {"features", to_string(c.features)}};
}

inline void from_json(const nlohmann::json& j, GateConfig& c) {
  c.d_pos = j.value("d_pos", c.d_pos);
  c.d_syn = j.value("d_syn", c.d_syn);
  c.hidden = j.value("hidden", c.hidden);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.features = gate_features_from_string(j.value("features", to_string(c.features)));
}

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"d_model", c.d_model}, {"layers", c.layers},       {"heads", c.heads},
       {"d_k", c.d_k},         {"ffn_width", c.ffn_width}, {"mode", to_string(c.mode)}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.d_model = j.value("d_model", c.d_model);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.d_k = j.contains("d_k") ? j.at("d_k").get<int>() : c.d_model / std::max(1, c.heads);
  c.ffn_width = j.value("ffn_width", c.ffn_width);
  c.mode = gate_mode_from_string(j.value("mode", to_string(c.mode)));
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  auto ab = nlohmann::json::array();
  for (Ablation a : c.ablation) ab.push_back(to_string(a));
  j = {{"n_way", c.n_way},
       {"k_shot", c.k_shot},
       {"n_query", c.n_query},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"steps", c.steps},
       {"seed", c.seed},
       {"schedule", to_string(c.schedule)},
       {"ablation", ab},
       {"eval_every", c.eval_every},
       {"eval_episodes", c.eval_episodes},
       {"literal_delta_softmax", c.literal_delta_softmax},
       {"cat_projection_only", c.cat_projection_only}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.n_way = j.value("n_way", c.n_way);
  c.k_shot = j.value("k_shot", c.k_shot);
  c.n_query = j.value("n_query", c.n_query);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.schedule = schedule_from_string(j.value("schedule", to_string(c.schedule)));
  c.ablation.clear();
  if (j.contains("ablation")) {
    for (const auto& a : j.at("ablation")) c.ablation.insert(ablation_from_string(a));
  }
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.literal_delta_softmax = j.value("literal_delta_softmax", c.literal_delta_softmax);
  c.cat_projection_only = j.value("cat_projection_only", c.cat_projection_only);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"encoder", c.encoder},
       {"gate", c.gate},
       {"n_way", c.n_way},
       {"vocab_size", c.vocab_size},
       {"tag_vocab_size", c.tag_vocab_size},
       {"max_length", c.max_length}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("encoder")) j.at("encoder").get_to(c.encoder);
  if (j.contains("gate")) j.at("gate").get_to(c.gate);
  c.n_way = j.value("n_way", c.n_way);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.tag_vocab_size = j.value("tag_vocab_size", c.tag_vocab_size);
  c.max_length = j.value("max_length", c.max_length);
}

}  // namespace cteg
