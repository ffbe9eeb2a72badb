#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cteg/error.hpp"
#include "cteg/rng.hpp"

namespace cteg {

constexpr int kDefaultMaxLength = 100;

/// Inclusive token-index interval [lo, hi]. Single-token entities are (i, i).
struct Span {
  int lo = 0;
  int hi = 0;

  bool contains(int i) const { return lo <= i && i <= hi; }
  bool overlaps(const Span& o) const { return lo <= o.hi && o.lo <= hi; }
  bool operator==(const Span&) const = default;
};

/// One dependency arc. head == -1 marks the root edge.
struct DepEdge {
  int head = -1;
  int child = 0;
  std::string label;

  bool operator==(const DepEdge&) const = default;
};

/// One sentence of the corpus with its two entity spans and parse.
struct AnnotatedInstance {
  std::vector<std::string> tokens;
  Span span1;
  Span span2;
  std::string relation;
  std::vector<DepEdge> dep_edges;

  int length() const { return static_cast<int>(tokens.size()); }
};

/// Checks the AnnotatedInstance invariants; throws Error on the first violation.
/// `where` is prepended to messages ("line 3" during loading, "" elsewhere).
inline void validate_instance(const AnnotatedInstance& inst, int max_length = kDefaultMaxLength,
                              const std::string& where = "") {
  const auto ctx = [&](const std::string& m) { return where.empty() ? m : m + ", " + where; };
  const int n = inst.length();
  require(n >= 2, "instance_too_short", ctx("instance needs at least 2 tokens"));
  require(n <= max_length, "instance_too_long",
          ctx("instance has " + std::to_string(n) + " tokens, max " + std::to_string(max_length)));
  for (const Span& s : {inst.span1, inst.span2}) {
    require(0 <= s.lo && s.lo <= s.hi && s.hi < n, "span_out_of_range", ctx("span out of range"));
  }
  require(!inst.span1.overlaps(inst.span2), "span_overlap", ctx("entity spans overlap"));
  require(!inst.relation.empty(), "missing_relation", ctx("empty relation label"));

  std::vector<int> child_count(n, 0);
  for (const DepEdge& e : inst.dep_edges) {
    require(e.child >= 0 && e.child < n, "edge_out_of_range",
            ctx("dependency child index " + std::to_string(e.child) + " out of range"));
    require(e.head >= -1 && e.head < n, "edge_out_of_range",
            ctx("dependency head index " + std::to_string(e.head) + " out of range"));
    require(e.head != e.child, "edge_self_loop",
            ctx("self-loop edge at token " + std::to_string(e.child)));
    child_count[e.child]++;
  }
  for (int i = 0; i < n; ++i) {
    require(child_count[i] != 0, "missing_edge",
            ctx("missing dependency edge for token " + std::to_string(i)));
    require(child_count[i] == 1, "duplicate_edge",
            ctx("token " + std::to_string(i) + " appears as child in multiple edges"));
  }
}

/// Relation label inventory with its train/validation split.
struct RelationSchema {
  std::vector<std::string> relations;
  std::set<std::string> train;
  std::set<std::string> validation;

  void validate() const {
    for (const auto& r : train) {
      require(!validation.count(r), "split_overlap",
              "relation '" + r + "' appears in both train and validation splits");
    }
  }

  bool knows(const std::string& label) const {
    return std::find(relations.begin(), relations.end(), label) != relations.end();
  }
};

/// Instances grouped by relation label. Immutable after load by convention.
using Dataset = std::map<std::string, std::vector<AnnotatedInstance>>;

namespace detail {

inline std::string lowercased(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline AnnotatedInstance instance_from_json(const nlohmann::json& j, const std::string& where) {
  const auto ctx = [&](const std::string& m) { return m + ", " + where; };
  for (const char* field : {"tokens", "span1", "span2", "relation", "dep_edges"}) {
    require(j.contains(field), "missing_field", ctx(std::string("missing field '") + field + "'"));
  }
  AnnotatedInstance inst;
  try {
    for (const auto& t : j.at("tokens")) inst.tokens.push_back(lowercased(t.get<std::string>()));
    inst.span1 = {j.at("span1").at(0).get<int>(), j.at("span1").at(1).get<int>()};
    inst.span2 = {j.at("span2").at(0).get<int>(), j.at("span2").at(1).get<int>()};
    inst.relation = j.at("relation").get<std::string>();
    for (const auto& e : j.at("dep_edges")) {
      inst.dep_edges.push_back(
          {e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<std::string>()});
    }
  } catch (const nlohmann::json::exception& ex) {
    fail("malformed_record", ctx(std::string("malformed instance record: ") + ex.what()));
  }
  return inst;
}

inline nlohmann::json instance_to_json(const AnnotatedInstance& inst) {
  nlohmann::json j;
  j["tokens"] = inst.tokens;
  j["span1"] = {inst.span1.lo, inst.span1.hi};
  j["span2"] = {inst.span2.lo, inst.span2.hi};
  j["relation"] = inst.relation;
  auto edges = nlohmann::json::array();
  for (const auto& e : inst.dep_edges) edges.push_back({e.head, e.child, e.label});
  j["dep_edges"] = edges;
  return j;
}

}  // namespace detail

/// Load a JSONL instance file. Every line must be one JSON object with fields
/// tokens, span1, span2, relation, dep_edges. Instances are validated and
/// grouped by relation. When a schema is given, labels outside it are errors.
inline Dataset load_jsonl(const std::string& path,
                          const std::optional<RelationSchema>& schema = std::nullopt,
                          int max_length = kDefaultMaxLength) {
  std::ifstream in(path);
  require(in.good(), "file_not_found", "cannot open '" + path + "'");
  Dataset dataset;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      fail("malformed_json", "malformed JSON, " + where + ": " + ex.what());
    }
    AnnotatedInstance inst = detail::instance_from_json(j, where);
    validate_instance(inst, max_length, where);
    if (schema) {
      require(schema->knows(inst.relation), "unknown_relation",
              "unknown relation label '" + inst.relation + "', " + where);
    }
    dataset[inst.relation].push_back(std::move(inst));
  }
  return dataset;
}

inline void save_jsonl(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "file_write_failed", "cannot write '" + path + "'");
  for (const auto& [label, instances] : dataset) {
    for (const auto& inst : instances) out << detail::instance_to_json(inst).dump() << "\n";
  }
}

/// Keep only the given labels (used to carve train/validation subsets).
inline Dataset restrict_to(const Dataset& dataset, const std::set<std::string>& labels) {
  Dataset out;
  for (const auto& [label, instances] : dataset) {
    if (labels.count(label)) out[label] = instances;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

constexpr int kPadId = 0;
constexpr int kUnkId = 1;

/// token -> contiguous id, with <pad>=0 and <unk>=1 reserved. Sorted-deterministic.
struct Vocabulary {
  std::vector<std::string> id_to_token;  // index == id
  std::unordered_map<std::string, int> token_to_id;

  int id(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnkId : it->second;
  }
  int size() const { return static_cast<int>(id_to_token.size()); }
};

inline Vocabulary build_vocab(const Dataset& dataset) {
  require(!dataset.empty(), "empty_dataset", "cannot build a vocabulary from an empty dataset");
  std::set<std::string> words;
  for (const auto& [label, instances] : dataset) {
    for (const auto& inst : instances) words.insert(inst.tokens.begin(), inst.tokens.end());
  }
  Vocabulary v;
  v.id_to_token = {"<pad>", "<unk>"};
  for (const auto& w : words) v.id_to_token.push_back(w);
  for (int i = 0; i < v.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;
  return v;
}

/// Vocabulary over several datasets (e.g. train + validation token inventory,
/// mirroring a pretrained vocabulary that covers both splits).
inline Vocabulary build_vocab_over(const std::vector<const Dataset*>& datasets) {
  Dataset merged;
  for (const Dataset* d : datasets) {
    for (const auto& [label, instances] : *d) {
      auto& bucket = merged[label];
      bucket.insert(bucket.end(), instances.begin(), instances.end());
    }
  }
  return build_vocab(merged);
}

// ---------------------------------------------------------------------------
// Episodes

/// One N-way-K-shot task. Instances are borrowed from the dataset, which is
/// immutable after load.
struct Episode {
  std::vector<std::string> way_labels;                                // N
  std::vector<std::vector<const AnnotatedInstance*>> support;         // N x K
  std::vector<std::pair<const AnnotatedInstance*, int>> queries;      // (instance, way index)
};

/// Sample an N-way-K-shot episode with Q queries per way. Sampling is without
/// replacement within a label; the same seed state produces the same episode.
inline Episode sample_episode(const Dataset& dataset, int n_way, int k_shot, int q_queries,
                              Rng& rng) {
  require(n_way >= 1 && k_shot >= 1 && q_queries >= 0, "bad_episode_shape",
          "N and K must be positive, Q non-negative");
  require(static_cast<int>(dataset.size()) >= n_way, "insufficient_labels",
          "dataset has " + std::to_string(dataset.size()) + " labels, episode needs " +
              std::to_string(n_way));
  std::vector<const std::string*> labels;
  labels.reserve(dataset.size());
  for (const auto& [label, instances] : dataset) labels.push_back(&label);

  Episode ep;
  const auto picked = sample_without_replacement(rng, labels.size(), static_cast<std::size_t>(n_way));
  for (std::size_t idx : picked) ep.way_labels.push_back(*labels[idx]);

  ep.support.resize(n_way);
  for (int w = 0; w < n_way; ++w) {
    const auto& pool = dataset.at(ep.way_labels[w]);
    require(static_cast<int>(pool.size()) >= k_shot + q_queries, "insufficient_instances",
            "relation '" + ep.way_labels[w] + "' has " + std::to_string(pool.size()) +
                " instances, episode needs " + std::to_string(k_shot + q_queries));
    const auto chosen =
        sample_without_replacement(rng, pool.size(), static_cast<std::size_t>(k_shot + q_queries));
    for (int k = 0; k < k_shot; ++k) ep.support[w].push_back(&pool[chosen[k]]);
    for (int q = 0; q < q_queries; ++q) ep.queries.emplace_back(&pool[chosen[k_shot + q]], w);
  }
  return ep;
}

}  // namespace cteg
