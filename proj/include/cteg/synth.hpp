#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cteg/corpus.hpp"
#include "cteg/error.hpp"
#include "cteg/rng.hpp"

namespace cteg {

/// One surface form of a relation's cue phrase. `pattern` holds the fragment
/// with "$e1"/"$e2" marking the entity-pair slots; a token written "*word"
/// is a modifier that attaches to the left entity (and so carries a syntactic
/// tag); the rest are plain cue tokens. `head` indexes the cue token the
/// entities attach to (default: last plain token).
struct CuePattern {
  std::vector<std::string> pattern;
  int head = -1;
};

/// A relation with one or more interchangeable cue patterns; the generator
/// draws one per instance, so token offsets vary while tags stay exact.
struct RelationTemplate {
  std::string relation;
  std::vector<CuePattern> patterns;

  static RelationTemplate single(std::string relation, std::vector<std::string> pattern,
                                 int head = -1) {
    RelationTemplate t;
    t.relation = std::move(relation);
    t.patterns.push_back({std::move(pattern), head});
    return t;
  }
};

/// Templates organized into confusable groups: a sentence always combines two
/// relations from the same group, so group members co-occur and confuse.
struct SynthConfig {
  std::vector<std::vector<std::string>> names;  // entity name pool, pre-tokenized
  std::vector<std::vector<RelationTemplate>> groups;
  int instances_per_relation = 100;
  // Probability that the confusor is the labeled relation's designated
  // neighbor (the next template in its group) instead of a uniform draw.
  // Skewed co-occurrence contaminates prototypes and makes the confusion
  // systematic rather than diffuse.
  double confusor_skew = 0.0;
  // Probability that the labeled cue loses its modifier token. Such
  // sentences are only solvable through the co-occurring cue and the skew
  // statistics, which keeps a fraction of hard, systematically confusable
  // queries in play.
  double modifier_drop = 0.0;

  static SynthConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

namespace detail {

struct PatternSlots {
  int e1 = -1;   // pattern index of "$e1"
  int e2 = -1;
  int head = -1;
  std::vector<int> modifiers;  // indices of "*word" entries
};

inline bool is_modifier(const std::string& tok) { return tok.size() > 1 && tok[0] == '*'; }

inline PatternSlots pattern_slots(const CuePattern& p, const std::string& relation) {
  PatternSlots s;
  for (int i = 0; i < static_cast<int>(p.pattern.size()); ++i) {
    if (p.pattern[i] == "$e1") s.e1 = i;
    else if (p.pattern[i] == "$e2") s.e2 = i;
    else if (is_modifier(p.pattern[i])) s.modifiers.push_back(i);
  }
  require(s.e1 >= 0 && s.e2 >= 0, "template_no_entity_slot",
          "template '" + relation + "' has no entity slot ($e1/$e2)");
  require(s.e1 < s.e2, "template_slot_order",
          "template '" + relation + "' must place $e1 before $e2");
  if (p.head >= 0) {
    require(p.head < static_cast<int>(p.pattern.size()) && p.head != s.e1 && p.head != s.e2 &&
                !is_modifier(p.pattern[p.head]),
            "template_bad_head", "template '" + relation + "' head must index a plain cue token");
    s.head = p.head;
  } else {
    for (int i = static_cast<int>(p.pattern.size()) - 1; i >= 0; --i) {
      if (i != s.e1 && i != s.e2 && !is_modifier(p.pattern[i])) {
        s.head = i;
        break;
      }
    }
    require(s.head >= 0, "template_no_cue", "template '" + relation + "' has no cue token");
  }
  return s;
}

struct Fragment {
  std::vector<std::string> tokens;
  Span left, right;  // entity spans, fragment-local
  int head = 0;      // cue head index, fragment-local
  std::vector<DepEdge> edges;  // fragment-local, excluding the head's own arc
};

inline Fragment realize(const CuePattern& p, const std::string& relation,
                        const std::vector<std::string>& left_name,
                        const std::vector<std::string>& right_name,
                        bool drop_modifiers = false) {
  CuePattern effective = p;
  if (drop_modifiers) {
    std::vector<std::string> kept;
    int head = effective.head;
    for (int i = 0; i < static_cast<int>(effective.pattern.size()); ++i) {
      if (is_modifier(effective.pattern[i])) {
        if (i < effective.head) --head;
        continue;
      }
      kept.push_back(effective.pattern[i]);
    }
    effective.pattern = std::move(kept);
    effective.head = head;
  }
  const PatternSlots slots = pattern_slots(effective, relation);
  const CuePattern& pat = effective;
  Fragment f;
  std::vector<int> pattern_pos(pat.pattern.size());
  for (int i = 0; i < static_cast<int>(pat.pattern.size()); ++i) {
    pattern_pos[i] = static_cast<int>(f.tokens.size());
    if (i == slots.e1) {
      f.left = {static_cast<int>(f.tokens.size()),
                static_cast<int>(f.tokens.size() + left_name.size()) - 1};
      f.tokens.insert(f.tokens.end(), left_name.begin(), left_name.end());
    } else if (i == slots.e2) {
      f.right = {static_cast<int>(f.tokens.size()),
                 static_cast<int>(f.tokens.size() + right_name.size()) - 1};
      f.tokens.insert(f.tokens.end(), right_name.begin(), right_name.end());
    } else if (is_modifier(pat.pattern[i])) {
      f.tokens.push_back(pat.pattern[i].substr(1));
    } else {
      f.tokens.push_back(pat.pattern[i]);
    }
  }
  f.head = pattern_pos[slots.head];
  // the cue head attaches to every token of its entity pair
  for (int i = f.left.lo; i <= f.left.hi; ++i) f.edges.push_back({f.head, i, "nsubj"});
  for (int i = f.right.lo; i <= f.right.hi; ++i) f.edges.push_back({f.head, i, "nmod"});
  // modifiers hang off the left entity so they carry a syntactic tag
  for (int m : slots.modifiers) f.edges.push_back({f.left.hi, pattern_pos[m], "amod"});
  for (int i = 0; i < static_cast<int>(pat.pattern.size()); ++i) {
    if (i == slots.e1 || i == slots.e2 || i == slots.head) continue;
    if (is_modifier(pat.pattern[i])) continue;
    f.edges.push_back({f.head, pattern_pos[i], "dep"});
  }
  return f;
}

inline void append_fragment(AnnotatedInstance& inst, const Fragment& f, int offset) {
  inst.tokens.insert(inst.tokens.end(), f.tokens.begin(), f.tokens.end());
  for (DepEdge e : f.edges) {
    e.head += offset;
    e.child += offset;
    inst.dep_edges.push_back(e);
  }
}

}  // namespace detail

inline void validate_synth_config(const SynthConfig& cfg) {
  int total = 0;
  for (const auto& group : cfg.groups) total += static_cast<int>(group.size());
  require(total >= 2, "too_few_templates", "need at least 2 relation templates");
  for (const auto& group : cfg.groups) {
    require(group.size() >= 2, "group_too_small",
            "every confusable group needs at least 2 templates");
    for (const auto& t : group) {
      require(!t.patterns.empty(), "template_no_pattern",
              "template '" + t.relation + "' has no cue pattern");
      for (const auto& p : t.patterns) detail::pattern_slots(p, t.relation);
    }
  }
  require(!cfg.names.empty(), "no_names", "entity name pool is empty");
  for (const auto& name : cfg.names) {
    require(!name.empty(), "empty_name", "entity names must have at least one token");
  }
  require(cfg.instances_per_relation >= 1, "bad_instance_count",
          "instances_per_relation must be positive");
}

/// Generate the confusable corpus. A sentence for the ordered pair (a, b) is
/// "[A1] cue_a [A2] and [B1] cue_b [B2]"; the instance is labeled with a and
/// its spans mark the A pair, so the co-occurring b cue is pure confusion.
/// Dependency edges attach each cue head to its own entity tokens.
inline Dataset generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  validate_synth_config(cfg);
  Rng rng(seed);
  Dataset dataset;
  for (const auto& group : cfg.groups) {
    for (std::size_t ti = 0; ti < group.size(); ++ti) {
      const RelationTemplate& labeled = group[ti];
      for (int i = 0; i < cfg.instances_per_relation; ++i) {
        // confusor: another template from the same group, biased toward the
        // next group member when confusor_skew is set
        std::size_t ci;
        if (cfg.confusor_skew > 0.0 &&
            uniform_real(rng, 0.0, 1.0) < cfg.confusor_skew) {
          ci = (ti + 1) % group.size();
        } else {
          ci = uniform_below(rng, group.size() - 1);
          if (ci >= ti) ++ci;
        }
        const RelationTemplate& confusor = group[ci];
        const bool labeled_first = uniform_below(rng, 2) == 0;

        const CuePattern& lab_pattern =
            labeled.patterns[uniform_below(rng, labeled.patterns.size())];
        const CuePattern& conf_pattern =
            confusor.patterns[uniform_below(rng, confusor.patterns.size())];

        const bool drop_mod =
            cfg.modifier_drop > 0.0 && uniform_real(rng, 0.0, 1.0) < cfg.modifier_drop;

        const auto name_idx = sample_without_replacement(rng, cfg.names.size(), 4);
        detail::Fragment lab =
            detail::realize(lab_pattern, labeled.relation, cfg.names[name_idx[0]],
                            cfg.names[name_idx[1]], drop_mod);
        detail::Fragment conf = detail::realize(conf_pattern, confusor.relation,
                                                cfg.names[name_idx[2]], cfg.names[name_idx[3]]);

        const detail::Fragment& first = labeled_first ? lab : conf;
        const detail::Fragment& second = labeled_first ? conf : lab;

        AnnotatedInstance inst;
        inst.relation = labeled.relation;
        detail::append_fragment(inst, first, 0);
        const int and_idx = static_cast<int>(inst.tokens.size());
        inst.tokens.push_back("and");
        const int off = and_idx + 1;
        detail::append_fragment(inst, second, off);

        inst.dep_edges.push_back({-1, first.head, "root"});
        inst.dep_edges.push_back({first.head, and_idx, "cc"});
        inst.dep_edges.push_back({first.head, off + second.head, "conj"});

        const int lab_off = labeled_first ? 0 : off;
        inst.span1 = {lab.left.lo + lab_off, lab.left.hi + lab_off};
        inst.span2 = {lab.right.lo + lab_off, lab.right.hi + lab_off};

        validate_instance(inst);
        dataset[inst.relation].push_back(std::move(inst));
      }
    }
  }
  return dataset;
}

/// Relation labels per group, in config order (group g -> its labels).
inline std::vector<std::vector<std::string>> synth_group_labels(const SynthConfig& cfg) {
  std::vector<std::vector<std::string>> out;
  for (const auto& group : cfg.groups) {
    std::vector<std::string> labels;
    for (const auto& t : group) labels.push_back(t.relation);
    out.push_back(std::move(labels));
  }
  return out;
}

inline SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig cfg;
  for (const auto& name : j.at("names")) {
    std::vector<std::string> toks;
    if (name.is_string()) {
      std::istringstream ss(name.get<std::string>());
      std::string t;
      while (ss >> t) toks.push_back(t);
    } else {
      for (const auto& t : name) toks.push_back(t.get<std::string>());
    }
    cfg.names.push_back(std::move(toks));
  }
  cfg.instances_per_relation = j.value("instances_per_relation", 100);
  cfg.confusor_skew = j.value("confusor_skew", 0.0);
  cfg.modifier_drop = j.value("modifier_drop", 0.0);
  for (const auto& jg : j.at("groups")) {
    std::vector<RelationTemplate> group;
    for (const auto& jt : jg) {
      RelationTemplate t;
      t.relation = jt.at("relation").get<std::string>();
      const auto read_pattern = [](const nlohmann::json& jp, int head) {
        CuePattern p;
        for (const auto& tok : jp) p.pattern.push_back(tok.get<std::string>());
        p.head = head;
        return p;
      };
      if (jt.contains("patterns")) {
        for (const auto& jp : jt.at("patterns")) {
          t.patterns.push_back(read_pattern(jp.at("pattern"), jp.value("head", -1)));
        }
      } else {
        t.patterns.push_back(read_pattern(jt.at("pattern"), jt.value("head", -1)));
      }
      group.push_back(std::move(t));
    }
    cfg.groups.push_back(std::move(group));
  }
  return cfg;
}

inline nlohmann::json SynthConfig::to_json() const {
  nlohmann::json j;
  auto names_j = nlohmann::json::array();
  for (const auto& n : names) {
    std::string joined;
    for (std::size_t i = 0; i < n.size(); ++i) {
      if (i) joined += ' ';
      joined += n[i];
    }
    names_j.push_back(joined);
  }
  j["names"] = names_j;
  j["instances_per_relation"] = instances_per_relation;
  j["confusor_skew"] = confusor_skew;
  j["modifier_drop"] = modifier_drop;
  auto groups_j = nlohmann::json::array();
  for (const auto& g : groups) {
    auto gj = nlohmann::json::array();
    for (const auto& t : g) {
      nlohmann::json tj;
      tj["relation"] = t.relation;
      auto pats = nlohmann::json::array();
      for (const auto& p : t.patterns) {
        nlohmann::json pj;
        pj["pattern"] = p.pattern;
        if (p.head >= 0) pj["head"] = p.head;
        pats.push_back(pj);
      }
      tj["patterns"] = pats;
      gj.push_back(tj);
    }
    groups_j.push_back(gj);
  }
  j["groups"] = groups_j;
  return j;
}

/// Built-in 12-relation corpus: relations are adjective+noun cue combinations
/// over a shared token inventory, grouped into 4 confusable triples. The
/// validation triples (groups 2 and 3) use noun+adjective combinations never
/// seen in the training triples, while every individual token does occur in
/// training — the desk-scale analogue of a pretrained vocabulary covering
/// unseen relations. Connective variants shift the cue offsets per instance,
/// so relative positions are noisy while syntactic tags stay exact.
inline SynthConfig default_synth_config(int instances_per_relation = 200) {
  SynthConfig cfg;
  cfg.instances_per_relation = instances_per_relation;
  const std::vector<std::string> raw_names = {
      "alice", "bob smith", "carol",      "david jones", "erin",  "frank",
      "grace lee", "henry", "iris",       "jack brown",  "karen", "leo",
      "mona",  "nick reyes", "olga",      "peter",       "quinn", "rosa diaz",
      "sam",   "tina cole"};
  for (const auto& n : raw_names) {
    std::istringstream ss(n);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) toks.push_back(t);
    cfg.names.push_back(std::move(toks));
  }

  const std::vector<std::vector<std::string>> connectives = {
      {"was", "the"}, {"became", "the"}, {"remained", "the"}, {"was", "known", "as", "the"}};
  const std::vector<std::string> tails = {"of", "to"};

  const auto make_template = [&](const std::string& noun, const std::string& adj) {
    RelationTemplate t;
    t.relation = noun + "_" + adj;
    for (const auto& conn : connectives) {
      for (const auto& tail : tails) {
        CuePattern p;
        p.pattern.push_back("$e1");
        p.pattern.insert(p.pattern.end(), conn.begin(), conn.end());
        p.pattern.push_back("*" + adj);
        p.pattern.push_back(noun);
        p.head = static_cast<int>(p.pattern.size()) - 1;
        p.pattern.push_back(tail);
        p.pattern.push_back("$e2");
        t.patterns.push_back(std::move(p));
      }
    }
    return t;
  };

  const auto triple = [&](const std::string& noun, const std::vector<std::string>& adjs) {
    std::vector<RelationTemplate> group;
    for (const auto& adj : adjs) group.push_back(make_template(noun, adj));
    return group;
  };

  // training groups cover all six adjectives; validation groups recombine
  // them with fresh nouns
  cfg.groups = {
      triple("companion", {"elder", "adopted", "former"}),
      triple("advisor", {"beloved", "distant", "loyal"}),
      triple("patron", {"elder", "adopted", "former"}),
      triple("rival", {"beloved", "distant", "loyal"}),
  };
  return cfg;
}

}  // namespace cteg
