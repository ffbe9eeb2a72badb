#pragma once

#include <algorithm>
#include <limits>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cteg/corpus.hpp"
#include "cteg/error.hpp"

namespace cteg {

inline const std::string kTagSelf = "self";
inline const std::string kTagOther = "other";

/// Per-token relative positions to both entities and syntactic tags from the
/// pruned dependency tree. All four sequences have the sentence's length.
struct EntityFeatures {
  std::vector<int> pos1;
  std::vector<int> pos2;
  std::vector<std::string> tag1;
  std::vector<std::string> tag2;
};

/// Signed token-to-span distance: 0 inside the span, i-lo left of it,
/// i-hi right of it, clipped to +-max_length.
inline std::vector<int> relative_positions(int n, const Span& span,
                                           int max_length = kDefaultMaxLength) {
  require(0 <= span.lo && span.lo <= span.hi && span.hi < n, "span_out_of_range",
          "span out of range");
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) {
    int d = 0;
    if (i < span.lo) d = i - span.lo;
    else if (i > span.hi) d = i - span.hi;
    out[i] = std::clamp(d, -max_length, max_length);
  }
  return out;
}

/// An edge survives pruning iff at least one endpoint token lies inside
/// span1 or span2. The root pseudo-head (-1) is never an endpoint.
inline std::vector<DepEdge> prune_tree(const std::vector<DepEdge>& dep_edges, const Span& span1,
                                       const Span& span2) {
  const auto in_either = [&](int i) {
    return i >= 0 && (span1.contains(i) || span2.contains(i));
  };
  std::vector<DepEdge> kept;
  for (const DepEdge& e : dep_edges) {
    if (in_either(e.head) || in_either(e.child)) kept.push_back(e);
  }
  return kept;
}

/// Tags for one entity: "self" inside the span, the dependency label for
/// tokens connected to any in-span token (either direction), "other" otherwise.
/// A token reachable through several edges takes the label of the edge with
/// the smallest child index.
inline std::vector<std::string> syntactic_tags(const std::vector<DepEdge>& dep_edges,
                                               const Span& span, int n) {
  std::vector<std::string> tags(n, kTagOther);
  // best[i] = child index of the edge currently supplying token i's tag
  std::vector<int> best(n, std::numeric_limits<int>::max());
  for (const DepEdge& e : dep_edges) {
    if (e.head < 0) continue;  // root edge links to no second token
    int outside = -1;
    if (span.contains(e.head) && !span.contains(e.child)) outside = e.child;
    else if (span.contains(e.child) && !span.contains(e.head)) outside = e.head;
    if (outside < 0 || outside >= n) continue;
    if (e.child < best[outside]) {
      best[outside] = e.child;
      tags[outside] = e.label;
    }
  }
  for (int i = std::max(span.lo, 0); i <= span.hi && i < n; ++i) tags[i] = kTagSelf;
  return tags;
}

/// Pure composition of the feature extractors above.
inline EntityFeatures featurize(const AnnotatedInstance& inst,
                                int max_length = kDefaultMaxLength) {
  const int n = inst.length();
  EntityFeatures f;
  f.pos1 = relative_positions(n, inst.span1, max_length);
  f.pos2 = relative_positions(n, inst.span2, max_length);
  f.tag1 = syntactic_tags(inst.dep_edges, inst.span1, n);
  f.tag2 = syntactic_tags(inst.dep_edges, inst.span2, n);
  return f;
}

/// tag -> id, with "self" and "other" reserved. Unseen labels at evaluation
/// time fall back to the "other" id, so rare validation-split labels never crash.
struct TagVocabulary {
  std::vector<std::string> id_to_tag = {kTagSelf, kTagOther};
  std::unordered_map<std::string, int> tag_to_id = {{kTagSelf, 0}, {kTagOther, 1}};

  int id(const std::string& tag) const {
    auto it = tag_to_id.find(tag);
    return it == tag_to_id.end() ? 1 : it->second;  // fallback: "other"
  }
  int size() const { return static_cast<int>(id_to_tag.size()); }

  static TagVocabulary from_tags(const std::vector<std::string>& tags) {
    TagVocabulary v;
    std::set<std::string> sorted(tags.begin(), tags.end());
    for (const auto& t : sorted) {
      if (!v.tag_to_id.count(t)) {
        v.tag_to_id[t] = v.size();
        v.id_to_tag.push_back(t);
      }
    }
    return v;
  }

  /// Inventory from the training split: "self", "other", then every
  /// dependency label observed on any instance, sorted.
  static TagVocabulary from_dataset(const Dataset& dataset) {
    std::vector<std::string> labels;
    for (const auto& [rel, instances] : dataset) {
      for (const auto& inst : instances) {
        for (const auto& e : inst.dep_edges) labels.push_back(e.label);
      }
    }
    return from_tags(labels);
  }
};

}  // namespace cteg
