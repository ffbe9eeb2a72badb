#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <string>
#include <vector>

#include "cteg/corpus.hpp"
#include "cteg/rng.hpp"

namespace cteg_test {

/// The Figure-2 sentence with entities as single hyphenated tokens and its
/// dependency parse (root at "mathematician", relative clause on "works").
inline cteg::AnnotatedInstance table2_instance() {
  cteg::AnnotatedInstance inst;
  inst.tokens = {"chen-chun-chang", "is", "a", "mathematician",
                 "who",             "works", "in", "model-theory"};
  inst.span1 = {0, 0};
  inst.span2 = {7, 7};
  inst.relation = "field_of_work";
  inst.dep_edges = {
      {-1, 3, "root"},  {3, 0, "nsubj"}, {3, 1, "cop"},  {3, 2, "det"},
      {3, 5, "acl:relcl"}, {5, 4, "nsubj"}, {5, 7, "nmod"}, {7, 6, "case"},
  };
  return inst;
}

/// Random valid instance: a random attachment tree, two disjoint spans.
inline cteg::AnnotatedInstance random_instance(cteg::Rng& rng, int max_n = 14) {
  const int n = 4 + static_cast<int>(cteg::uniform_below(rng, max_n - 3));
  cteg::AnnotatedInstance inst;
  for (int i = 0; i < n; ++i) inst.tokens.push_back("w" + std::to_string(i));
  inst.relation = "rel";

  const std::vector<std::string> labels = {"nsubj", "nmod", "case", "det", "amod", "conj"};
  inst.dep_edges.push_back({-1, 0, "root"});
  for (int i = 1; i < n; ++i) {
    const int head = static_cast<int>(cteg::uniform_below(rng, i));
    inst.dep_edges.push_back({head, i, labels[cteg::uniform_below(rng, labels.size())]});
  }

  // two disjoint spans of length 1-2
  const int l1 = static_cast<int>(cteg::uniform_below(rng, n - 3));
  const int r1 = l1 + static_cast<int>(cteg::uniform_below(rng, 2));
  const int remaining = n - (r1 + 1);
  const int l2 = r1 + 1 + static_cast<int>(cteg::uniform_below(rng, remaining));
  const int r2 = std::min(n - 1, l2 + static_cast<int>(cteg::uniform_below(rng, 2)));
  inst.span1 = {l1, r1};
  inst.span2 = {l2, r2};
  return inst;
}

}  // namespace cteg_test
