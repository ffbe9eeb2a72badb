#pragma once

#include <unordered_map>
#include <vector>

#include "cteg/corpus.hpp"
#include "cteg/featurize.hpp"

namespace cteg {

/// An instance reduced to the integer ids the model consumes.
struct EncodedInstance {
  std::vector<int> token_ids;
  std::vector<int> abs_pos;             // 0..n-1, absolute position embedding ids
  std::vector<int> pos1_idx, pos2_idx;  // relative positions shifted into [0, 2*max_length]
  std::vector<int> tag1_ids, tag2_ids;
  Span span1, span2;

  int length() const { return static_cast<int>(token_ids.size()); }
  bool in_span1(int i) const { return span1.contains(i); }
  bool in_span2(int i) const { return span2.contains(i); }
};

/// Lowers instances to ids. Featurization is pure, so results are cached per
/// instance pointer (datasets are immutable after load).
class Preprocessor {
 public:
  Preprocessor(Vocabulary vocab, TagVocabulary tags, int max_length = kDefaultMaxLength)
      : vocab_(std::move(vocab)), tags_(std::move(tags)), max_length_(max_length) {}

  const Vocabulary& vocab() const { return vocab_; }
  const TagVocabulary& tags() const { return tags_; }
  int max_length() const { return max_length_; }

  EncodedInstance encode(const AnnotatedInstance& inst) const {
    const EntityFeatures f = featurize(inst, max_length_);
    EncodedInstance e;
    const int n = inst.length();
    e.token_ids.reserve(n);
    for (const auto& t : inst.tokens) e.token_ids.push_back(vocab_.id(t));
    for (int i = 0; i < n; ++i) e.abs_pos.push_back(i);
    for (int i = 0; i < n; ++i) {
      e.pos1_idx.push_back(f.pos1[i] + max_length_);
      e.pos2_idx.push_back(f.pos2[i] + max_length_);
      e.tag1_ids.push_back(tags_.id(f.tag1[i]));
      e.tag2_ids.push_back(tags_.id(f.tag2[i]));
    }
    e.span1 = inst.span1;
    e.span2 = inst.span2;
    return e;
  }

  const EncodedInstance& encode_cached(const AnnotatedInstance* inst) {
    auto it = cache_.find(inst);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(inst, encode(*inst)).first->second;
  }

 private:
  Vocabulary vocab_;
  TagVocabulary tags_;
  int max_length_;
  std::unordered_map<const AnnotatedInstance*, EncodedInstance> cache_;
};

}  // namespace cteg
