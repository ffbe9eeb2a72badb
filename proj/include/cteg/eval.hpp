#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cteg/model.hpp"
#include "cteg/preprocess.hpp"
#include "cteg/train.hpp"

namespace cteg {

struct EvalResult {
  double mean_accuracy = 0.0;
  double std_dev = 0.0;       // over per-episode accuracies
  double std_error = 0.0;
  int episodes = 0;
  long total_queries = 0;
};

namespace detail {

inline void finish_stats(EvalResult& r, const std::vector<double>& per_episode) {
  r.episodes = static_cast<int>(per_episode.size());
  if (per_episode.empty()) return;
  double sum = 0.0;
  for (double a : per_episode) sum += a;
  r.mean_accuracy = sum / per_episode.size();
  if (per_episode.size() > 1) {
    double ss = 0.0;
    for (double a : per_episode) ss += (a - r.mean_accuracy) * (a - r.mean_accuracy);
    r.std_dev = std::sqrt(ss / (per_episode.size() - 1));
    r.std_error = r.std_dev / std::sqrt(static_cast<double>(per_episode.size()));
  }
}

}  // namespace detail

/// Episode-level evaluation against any classifier with the signature
/// (episode, support-encodings, query-encodings) -> predicted way indices.
/// The model adapter below is the production path; tests inject stubs.
template <typename PredictFn>
EvalResult evaluate_with(const Dataset& data, Preprocessor& prep, int n_way, int k_shot,
                         int n_query, int episodes, std::uint64_t seed, PredictFn&& predict_fn) {
  Rng rng(seed);
  std::vector<double> per_episode;
  per_episode.reserve(episodes);
  EvalResult result;
  for (int e = 0; e < episodes; ++e) {
    const Episode ep = sample_episode(data, n_way, k_shot, n_query, rng);
    std::vector<std::vector<const EncodedInstance*>> support;
    for (const auto& group : ep.support) {
      std::vector<const EncodedInstance*> enc;
      for (const AnnotatedInstance* inst : group) enc.push_back(&prep.encode_cached(inst));
      support.push_back(std::move(enc));
    }
    std::vector<std::pair<const EncodedInstance*, int>> queries;
    for (const auto& [inst, gold] : ep.queries) {
      queries.emplace_back(&prep.encode_cached(inst), gold);
    }
    const std::vector<int> preds = predict_fn(ep, support, queries);
    int correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == queries[i].second) ++correct;
    }
    per_episode.push_back(static_cast<double>(correct) / preds.size());
    result.total_queries += static_cast<long>(preds.size());
  }
  detail::finish_stats(result, per_episode);
  return result;
}

/// Mean episode accuracy (+/- std over episode means) of a trained model.
inline EvalResult evaluate(const Model& model, const Dataset& data, Preprocessor& prep, int n_way,
                           int k_shot, int n_query, int episodes, std::uint64_t seed) {
  require(n_way == model.config().n_way, "bad_episode_shape",
          "model was trained " + std::to_string(model.config().n_way) + "-way, asked to eval " +
              std::to_string(n_way) + "-way");
  return evaluate_with(data, prep, n_way, k_shot, n_query, episodes, seed,
                       [&](const Episode&, const auto& support, const auto& queries) {
                         return model.forward_episode(support, queries).predictions();
                       });
}

// ---------------------------------------------------------------------------
// Confusion matrices

/// Row-normalized confusion counts over a focus label subset, with one extra
/// "other" column for predictions that fall outside the focus set.
struct ConfusionMatrix {
  std::vector<std::string> labels;        // focus labels, row & column order
  std::vector<std::vector<double>> rows;  // labels.size() x (labels.size() + 1)

  double diagonal_mass() const {
    double d = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) d += rows[i][i];
    return rows.empty() ? 0.0 : d / rows.size();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    auto cols = labels;
    cols.push_back("other");
    j["labels"] = labels;
    j["columns"] = cols;
    j["rows"] = rows;
    j["diagonal_mass"] = diagonal_mass();
    return j;
  }
};

/// Episodes for confusion analysis force-include every focus label among the
/// N ways; the remaining ways are sampled from the other labels.
inline Episode sample_focus_episode(const Dataset& data, const std::vector<std::string>& focus,
                                    int n_way, int k_shot, int n_query, Rng& rng) {
  require(static_cast<int>(focus.size()) <= n_way, "bad_episode_shape",
          "more focus labels than episode ways");
  for (const auto& f : focus) {
    require(data.count(f), "unknown_relation", "focus label '" + f + "' absent from dataset");
  }
  std::vector<std::string> others;
  for (const auto& [label, _] : data) {
    if (std::find(focus.begin(), focus.end(), label) == focus.end()) others.push_back(label);
  }
  const int extra = n_way - static_cast<int>(focus.size());
  require(static_cast<int>(others.size()) >= extra, "insufficient_labels",
          "not enough non-focus labels to fill the episode");

  std::vector<std::string> ways = focus;
  for (std::size_t idx : sample_without_replacement(rng, others.size(),
                                                    static_cast<std::size_t>(extra))) {
    ways.push_back(others[idx]);
  }

  Episode ep;
  ep.way_labels = ways;
  ep.support.resize(ways.size());
  for (std::size_t w = 0; w < ways.size(); ++w) {
    const auto& pool = data.at(ways[w]);
    require(static_cast<int>(pool.size()) >= k_shot + n_query, "insufficient_instances",
            "relation '" + ways[w] + "' too small for the episode");
    const auto chosen =
        sample_without_replacement(rng, pool.size(), static_cast<std::size_t>(k_shot + n_query));
    for (int k = 0; k < k_shot; ++k) ep.support[w].push_back(&pool[chosen[k]]);
    for (int q = 0; q < n_query; ++q) {
      ep.queries.emplace_back(&pool[chosen[k_shot + q]], static_cast<int>(w));
    }
  }
  return ep;
}

template <typename PredictFn>
ConfusionMatrix confusion_matrix_with(const Dataset& data, Preprocessor& prep,
                                      const std::vector<std::string>& focus, int n_way, int k_shot,
                                      int n_query, int episodes, std::uint64_t seed,
                                      PredictFn&& predict_fn) {
  Rng rng(seed);
  const std::size_t f = focus.size();
  std::vector<std::vector<double>> counts(f, std::vector<double>(f + 1, 0.0));
  for (int e = 0; e < episodes; ++e) {
    const Episode ep = sample_focus_episode(data, focus, n_way, k_shot, n_query, rng);
    std::vector<std::vector<const EncodedInstance*>> support;
    for (const auto& group : ep.support) {
      std::vector<const EncodedInstance*> enc;
      for (const AnnotatedInstance* inst : group) enc.push_back(&prep.encode_cached(inst));
      support.push_back(std::move(enc));
    }
    std::vector<std::pair<const EncodedInstance*, int>> queries;
    for (const auto& [inst, gold] : ep.queries) {
      queries.emplace_back(&prep.encode_cached(inst), gold);
    }
    const std::vector<int> preds = predict_fn(ep, support, queries);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const std::size_t true_way = static_cast<std::size_t>(queries[i].second);
      if (true_way >= f) continue;  // only focus-label queries are tallied
      const std::size_t pred_way = static_cast<std::size_t>(preds[i]);
      counts[true_way][pred_way < f ? pred_way : f] += 1.0;
    }
  }
  ConfusionMatrix cm;
  cm.labels = focus;
  cm.rows.resize(f);
  for (std::size_t i = 0; i < f; ++i) {
    double total = 0.0;
    for (double c : counts[i]) total += c;
    require(total > 0.0, "empty_row", "no queries observed for focus label '" + focus[i] + "'");
    for (double c : counts[i]) cm.rows[i].push_back(c / total);
  }
  return cm;
}

inline ConfusionMatrix confusion_matrix(const Model& model, const Dataset& data,
                                        Preprocessor& prep, const std::vector<std::string>& focus,
                                        int n_way, int k_shot, int n_query, int episodes,
                                        std::uint64_t seed) {
  return confusion_matrix_with(data, prep, focus, n_way, k_shot, n_query, episodes, seed,
                               [&](const Episode&, const auto& support, const auto& queries) {
                                 return model.forward_episode(support, queries).predictions();
                               });
}

// ---------------------------------------------------------------------------
// Artifact exports

/// Per-token gate values of one instance, as plot-ready JSON.
inline nlohmann::json export_gates(const Model& model, const AnnotatedInstance& inst,
                                   const Preprocessor& prep) {
  const EncodedInstance enc = prep.encode(inst);
  const Tensor g = model.gates(enc);
  auto out = nlohmann::json::array();
  for (int i = 0; i < inst.length(); ++i) {
    out.push_back({{"token", inst.tokens[i]}, {"gate", g.at(static_cast<std::size_t>(i))}});
  }
  return out;
}

/// Distance-distribution dump for one query of an episode: raw delta and
/// delta_bar plus both softmax views, the prediction, and the gold way.
inline nlohmann::json export_distances(const Model& model,
                                       const std::vector<std::vector<const EncodedInstance*>>& support,
                                       const std::vector<std::pair<const EncodedInstance*, int>>& queries,
                                       int query_index, bool literal_delta_softmax = false) {
  require(query_index >= 0 && static_cast<std::size_t>(query_index) < queries.size(),
          "index_out_of_range", "query index out of range");
  const EpisodeForward fwd = model.forward_episode(support, queries);
  const QueryForward& q = fwd.queries[static_cast<std::size_t>(query_index)];
  const Tensor delta_bar = model.head().project(q.delta);
  const Tensor p_true = softmax(literal_delta_softmax ? q.delta : neg(q.delta));
  const Tensor p_conf = softmax(delta_bar);
  nlohmann::json j;
  j["delta"] = q.delta.values();
  j["delta_bar"] = delta_bar.values();
  j["p_true"] = p_true.values();
  j["p_conf"] = p_conf.values();
  j["predicted"] = predict(q.delta);
  j["gold"] = q.gold;
  return j;
}

}  // namespace cteg
