#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cteg/config.hpp"
#include "cteg/model.hpp"
#include "cteg/optim.hpp"
#include "cteg/preprocess.hpp"

namespace cteg {

// ---------------------------------------------------------------------------
// Losses

/// True-relation loss: cross-entropy between one-hot(gold) and softmax over
/// negated distances, so the nearest prototype carries the highest
/// probability. `literal` drops the negation (softmax over raw distances,
/// the equation exactly as printed) for comparison runs.
inline Tensor true_loss(const Tensor& delta, int gold, bool literal = false) {
  require(gold >= 0 && static_cast<std::size_t>(gold) < delta.numel(), "index_out_of_range",
          "gold label outside the episode ways");
  const Tensor logits = literal ? delta : neg(delta);
  return neg(pick(log_softmax(logits), static_cast<std::size_t>(gold)));
}

/// Confusing-relation loss: cross-entropy between one-hot(confusing) and
/// softmax(delta_bar). delta_bar entries are learned scores, used un-negated.
inline Tensor confusing_loss(const Tensor& delta_bar, int confusing) {
  require(confusing >= 0 && static_cast<std::size_t>(confusing) < delta_bar.numel(),
          "index_out_of_range", "confusing label outside the episode ways");
  return neg(pick(log_softmax(delta_bar), static_cast<std::size_t>(confusing)));
}

/// Pushing-away loss: L_kl = -KL(p || q) with p = softmax(-delta) and
/// q = softmax(delta_bar). Always <= 0; 0 iff p == q. Gradients flow into
/// both branches.
inline Tensor kl_push_loss(const Tensor& delta, const Tensor& delta_bar, bool literal = false) {
  require(delta.numel() == delta_bar.numel(), "shape_mismatch",
          "kl_push_loss: distance vectors of different lengths");
  const Tensor logits = literal ? delta : neg(delta);
  const Tensor p = softmax(logits);
  const Tensor log_p = log_softmax(logits);
  const Tensor log_q = log_softmax(delta_bar);
  return neg(sum(mul(p, sub(log_p, log_q))));
}

/// A query the model got wrong: gold r, predicted (confusing) r_bar.
struct MisclassifiedRecord {
  int query_index = 0;
  int gold = 0;        // r
  int predicted = 0;   // r_bar, always != gold
};

inline std::vector<MisclassifiedRecord> select_misclassified(const std::vector<int>& predictions,
                                                             const std::vector<int>& gold) {
  require(predictions.size() == gold.size(), "shape_mismatch",
          "prediction/gold count mismatch");
  std::vector<MisclassifiedRecord> records;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] != gold[i]) {
      records.push_back({static_cast<int>(i), gold[i], predictions[i]});
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Episodic trainer

struct StepMetrics {
  double loss_true = 0.0;   // L
  double loss_conf = 0.0;   // L_bar, 0 when no query was misclassified
  double loss_kl = 0.0;     // L_kl, 0 when no query was misclassified
  double accuracy = 0.0;    // episode accuracy from the phase-1 forward
  int n_misclassified = 0;
};

namespace detail {

inline Tensor mean_of(const std::vector<Tensor>& scalars) {
  Tensor acc = scalars[0];
  for (std::size_t i = 1; i < scalars.size(); ++i) acc = add(acc, scalars[i]);
  return scale(acc, 1.0 / static_cast<double>(scalars.size()));
}

}  // namespace detail

/// Runs episodic confusion-aware training. The TWO_PHASE schedule mirrors the
/// "asynchronous" description: a true-relation step over all queries, then a
/// confusing-relation + KL step over the queries that step misclassified,
/// re-forwarded with the updated parameters. No misclassifications, no second
/// update. The JOINT schedule folds everything into one objective and step.
class Trainer {
 public:
  Trainer(Model& model, Preprocessor& prep, const TrainConfig& cfg)
      : model_(model), prep_(prep), cfg_(cfg),
        optimizer_(AdamConfig{cfg.lr, cfg.weight_decay}),
        cat_optimizer_(AdamConfig{cfg.lr, cfg.weight_decay}) {
    cfg_.validate();
  }

  const TrainConfig& config() const { return cfg_; }

  StepMetrics train_step(const Episode& episode) {
    const auto [support, queries] = encode_episode(episode);
    StepMetrics metrics;

    EpisodeForward fwd = model_.forward_episode(support, queries);
    std::vector<Tensor> losses;
    std::vector<int> gold;
    for (const auto& q : fwd.queries) {
      losses.push_back(true_loss(q.delta, q.gold, cfg_.literal_delta_softmax));
      gold.push_back(q.gold);
    }
    const Tensor loss_true = detail::mean_of(losses);
    metrics.loss_true = loss_true.value();

    const std::vector<int> preds = fwd.predictions();
    const auto mis = select_misclassified(preds, gold);
    metrics.n_misclassified = static_cast<int>(mis.size());
    metrics.accuracy = 1.0 - static_cast<double>(mis.size()) / static_cast<double>(preds.size());

    if (cfg_.schedule == Schedule::TWO_PHASE) {
      model_.params().zero_grad();
      backward(loss_true);
      optimizer_.step(model_.params());

      if (cfg_.cat_enabled() && !mis.empty()) {
        // phase 2: re-forward the misclassified queries with updated parameters
        std::vector<std::pair<const EncodedInstance*, int>> mis_queries;
        for (const auto& r : mis) mis_queries.push_back(queries[r.query_index]);
        EpisodeForward fwd2 = model_.forward_episode(support, mis_queries);
        std::vector<Tensor> conf_losses, kl_losses;
        for (std::size_t i = 0; i < mis.size(); ++i) {
          const Tensor& delta = fwd2.queries[i].delta;
          const Tensor delta_bar = model_.head().project(delta);
          conf_losses.push_back(confusing_loss(delta_bar, mis[i].predicted));
          kl_losses.push_back(kl_push_loss(delta, delta_bar, cfg_.literal_delta_softmax));
        }
        const Tensor loss_conf = detail::mean_of(conf_losses);
        const Tensor loss_kl = detail::mean_of(kl_losses);
        metrics.loss_conf = loss_conf.value();
        metrics.loss_kl = loss_kl.value();
        model_.params().zero_grad();
        backward(add(loss_conf, loss_kl));
        step_phase2();
      }
    } else {  // JOINT: one objective, one step
      Tensor loss_all = loss_true;
      if (cfg_.cat_enabled() && !mis.empty()) {
        std::vector<Tensor> conf_losses, kl_losses;
        for (const auto& r : mis) {
          const Tensor& delta = fwd.queries[r.query_index].delta;
          const Tensor delta_bar = model_.head().project(delta);
          conf_losses.push_back(confusing_loss(delta_bar, r.predicted));
          kl_losses.push_back(kl_push_loss(delta, delta_bar, cfg_.literal_delta_softmax));
        }
        const Tensor loss_conf = detail::mean_of(conf_losses);
        const Tensor loss_kl = detail::mean_of(kl_losses);
        metrics.loss_conf = loss_conf.value();
        metrics.loss_kl = loss_kl.value();
        loss_all = add(loss_all, add(loss_conf, loss_kl));
      }
      model_.params().zero_grad();
      backward(loss_all);
      optimizer_.step(model_.params());
    }
    return metrics;
  }

  /// Support/query encodings for an episode, cached in the preprocessor.
  std::pair<std::vector<std::vector<const EncodedInstance*>>,
            std::vector<std::pair<const EncodedInstance*, int>>>
  encode_episode(const Episode& episode) {
    std::vector<std::vector<const EncodedInstance*>> support;
    for (const auto& group : episode.support) {
      std::vector<const EncodedInstance*> enc;
      for (const AnnotatedInstance* inst : group) enc.push_back(&prep_.encode_cached(inst));
      support.push_back(std::move(enc));
    }
    std::vector<std::pair<const EncodedInstance*, int>> queries;
    for (const auto& [inst, gold] : episode.queries) {
      queries.emplace_back(&prep_.encode_cached(inst), gold);
    }
    return {std::move(support), std::move(queries)};
  }

 private:
  // The confusing-relation process keeps its own optimizer state: its
  // gradients conflict with the true-relation objective step to step, so a
  // shared second moment would both corrupt the main process and grant the
  // confusion step full size. With separate moments the confusion updates
  // self-attenuate to their signal-to-noise ratio.
  void step_phase2() {
    if (cfg_.cat_projection_only) {
      cat_optimizer_.step_filtered(model_.params(), [](const Parameter& p) {
        return p.name.rfind("proto.", 0) == 0;
      });
    } else {
      cat_optimizer_.step(model_.params());
    }
  }

  Model& model_;
  Preprocessor& prep_;
  TrainConfig cfg_;
  Adam optimizer_;
  Adam cat_optimizer_;
};

/// One training-log record (serialized as a JSONL line by the CLI).
struct TrainLogEntry {
  int step = 0;
  StepMetrics metrics;
  std::optional<double> val_acc;
};

/// Full training driver: `steps` episodes sampled from `train_data`, with
/// optional periodic evaluation on held-out labels. Deterministic given the
/// config seed.
template <typename EvalFn>
std::vector<TrainLogEntry> train_loop(Model& model, Preprocessor& prep, const Dataset& train_data,
                                      const TrainConfig& cfg, EvalFn&& periodic_eval) {
  Trainer trainer(model, prep, cfg);
  Rng episode_rng(derive_seed(cfg.seed, 1));
  std::vector<TrainLogEntry> log;
  log.reserve(cfg.steps);
  for (int step = 1; step <= cfg.steps; ++step) {
    const Episode ep = sample_episode(train_data, cfg.n_way, cfg.k_shot, cfg.n_query, episode_rng);
    TrainLogEntry entry;
    entry.step = step;
    entry.metrics = trainer.train_step(ep);
    if (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
      entry.val_acc = periodic_eval(step);
    }
    log.push_back(entry);
  }
  return log;
}

inline std::vector<TrainLogEntry> train_loop(Model& model, Preprocessor& prep,
                                             const Dataset& train_data, const TrainConfig& cfg) {
  return train_loop(model, prep, train_data, cfg,
                    [](int) { return std::numeric_limits<double>::quiet_NaN(); });
}

}  // namespace cteg
