// Command-line front end: corpus generation, featurization, training,
// evaluation, and the plot-ready JSON exports.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cteg/cteg.hpp"

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  cteg::require(in.good(), "file_not_found", "cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    cteg::fail("malformed_json", "malformed JSON in '" + path + "': " + ex.what());
  }
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  cteg::require(out.good(), "file_write_failed", "cannot write '" + path + "'");
  out << text;
}

struct LoadedCheckpoint {
  cteg::Checkpoint ckpt;
  cteg::Model model;
  cteg::Preprocessor prep;
};

LoadedCheckpoint load_model(const std::string& path) {
  cteg::Checkpoint ckpt = cteg::load_checkpoint(path);
  cteg::Model model = ckpt.rebuild();
  cteg::Preprocessor prep(ckpt.vocab, ckpt.tags, ckpt.model_config.max_length);
  return {std::move(ckpt), std::move(model), std::move(prep)};
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_featurize(const std::string& in_path, const std::string& out_path) {
  const cteg::Dataset data = cteg::load_jsonl(in_path);
  std::ofstream out(out_path);
  cteg::require(out.good(), "file_write_failed", "cannot write '" + out_path + "'");
  for (const auto& [label, instances] : data) {
    for (const auto& inst : instances) {
      const cteg::EntityFeatures f = cteg::featurize(inst);
      json j = cteg::detail::instance_to_json(inst);
      j["pos1"] = f.pos1;
      j["pos2"] = f.pos2;
      j["tag1"] = f.tag1;
      j["tag2"] = f.tag2;
      out << j.dump() << "\n";
    }
  }
  return 0;
}

int cmd_gen_synth(const std::string& templates_path, const std::string& out_path,
                  std::uint64_t seed) {
  const cteg::SynthConfig cfg = cteg::SynthConfig::from_json(read_json_file(templates_path));
  const cteg::Dataset data = cteg::generate_synthetic(cfg, seed);
  cteg::save_jsonl(data, out_path);
  std::size_t total = 0;
  for (const auto& [label, instances] : data) total += instances.size();
  json summary = {{"relations", data.size()}, {"instances", total}, {"out", out_path}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& val_path,
              const std::string& config_path, const std::string& ckpt_path,
              const std::string& log_path) {
  const json cfg_json = config_path.empty() ? json::object() : read_json_file(config_path);
  cteg::TrainConfig tcfg;
  if (cfg_json.contains("train")) cfg_json.at("train").get_to(tcfg);
  tcfg.validate();

  cteg::ModelConfig mcfg;
  if (cfg_json.contains("encoder")) cfg_json.at("encoder").get_to(mcfg.encoder);
  if (cfg_json.contains("gate")) cfg_json.at("gate").get_to(mcfg.gate);
  mcfg.max_length = cfg_json.value("max_length", mcfg.max_length);
  mcfg.encoder.mode = tcfg.encoder_mode();
  mcfg.gate.features = tcfg.gate_features();
  mcfg.n_way = tcfg.n_way;

  const cteg::Dataset train_data = cteg::load_jsonl(data_path, std::nullopt, mcfg.max_length);
  std::optional<cteg::Dataset> val_data;
  if (!val_path.empty()) val_data = cteg::load_jsonl(val_path, std::nullopt, mcfg.max_length);

  // Token inventory spans both splits (the pretrained-vocabulary analogue);
  // tag inventory comes from the training split only.
  std::vector<const cteg::Dataset*> sources{&train_data};
  if (val_data) sources.push_back(&*val_data);
  const cteg::Vocabulary vocab = cteg::build_vocab_over(sources);
  const cteg::TagVocabulary tags = cteg::TagVocabulary::from_dataset(train_data);
  mcfg.vocab_size = vocab.size();
  mcfg.tag_vocab_size = tags.size();

  cteg::Model model = cteg::Model::create(mcfg, tcfg.seed);
  cteg::Preprocessor prep(vocab, tags, mcfg.max_length);

  cteg::require(tcfg.eval_every == 0 || val_data.has_value(), "missing_val_data",
                "periodic evaluation requires --val-data");
  const auto periodic_eval = [&](int step) {
    return cteg::evaluate(model, *val_data, prep, tcfg.n_way, tcfg.k_shot, tcfg.n_query,
                          tcfg.eval_episodes, cteg::derive_seed(tcfg.seed, 1000 + step))
        .mean_accuracy;
  };
  const auto log = cteg::train_loop(model, prep, train_data, tcfg, periodic_eval);

  if (!log_path.empty()) {
    std::ofstream out(log_path);
    cteg::require(out.good(), "file_write_failed", "cannot write '" + log_path + "'");
    for (const auto& entry : log) {
      json line = {{"step", entry.step},
                   {"L", entry.metrics.loss_true},
                   {"L_bar", entry.metrics.loss_conf},
                   {"L_kl", entry.metrics.loss_kl},
                   {"acc", entry.metrics.accuracy},
                   {"n_misclassified", entry.metrics.n_misclassified}};
      if (entry.val_acc) line["val_acc"] = *entry.val_acc;
      out << line.dump() << "\n";
    }
  }
  cteg::save_checkpoint(ckpt_path, model, tcfg, vocab, tags);

  json summary = {{"steps", tcfg.steps}, {"ckpt", ckpt_path}};
  if (!log.empty()) summary["final_acc"] = log.back().metrics.accuracy;
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path, int n, int k, int q,
             int episodes, std::uint64_t seed) {
  LoadedCheckpoint lc = load_model(ckpt_path);
  const cteg::Dataset data = cteg::load_jsonl(data_path, std::nullopt, lc.ckpt.model_config.max_length);
  const cteg::EvalResult r =
      cteg::evaluate(lc.model, data, lc.prep, n, k, q, episodes, seed);
  json out = {{"accuracy", r.mean_accuracy},
              {"std", r.std_dev},
              {"std_error", r.std_error},
              {"episodes", r.episodes},
              {"queries", r.total_queries}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_confusion(const std::string& ckpt_path, const std::string& data_path,
                  const std::string& focus_csv, int n, int k, int q, int episodes,
                  std::uint64_t seed) {
  LoadedCheckpoint lc = load_model(ckpt_path);
  const cteg::Dataset data = cteg::load_jsonl(data_path, std::nullopt, lc.ckpt.model_config.max_length);
  const std::vector<std::string> focus = split_csv(focus_csv);
  cteg::require(!focus.empty(), "bad_focus", "--focus needs at least one label");
  const cteg::ConfusionMatrix cm =
      cteg::confusion_matrix(lc.model, data, lc.prep, focus, n, k, q, episodes, seed);
  std::cout << cm.to_json().dump() << "\n";
  return 0;
}

int cmd_gates(const std::string& ckpt_path, const std::string& instance_path) {
  LoadedCheckpoint lc = load_model(ckpt_path);
  const json j = read_json_file(instance_path);
  cteg::AnnotatedInstance inst = cteg::detail::instance_from_json(j, "instance file");
  cteg::validate_instance(inst, lc.ckpt.model_config.max_length);
  std::cout << cteg::export_gates(lc.model, inst, lc.prep).dump() << "\n";
  return 0;
}

int cmd_distances(const std::string& ckpt_path, const std::string& data_path,
                  std::uint64_t episode_seed, int query, int n, int k, int q) {
  LoadedCheckpoint lc = load_model(ckpt_path);
  const cteg::Dataset data = cteg::load_jsonl(data_path, std::nullopt, lc.ckpt.model_config.max_length);
  if (n <= 0) n = lc.ckpt.model_config.n_way;
  if (k <= 0) k = lc.ckpt.train_config.k_shot;
  if (q <= 0) q = lc.ckpt.train_config.n_query;
  cteg::Rng rng(episode_seed);
  const cteg::Episode ep = cteg::sample_episode(data, n, k, q, rng);
  std::vector<std::vector<const cteg::EncodedInstance*>> support;
  for (const auto& group : ep.support) {
    std::vector<const cteg::EncodedInstance*> enc;
    for (const auto* inst : group) enc.push_back(&lc.prep.encode_cached(inst));
    support.push_back(std::move(enc));
  }
  std::vector<std::pair<const cteg::EncodedInstance*, int>> queries;
  for (const auto& [inst, gold] : ep.queries) {
    queries.emplace_back(&lc.prep.encode_cached(inst), gold);
  }
  std::cout << cteg::export_distances(lc.model, support, queries, query,
                                      lc.ckpt.train_config.literal_delta_softmax)
                    .dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CTEG few-shot relation classifier"};
  app.require_subcommand(1);

  // featurize
  std::string f_in, f_out;
  auto* featurize = app.add_subcommand("featurize", "add pos/tag features to an instance file");
  featurize->add_option("--in", f_in, "input instance JSONL")->required();
  featurize->add_option("--out", f_out, "output JSONL with pos1/pos2/tag1/tag2")->required();

  // gen-synth
  std::string g_templates, g_out;
  std::uint64_t g_seed = 1;
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic confusable corpus");
  gen->add_option("--templates", g_templates, "template config JSON")->required();
  gen->add_option("--out", g_out, "output JSONL path")->required();
  gen->add_option("--seed", g_seed, "generator seed");

  // train
  std::string t_data, t_val, t_config, t_ckpt, t_log;
  auto* train = app.add_subcommand("train", "episodic confusion-aware training");
  train->add_option("--data", t_data, "training instance JSONL")->required();
  train->add_option("--val-data", t_val, "held-out instance JSONL (unseen relations)");
  train->add_option("--config", t_config, "config JSON (train/encoder/gate blocks)");
  train->add_option("--out-ckpt", t_ckpt, "checkpoint output path")->required();
  train->add_option("--log", t_log, "JSONL training log path");

  // eval
  std::string e_ckpt, e_data;
  int e_n = 5, e_k = 5, e_q = 5, e_episodes = 1000;
  std::uint64_t e_seed = 1;
  auto* eval = app.add_subcommand("eval", "episode accuracy on a dataset");
  eval->add_option("--ckpt", e_ckpt)->required();
  eval->add_option("--data", e_data)->required();
  eval->add_option("--n", e_n, "ways");
  eval->add_option("--k", e_k, "shots");
  eval->add_option("--q", e_q, "queries per way");
  eval->add_option("--episodes", e_episodes);
  eval->add_option("--seed", e_seed);

  // confusion
  std::string c_ckpt, c_data, c_focus;
  int c_n = 5, c_k = 5, c_q = 5, c_episodes = 200;
  std::uint64_t c_seed = 1;
  auto* confusion = app.add_subcommand("confusion", "confusion matrix over focus relations");
  confusion->add_option("--ckpt", c_ckpt)->required();
  confusion->add_option("--data", c_data)->required();
  confusion->add_option("--focus", c_focus, "comma-separated focus labels")->required();
  confusion->add_option("--n", c_n, "ways");
  confusion->add_option("--k", c_k, "shots");
  confusion->add_option("--q", c_q, "queries per way");
  confusion->add_option("--episodes", c_episodes);
  confusion->add_option("--seed", c_seed);

  // gates
  std::string ga_ckpt, ga_instance;
  auto* gates = app.add_subcommand("gates", "per-token gate values for one instance");
  gates->add_option("--ckpt", ga_ckpt)->required();
  gates->add_option("--instance-json", ga_instance, "JSON file with one instance")->required();

  // distances
  std::string d_ckpt, d_data;
  std::uint64_t d_episode_seed = 1;
  int d_query = 0, d_n = 0, d_k = 0, d_q = 0;
  auto* distances = app.add_subcommand("distances", "distance distributions for one query");
  distances->add_option("--ckpt", d_ckpt)->required();
  distances->add_option("--data", d_data)->required();
  distances->add_option("--episode-seed", d_episode_seed);
  distances->add_option("--query", d_query, "query index within the episode");
  distances->add_option("--n", d_n, "ways (default: checkpoint)");
  distances->add_option("--k", d_k, "shots (default: checkpoint)");
  distances->add_option("--q", d_q, "queries per way (default: checkpoint)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (featurize->parsed()) return cmd_featurize(f_in, f_out);
    if (gen->parsed()) return cmd_gen_synth(g_templates, g_out, g_seed);
    if (train->parsed()) return cmd_train(t_data, t_val, t_config, t_ckpt, t_log);
    if (eval->parsed()) return cmd_eval(e_ckpt, e_data, e_n, e_k, e_q, e_episodes, e_seed);
    if (confusion->parsed()) {
      return cmd_confusion(c_ckpt, c_data, c_focus, c_n, c_k, c_q, c_episodes, c_seed);
    }
    if (gates->parsed()) return cmd_gates(ga_ckpt, ga_instance);
    if (distances->parsed()) {
      return cmd_distances(d_ckpt, d_data, d_episode_seed, d_query, d_n, d_k, d_q);
    }
  } catch (const cteg::Error& ex) {
    nlohmann::json err = {{"error", {{"code", ex.code()}, {"message", ex.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    nlohmann::json err = {{"error", {{"code", "internal"}, {"message", ex.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
