#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cteg/config.hpp"
#include "cteg/error.hpp"
#include "cteg/featurize.hpp"
#include "cteg/model.hpp"

namespace cteg {

// Layout: 8-byte magic, u64 LE header length, UTF-8 JSON header, then each
// parameter's values as raw little-endian float64 in header order.
inline constexpr char kCheckpointMagic[8] = {'C', 'T', 'E', 'G', 'C', 'K', 'P', '1'};

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

inline std::uint64_t read_u64_le(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_f64_le(std::ostream& out, double d) {
  write_u64_le(out, std::bit_cast<std::uint64_t>(d));
}

inline double read_f64_le(std::istream& in) {
  return std::bit_cast<double>(read_u64_le(in));
}

}  // namespace detail

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  Vocabulary vocab;
  TagVocabulary tags;
  ParamStore params;

  Model rebuild() const {
    ParamStore copy;
    for (const auto& p : params.all()) copy.add(p.name, p.tensor, p.trainable);
    return Model::from_params(model_config, std::move(copy));
  }
};

inline void save_checkpoint(const std::string& path, const Model& model,
                            const TrainConfig& train_cfg, const Vocabulary& vocab,
                            const TagVocabulary& tags) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "file_write_failed", "cannot write checkpoint '" + path + "'");

  nlohmann::json header;
  header["version"] = 1;
  header["model"] = model.config();
  header["train"] = train_cfg;
  header["vocab"] = vocab.id_to_token;
  header["tags"] = tags.id_to_tag;
  auto params_j = nlohmann::json::array();
  for (const auto& p : model.params().all()) {
    params_j.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  }
  header["params"] = params_j;
  const std::string header_str = header.dump();

  out.write(kCheckpointMagic, 8);
  detail::write_u64_le(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& p : model.params().all()) {
    for (double v : p.tensor.values()) detail::write_f64_le(out, v);
  }
  require(out.good(), "file_write_failed", "checkpoint write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "file_not_found", "cannot open checkpoint '" + path + "'");

  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0, "bad_checkpoint",
          "'" + path + "' is not a checkpoint file");
  const std::uint64_t header_len = detail::read_u64_le(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  require(in.good(), "bad_checkpoint", "truncated checkpoint header");

  nlohmann::json header = nlohmann::json::parse(header_str);
  require(header.value("version", 0) == 1, "bad_checkpoint", "unsupported checkpoint version");

  Checkpoint ckpt;
  header.at("model").get_to(ckpt.model_config);
  header.at("train").get_to(ckpt.train_config);
  ckpt.vocab.id_to_token = header.at("vocab").get<std::vector<std::string>>();
  for (int i = 0; i < ckpt.vocab.size(); ++i) ckpt.vocab.token_to_id[ckpt.vocab.id_to_token[i]] = i;
  ckpt.tags.id_to_tag = header.at("tags").get<std::vector<std::string>>();
  ckpt.tags.tag_to_id.clear();
  for (int i = 0; i < ckpt.tags.size(); ++i) ckpt.tags.tag_to_id[ckpt.tags.id_to_tag[i]] = i;

  for (const auto& pj : header.at("params")) {
    const auto shape = pj.at("shape").get<std::vector<std::size_t>>();
    Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
    for (auto& v : t.mutable_values()) v = detail::read_f64_le(in);
    require(in.good(), "bad_checkpoint", "truncated checkpoint data");
    ckpt.params.add(pj.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

}  // namespace cteg
