#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "cteg/corpus.hpp"

namespace fs = std::filesystem;
using namespace cteg;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cteg_corpus_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

const std::string kMinimalLine =
    R"({"tokens":["a","b"],"span1":[0,0],"span2":[1,1],"relation":"r","dep_edges":[[-1,1,"root"],[1,0,"nsubj"]]})";

std::string fixture_line(const std::string& rel, const std::string& w0, const std::string& w1) {
  return R"({"tokens":[")" + w0 + R"(",")" + w1 +
         R"("],"span1":[0,0],"span2":[1,1],"relation":")" + rel +
         R"(","dep_edges":[[-1,1,"root"],[1,0,"nsubj"]]})";
}

}  // namespace

TEST_CASE("load_jsonl accepts a minimal well-formed record") {
  const auto path = temp_file("minimal.jsonl");
  write_file(path, kMinimalLine + "\n");
  const Dataset d = load_jsonl(path.string());
  REQUIRE(d.size() == 1);
  REQUIRE(d.count("r") == 1);
  const AnnotatedInstance& inst = d.at("r")[0];
  CHECK(inst.tokens == std::vector<std::string>{"a", "b"});
  CHECK(inst.span1 == Span{0, 0});
  CHECK(inst.span2 == Span{1, 1});
  CHECK(inst.dep_edges.size() == 2);
}

TEST_CASE("load_jsonl reports spans out of range with the line number") {
  const auto path = temp_file("bad_span.jsonl");
  write_file(path,
             R"({"tokens":["a","b"],"span1":[0,5],"span2":[1,1],"relation":"r","dep_edges":[[-1,1,"root"],[1,0,"nsubj"]]})"
             "\n");
  try {
    load_jsonl(path.string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("span out of range, line 1") != std::string::npos);
    CHECK(e.code() == "span_out_of_range");
  }
}

TEST_CASE("load_jsonl rejects malformed JSON with the line number") {
  const auto path = temp_file("bad_json.jsonl");
  write_file(path, kMinimalLine + "\nnot json at all\n");
  try {
    load_jsonl(path.string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("load_jsonl rejects a parse missing a token's edge") {
  const auto path = temp_file("missing_edge.jsonl");
  write_file(path,
             R"({"tokens":["a","b","c"],"span1":[0,0],"span2":[1,1],"relation":"r","dep_edges":[[-1,1,"root"],[1,0,"nsubj"]]})"
             "\n");
  try {
    load_jsonl(path.string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "missing_edge");
    CHECK(std::string(e.what()).find("token 2") != std::string::npos);
  }
}

TEST_CASE("load_jsonl enforces a relation schema when given") {
  const auto path = temp_file("schema.jsonl");
  write_file(path, kMinimalLine + "\n");
  RelationSchema schema;
  schema.relations = {"other_relation"};
  try {
    load_jsonl(path.string(), schema);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "unknown_relation");
  }
}

TEST_CASE("three-relation six-instance fixture groups as {2,2,2}") {
  const auto path = temp_file("fixture6.jsonl");
  // counted by hand: two lines per relation
  write_file(path, fixture_line("r1", "a", "b") + "\n" + fixture_line("r1", "c", "d") + "\n" +
                       fixture_line("r2", "e", "f") + "\n" + fixture_line("r2", "g", "h") + "\n" +
                       fixture_line("r3", "i", "j") + "\n" + fixture_line("r3", "k", "l") + "\n");
  const Dataset d = load_jsonl(path.string());
  REQUIRE(d.size() == 3);
  for (const auto& [label, instances] : d) CHECK(instances.size() == 2);
}

TEST_CASE("relation schema splits must be disjoint") {
  RelationSchema schema;
  schema.relations = {"a", "b"};
  schema.train = {"a"};
  schema.validation = {"a", "b"};
  CHECK_THROWS_AS(schema.validate(), Error);
}

TEST_CASE("build_vocab is contiguous, reserved, and sorted") {
  Dataset d;
  AnnotatedInstance inst;
  inst.tokens = {"b", "a"};
  inst.relation = "r";
  d["r"].push_back(inst);
  const Vocabulary v = build_vocab(d);
  REQUIRE(v.size() == 4);
  CHECK(v.id_to_token[kPadId] == "<pad>");
  CHECK(v.id_to_token[kUnkId] == "<unk>");
  CHECK(v.id("a") == 2);
  CHECK(v.id("b") == 3);
  CHECK(v.id("never_seen") == kUnkId);

  const Vocabulary again = build_vocab(d);
  CHECK(again.id_to_token == v.id_to_token);
}

TEST_CASE("build_vocab rejects an empty dataset") {
  CHECK_THROWS_AS(build_vocab(Dataset{}), Error);
}

namespace {

Dataset tiny_dataset(int labels, int per_label) {
  Dataset d;
  for (int l = 0; l < labels; ++l) {
    const std::string rel = "rel" + std::to_string(l);
    for (int i = 0; i < per_label; ++i) {
      AnnotatedInstance inst;
      inst.tokens = {"w" + std::to_string(l) + "_" + std::to_string(i), "x"};
      inst.span1 = {0, 0};
      inst.span2 = {1, 1};
      inst.relation = rel;
      inst.dep_edges = {{-1, 1, "root"}, {1, 0, "nsubj"}};
      d[rel].push_back(inst);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("sample_episode partitions exhaustively at N=5 K=1 Q=1 over 5x2") {
  const Dataset d = tiny_dataset(5, 2);
  Rng rng(7);
  const Episode ep = sample_episode(d, 5, 1, 1, rng);
  REQUIRE(ep.way_labels.size() == 5);
  REQUIRE(ep.queries.size() == 5);
  for (const auto& group : ep.support) REQUIRE(group.size() == 1);
  // every label contributes exactly one support and one query instance
  std::set<const AnnotatedInstance*> seen;
  for (const auto& group : ep.support) seen.insert(group[0]);
  for (const auto& [q, gold] : ep.queries) seen.insert(q);
  CHECK(seen.size() == 10);
}

TEST_CASE("sample_episode is deterministic per seed") {
  const Dataset d = tiny_dataset(8, 4);
  Rng a(123), b(123);
  const Episode ea = sample_episode(d, 5, 2, 1, a);
  const Episode eb = sample_episode(d, 5, 2, 1, b);
  CHECK(ea.way_labels == eb.way_labels);
  REQUIRE(ea.support.size() == eb.support.size());
  for (std::size_t w = 0; w < ea.support.size(); ++w) CHECK(ea.support[w] == eb.support[w]);
  CHECK(ea.queries == eb.queries);
}

TEST_CASE("sample_episode rejects too few labels") {
  const Dataset d = tiny_dataset(3, 4);
  Rng rng(1);
  CHECK_THROWS_AS(sample_episode(d, 5, 1, 1, rng), Error);
}

TEST_CASE("sample_episode rejects labels with too few instances") {
  const Dataset d = tiny_dataset(5, 2);
  Rng rng(1);
  CHECK_THROWS_AS(sample_episode(d, 5, 2, 1, rng), Error);
}

TEST_CASE("support and queries are disjoint for every seed") {
  const Dataset d = tiny_dataset(9, 6);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Episode ep = sample_episode(d, 4, 2, 3, rng);
    std::set<const AnnotatedInstance*> support_set;
    for (const auto& group : ep.support) support_set.insert(group.begin(), group.end());
    for (const auto& [q, gold] : ep.queries) {
      REQUIRE(support_set.count(q) == 0);
      REQUIRE(gold >= 0);
      REQUIRE(gold < 4);
      REQUIRE(q->relation == ep.way_labels[gold]);
    }
  }
}
