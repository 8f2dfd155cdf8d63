#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "doctest.h"
#include "hcvae/corpus.hpp"
#include "hcvae/errors.hpp"
#include "hcvae/rng.hpp"

using namespace hcvae;
using namespace hcvae::corpus;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p);
  out << content;
  return p.string();
}

// Synthetic corpus with explicit keywords; distinct topics give clusters.
std::string synthetic_corpus(int lines, int topics) {
  std::string body;
  for (int i = 0; i < lines; ++i) {
    const std::string kw = "topic" + std::to_string(i % topics);
    const std::string neg_kw = "topic" + std::to_string((i + 1) % topics);
    body += "{\"input\": \"please discuss " + kw + " item" + std::to_string(i) +
            "\", \"positive\": \"a fine " + kw + " reply\", \"negative\": \"a fine " + neg_kw +
            " reply\", \"keyword_input\": \"" + kw + "\", \"keyword_positive\": \"" + kw +
            "\", \"keyword_negative\": \"" + neg_kw + "\"}\n";
  }
  return body;
}

}  // namespace

TEST_CASE("single valid line gives one example and one cluster") {
  const auto path = write_temp("corpus_single.jsonl",
                               "{\"input\": \"the falcon hunts mice\", \"positive\": \"a falcon "
                               "catches prey\", \"negative\": \"a violin plays music\"}\n");
  Dataset ds = load_jsonl(path, {});
  CHECK(ds.examples.size() == 1);
  CHECK(ds.clusters.size() == 1);
  CHECK(ds.clusters[0].members.size() == 1);
}

TEST_CASE("two lines sharing an input keyword form one cluster") {
  const auto path = write_temp(
      "corpus_fat.jsonl",
      "{\"input\": \"how to lose fat\", \"positive\": \"trim fat fast\", \"negative\": \"read a "
      "manual\", \"keyword_input\": \"fat\"}\n"
      "{\"input\": \"burn fat quick\", \"positive\": \"burning fat works\", \"negative\": \"fly a "
      "kite\", \"keyword_input\": \"fat\"}\n");
  Dataset ds = load_jsonl(path, {});
  CHECK(ds.examples.size() == 2);
  REQUIRE(ds.clusters.size() == 1);
  CHECK(ds.clusters[0].members.size() == 2);
}

TEST_CASE("cluster sizes match an exhaustive group-by on keywords") {
  const auto path = write_temp("corpus_200.jsonl", synthetic_corpus(200, 17));
  Dataset ds = load_jsonl(path, {});
  CHECK(ds.examples.size() == 200);

  std::map<int, int> group_by;
  for (const auto& ex : ds.examples) group_by[ex.k_x] += 1;
  REQUIRE(ds.clusters.size() == group_by.size());
  for (const auto& c : ds.clusters)
    CHECK(static_cast<int>(c.members.size()) == group_by[c.keyword_id]);
}

TEST_CASE("clusters partition the dataset") {
  const auto path = write_temp("corpus_part.jsonl", synthetic_corpus(60, 7));
  Dataset ds = load_jsonl(path, {});
  std::set<int> seen;
  for (const auto& c : ds.clusters)
    for (int m : c.members) CHECK(seen.insert(m).second);
  CHECK(seen.size() == ds.examples.size());
}

TEST_CASE("pad_or_truncate basics") {
  // ["a"] with room: token, EOS, PAD.
  auto padded = pad_or_truncate({10}, 3);
  CHECK(padded == std::vector<int>{10, Vocab::kEos, Vocab::kPad});

  std::vector<int> long_seq;
  for (int i = 0; i < 25; ++i) long_seq.push_back(10 + i);
  auto cut = pad_or_truncate(long_seq, 20);
  REQUIRE(cut.size() == 20);
  for (int i = 0; i < 19; ++i) CHECK(cut[static_cast<size_t>(i)] == 10 + i);
  CHECK(cut[19] == Vocab::kEos);
}

TEST_CASE("pad round-trip keeps a prefix of the original tokens") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> tokens;
    const int len = 1 + rng.uniform_int(30);
    for (int i = 0; i < len; ++i) tokens.push_back(4 + rng.uniform_int(40));
    auto padded = pad_or_truncate(tokens, 12);
    auto stripped = strip_padding(padded);
    CHECK(stripped.size() <= tokens.size());
    for (size_t i = 0; i < stripped.size(); ++i) CHECK(stripped[i] == tokens[i]);
    CHECK(padded.size() == 12);
  }
}

TEST_CASE("make_batch shapes and determinism") {
  const auto path = write_temp("corpus_batch.jsonl", synthetic_corpus(10, 5));
  LoadOptions opts;
  opts.max_input_len = 9;
  opts.max_output_len = 7;
  Dataset ds = load_jsonl(path, opts);

  Batch one = make_batch(ds, {3});
  CHECK(one.size == 1);
  CHECK(one.x[0].size() == 9);
  CHECK(one.y_pos[0].size() == 7);
  CHECK(one.y_neg[0].size() == 7);
  CHECK(one.k_x.size() == 1);

  Batch a = make_batch(ds, {1, 4, 7});
  Batch b = make_batch(ds, {1, 4, 7});
  CHECK(a.x == b.x);
  CHECK(a.y_pos == b.y_pos);
  CHECK(a.k_y_neg == b.k_y_neg);

  CHECK_THROWS_AS(make_batch(ds, {99}), ContractError);
}

TEST_CASE("seeded shuffle replays identically") {
  Rng a(123), b(123);
  for (int e = 0; e < 3; ++e) CHECK(a.permutation(32) == b.permutation(32));
}

TEST_CASE("malformed line reports its line number") {
  const auto path = write_temp("corpus_bad.jsonl",
                               "{\"input\": \"ok text\", \"positive\": \"fine reply\", "
                               "\"negative\": \"bad reply\"}\nnot json at all\n");
  try {
    load_jsonl(path, {});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("missing mandatory field is a schema error") {
  const auto path = write_temp("corpus_missing.jsonl", "{\"input\": \"only input here\"}\n");
  try {
    load_jsonl(path, {});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("positive") != std::string::npos);
  }
}

TEST_CASE("missing negative requires the synthesis flag") {
  const std::string two_clusters =
      "{\"input\": \"falcon hunts\", \"positive\": \"falcon soars high\", \"keyword_input\": "
      "\"falcon\", \"keyword_positive\": \"falcon\"}\n"
      "{\"input\": \"violin plays\", \"positive\": \"violin sings sweetly\", \"keyword_input\": "
      "\"violin\", \"keyword_positive\": \"violin\"}\n";
  const auto path = write_temp("corpus_noneg.jsonl", two_clusters);
  CHECK_THROWS_AS(load_jsonl(path, {}), DataError);

  LoadOptions opts;
  opts.synthesize_negatives = true;
  opts.seed = 5;
  Dataset ds = load_jsonl(path, opts);
  REQUIRE(ds.examples.size() == 2);
  // Each synthesized negative comes from the other cluster.
  CHECK(ds.examples[0].k_y_neg == ds.vocab.id("violin"));
  CHECK(ds.examples[1].k_y_neg == ds.vocab.id("falcon"));

  // Same seed, same synthesis.
  Dataset ds2 = load_jsonl(path, opts);
  CHECK(ds.examples[0].neg_tokens == ds2.examples[0].neg_tokens);
}

TEST_CASE("vocabulary is stable across loads") {
  const auto path = write_temp("corpus_stable.jsonl", synthetic_corpus(30, 4));
  Dataset a = load_jsonl(path, {});
  Dataset b = load_jsonl(path, {});
  CHECK(a.vocab.size() == b.vocab.size());
  for (int i = 0; i < a.vocab.size(); ++i) CHECK(a.vocab.token(i) == b.vocab.token(i));
}

TEST_CASE("training-split words never map to UNK") {
  const auto path = write_temp("corpus_nounk.jsonl", synthetic_corpus(40, 6));
  Dataset ds = load_jsonl(path, {});
  for (const auto& ex : ds.examples) {
    for (int t : ex.input_tokens) CHECK(t != Vocab::kUnk);
    for (int t : ex.pos_tokens) CHECK(t != Vocab::kUnk);
    for (int t : ex.neg_tokens) CHECK(t != Vocab::kUnk);
    CHECK(ex.k_x != Vocab::kUnk);
  }
}

TEST_CASE("fixed vocab maps unseen words to UNK") {
  const auto train = write_temp("corpus_tr.jsonl", synthetic_corpus(10, 2));
  const auto other = write_temp(
      "corpus_unseen.jsonl",
      "{\"input\": \"zweihander strikes\", \"positive\": \"zweihander cleaves armor\", "
      "\"negative\": \"a fine topic0 reply\"}\n");
  Dataset tr = load_jsonl(train, {});
  Dataset ev = load_jsonl(other, {}, tr.vocab);
  bool has_unk = false;
  for (int t : ev.examples[0].input_tokens) has_unk |= t == Vocab::kUnk;
  CHECK(has_unk);
  CHECK(ev.vocab.size() == tr.vocab.size());
}

TEST_CASE("reserved ids are fixed") {
  Vocab v;
  CHECK(v.id("<pad>") == Vocab::kPad);
  CHECK(v.id("<bos>") == Vocab::kBos);
  CHECK(v.id("<eos>") == Vocab::kEos);
  CHECK(v.id("<unk>") == Vocab::kUnk);
  const int before = v.size();
  CHECK(v.add("<pad>") == Vocab::kPad);
  CHECK(v.size() == before);
}
