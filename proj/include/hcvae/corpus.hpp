#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hcvae/textrank.hpp"

namespace hcvae::corpus {

/// Token <-> id bijection with fixed reserved ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocab();

  /// Id of an existing token, inserting it if new.
  int add(const std::string& token);
  /// Id of a token, kUnk if unknown.
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

/// One training unit: input, positive output, negative output, keywords.
struct TripletExample {
  std::vector<int> input_tokens;
  std::vector<int> pos_tokens;
  std::vector<int> neg_tokens;
  int k_x = Vocab::kUnk;
  int k_y_pos = Vocab::kUnk;
  int k_y_neg = Vocab::kUnk;
};

/// Examples sharing one input keyword.
struct Cluster {
  int keyword_id = Vocab::kUnk;
  std::vector<int> members;
};

struct Dataset {
  Vocab vocab;
  std::vector<TripletExample> examples;
  std::vector<Cluster> clusters;  // sorted by keyword id; partition of examples
};

struct LoadOptions {
  int max_input_len = 20;
  int max_output_len = 20;
  /// When a line has no "negative", sample the positive output of an example
  /// from a different cluster instead of rejecting the corpus.
  bool synthesize_negatives = false;
  uint64_t seed = 1;
  const textrank::StopwordSet* stopwords = nullptr;  // nullptr -> builtin
  textrank::Options textrank_opts;
};

/// Exactly max_len tokens: prefix (truncated to max_len-1 if needed),
/// then EOS, then PAD.
std::vector<int> pad_or_truncate(const std::vector<int>& tokens, int max_len);

/// Reads a JSONL triplet corpus and builds the vocabulary from it.
/// Required fields per line: "input", "positive" and (unless synthesis is
/// on) "negative"; optional "keyword_input" / "keyword_positive" /
/// "keyword_negative" skip TextRank for that slot.
Dataset load_jsonl(const std::string& path, const LoadOptions& opts);

/// Same, but reuses a previously built vocabulary (validation/test splits).
Dataset load_jsonl(const std::string& path, const LoadOptions& opts, const Vocab& vocab);

struct Batch {
  int size = 0;
  std::vector<std::vector<int>> x;      // [B][L_in]
  std::vector<std::vector<int>> y_pos;  // [B][L_out]
  std::vector<std::vector<int>> y_neg;  // [B][L_out]
  std::vector<int> k_x;
  std::vector<int> k_y_pos;
  std::vector<int> k_y_neg;
};

Batch make_batch(const Dataset& ds, const std::vector<int>& indices);

/// Strips everything from the first EOS/PAD on; inverse of the padding side
/// of pad_or_truncate.
std::vector<int> strip_padding(const std::vector<int>& tokens);

std::vector<int> encode_tokens(const Vocab& v, const std::vector<std::string>& tokens);
std::vector<std::string> decode_tokens(const Vocab& v, const std::vector<int>& ids);

}  // namespace hcvae::corpus
