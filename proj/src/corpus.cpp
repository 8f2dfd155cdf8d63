#include "hcvae/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "hcvae/errors.hpp"
#include "hcvae/rng.hpp"
#include "json.hpp"

namespace hcvae::corpus {

using nlohmann::json;

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) {
    token_to_id_.emplace(t, static_cast<int>(id_to_token_.size()));
    id_to_token_.emplace_back(t);
  }
}

int Vocab::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("Vocab::token: id out of range: " + std::to_string(id));
  return id_to_token_[static_cast<size_t>(id)];
}

std::vector<int> pad_or_truncate(const std::vector<int>& tokens, int max_len) {
  if (max_len < 1) throw ContractError("pad_or_truncate: max_len must be >= 1");
  std::vector<int> out;
  out.reserve(static_cast<size_t>(max_len));
  const size_t keep = std::min(tokens.size(), static_cast<size_t>(max_len - 1));
  out.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(keep));
  out.push_back(Vocab::kEos);
  out.resize(static_cast<size_t>(max_len), Vocab::kPad);
  return out;
}

std::vector<int> strip_padding(const std::vector<int>& tokens) {
  std::vector<int> out;
  for (int t : tokens) {
    if (t == Vocab::kEos || t == Vocab::kPad) break;
    out.push_back(t);
  }
  return out;
}

std::vector<int> encode_tokens(const Vocab& v, const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(v.id(t));
  return ids;
}

std::vector<std::string> decode_tokens(const Vocab& v, const std::vector<int>& ids) {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int i : ids) tokens.push_back(v.token(i));
  return tokens;
}

namespace {

struct RawRecord {
  std::string input, positive, negative;
  std::string kw_input, kw_positive, kw_negative;
  bool has_negative = false;
};

std::string want_string(const json& obj, const char* key, size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw DataError("line " + std::to_string(line_no) + ": missing mandatory field \"" + key + "\"");
  if (!it->is_string())
    throw DataError("line " + std::to_string(line_no) + ": field \"" + key + "\" must be a string");
  return it->get<std::string>();
}

std::string optional_string(const json& obj, const char* key, size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) return {};
  if (!it->is_string())
    throw DataError("line " + std::to_string(line_no) + ": field \"" + key + "\" must be a string");
  return it->get<std::string>();
}

Dataset build_dataset(const std::string& path, const LoadOptions& opts, const Vocab* fixed_vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus: " + path);
  const textrank::StopwordSet& stop =
      opts.stopwords ? *opts.stopwords : textrank::builtin_stopwords();

  std::vector<RawRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object())
      throw DataError("line " + std::to_string(line_no) + ": expected a JSON object");
    RawRecord r;
    r.input = want_string(obj, "input", line_no);
    r.positive = want_string(obj, "positive", line_no);
    if (obj.contains("negative")) {
      r.negative = want_string(obj, "negative", line_no);
      r.has_negative = true;
    } else if (!opts.synthesize_negatives) {
      throw DataError("line " + std::to_string(line_no) +
                      ": missing mandatory field \"negative\" (synthesize_negatives is off)");
    }
    r.kw_input = optional_string(obj, "keyword_input", line_no);
    r.kw_positive = optional_string(obj, "keyword_positive", line_no);
    r.kw_negative = optional_string(obj, "keyword_negative", line_no);
    records.push_back(std::move(r));
  }
  if (records.empty()) throw DataError("corpus is empty: " + path);

  // Fill missing keywords before negatives are synthesized, since cluster
  // identity depends on the input keyword.
  for (auto& r : records) {
    if (r.kw_input.empty()) r.kw_input = textrank::extract_keyword(r.input, stop, opts.textrank_opts);
    if (r.kw_positive.empty())
      r.kw_positive = textrank::extract_keyword(r.positive, stop, opts.textrank_opts);
  }

  if (opts.synthesize_negatives) {
    Rng rng(opts.seed);
    Rng neg_rng = rng.fork(0x6e6567);  // negatives substream
    for (size_t i = 0; i < records.size(); ++i) {
      if (records[i].has_negative) continue;
      std::vector<size_t> donors;
      for (size_t j = 0; j < records.size(); ++j)
        if (records[j].kw_input != records[i].kw_input) donors.push_back(j);
      if (donors.empty())
        throw DataError("cannot synthesize a negative for line " + std::to_string(i + 1) +
                        ": all examples share one input keyword");
      const size_t j = donors[static_cast<size_t>(neg_rng.uniform_int(static_cast<int>(donors.size())))];
      records[i].negative = records[j].positive;
      records[i].kw_negative = records[j].kw_positive;
      records[i].has_negative = true;
    }
  }
  for (auto& r : records)
    if (r.kw_negative.empty())
      r.kw_negative = textrank::extract_keyword(r.negative, stop, opts.textrank_opts);

  Dataset ds;
  if (fixed_vocab) {
    ds.vocab = *fixed_vocab;
  } else {
    for (const auto& r : records) {
      for (const auto& text : {r.input, r.positive, r.negative})
        for (const auto& t : textrank::tokenize(text)) ds.vocab.add(t);
      for (const auto& kw : {r.kw_input, r.kw_positive, r.kw_negative}) ds.vocab.add(kw);
    }
  }

  for (const auto& r : records) {
    TripletExample ex;
    ex.input_tokens =
        pad_or_truncate(encode_tokens(ds.vocab, textrank::tokenize(r.input)), opts.max_input_len);
    ex.pos_tokens =
        pad_or_truncate(encode_tokens(ds.vocab, textrank::tokenize(r.positive)), opts.max_output_len);
    ex.neg_tokens =
        pad_or_truncate(encode_tokens(ds.vocab, textrank::tokenize(r.negative)), opts.max_output_len);
    ex.k_x = ds.vocab.id(r.kw_input);
    ex.k_y_pos = ds.vocab.id(r.kw_positive);
    ex.k_y_neg = ds.vocab.id(r.kw_negative);
    ds.examples.push_back(std::move(ex));
  }

  std::map<int, Cluster> by_keyword;
  for (size_t i = 0; i < ds.examples.size(); ++i) {
    Cluster& c = by_keyword[ds.examples[i].k_x];
    c.keyword_id = ds.examples[i].k_x;
    c.members.push_back(static_cast<int>(i));
  }
  for (auto& [kw, cluster] : by_keyword) ds.clusters.push_back(std::move(cluster));
  return ds;
}

}  // namespace

Dataset load_jsonl(const std::string& path, const LoadOptions& opts) {
  return build_dataset(path, opts, nullptr);
}

Dataset load_jsonl(const std::string& path, const LoadOptions& opts, const Vocab& vocab) {
  return build_dataset(path, opts, &vocab);
}

Batch make_batch(const Dataset& ds, const std::vector<int>& indices) {
  Batch b;
  b.size = static_cast<int>(indices.size());
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(ds.examples.size()))
      throw ContractError("make_batch: example index out of range: " + std::to_string(i));
    const TripletExample& ex = ds.examples[static_cast<size_t>(i)];
    b.x.push_back(ex.input_tokens);
    b.y_pos.push_back(ex.pos_tokens);
    b.y_neg.push_back(ex.neg_tokens);
    b.k_x.push_back(ex.k_x);
    b.k_y_pos.push_back(ex.k_y_pos);
    b.k_y_neg.push_back(ex.k_y_neg);
  }
  return b;
}

}  // namespace hcvae::corpus
