#include "hcvae/model.hpp"

#include <cmath>
#include <fstream>

#include "hcvae/errors.hpp"
#include "json.hpp"

namespace hcvae {

using nlohmann::json;

namespace {
constexpr const char* kFormatMarker = "hcvae-checkpoint-v1";
}

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg.seq.vocab_size <= corpus::Vocab::kUnk)
    throw ConfigError("Model: vocab_size must cover the reserved ids");
  Rng rng(seed);
  Rng init = rng.fork(0x696e6974);
  embed = Embedding(params_, cfg.seq.vocab_size, cfg.seq.d_model, init);
  encoder = Encoder(params_, "enc", cfg.seq, init);
  decoder = Decoder(params_, "dec", cfg.seq, init);
  const int d = cfg.seq.d_model;
  prior_head = GaussHead(params_, "prior", 2 * d, d, cfg.seq.d_latent, init);
  posterior_head = GaussHead(params_, "posterior", 2 * d, d, cfg.seq.d_latent, init);
  graph = kwgraph::GraphWeights(params_, "graph", d, init, cfg.identity_node_ffn);
  kw_to_latent = Linear(params_, "kw_to_latent", d, cfg.seq.d_latent, init,
                        1.0 / std::sqrt(static_cast<double>(d)));
}

void Model::save_checkpoint(const std::string& path, const corpus::Vocab& vocab) const {
  json dims{
      {"vocab_size", cfg_.seq.vocab_size},   {"d_model", cfg_.seq.d_model},
      {"d_latent", cfg_.seq.d_latent},       {"enc_blocks", cfg_.seq.enc_blocks},
      {"dec_blocks", cfg_.seq.dec_blocks},   {"heads", cfg_.seq.heads},
      {"max_pos", cfg_.seq.max_pos},         {"graph_iters", cfg_.graph_iters},
      {"identity_node_ffn", cfg_.identity_node_ffn},
      {"impostor_mode", cfg_.impostor_mode == kwgraph::ImpostorMode::softmax ? "softmax" : "uniform"},
  };
  json tokens = json::array();
  for (int i = 0; i < vocab.size(); ++i) tokens.push_back(vocab.token(i));
  json params_obj = json::object();
  for (const auto& [name, t] : params_.items()) {
    json entry;
    entry["shape"] = t.shape();
    entry["data"] = std::vector<double>(t.values().begin(), t.values().end());
    params_obj[name] = std::move(entry);
  }
  json root{{"format", kFormatMarker}, {"dims", dims}, {"vocab", tokens}, {"params", params_obj}};

  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << root.dump() << "\n";
}

namespace {

json read_checkpoint_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }
  if (!root.is_object() || root.value("format", "") != kFormatMarker)
    throw DataError("checkpoint " + path + " has no '" + kFormatMarker + "' format marker");
  return root;
}

}  // namespace

LoadedCheckpoint read_checkpoint_header(const std::string& path) {
  json root = read_checkpoint_json(path);
  const json& dims = root.at("dims");
  LoadedCheckpoint out;
  out.config.seq.vocab_size = dims.at("vocab_size").get<int>();
  out.config.seq.d_model = dims.at("d_model").get<int>();
  out.config.seq.d_latent = dims.at("d_latent").get<int>();
  out.config.seq.enc_blocks = dims.at("enc_blocks").get<int>();
  out.config.seq.dec_blocks = dims.at("dec_blocks").get<int>();
  out.config.seq.heads = dims.at("heads").get<int>();
  out.config.seq.max_pos = dims.at("max_pos").get<int>();
  out.config.graph_iters = dims.at("graph_iters").get<int>();
  out.config.identity_node_ffn = dims.at("identity_node_ffn").get<bool>();
  out.config.impostor_mode = dims.at("impostor_mode").get<std::string>() == "softmax"
                                 ? kwgraph::ImpostorMode::softmax
                                 : kwgraph::ImpostorMode::uniform;
  const json& tokens = root.at("vocab");
  for (size_t i = 4; i < tokens.size(); ++i) out.vocab.add(tokens[i].get<std::string>());
  if (out.vocab.size() != static_cast<int>(tokens.size()))
    throw DataError("checkpoint vocabulary disagrees with reserved ids");
  return out;
}

void load_checkpoint_params(Model& model, const std::string& path) {
  json root = read_checkpoint_json(path);
  const json& params_obj = root.at("params");
  for (const auto& [name, t] : model.params().items()) {
    auto it = params_obj.find(name);
    if (it == params_obj.end())
      throw DataError("checkpoint " + path + " is missing parameter '" + name + "'");
    const auto shape = it->at("shape").get<Shape>();
    if (shape != t.shape())
      throw DataError("checkpoint dims mismatch for '" + name + "': file has " + shape_str(shape) +
                      ", model wants " + shape_str(t.shape()));
    auto data = it->at("data").get<std::vector<double>>();
    if (data.size() != t.size())
      throw DataError("checkpoint data length mismatch for '" + name + "'");
    Tensor mut = t;
    auto dst = mut.values_mut();
    std::copy(data.begin(), data.end(), dst.begin());
  }
}

GraphSnapshot build_graph_snapshot(const Model& model, const corpus::Dataset& ds, bool on_tape) {
  GraphSnapshot snap;
  snap.structure = kwgraph::build_structure(ds);

  auto build_h0 = [&] {
    TokenMatrix inputs, positives, negatives;
    for (const auto& ex : ds.examples) {
      inputs.push_back(ex.input_tokens);
      positives.push_back(ex.pos_tokens);
      negatives.push_back(ex.neg_tokens);
    }
    Tensor pooled_by_role[3] = {
        model.encoder.encode(model.embed, inputs).pooled,
        model.encoder.encode(model.embed, positives).pooled,
        model.encoder.encode(model.embed, negatives).pooled,
    };
    std::vector<std::vector<Tensor>> groups;
    groups.reserve(snap.structure.node_texts.size());
    for (const auto& texts : snap.structure.node_texts) {
      std::vector<Tensor> rows;
      rows.reserve(texts.size());
      for (const auto& [example, role] : texts)
        rows.push_back(slice_rows(pooled_by_role[role], example, 1));
      groups.push_back(std::move(rows));
    }
    return kwgraph::init_nodes(groups);
  };

  if (on_tape) {
    snap.h0 = build_h0();
  } else {
    NoGradGuard ng;
    snap.h0 = build_h0();
  }
  return snap;
}

}  // namespace hcvae
