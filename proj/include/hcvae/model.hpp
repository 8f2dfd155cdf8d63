#pragma once

#include <string>

#include "hcvae/corpus.hpp"
#include "hcvae/cvae.hpp"
#include "hcvae/kwgraph.hpp"
#include "hcvae/seqmodel.hpp"

namespace hcvae {

struct ModelConfig {
  SeqConfig seq;
  int graph_iters = 2;
  bool identity_node_ffn = false;
  kwgraph::ImpostorMode impostor_mode = kwgraph::ImpostorMode::uniform;
};

/// The full trainable model: embedding, encoder, decoder, Gaussian heads,
/// graph layers and the keyword-to-latent bridge, with every weight in one
/// registry.
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }

  Embedding embed;
  Encoder encoder;
  Decoder decoder;
  GaussHead prior_head;      // over [x_pooled ; u]
  GaussHead posterior_head;  // over [x_pooled ; y_pooled]
  kwgraph::GraphWeights graph;
  Linear kw_to_latent;  // d_model -> d_latent bridge for the Mahalanobis level

  DiagGaussian prior(const Tensor& x_pooled, const Tensor& u) const {
    return prior_head.forward(x_pooled, u);
  }
  DiagGaussian posterior(const Tensor& x_pooled, const Tensor& y_pooled) const {
    return posterior_head.forward(x_pooled, y_pooled);
  }

  void save_checkpoint(const std::string& path, const corpus::Vocab& vocab) const;

 private:
  ModelConfig cfg_;
  ParamRegistry params_;
};

struct LoadedCheckpoint {
  ModelConfig config;
  corpus::Vocab vocab;
};

/// Reads dims + vocab from a checkpoint header. Throws DataError on a bad
/// format marker.
LoadedCheckpoint read_checkpoint_header(const std::string& path);

/// Loads parameter values into a model built with matching dims; any
/// name/shape mismatch is a DataError naming the offender.
void load_checkpoint_params(Model& model, const std::string& path);

/// Keyword graph structure plus h^0 rows for one epoch. `h0` is
/// tape-connected when on_tape is set (gradient-audit mode) and a detached
/// value snapshot otherwise (training mode).
struct GraphSnapshot {
  kwgraph::KeywordGraph structure;
  Tensor h0;
};

GraphSnapshot build_graph_snapshot(const Model& model, const corpus::Dataset& ds, bool on_tape);

}  // namespace hcvae
