#pragma once

#include <cstdint>
#include <string>

#include "hcvae/contrast.hpp"
#include "hcvae/kwgraph.hpp"

namespace hcvae {

/// Everything one run needs. Loaded from a JSON config file whose keys
/// match the field names; CLI flags of the same name override.
struct RunConfig {
  std::string train_path;
  std::string valid_path;
  std::string test_path;

  int d_model = 64;
  int d_latent = 32;
  int enc_blocks = 2;
  int dec_blocks = 2;
  int heads = 4;

  double tau = 1.0;
  double lambda_ins = 1.0;
  double lambda_kw = 1.0;
  double lambda_ma = 1.0;
  std::string mahalanobis_mode = "inverse-variance";  // or "as-written"
  int graph_iters = 2;
  bool identity_node_ffn = false;
  std::string impostor_mode = "uniform";  // or "softmax"

  double beta_kl_max = 1.0;
  double beta_kl_warmup_frac = 0.2;

  uint64_t seed = 1;
  int batch_size = 16;
  double learning_rate = 1e-3;
  int epochs = 50;
  int max_steps = 0;  // 0: bounded by epochs only

  std::string checkpoint_dir = "checkpoints";
  std::string log_path;  // default: <checkpoint_dir>/train_log.jsonl

  int max_input_len = 20;
  int max_output_len = 20;
  int min_decode_len = 5;
  int max_decode_len = 20;

  bool synthesize_negatives = false;
  std::string stopwords_path;  // empty: builtin list

  int textrank_window = 2;
  double textrank_damping = 0.85;
  double textrank_tol = 1e-6;
  int textrank_max_iter = 100;
};

RunConfig load_config(const std::string& path);

/// Applies "key=value" to the matching config field; unknown keys and
/// unparsable values are ConfigErrors.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

contrast::MahalanobisMode parse_ma_mode(const std::string& name);
kwgraph::ImpostorMode parse_impostor_mode(const std::string& name);

}  // namespace hcvae
