#include "hcvae/config.hpp"

#include <fstream>

#include "hcvae/errors.hpp"
#include "json.hpp"

namespace hcvae {

using nlohmann::json;

namespace {

template <typename T>
void read_field(const json& obj, const char* key, T& field) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    field = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key \"") + key + "\": " + e.what());
  }
}

template <typename Fn>
void for_each_field(RunConfig& cfg, Fn&& fn) {
  fn("train_path", cfg.train_path);
  fn("valid_path", cfg.valid_path);
  fn("test_path", cfg.test_path);
  fn("d_model", cfg.d_model);
  fn("d_latent", cfg.d_latent);
  fn("enc_blocks", cfg.enc_blocks);
  fn("dec_blocks", cfg.dec_blocks);
  fn("heads", cfg.heads);
  fn("tau", cfg.tau);
  fn("lambda_ins", cfg.lambda_ins);
  fn("lambda_kw", cfg.lambda_kw);
  fn("lambda_ma", cfg.lambda_ma);
  fn("mahalanobis_mode", cfg.mahalanobis_mode);
  fn("graph_iters", cfg.graph_iters);
  fn("identity_node_ffn", cfg.identity_node_ffn);
  fn("impostor_mode", cfg.impostor_mode);
  fn("beta_kl_max", cfg.beta_kl_max);
  fn("beta_kl_warmup_frac", cfg.beta_kl_warmup_frac);
  fn("seed", cfg.seed);
  fn("batch_size", cfg.batch_size);
  fn("learning_rate", cfg.learning_rate);
  fn("epochs", cfg.epochs);
  fn("max_steps", cfg.max_steps);
  fn("checkpoint_dir", cfg.checkpoint_dir);
  fn("log_path", cfg.log_path);
  fn("max_input_len", cfg.max_input_len);
  fn("max_output_len", cfg.max_output_len);
  fn("min_decode_len", cfg.min_decode_len);
  fn("max_decode_len", cfg.max_decode_len);
  fn("synthesize_negatives", cfg.synthesize_negatives);
  fn("stopwords_path", cfg.stopwords_path);
  fn("textrank_window", cfg.textrank_window);
  fn("textrank_damping", cfg.textrank_damping);
  fn("textrank_tol", cfg.textrank_tol);
  fn("textrank_max_iter", cfg.textrank_max_iter);
}

template <typename T>
void parse_into(const std::string& key, const std::string& value, T& field) {
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      field = value;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (value == "true" || value == "1")
        field = true;
      else if (value == "false" || value == "0")
        field = false;
      else
        throw ConfigError("override " + key + ": expected a boolean, got \"" + value + "\"");
    } else if constexpr (std::is_same_v<T, int>) {
      field = std::stoi(value);
    } else if constexpr (std::is_same_v<T, uint64_t>) {
      field = std::stoull(value);
    } else {
      field = std::stod(value);
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("override " + key + ": cannot parse \"" + value + "\"");
  } catch (const std::out_of_range&) {
    throw ConfigError("override " + key + ": value out of range: \"" + value + "\"");
  }
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json obj;
  try {
    in >> obj;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  if (!obj.is_object()) throw ConfigError("config must be a JSON object: " + path);

  RunConfig cfg;
  for_each_field(cfg, [&](const char* key, auto& field) { read_field(obj, key, field); });

  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for_each_field(cfg, [&](const char* k, auto&) { known |= key == k; });
    if (!known) throw ConfigError("config " + path + ": unknown key \"" + key + "\"");
  }
  (void)parse_ma_mode(cfg.mahalanobis_mode);
  (void)parse_impostor_mode(cfg.impostor_mode);
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  bool applied = false;
  for_each_field(cfg, [&](const char* k, auto& field) {
    if (key == k) {
      parse_into(key, value, field);
      applied = true;
    }
  });
  if (!applied) throw ConfigError("unknown config key for override: \"" + key + "\"");
}

contrast::MahalanobisMode parse_ma_mode(const std::string& name) {
  if (name == "inverse-variance") return contrast::MahalanobisMode::inverse_variance;
  if (name == "as-written") return contrast::MahalanobisMode::as_written;
  throw ConfigError("mahalanobis_mode must be \"inverse-variance\" or \"as-written\", got \"" +
                    name + "\"");
}

kwgraph::ImpostorMode parse_impostor_mode(const std::string& name) {
  if (name == "uniform") return kwgraph::ImpostorMode::uniform;
  if (name == "softmax") return kwgraph::ImpostorMode::softmax;
  throw ConfigError("impostor_mode must be \"uniform\" or \"softmax\", got \"" + name + "\"");
}

}  // namespace hcvae
