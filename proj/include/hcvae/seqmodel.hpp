#pragma once

#include <string>
#include <vector>

#include "hcvae/corpus.hpp"
#include "hcvae/rng.hpp"
#include "hcvae/tensor.hpp"

namespace hcvae {

using TokenMatrix = std::vector<std::vector<int>>;

/// Every trainable tensor of the model, each registered exactly once
/// under a unique name. Order is registration order and is what the
/// optimizer and checkpoints iterate over.
class ParamRegistry {
 public:
  Tensor add(const std::string& name, Tensor t);
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<Tensor> tensors() const;
  Tensor find(const std::string& name) const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct SeqConfig {
  int vocab_size = 0;
  int d_model = 64;
  int d_latent = 32;
  int enc_blocks = 2;
  int dec_blocks = 2;
  int heads = 4;
  int max_pos = 64;  // positional-encoding capacity
};

struct Linear {
  Tensor W, b;
  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int in, int out, Rng& rng, double w_std);
  Tensor forward(const Tensor& x) const { return add_rowvec(matmul(x, W), b); }
};

struct Embedding {
  Tensor table;  // [V x d]
  Embedding() = default;
  Embedding(ParamRegistry& reg, int vocab, int dim, Rng& rng);
  /// [sum of row lengths x d]; ids out of range throw.
  Tensor lookup(const std::vector<int>& flat_ids) const;
};

struct EncoderState {
  Tensor pooled;     // [B x d], masked mean over non-PAD positions
  Tensor per_token;  // [B*L x d]
  int batch = 0;
  int len = 0;
};

struct AttnBlock {
  Linear wq, wk, wv, wo;
  Linear ff1, ff2;
  int heads = 1;

  AttnBlock() = default;
  AttnBlock(ParamRegistry& reg, const std::string& name, int d, int heads, Rng& rng);
  /// One example: x is [L x d], mask is an additive [L x L] score mask.
  Tensor forward(const Tensor& x, const Tensor& mask) const;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(ParamRegistry& reg, const std::string& name, const SeqConfig& cfg, Rng& rng);
  EncoderState encode(const Embedding& emb, const TokenMatrix& token_ids) const;

 private:
  std::vector<AttnBlock> blocks_;
  int d_model_ = 0;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(ParamRegistry& reg, const std::string& name, const SeqConfig& cfg, Rng& rng);

  /// Teacher-forced logits [B, L, V]. y_shifted rows must begin with BOS;
  /// z and u are concatenated into every step's input projection.
  Tensor logits(const Embedding& emb, const Tensor& z, const Tensor& u,
                const TokenMatrix& y_shifted) const;

  /// Argmax decoding for a single example; EOS is suppressed until min_len
  /// tokens exist, generation stops at EOS or max_len.
  std::vector<int> greedy(const Embedding& emb, const Tensor& z, const Tensor& u, int max_len,
                          int min_len) const;

 private:
  Linear in_proj_;
  std::vector<AttnBlock> blocks_;
  Linear out_;
  int d_model_ = 0;
};

/// Sinusoidal position rows [len x d] (constant, not trained).
Tensor positional_encoding(int len, int d);

}  // namespace hcvae
