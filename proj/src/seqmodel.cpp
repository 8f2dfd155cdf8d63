#include "hcvae/seqmodel.hpp"

#include <algorithm>
#include <cmath>

#include "hcvae/errors.hpp"

namespace hcvae {

namespace {
constexpr double kMaskedScore = -1e9;
}

// ---- registry ----

Tensor ParamRegistry::add(const std::string& name, Tensor t) {
  for (const auto& [n, existing] : items_) {
    if (n == name) throw ContractError("ParamRegistry: duplicate parameter name '" + name + "'");
    if (existing.impl() == t.impl())
      throw ContractError("ParamRegistry: tensor registered twice, second name '" + name + "'");
  }
  items_.emplace_back(name, t);
  return t;
}

std::vector<Tensor> ParamRegistry::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& [n, t] : items_) out.push_back(t);
  return out;
}

Tensor ParamRegistry::find(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw ContractError("ParamRegistry: no parameter named '" + name + "'");
}

void ParamRegistry::zero_grad() {
  for (auto& [n, t] : items_) t.zero_grad();
}

// ---- building blocks ----

Linear::Linear(ParamRegistry& reg, const std::string& name, int in, int out, Rng& rng,
               double w_std) {
  W = reg.add(name + ".w", Tensor::randn({in, out}, rng, w_std, true));
  b = reg.add(name + ".b", Tensor::zeros({1, out}, true));
}

Embedding::Embedding(ParamRegistry& reg, int vocab, int dim, Rng& rng) {
  table = reg.add("embed.table", Tensor::randn({vocab, dim}, rng, 0.1, true));
}

Tensor Embedding::lookup(const std::vector<int>& flat_ids) const {
  return gather_rows(table, flat_ids);
}

Tensor positional_encoding(int len, int d) {
  std::vector<double> data(static_cast<size_t>(len) * static_cast<size_t>(d));
  for (int p = 0; p < len; ++p)
    for (int i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -2.0 * (i / 2) / d);
      data[static_cast<size_t>(p) * d + i] =
          (i % 2 == 0) ? std::sin(p * rate) : std::cos(p * rate);
    }
  return Tensor::from_data({len, d}, std::move(data));
}

AttnBlock::AttnBlock(ParamRegistry& reg, const std::string& name, int d, int n_heads, Rng& rng)
    : heads(n_heads) {
  if (d % n_heads != 0)
    throw ContractError("AttnBlock: d_model " + std::to_string(d) + " not divisible by heads " +
                        std::to_string(n_heads));
  const double std_attn = 1.0 / std::sqrt(static_cast<double>(d));
  wq = Linear(reg, name + ".wq", d, d, rng, std_attn);
  wk = Linear(reg, name + ".wk", d, d, rng, std_attn);
  wv = Linear(reg, name + ".wv", d, d, rng, std_attn);
  wo = Linear(reg, name + ".wo", d, d, rng, std_attn);
  ff1 = Linear(reg, name + ".ff1", d, 2 * d, rng, std_attn);
  ff2 = Linear(reg, name + ".ff2", 2 * d, d, rng, 1.0 / std::sqrt(2.0 * d));
}

Tensor AttnBlock::forward(const Tensor& x, const Tensor& mask) const {
  const int d = x.cols();
  const int dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = wq.forward(x);
  Tensor k = wk.forward(x);
  Tensor v = wv.forward(x);

  Tensor ctx;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Tensor attn = softmax_rows(add(scores, mask));
    Tensor head_ctx = matmul(attn, vh);
    ctx = h == 0 ? head_ctx : concat_cols(ctx, head_ctx);
  }
  Tensor after_attn = add(x, wo.forward(ctx));
  Tensor ff = ff2.forward(tanh(ff1.forward(after_attn)));
  return add(after_attn, ff);
}

// ---- encoder ----

Encoder::Encoder(ParamRegistry& reg, const std::string& name, const SeqConfig& cfg, Rng& rng)
    : d_model_(cfg.d_model) {
  for (int i = 0; i < cfg.enc_blocks; ++i)
    blocks_.emplace_back(reg, name + ".block" + std::to_string(i), cfg.d_model, cfg.heads, rng);
}

EncoderState Encoder::encode(const Embedding& emb, const TokenMatrix& token_ids) const {
  const int batch = static_cast<int>(token_ids.size());
  if (batch == 0) throw ContractError("encode: empty batch");
  const int len = static_cast<int>(token_ids[0].size());
  for (const auto& row : token_ids)
    if (static_cast<int>(row.size()) != len)
      throw ShapeError("encode: ragged token batch");

  std::vector<int> flat;
  flat.reserve(static_cast<size_t>(batch) * static_cast<size_t>(len));
  for (const auto& row : token_ids) flat.insert(flat.end(), row.begin(), row.end());

  Tensor pos = positional_encoding(len, d_model_);
  Tensor x = emb.lookup(flat);

  std::vector<Tensor> pooled_rows;
  std::vector<Tensor> token_rows;
  pooled_rows.reserve(static_cast<size_t>(batch));
  token_rows.reserve(static_cast<size_t>(batch));

  for (int b = 0; b < batch; ++b) {
    Tensor xb = add(slice_rows(x, b * len, len), pos);

    // Additive key mask: PAD positions never receive attention.
    std::vector<double> mask_data(static_cast<size_t>(len) * static_cast<size_t>(len), 0.0);
    for (int j = 0; j < len; ++j)
      if (token_ids[static_cast<size_t>(b)][static_cast<size_t>(j)] == corpus::Vocab::kPad)
        for (int i = 0; i < len; ++i)
          mask_data[static_cast<size_t>(i) * len + j] = kMaskedScore;
    Tensor mask = Tensor::from_data({len, len}, std::move(mask_data));

    for (const auto& block : blocks_) xb = block.forward(xb, mask);

    // Masked mean pooling; an all-PAD row pools to the zero vector.
    std::vector<double> mrow(static_cast<size_t>(len), 0.0);
    int count = 0;
    for (int j = 0; j < len; ++j)
      if (token_ids[static_cast<size_t>(b)][static_cast<size_t>(j)] != corpus::Vocab::kPad) {
        mrow[static_cast<size_t>(j)] = 1.0;
        ++count;
      }
    Tensor mean_row = Tensor::from_data({1, len}, std::move(mrow));
    Tensor pooled = scale(matmul(mean_row, xb), 1.0 / std::max(count, 1));

    pooled_rows.push_back(pooled);
    token_rows.push_back(xb);
  }

  EncoderState st;
  st.pooled = batch == 1 ? pooled_rows[0] : concat_rows(pooled_rows);
  st.per_token = batch == 1 ? token_rows[0] : concat_rows(token_rows);
  st.batch = batch;
  st.len = len;
  return st;
}

// ---- decoder ----

Decoder::Decoder(ParamRegistry& reg, const std::string& name, const SeqConfig& cfg, Rng& rng)
    : d_model_(cfg.d_model) {
  const int in_dim = cfg.d_model + cfg.d_latent + cfg.d_model;
  in_proj_ = Linear(reg, name + ".in", in_dim, cfg.d_model, rng,
                    1.0 / std::sqrt(static_cast<double>(in_dim)));
  for (int i = 0; i < cfg.dec_blocks; ++i)
    blocks_.emplace_back(reg, name + ".block" + std::to_string(i), cfg.d_model, cfg.heads, rng);
  out_ = Linear(reg, name + ".out", cfg.d_model, cfg.vocab_size, rng,
                1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
}

Tensor Decoder::logits(const Embedding& emb, const Tensor& z, const Tensor& u,
                       const TokenMatrix& y_shifted) const {
  const int batch = static_cast<int>(y_shifted.size());
  if (batch == 0) throw ContractError("decode: empty batch");
  if (z.rows() != batch || u.rows() != batch)
    throw ShapeError("decode: conditioning batch mismatch: z " + shape_str(z.shape()) + ", u " +
                     shape_str(u.shape()) + ", batch " + std::to_string(batch));
  const int len = static_cast<int>(y_shifted[0].size());
  for (const auto& row : y_shifted) {
    if (static_cast<int>(row.size()) != len) throw ShapeError("decode: ragged token batch");
    if (row.empty() || row[0] != corpus::Vocab::kBos)
      throw ContractError("decode: shifted targets must begin with BOS");
  }

  std::vector<int> flat;
  std::vector<int> rep;  // row b of z/u repeated len times
  flat.reserve(static_cast<size_t>(batch) * static_cast<size_t>(len));
  rep.reserve(flat.capacity());
  for (int b = 0; b < batch; ++b) {
    flat.insert(flat.end(), y_shifted[static_cast<size_t>(b)].begin(),
                y_shifted[static_cast<size_t>(b)].end());
    rep.insert(rep.end(), static_cast<size_t>(len), b);
  }

  Tensor tok = emb.lookup(flat);
  Tensor z_rep = gather_rows(z, rep);
  Tensor u_rep = gather_rows(u, rep);
  Tensor x = in_proj_.forward(concat_cols(concat_cols(tok, z_rep), u_rep));

  Tensor pos = positional_encoding(len, d_model_);

  // Strictly causal: position i sees keys j <= i only.
  std::vector<double> mask_data(static_cast<size_t>(len) * static_cast<size_t>(len), 0.0);
  for (int i = 0; i < len; ++i)
    for (int j = i + 1; j < len; ++j) mask_data[static_cast<size_t>(i) * len + j] = kMaskedScore;
  Tensor causal = Tensor::from_data({len, len}, std::move(mask_data));

  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    Tensor xb = add(slice_rows(x, b * len, len), pos);
    for (const auto& block : blocks_) xb = block.forward(xb, causal);
    rows.push_back(xb);
  }
  Tensor hidden = batch == 1 ? rows[0] : concat_rows(rows);
  Tensor logits2d = out_.forward(hidden);
  return reshape(logits2d, {batch, len, static_cast<int>(logits2d.cols())});
}

std::vector<int> Decoder::greedy(const Embedding& emb, const Tensor& z, const Tensor& u,
                                 int max_len, int min_len) const {
  if (min_len > max_len) throw ContractError("greedy: min_len exceeds max_len");
  NoGradGuard ng;
  const int vocab = out_.W.cols();
  std::vector<int> generated;
  while (static_cast<int>(generated.size()) < max_len) {
    std::vector<int> prefix{corpus::Vocab::kBos};
    prefix.insert(prefix.end(), generated.begin(), generated.end());
    Tensor lg = logits(emb, z, u, {prefix});
    const int len = static_cast<int>(prefix.size());
    Tensor last = slice_rows(reshape(lg, {len, vocab}), len - 1, 1);

    int best = -1;
    double best_score = 0.0;
    for (int t = 0; t < vocab; ++t) {
      if (t == corpus::Vocab::kPad || t == corpus::Vocab::kBos) continue;
      if (t == corpus::Vocab::kEos && static_cast<int>(generated.size()) < min_len) continue;
      const double s = last.value_at(static_cast<size_t>(t));
      if (best < 0 || s > best_score) {
        best = t;
        best_score = s;
      }
    }
    if (best == corpus::Vocab::kEos) break;
    generated.push_back(best);
  }
  return generated;
}

}  // namespace hcvae
