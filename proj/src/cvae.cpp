#include "hcvae/cvae.hpp"

#include <cmath>

#include "hcvae/errors.hpp"

namespace hcvae {

GaussHead::GaussHead(ParamRegistry& reg, const std::string& name, int in_dim, int hidden_dim,
                     int d_z, Rng& rng)
    : d_z_(d_z) {
  hidden_ = Linear(reg, name + ".hidden", in_dim, hidden_dim, rng,
                   1.0 / std::sqrt(static_cast<double>(in_dim)));
  out_ = Linear(reg, name + ".out", hidden_dim, 2 * d_z, rng,
                1.0 / std::sqrt(static_cast<double>(hidden_dim)));
}

DiagGaussian GaussHead::forward(const Tensor& a, const Tensor& b) const {
  if (a.rows() != b.rows())
    throw ShapeError("GaussHead: batch mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor h = tanh(hidden_.forward(concat_cols(a, b)));
  Tensor both = out_.forward(h);
  DiagGaussian g;
  g.mu = slice_cols(both, 0, d_z_);
  g.log_var = clamp(slice_cols(both, d_z_, d_z_), kLogVarLo, kLogVarHi);
  return g;
}

Tensor reparameterize(const DiagGaussian& q, const Tensor& eps) {
  if (eps.shape() != q.mu.shape())
    throw ShapeError("reparameterize: eps shape " + shape_str(eps.shape()) + " vs mu " +
                     shape_str(q.mu.shape()));
  Tensor sigma = exp(scale(q.log_var, 0.5));
  return add(q.mu, mul(sigma, eps));
}

Tensor kl_diag(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.mu.shape() != p.mu.shape())
    throw ShapeError("kl_diag: latent shape mismatch " + shape_str(q.mu.shape()) + " vs " +
                     shape_str(p.mu.shape()));
  // 0.5 * sum_d [ log(sp^2/sq^2) + (sq^2 + (mq-mp)^2) / sp^2 - 1 ]
  Tensor lv_diff = sub(p.log_var, q.log_var);
  Tensor var_ratio = exp(sub(q.log_var, p.log_var));
  Tensor mu_diff = sub(q.mu, p.mu);
  Tensor mean_term = mul(mul(mu_diff, mu_diff), exp(neg(p.log_var)));
  Tensor per_dim = scale(add_scalar(add(add(lv_diff, var_ratio), mean_term), -1.0), 0.5);
  // The exact closed form is >= 0; clamp only shields float noise near zero.
  return clamp_min(row_sum(per_dim), 0.0);
}

Tensor reconstruction_nll(const Tensor& logits, const TokenMatrix& y) {
  if (logits.rank() != 3)
    throw ShapeError("reconstruction_nll: want [B,L,V] logits, got " + shape_str(logits.shape()));
  const int batch = logits.shape()[0];
  const int len = logits.shape()[1];
  const int vocab = logits.shape()[2];
  if (static_cast<int>(y.size()) != batch)
    throw ShapeError("reconstruction_nll: target batch mismatch");

  std::vector<int> flat_targets;
  std::vector<double> mask;
  flat_targets.reserve(static_cast<size_t>(batch) * static_cast<size_t>(len));
  mask.reserve(flat_targets.capacity());
  for (const auto& row : y) {
    if (static_cast<int>(row.size()) != len)
      throw ShapeError("reconstruction_nll: target length mismatch");
    for (int t : row) {
      flat_targets.push_back(t);
      mask.push_back(t == corpus::Vocab::kPad ? 0.0 : 1.0);
    }
  }

  Tensor logp = log_softmax_rows(reshape(logits, {batch * len, vocab}));
  Tensor picked = gather_cols(logp, flat_targets);
  Tensor masked = mul(picked, Tensor::from_data({batch * len, 1}, std::move(mask)));
  return neg(row_sum(reshape(masked, {batch, len})));
}

TokenMatrix shift_right(const TokenMatrix& y) {
  TokenMatrix out;
  out.reserve(y.size());
  for (const auto& row : y) {
    std::vector<int> shifted;
    shifted.reserve(row.size());
    shifted.push_back(corpus::Vocab::kBos);
    shifted.insert(shifted.end(), row.begin(), row.end() - 1);
    out.push_back(std::move(shifted));
  }
  return out;
}

}  // namespace hcvae
