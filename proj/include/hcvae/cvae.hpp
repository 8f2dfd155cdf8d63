#pragma once

#include "hcvae/seqmodel.hpp"
#include "hcvae/tensor.hpp"

namespace hcvae {

/// Diagonal Gaussian over the latent space. log_var is clamped to [-8, 8]
/// by every head forward, so sigma^2 stays within [e^-8, e^8].
struct DiagGaussian {
  Tensor mu;       // [B x d_z]
  Tensor log_var;  // [B x d_z]

  int batch() const { return mu.rows(); }
  int dim() const { return mu.cols(); }
};

constexpr double kLogVarLo = -8.0;
constexpr double kLogVarHi = 8.0;

/// Two-layer feed-forward head over a pair of pooled representations,
/// emitting (mu, log_var).
class GaussHead {
 public:
  GaussHead() = default;
  GaussHead(ParamRegistry& reg, const std::string& name, int in_dim, int hidden_dim, int d_z,
            Rng& rng);

  DiagGaussian forward(const Tensor& a, const Tensor& b) const;

 private:
  Linear hidden_, out_;
  int d_z_ = 0;
};

/// z = mu + exp(log_var / 2) * eps, differentiable through mu and log_var.
Tensor reparameterize(const DiagGaussian& q, const Tensor& eps);

/// Closed-form KL(q || p) per example, shape [B x 1]. Non-negative.
Tensor kl_diag(const DiagGaussian& q, const DiagGaussian& p);

/// Token cross-entropy summed over non-PAD positions, per example [B x 1].
Tensor reconstruction_nll(const Tensor& logits, const TokenMatrix& y);

/// [BOS, y_0, ..., y_{L-2}] per row: decoder input for teacher forcing.
TokenMatrix shift_right(const TokenMatrix& y);

}  // namespace hcvae
