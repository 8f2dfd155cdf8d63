#pragma once

#include "hcvae/cvae.hpp"
#include "hcvae/model.hpp"
#include "hcvae/tensor.hpp"

namespace hcvae::contrast {

enum class MahalanobisMode { inverse_variance, as_written };

struct ContrastConfig {
  double tau = 1.0;
  double lambda_ins = 1.0;
  double lambda_kw = 1.0;
  double lambda_ma = 1.0;
  MahalanobisMode ma_mode = MahalanobisMode::inverse_variance;
  double beta_kl = 1.0;
};

/// Per-batch loss breakdown. `total` always equals
/// recon + beta_kl*kl_reg + lambda_ins*l_ins + lambda_kw*l_keyword + lambda_ma*l_ma.
struct LossReport {
  double recon = 0.0;
  double kl_reg = 0.0;
  double l_ins = 0.0;
  double l_keyword = 0.0;
  double l_ma = 0.0;
  double total = 0.0;
  int keyword_fallbacks = 0;   // batch keywords served from the raw embedding
  int cosine_guard_hits = 0;   // zero-norm vectors caught by the cosine floor
};

/// Row-wise cosine similarity of paired rows, [B x d] x [B x d] -> [B x 1].
/// Norms are floored at 1e-12; a floored row increments *guard_hits.
Tensor cosine_sim_rows(const Tensor& a, const Tensor& b, int* guard_hits = nullptr);

/// Row-wise diagonal Mahalanobis distance from u to q. Inverse-variance
/// mode is sum (u-mu)^2/sigma^2; as-written mode multiplies by sigma^2
/// instead, mirroring the formula it is named after.
Tensor mahalanobis_diag_rows(const DiagGaussian& q, const Tensor& u, MahalanobisMode mode);

/// Instance level: h* = KL(posterior* || prior); minimizing drives the
/// positive divergence below the negative one. Batch mean.
Tensor loss_instance(const DiagGaussian& prior, const DiagGaussian& post_pos,
                     const DiagGaussian& post_neg, double tau);

/// Keyword level: InfoNCE over cosine similarities with the input keyword
/// as anchor; minimizing drives s+ above s-. Batch mean.
Tensor loss_keyword(const Tensor& u_in, const Tensor& u_out, const Tensor& u_imp, double tau,
                    int* guard_hits = nullptr);

/// Inter level: Mahalanobis distances of keyword points to the posterior;
/// minimizing drives D+ below D-. Batch mean.
Tensor loss_mahalanobis(const DiagGaussian& post, const Tensor& u_out, const Tensor& u_imp,
                        double tau, MahalanobisMode mode);

struct LossResult {
  Tensor loss;  // scalar, on tape
  LossReport report;
};

/// The combined hierarchical objective on one batch: CVAE reconstruction +
/// KL, plus the three weighted contrastive terms, with keyword
/// representations read from the (already initialized) graph snapshot and
/// polished on the tape.
LossResult total_loss(const Model& model, const GraphSnapshot& snapshot,
                      const corpus::Batch& batch, const Tensor& eps, const ContrastConfig& cfg,
                      Rng& impostor_rng);

}  // namespace hcvae::contrast
