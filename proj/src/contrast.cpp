#include "hcvae/contrast.hpp"

#include <cmath>

#include "hcvae/errors.hpp"

namespace hcvae::contrast {

namespace {

constexpr double kNormSqFloor = 1e-24;  // floors the norm itself at 1e-12

Tensor neg_mean(const Tensor& picked) { return neg(mean(picked)); }

}  // namespace

Tensor cosine_sim_rows(const Tensor& a, const Tensor& b, int* guard_hits) {
  if (a.shape() != b.shape())
    throw ShapeError("cosine_sim: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor dots = row_sum(mul(a, b));
  Tensor sq_a = row_sum(mul(a, a));
  Tensor sq_b = row_sum(mul(b, b));
  if (guard_hits) {
    for (size_t i = 0; i < sq_a.size(); ++i)
      if (sq_a.value_at(i) < kNormSqFloor || sq_b.value_at(i) < kNormSqFloor) ++*guard_hits;
  }
  Tensor na = sqrt(clamp_min(sq_a, kNormSqFloor));
  Tensor nb = sqrt(clamp_min(sq_b, kNormSqFloor));
  return div(dots, mul(na, nb));
}

Tensor mahalanobis_diag_rows(const DiagGaussian& q, const Tensor& u, MahalanobisMode mode) {
  if (u.shape() != q.mu.shape())
    throw ShapeError("mahalanobis: point shape " + shape_str(u.shape()) + " vs mu " +
                     shape_str(q.mu.shape()));
  Tensor diff = sub(u, q.mu);
  Tensor sq = mul(diff, diff);
  Tensor var_factor =
      mode == MahalanobisMode::inverse_variance ? exp(neg(q.log_var)) : exp(q.log_var);
  return row_sum(mul(sq, var_factor));
}

Tensor loss_instance(const DiagGaussian& prior, const DiagGaussian& post_pos,
                     const DiagGaussian& post_neg, double tau) {
  Tensor h_pos = kl_diag(post_pos, prior);
  Tensor h_neg = kl_diag(post_neg, prior);
  if (tau <= 0.0) throw ContractError("loss_instance: tau must be positive");
  Tensor scores = concat_cols(scale(h_pos, 1.0 / tau), scale(h_neg, 1.0 / tau));
  // -log(1 - softmax_pos) = -log(softmax_neg): the negative divergence must
  // carry the probability mass.
  return neg_mean(slice_cols(log_softmax_rows(scores), 1, 1));
}

Tensor loss_keyword(const Tensor& u_in, const Tensor& u_out, const Tensor& u_imp, double tau,
                    int* guard_hits) {
  if (tau <= 0.0) throw ContractError("loss_keyword: tau must be positive");
  Tensor s_pos = cosine_sim_rows(u_in, u_out, guard_hits);
  Tensor s_neg = cosine_sim_rows(u_in, u_imp, guard_hits);
  Tensor scores = concat_cols(scale(s_pos, 1.0 / tau), scale(s_neg, 1.0 / tau));
  return neg_mean(slice_cols(log_softmax_rows(scores), 0, 1));
}

Tensor loss_mahalanobis(const DiagGaussian& post, const Tensor& u_out, const Tensor& u_imp,
                        double tau, MahalanobisMode mode) {
  if (tau <= 0.0) throw ContractError("loss_mahalanobis: tau must be positive");
  Tensor d_pos = mahalanobis_diag_rows(post, u_out, mode);
  Tensor d_neg = mahalanobis_diag_rows(post, u_imp, mode);
  Tensor scores = concat_cols(scale(d_pos, 1.0 / tau), scale(d_neg, 1.0 / tau));
  return neg_mean(slice_cols(log_softmax_rows(scores), 1, 1));
}

namespace {

// Graph row for a keyword, or its raw embedding when the graph has never
// seen the keyword (validation/test vocabulary).
Tensor keyword_row(const Model& model, const GraphSnapshot& snap, const Tensor& h_final,
                   int keyword_id, int* fallbacks) {
  auto it = snap.structure.node_of_keyword.find(keyword_id);
  if (it != snap.structure.node_of_keyword.end())
    return slice_rows(h_final, it->second, 1);
  ++*fallbacks;
  return gather_rows(model.embed.table, {keyword_id});
}

}  // namespace

LossResult total_loss(const Model& model, const GraphSnapshot& snapshot,
                      const corpus::Batch& batch, const Tensor& eps, const ContrastConfig& cfg,
                      Rng& impostor_rng) {
  if (batch.size == 0) throw ContractError("total_loss: empty batch");
  LossResult out;
  LossReport& rep = out.report;

  // Polish keyword representations on the tape; h0 may itself be
  // tape-connected (audit mode) or a per-epoch value snapshot.
  Tensor r0 = kwgraph::init_edges(snapshot.structure, snapshot.h0, model.graph);
  kwgraph::IterationResult polished = kwgraph::run_iterations(
      snapshot.structure, snapshot.h0, r0, model.graph, model.config().graph_iters);

  std::vector<Tensor> u_in_rows;
  for (int b = 0; b < batch.size; ++b)
    u_in_rows.push_back(keyword_row(model, snapshot, polished.h, batch.k_x[static_cast<size_t>(b)],
                                    &rep.keyword_fallbacks));
  Tensor u_in = batch.size == 1 ? u_in_rows[0] : concat_rows(u_in_rows);

  EncoderState enc_x = model.encoder.encode(model.embed, batch.x);
  EncoderState enc_yp = model.encoder.encode(model.embed, batch.y_pos);

  DiagGaussian prior = model.prior(enc_x.pooled, u_in);
  DiagGaussian post_pos = model.posterior(enc_x.pooled, enc_yp.pooled);

  Tensor z = reparameterize(post_pos, eps);
  Tensor logits = model.decoder.logits(model.embed, z, u_in, shift_right(batch.y_pos));
  Tensor recon = mean(reconstruction_nll(logits, batch.y_pos));
  Tensor kl_reg = mean(kl_diag(post_pos, prior));

  Tensor total = add(recon, scale(kl_reg, cfg.beta_kl));
  rep.recon = recon.item();
  rep.kl_reg = kl_reg.item();

  if (cfg.lambda_ins != 0.0) {
    EncoderState enc_yn = model.encoder.encode(model.embed, batch.y_neg);
    DiagGaussian post_neg = model.posterior(enc_x.pooled, enc_yn.pooled);
    Tensor l_ins = loss_instance(prior, post_pos, post_neg, cfg.tau);
    rep.l_ins = l_ins.item();
    total = add(total, scale(l_ins, cfg.lambda_ins));
  }

  if (cfg.lambda_kw != 0.0 || cfg.lambda_ma != 0.0) {
    std::vector<Tensor> u_out_rows, u_imp_rows;
    for (int b = 0; b < batch.size; ++b) {
      const int kw_pos = batch.k_y_pos[static_cast<size_t>(b)];
      u_out_rows.push_back(keyword_row(model, snapshot, polished.h, kw_pos, &rep.keyword_fallbacks));
      auto it = snapshot.structure.node_of_keyword.find(kw_pos);
      if (it != snapshot.structure.node_of_keyword.end()) {
        u_imp_rows.push_back(kwgraph::impostor(snapshot.structure, it->second, polished.h,
                                               model.config().impostor_mode, impostor_rng));
      } else {
        // No node to take negative neighbours from: the example's own
        // negative keyword embedding stands in.
        ++rep.keyword_fallbacks;
        u_imp_rows.push_back(gather_rows(model.embed.table, {batch.k_y_neg[static_cast<size_t>(b)]}));
      }
    }
    Tensor u_out = batch.size == 1 ? u_out_rows[0] : concat_rows(u_out_rows);
    Tensor u_imp = batch.size == 1 ? u_imp_rows[0] : concat_rows(u_imp_rows);

    if (cfg.lambda_kw != 0.0) {
      Tensor l_kw = loss_keyword(u_in, u_out, u_imp, cfg.tau, &rep.cosine_guard_hits);
      rep.l_keyword = l_kw.item();
      total = add(total, scale(l_kw, cfg.lambda_kw));
    }
    if (cfg.lambda_ma != 0.0) {
      Tensor u_out_z = model.kw_to_latent.forward(u_out);
      Tensor u_imp_z = model.kw_to_latent.forward(u_imp);
      Tensor l_ma = loss_mahalanobis(post_pos, u_out_z, u_imp_z, cfg.tau, cfg.ma_mode);
      rep.l_ma = l_ma.item();
      total = add(total, scale(l_ma, cfg.lambda_ma));
    }
  }

  rep.total = total.item();
  out.loss = total;
  return out;
}

}  // namespace hcvae::contrast
