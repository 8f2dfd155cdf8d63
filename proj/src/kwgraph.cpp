#include "hcvae/kwgraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "hcvae/errors.hpp"

namespace hcvae::kwgraph {

GraphWeights::GraphWeights(ParamRegistry& reg, const std::string& name, int d, Rng& rng,
                           bool identity_ffn)
    : identity_node_ffn(identity_ffn), dim(d) {
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  w_p = reg.add(name + ".w_p", Tensor::randn({d, d}, rng, std, true));
  w_h = reg.add(name + ".w_h", Tensor::randn({d, d}, rng, std, true));
  edge_init = Linear(reg, name + ".edge_init", 2 * d, d, rng, 1.0 / std::sqrt(2.0 * d));
  edge_ffn = Linear(reg, name + ".edge_ffn", d, d, rng, std);
  w_q = reg.add(name + ".w_q", Tensor::randn({d, d}, rng, std, true));
  w_k = reg.add(name + ".w_k", Tensor::randn({d, d}, rng, std, true));
  w_r = reg.add(name + ".w_r", Tensor::randn({d, d}, rng, std, true));
  w_v = reg.add(name + ".w_v", Tensor::randn({d, d}, rng, std, true));
  node_ffn = Linear(reg, name + ".node_ffn", d, d, rng, std);
}

KeywordGraph build_structure(const corpus::Dataset& ds) {
  KeywordGraph g;

  std::set<int> keyword_ids;
  for (const auto& ex : ds.examples) {
    keyword_ids.insert(ex.k_x);
    keyword_ids.insert(ex.k_y_pos);
    keyword_ids.insert(ex.k_y_neg);
  }
  g.node_ids.assign(keyword_ids.begin(), keyword_ids.end());
  for (size_t i = 0; i < g.node_ids.size(); ++i)
    g.node_of_keyword[g.node_ids[i]] = static_cast<int>(i);

  g.node_texts.resize(g.node_ids.size());
  for (size_t e = 0; e < ds.examples.size(); ++e) {
    const auto& ex = ds.examples[e];
    g.node_texts[static_cast<size_t>(g.node_of_keyword[ex.k_x])].emplace_back(static_cast<int>(e), 0);
    g.node_texts[static_cast<size_t>(g.node_of_keyword[ex.k_y_pos])].emplace_back(static_cast<int>(e), 1);
    g.node_texts[static_cast<size_t>(g.node_of_keyword[ex.k_y_neg])].emplace_back(static_cast<int>(e), 2);
  }

  // Cluster-local relations, deduplicated on canonical (low, high, sign).
  std::set<std::tuple<int, int, int>> edge_set;
  auto relate = [&](int kw_a, int kw_b, EdgeSign sign) {
    const int a = g.node_of_keyword[kw_a];
    const int b = g.node_of_keyword[kw_b];
    if (a == b) return;
    edge_set.emplace(std::min(a, b), std::max(a, b), sign == EdgeSign::negative ? 1 : 0);
  };
  for (const auto& cluster : ds.clusters) {
    for (int mi : cluster.members)
      for (int mj : cluster.members) {
        const auto& ei = ds.examples[static_cast<size_t>(mi)];
        const auto& ej = ds.examples[static_cast<size_t>(mj)];
        if (mi != mj) relate(ei.k_y_pos, ej.k_y_pos, EdgeSign::positive);
        relate(ei.k_y_pos, ej.k_y_neg, EdgeSign::negative);
      }
  }
  for (const auto& [a, b, s] : edge_set)
    g.edges.push_back({a, b, s ? EdgeSign::negative : EdgeSign::positive});

  g.neighbors.resize(g.node_ids.size());
  for (size_t e = 0; e < g.edges.size(); ++e) {
    g.neighbors[static_cast<size_t>(g.edges[e].i)].emplace_back(g.edges[e].j, static_cast<int>(e));
    g.neighbors[static_cast<size_t>(g.edges[e].j)].emplace_back(g.edges[e].i, static_cast<int>(e));
  }
  for (auto& n : g.neighbors) std::sort(n.begin(), n.end());
  return g;
}

Tensor init_nodes(const std::vector<std::vector<Tensor>>& pooled_groups) {
  if (pooled_groups.empty()) throw ContractError("init_nodes: no nodes");
  std::vector<Tensor> rows;
  rows.reserve(pooled_groups.size());
  for (size_t i = 0; i < pooled_groups.size(); ++i) {
    const auto& group = pooled_groups[i];
    if (group.empty())
      throw ContractError("init_nodes: node " + std::to_string(i) + " has an empty text group");
    if (group.size() == 1) {
      rows.push_back(group[0]);
      continue;
    }
    Tensor stacked = concat_rows(group);
    Tensor ones = Tensor::full({1, static_cast<int>(group.size())}, 1.0);
    rows.push_back(scale(matmul(ones, stacked), 1.0 / static_cast<double>(group.size())));
  }
  return rows.size() == 1 ? rows[0] : concat_rows(rows);
}

namespace {

std::vector<int> endpoint_indices(const KeywordGraph& g, bool first) {
  std::vector<int> idx;
  idx.reserve(g.edges.size());
  for (const auto& e : g.edges) idx.push_back(first ? e.i : e.j);
  return idx;
}

}  // namespace

Tensor init_edges(const KeywordGraph& g, const Tensor& h, const GraphWeights& w) {
  if (g.edge_count() == 0) return Tensor();
  Tensor hi = gather_rows(h, endpoint_indices(g, true));
  Tensor hj = gather_rows(h, endpoint_indices(g, false));
  return w.edge_init.forward(concat_cols(hi, hj));
}

Tensor update_edges(const KeywordGraph& g, const Tensor& h, const Tensor& r,
                    const GraphWeights& w) {
  if (g.edge_count() == 0) return r;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(w.dim));

  Tensor hi = gather_rows(h, endpoint_indices(g, true));
  Tensor hj = gather_rows(h, endpoint_indices(g, false));
  Tensor rp = matmul(r, w.w_p);
  Tensor si = scale(row_sum(mul(rp, matmul(hi, w.w_h))), inv_sqrt);
  Tensor sj = scale(row_sum(mul(rp, matmul(hj, w.w_h))), inv_sqrt);

  Tensor beta = softmax_rows(concat_cols(si, sj));
  Tensor p = add(mul_colvec(hi, slice_cols(beta, 0, 1)), mul_colvec(hj, slice_cols(beta, 1, 1)));
  return w.edge_ffn.forward(add(r, p));
}

Tensor update_nodes(const KeywordGraph& g, const Tensor& h, const Tensor& r_next,
                    const GraphWeights& w) {
  const int n = g.node_count();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(w.dim));

  Tensor q = matmul(h, w.w_q);
  Tensor k = matmul(h, w.w_k);
  Tensor v = matmul(h, w.w_v);

  Tensor scores, values;
  std::vector<int> seg_offset(static_cast<size_t>(n), 0);
  std::vector<int> seg_count(static_cast<size_t>(n), 0);
  if (g.edge_count() > 0) {
    std::vector<int> pi, pj, pe;
    for (int i = 0; i < n; ++i) {
      seg_offset[static_cast<size_t>(i)] = static_cast<int>(pi.size());
      for (const auto& [j, e] : g.neighbors[static_cast<size_t>(i)]) {
        pi.push_back(i);
        pj.push_back(j);
        pe.push_back(e);
      }
      seg_count[static_cast<size_t>(i)] =
          static_cast<int>(pi.size()) - seg_offset[static_cast<size_t>(i)];
    }
    Tensor rr = matmul(r_next, w.w_r);
    Tensor qp = gather_rows(q, pi);
    Tensor kp = add(gather_rows(k, pj), gather_rows(rr, pe));
    scores = scale(row_sum(mul(qp, kp)), inv_sqrt);
    values = add(gather_rows(v, pj), gather_rows(r_next, pe));
  }

  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor hi = slice_rows(h, i, 1);
    const int cnt = seg_count[static_cast<size_t>(i)];
    Tensor pre_ffn;
    if (cnt == 0) {
      pre_ffn = hi;  // isolated node: residual path only
    } else {
      Tensor alpha = softmax_rows(transpose(slice_rows(scores, seg_offset[static_cast<size_t>(i)], cnt)));
      Tensor u = matmul(alpha, slice_rows(values, seg_offset[static_cast<size_t>(i)], cnt));
      pre_ffn = add(hi, u);
    }
    rows.push_back(w.identity_node_ffn ? pre_ffn : w.node_ffn.forward(pre_ffn));
  }
  return rows.size() == 1 ? rows[0] : concat_rows(rows);
}

IterationResult run_iterations(const KeywordGraph& g, const Tensor& h0, const Tensor& r0,
                               const GraphWeights& w, int iterations) {
  if (iterations < 0) throw ContractError("run_iterations: negative iteration count");
  IterationResult res{h0, r0};
  for (int t = 0; t < iterations; ++t) {
    res.r = update_edges(g, res.h, res.r, w);
    res.h = update_nodes(g, res.h, res.r, w);
  }
  return res;
}

Tensor impostor(const KeywordGraph& g, int node, const Tensor& h_final, ImpostorMode mode,
                Rng& fallback_rng) {
  if (node < 0 || node >= g.node_count())
    throw ContractError("impostor: node index out of range: " + std::to_string(node));

  std::vector<int> negatives;
  for (const auto& [j, e] : g.neighbors[static_cast<size_t>(node)])
    if (g.edges[static_cast<size_t>(e)].sign == EdgeSign::negative) negatives.push_back(j);

  if (!negatives.empty()) {
    Tensor reps = gather_rows(h_final, negatives);
    if (mode == ImpostorMode::uniform || negatives.size() == 1) {
      Tensor ones = Tensor::full({1, static_cast<int>(negatives.size())}, 1.0);
      return scale(matmul(ones, reps), 1.0 / static_cast<double>(negatives.size()));
    }
    // Softmax-attention weighting against the anchor representation.
    Tensor anchor = slice_rows(h_final, node, 1);
    Tensor w_row = softmax_rows(
        scale(transpose(matmul(reps, transpose(anchor))), 1.0 / std::sqrt(static_cast<double>(h_final.cols()))));
    return matmul(w_row, reps);
  }

  if (g.node_count() == 1)
    throw ConfigError("impostor: single-node graph has no possible fallback");
  std::vector<int> non_neighbors;
  for (int j = 0; j < g.node_count(); ++j) {
    if (j == node) continue;
    bool adjacent = false;
    for (const auto& [nb, e] : g.neighbors[static_cast<size_t>(node)])
      if (nb == j) adjacent = true;
    if (!adjacent) non_neighbors.push_back(j);
  }
  if (non_neighbors.empty())
    throw ConfigError("impostor: node has no negative neighbours and no non-neighbours");
  const int pick =
      non_neighbors[static_cast<size_t>(fallback_rng.uniform_int(static_cast<int>(non_neighbors.size())))];
  return slice_rows(h_final, pick, 1);
}

}  // namespace hcvae::kwgraph
