#pragma once

#include <unordered_map>
#include <utility>
#include <vector>

#include "hcvae/corpus.hpp"
#include "hcvae/seqmodel.hpp"
#include "hcvae/tensor.hpp"

namespace hcvae::kwgraph {

enum class EdgeSign { positive, negative };

/// Undirected keyword relation; sign records whether it came from a
/// positive or a negative output pairing.
struct Edge {
  int i = 0;
  int j = 0;
  EdgeSign sign = EdgeSign::positive;
};

enum class ImpostorMode { uniform, softmax };

/// Trainable parameters of the graph update layers.
struct GraphWeights {
  Tensor w_p, w_h;              // edge attention projections
  Linear edge_init;             // r0 = FFN([h_i; h_j])
  Linear edge_ffn;              // edge residual FFN
  Tensor w_q, w_k, w_r, w_v;    // node attention projections
  Linear node_ffn;              // node residual FFN
  bool identity_node_ffn = false;
  int dim = 0;

  GraphWeights() = default;
  GraphWeights(ParamRegistry& reg, const std::string& name, int d, Rng& rng,
               bool identity_node_ffn);
};

/// Keyword graph structure: one node per distinct keyword, cluster-local
/// signed relations as edges, plus which corpus texts initialize each node.
struct KeywordGraph {
  std::vector<int> node_ids;  // keyword vocab ids, ascending
  std::unordered_map<int, int> node_of_keyword;
  std::vector<Edge> edges;
  /// Per node: (neighbour node, edge index) pairs, sorted.
  std::vector<std::vector<std::pair<int, int>>> neighbors;
  /// Per node: (example index, role) with role 0=input, 1=positive, 2=negative.
  std::vector<std::vector<std::pair<int, int>>> node_texts;

  int node_count() const { return static_cast<int>(node_ids.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
  bool has_node(int keyword_id) const { return node_of_keyword.count(keyword_id) > 0; }
};

/// Nodes and signed edges from a triplet dataset. Within each cluster,
/// positive output keywords relate to each other with + edges and every
/// positive output keyword relates to the cluster's negative output
/// keywords with - edges. Self-relations are dropped, duplicates merged.
KeywordGraph build_structure(const corpus::Dataset& ds);

/// h^0 rows: mean of each node's pooled text embeddings. One tensor
/// [1 x d] per text, grouped per node; empty groups are an error.
Tensor init_nodes(const std::vector<std::vector<Tensor>>& pooled_groups);

/// r^0 = edge_init([h_i ; h_j]) for every edge, [E x d].
Tensor init_edges(const KeywordGraph& g, const Tensor& h, const GraphWeights& w);

/// One edge sweep: attention over the two endpoints, then residual FFN.
Tensor update_edges(const KeywordGraph& g, const Tensor& h, const Tensor& r,
                    const GraphWeights& w);

/// One node sweep using the fresh edge representations; isolated nodes
/// pass through the residual FFN alone.
Tensor update_nodes(const KeywordGraph& g, const Tensor& h, const Tensor& r_next,
                    const GraphWeights& w);

struct IterationResult {
  Tensor h;  // final node representations (the polished keyword vectors)
  Tensor r;  // final edge representations
};

/// T alternations of update_edges / update_nodes starting from (h0, r0).
IterationResult run_iterations(const KeywordGraph& g, const Tensor& h0, const Tensor& r0,
                               const GraphWeights& w, int iterations);

/// Impostor representation for the node's keyword: aggregate of the final
/// representations of its negative-sign neighbours (uniform mean by
/// default, softmax-against-anchor behind the mode switch). A node without
/// negative neighbours falls back to a seeded uniform draw among
/// non-neighbours; a graph where no fallback exists is a ConfigError.
Tensor impostor(const KeywordGraph& g, int node, const Tensor& h_final, ImpostorMode mode,
                Rng& fallback_rng);

}  // namespace hcvae::kwgraph
