#pragma once

#include <string>
#include <unordered_set>
#include <vector>

namespace hcvae::textrank {

using StopwordSet = std::unordered_set<std::string>;

struct Options {
  int window = 2;
  double damping = 0.85;
  double tol = 1e-6;
  int max_iter = 100;
};

/// Word co-occurrence graph over keyword candidates. `weights` is symmetric
/// with a zero diagonal; `scores` is filled by rank_nodes.
struct WordGraph {
  std::vector<std::string> vertices;
  std::vector<std::vector<double>> weights;
  std::vector<double> scores;

  bool empty() const { return vertices.empty(); }
};

/// Lowercased tokens, split on anything that is not alphanumeric
/// (multi-byte UTF-8 sequences count as word characters).
std::vector<std::string> tokenize(const std::string& text);

/// One token per line, UTF-8. Blank lines ignored.
StopwordSet load_stopwords(const std::string& path);
const StopwordSet& builtin_stopwords();

/// Tokens must already be lowercased with stopwords removed. Edge weight is
/// the number of token-index pairs at distance <= window.
WordGraph build_cooccurrence_graph(const std::vector<std::string>& tokens, int window);

/// Synchronous weighted-PageRank sweep: S(v) = (1-d) + d * sum over
/// neighbours u of w(u,v)/outsum(u) * S(u), until the largest per-vertex
/// change drops below tol or max_iter is hit. Isolated vertices score (1-d).
WordGraph rank_nodes(WordGraph g, double damping, double tol, int max_iter);

/// Top-1 keyword of a text; ties break to the lexicographically smaller
/// candidate. Falls back to the first token when no candidate survives the
/// stopword filter. Throws DataError on empty text.
std::string extract_keyword(const std::string& text, const StopwordSet& stopwords,
                            const Options& opts = {});

}  // namespace hcvae::textrank
