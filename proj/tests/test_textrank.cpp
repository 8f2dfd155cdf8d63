#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "hcvae/errors.hpp"
#include "hcvae/rng.hpp"
#include "hcvae/textrank.hpp"

using namespace hcvae;
using namespace hcvae::textrank;

namespace {

// Exhaustive pair-count oracle for co-occurrence weights.
double pair_count(const std::vector<std::string>& tokens, const std::string& u,
                  const std::string& v, int window) {
  double c = 0;
  for (size_t i = 0; i < tokens.size(); ++i)
    for (size_t j = i + 1; j < tokens.size(); ++j)
      if (j - i <= static_cast<size_t>(window) &&
          ((tokens[i] == u && tokens[j] == v) || (tokens[i] == v && tokens[j] == u)))
        ++c;
  return c;
}

// Independent power-iteration oracle, run far past the implementation's
// tolerance; written over adjacency maps rather than a matrix.
std::map<std::string, double> rank_oracle(const WordGraph& g, double damping, double tol,
                                          int iters) {
  std::map<std::string, double> score;
  std::map<std::string, double> outsum;
  const size_t n = g.vertices.size();
  for (size_t i = 0; i < n; ++i) {
    score[g.vertices[i]] = 1.0;
    double s = 0;
    for (size_t j = 0; j < n; ++j) s += g.weights[i][j];
    outsum[g.vertices[i]] = s;
  }
  for (int it = 0; it < iters; ++it) {
    std::map<std::string, double> next;
    double change = 0;
    for (size_t v = 0; v < n; ++v) {
      double acc = 0;
      for (size_t u = 0; u < n; ++u)
        if (g.weights[u][v] > 0)
          acc += g.weights[u][v] / outsum[g.vertices[u]] * score[g.vertices[u]];
      next[g.vertices[v]] = (1 - damping) + damping * acc;
      change = std::max(change, std::abs(next[g.vertices[v]] - score[g.vertices[v]]));
    }
    score = next;
    if (change < tol) break;
  }
  return score;
}

WordGraph random_graph(Rng& rng, int n) {
  std::vector<std::string> tokens;
  for (int i = 0; i < n; ++i) tokens.push_back(std::string(1, static_cast<char>('a' + i)));
  WordGraph g;
  g.vertices = tokens;
  g.weights.assign(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n), 0.0));
  g.scores.assign(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < 0.55) {
        const double w = 1.0 + rng.uniform_int(4);
        g.weights[static_cast<size_t>(i)][static_cast<size_t>(j)] = w;
        g.weights[static_cast<size_t>(j)][static_cast<size_t>(i)] = w;
      }
  return g;
}

}  // namespace

TEST_CASE("cooccurrence: single token has one vertex and no edges") {
  WordGraph g = build_cooccurrence_graph({"a"}, 2);
  CHECK(g.vertices.size() == 1);
  CHECK(g.weights[0][0] == 0.0);
}

TEST_CASE("cooccurrence: adjacent pair has weight one") {
  WordGraph g = build_cooccurrence_graph({"a", "b"}, 2);
  REQUIRE(g.vertices.size() == 2);
  CHECK(g.weights[0][1] == 1.0);
  CHECK(g.weights[1][0] == 1.0);
}

TEST_CASE("cooccurrence weights match the exhaustive pair-count oracle") {
  const std::vector<std::string> tokens{"a", "b", "a", "c"};
  WordGraph g = build_cooccurrence_graph(tokens, 2);
  REQUIRE(g.vertices.size() == 3);
  auto idx = [&](const std::string& t) {
    return static_cast<size_t>(std::find(g.vertices.begin(), g.vertices.end(), t) -
                               g.vertices.begin());
  };
  CHECK(g.weights[idx("a")][idx("b")] == pair_count(tokens, "a", "b", 2));
  CHECK(g.weights[idx("a")][idx("b")] == 2.0);
  CHECK(g.weights[idx("a")][idx("c")] == pair_count(tokens, "a", "c", 2));
  CHECK(g.weights[idx("b")][idx("c")] == pair_count(tokens, "b", "c", 2));
  // Symmetric, zero diagonal.
  for (size_t i = 0; i < 3; ++i) {
    CHECK(g.weights[i][i] == 0.0);
    for (size_t j = 0; j < 3; ++j) CHECK(g.weights[i][j] == g.weights[j][i]);
  }
}

TEST_CASE("rank: isolated vertex scores 1 - damping") {
  WordGraph g = build_cooccurrence_graph({"solo"}, 2);
  g = rank_nodes(std::move(g), 0.85, 1e-6, 100);
  CHECK(g.scores[0] == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("rank: two connected vertices tie by symmetry") {
  WordGraph g = build_cooccurrence_graph({"x", "y"}, 2);
  g = rank_nodes(std::move(g), 0.85, 1e-6, 100);
  CHECK(g.scores[0] == g.scores[1]);
}

TEST_CASE("rank: 4-chain interior vertices outrank endpoints, oracle values") {
  WordGraph g = build_cooccurrence_graph({"a", "b", "c", "d"}, 1);
  g = rank_nodes(std::move(g), 0.85, 1e-10, 2000);
  auto oracle = rank_oracle(g, 0.85, 1e-12, 5000);
  for (size_t i = 0; i < 4; ++i)
    CHECK(g.scores[i] == doctest::Approx(oracle[g.vertices[i]]).epsilon(1e-8));
  CHECK(g.scores[1] > g.scores[0]);
  CHECK(g.scores[2] > g.scores[3]);
}

TEST_CASE("rank matches the power-iteration oracle on random graphs") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    WordGraph g = random_graph(rng, 2 + rng.uniform_int(7));
    WordGraph ranked = rank_nodes(g, 0.85, 1e-10, 5000);
    auto oracle = rank_oracle(g, 0.85, 1e-12, 20000);
    for (size_t i = 0; i < g.vertices.size(); ++i)
      CHECK(std::abs(ranked.scores[i] - oracle[g.vertices[i]]) < 1e-8);
  }
}

TEST_CASE("rank is permutation-equivariant") {
  Rng rng(43);
  WordGraph g = random_graph(rng, 6);
  WordGraph ranked = rank_nodes(g, 0.85, 1e-9, 3000);

  // Relabel by reversing vertex order.
  WordGraph rev;
  const size_t n = g.vertices.size();
  rev.vertices.assign(g.vertices.rbegin(), g.vertices.rend());
  rev.weights.assign(n, std::vector<double>(n, 0.0));
  rev.scores.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) rev.weights[n - 1 - i][n - 1 - j] = g.weights[i][j];
  WordGraph ranked_rev = rank_nodes(rev, 0.85, 1e-9, 3000);
  for (size_t i = 0; i < n; ++i)
    CHECK(ranked.scores[i] == doctest::Approx(ranked_rev.scores[n - 1 - i]).epsilon(1e-12));
}

TEST_CASE("rank converges within tolerance at the exit point") {
  Rng rng(47);
  for (int trial = 0; trial < 5; ++trial) {
    WordGraph g = random_graph(rng, 5);
    WordGraph ranked = rank_nodes(g, 0.85, 1e-6, 100);
    // One extra synchronous sweep moves nothing by more than tol.
    auto oracle_next = rank_oracle(ranked, 0.85, 0.0, 1);
    (void)oracle_next;
    std::vector<double> outsum(g.vertices.size(), 0.0);
    for (size_t u = 0; u < g.vertices.size(); ++u)
      for (size_t v = 0; v < g.vertices.size(); ++v) outsum[u] += g.weights[u][v];
    for (size_t v = 0; v < g.vertices.size(); ++v) {
      double acc = 0;
      for (size_t u = 0; u < g.vertices.size(); ++u)
        if (g.weights[u][v] > 0) acc += g.weights[u][v] / outsum[u] * ranked.scores[u];
      const double next = 0.15 + 0.85 * acc;
      CHECK(std::abs(next - ranked.scores[v]) < 1e-6);
    }
  }
}

TEST_CASE("extract: single candidate") {
  CHECK(extract_keyword("cosmology", builtin_stopwords()) == "cosmology");
}

TEST_CASE("extract: symmetric candidates break ties to the smaller word") {
  // zebra/quark tie exactly; quark sorts first.
  CHECK(extract_keyword("zebra quark zebra quark", builtin_stopwords()) == "quark");
}

TEST_CASE("extract: cosmology question yields cosmology") {
  CHECK(extract_keyword("what are the best books on cosmology?", builtin_stopwords()) ==
        "cosmology");
}

TEST_CASE("extract: empty text is an input error") {
  CHECK_THROWS_AS(extract_keyword("", builtin_stopwords()), DataError);
  CHECK_THROWS_AS(extract_keyword("?!.,", builtin_stopwords()), DataError);
}

TEST_CASE("extract: all-stopword text falls back to the first token") {
  CHECK(extract_keyword("what is this", builtin_stopwords()) == "what");
}

TEST_CASE("extract is deterministic") {
  const std::string text = "galaxies collide when dark matter halos merge";
  const std::string first = extract_keyword(text, builtin_stopwords());
  for (int i = 0; i < 5; ++i) CHECK(extract_keyword(text, builtin_stopwords()) == first);
}

TEST_CASE("tokenize lowercases and splits punctuation") {
  auto t = tokenize("What's up, World-2?");
  REQUIRE(t.size() == 5);
  CHECK(t[0] == "what");
  CHECK(t[1] == "s");
  CHECK(t[2] == "up");
  CHECK(t[3] == "world");
  CHECK(t[4] == "2");
}
