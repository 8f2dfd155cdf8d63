#include "hcvae/textrank.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "hcvae/errors.hpp"
#include "stopwords_builtin.inc"

namespace hcvae::textrank {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

StopwordSet load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stopword list: " + path);
  StopwordSet set;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) set.insert(line);
  }
  return set;
}

const StopwordSet& builtin_stopwords() {
  static const StopwordSet set = [] {
    StopwordSet s;
    std::istringstream in(kBuiltinStopwords);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) s.insert(line);
    return s;
  }();
  return set;
}

WordGraph build_cooccurrence_graph(const std::vector<std::string>& tokens, int window) {
  WordGraph g;
  if (tokens.empty()) return g;

  std::unordered_map<std::string, int> index;
  for (const auto& t : tokens)
    if (index.emplace(t, static_cast<int>(g.vertices.size())).second) g.vertices.push_back(t);

  const size_t n = g.vertices.size();
  g.weights.assign(n, std::vector<double>(n, 0.0));
  g.scores.assign(n, 0.0);

  for (size_t i = 0; i < tokens.size(); ++i)
    for (size_t j = i + 1; j < tokens.size() && j - i <= static_cast<size_t>(window); ++j) {
      const int a = index[tokens[i]];
      const int b = index[tokens[j]];
      if (a == b) continue;  // zero diagonal
      g.weights[static_cast<size_t>(a)][static_cast<size_t>(b)] += 1.0;
      g.weights[static_cast<size_t>(b)][static_cast<size_t>(a)] += 1.0;
    }
  return g;
}

WordGraph rank_nodes(WordGraph g, double damping, double tol, int max_iter) {
  if (damping <= 0.0 || damping >= 1.0) throw ContractError("rank_nodes: damping must be in (0,1)");
  const size_t n = g.vertices.size();
  if (n == 0) return g;

  std::vector<double> outsum(n, 0.0);
  for (size_t u = 0; u < n; ++u)
    for (size_t v = 0; v < n; ++v) outsum[u] += g.weights[u][v];

  g.scores.assign(n, 1.0);
  std::vector<double> next(n, 0.0);
  for (int it = 0; it < max_iter; ++it) {
    double max_change = 0.0;
    for (size_t v = 0; v < n; ++v) {
      double s = 0.0;
      for (size_t u = 0; u < n; ++u) {
        if (g.weights[u][v] == 0.0) continue;
        s += g.weights[u][v] / outsum[u] * g.scores[u];
      }
      next[v] = (1.0 - damping) + damping * s;
      max_change = std::max(max_change, std::abs(next[v] - g.scores[v]));
    }
    g.scores.swap(next);
    if (max_change < tol) break;
  }
  return g;
}

std::string extract_keyword(const std::string& text, const StopwordSet& stopwords,
                            const Options& opts) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw DataError("extract_keyword: empty text");

  std::vector<std::string> candidates;
  for (const auto& t : tokens)
    if (!stopwords.count(t)) candidates.push_back(t);
  if (candidates.empty()) return tokens.front();

  WordGraph g = build_cooccurrence_graph(candidates, opts.window);
  g = rank_nodes(std::move(g), opts.damping, opts.tol, opts.max_iter);

  size_t best = 0;
  for (size_t i = 1; i < g.vertices.size(); ++i) {
    if (g.scores[i] > g.scores[best] ||
        (g.scores[i] == g.scores[best] && g.vertices[i] < g.vertices[best]))
      best = i;
  }
  return g.vertices[best];
}

}  // namespace hcvae::textrank
