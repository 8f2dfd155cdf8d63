#include "hcvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hcvae/corpus.hpp"
#include "hcvae/errors.hpp"

namespace hcvae::metrics {

namespace {

constexpr double kMethod4K = 5.0;

struct Precision {
  double numerator = 0.0;
  double denominator = 1.0;
  double value() const { return numerator / denominator; }
};

Precision modified_precision(const std::vector<std::string>& hypothesis,
                             const std::vector<std::string>& reference, int n) {
  Precision p;
  const int hn = static_cast<int>(hypothesis.size());
  const int rn = static_cast<int>(reference.size());
  std::map<std::vector<std::string>, int> counts;
  for (int i = 0; i + n <= hn; ++i)
    counts[std::vector<std::string>(hypothesis.begin() + i, hypothesis.begin() + i + n)] += 1;
  std::map<std::vector<std::string>, int> ref_counts;
  for (int i = 0; i + n <= rn; ++i)
    ref_counts[std::vector<std::string>(reference.begin() + i, reference.begin() + i + n)] += 1;

  int clipped = 0, total = 0;
  for (const auto& [ngram, count] : counts) {
    auto it = ref_counts.find(ngram);
    clipped += std::min(count, it == ref_counts.end() ? 0 : it->second);
    total += count;
  }
  p.numerator = clipped;
  p.denominator = std::max(1, total);
  return p;
}

}  // namespace

double bleu_n(const std::vector<std::string>& hypothesis,
              const std::vector<std::string>& reference, int n) {
  if (n < 1 || n > 4) throw ContractError("bleu_n: order must be in 1..4");
  if (reference.empty()) throw ContractError("bleu_n: empty reference");
  if (hypothesis.empty()) return 0.0;

  const double hyp_len = static_cast<double>(hypothesis.size());
  const double ref_len = static_cast<double>(reference.size());

  std::vector<Precision> raw;
  for (int i = 1; i <= n; ++i) raw.push_back(modified_precision(hypothesis, reference, i));

  // Method 4: shrink zero counts by ln(hyp_len) / (2^incvnt * k).
  std::vector<double> p(raw.size());
  int incvnt = 1;
  for (size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].numerator == 0.0 && hyp_len > 1.0) {
      p[i] = (std::log(hyp_len) / (std::pow(2.0, incvnt) * kMethod4K)) / raw[i].denominator;
      ++incvnt;
    } else {
      p[i] = raw[i].value();
    }
  }

  // Method 5: running neighbourhood average with p0 = p1 + 1 and the raw
  // 5-gram precision as the neighbour above the top order.
  std::vector<double> upper(p);
  upper.push_back(modified_precision(hypothesis, reference, 5).value());
  double running = p[0] + 1.0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = (running + p[i] + upper[i + 1]) / 3.0;
    running = p[i];
  }

  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  double log_sum = 0.0;
  for (int i = 0; i < n; ++i)
    if (p[static_cast<size_t>(i)] > 0.0) log_sum += std::log(p[static_cast<size_t>(i)]) / n;
  return std::min(1.0, bp * std::exp(log_sum));
}

namespace {

bool is_reserved(int id) {
  return id == corpus::Vocab::kPad || id == corpus::Vocab::kBos || id == corpus::Vocab::kEos ||
         id == corpus::Vocab::kUnk;
}

std::vector<std::vector<double>> word_vectors(const std::vector<int>& ids, const Tensor& table) {
  const int v = table.rows();
  const int d = table.cols();
  std::vector<std::vector<double>> out;
  for (int id : ids) {
    if (is_reserved(id) || id < 0 || id >= v) continue;
    std::vector<double> row(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) row[static_cast<size_t>(j)] = table.at(id, j);
    out.push_back(std::move(row));
  }
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::max(std::sqrt(na) * std::sqrt(nb), 1e-12);
}

std::vector<double> mean_vector(const std::vector<std::vector<double>>& vecs) {
  std::vector<double> out(vecs[0].size(), 0.0);
  for (const auto& v : vecs)
    for (size_t i = 0; i < v.size(); ++i) out[i] += v[i];
  for (double& x : out) x /= static_cast<double>(vecs.size());
  return out;
}

std::vector<double> extrema_vector(const std::vector<std::vector<double>>& vecs) {
  const size_t d = vecs[0].size();
  std::vector<double> out(d);
  for (size_t i = 0; i < d; ++i) {
    double mx = vecs[0][i], mn = vecs[0][i];
    for (const auto& v : vecs) {
      mx = std::max(mx, v[i]);
      mn = std::min(mn, v[i]);
    }
    out[i] = std::abs(mn) > mx ? mn : mx;
  }
  return out;
}

}  // namespace

std::optional<double> embedding_average(const std::vector<int>& hyp, const std::vector<int>& ref,
                                        const Tensor& table) {
  auto hv = word_vectors(hyp, table);
  auto rv = word_vectors(ref, table);
  if (hv.empty() || rv.empty()) return std::nullopt;
  return cosine(mean_vector(hv), mean_vector(rv));
}

std::optional<double> embedding_extrema(const std::vector<int>& hyp, const std::vector<int>& ref,
                                        const Tensor& table) {
  auto hv = word_vectors(hyp, table);
  auto rv = word_vectors(ref, table);
  if (hv.empty() || rv.empty()) return std::nullopt;
  return cosine(extrema_vector(hv), extrema_vector(rv));
}

std::optional<double> embedding_greedy(const std::vector<int>& hyp, const std::vector<int>& ref,
                                       const Tensor& table) {
  auto hv = word_vectors(hyp, table);
  auto rv = word_vectors(ref, table);
  if (hv.empty() || rv.empty()) return std::nullopt;
  auto directed = [](const std::vector<std::vector<double>>& from,
                     const std::vector<std::vector<double>>& to) {
    double total = 0.0;
    for (const auto& w : from) {
      double best = -1.0;
      for (const auto& v : to) best = std::max(best, cosine(w, v));
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return (directed(hv, rv) + directed(rv, hv)) / 2.0;
}

}  // namespace hcvae::metrics
