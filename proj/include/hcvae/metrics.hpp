#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hcvae/tensor.hpp"

namespace hcvae::metrics {

/// Aggregate over an evaluation split. BLEU values live in [0,1]; the
/// embedding similarities in [-1,1].
struct MetricReport {
  double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
  double extrema = 0.0, average = 0.0, greedy = 0.0;
  int pairs = 0;
  int embedding_skipped = 0;
};

/// Sentence BLEU-n (cumulative, uniform 1/n weights) with Chen & Cherry
/// smoothing 7: method-4 count shrinkage (k = 5) on zero orders followed by
/// method-5 neighbourhood averaging with p0 = p1 + 1 and the 5-gram
/// precision as the top neighbour. The averaging can push a perfect match
/// above one, so the final score is capped at 1. Empty hypothesis scores 0;
/// empty reference is a contract violation.
double bleu_n(const std::vector<std::string>& hypothesis,
              const std::vector<std::string>& reference, int n);

/// Cosine similarity between the mean word vectors of the two texts.
/// Reserved ids (PAD/BOS/EOS/UNK) carry no meaning and are skipped; a pair
/// with no remaining words on either side yields nullopt.
std::optional<double> embedding_average(const std::vector<int>& hyp, const std::vector<int>& ref,
                                        const Tensor& table);

/// Cosine similarity between per-dimension signed extrema (value of largest
/// magnitude, sign kept) of the two texts' word vectors.
std::optional<double> embedding_extrema(const std::vector<int>& hyp, const std::vector<int>& ref,
                                        const Tensor& table);

/// Symmetric greedy matching: mean over one text's words of the best cosine
/// against the other text, averaged over both directions.
std::optional<double> embedding_greedy(const std::vector<int>& hyp, const std::vector<int>& ref,
                                       const Tensor& table);

}  // namespace hcvae::metrics
