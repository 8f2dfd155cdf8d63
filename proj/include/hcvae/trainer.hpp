#pragma once

#include <string>
#include <vector>

#include "hcvae/config.hpp"
#include "hcvae/contrast.hpp"
#include "hcvae/metrics.hpp"
#include "hcvae/model.hpp"

namespace hcvae {

/// Adam over a fixed parameter list; state vectors are aligned with it.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainResult {
  std::string checkpoint_path;
  std::string log_path;
  int steps = 0;
  double first_total = 0.0;
  double last_total = 0.0;
  double best_valid_total = 0.0;
};

/// Full training run: per-epoch graph rebuild, Adam updates, JSONL step
/// log, best-validation checkpoint. Any non-finite loss aborts with
/// NumericError.
TrainResult cmd_train(const RunConfig& cfg);

struct EvalResult {
  metrics::MetricReport report;
  std::string report_path;
};

/// Greedy-decodes the split with each input's keyword condition and scores
/// against references. self_test scores references against themselves.
EvalResult cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& split, const std::string& report_path,
                    bool self_test = false);

/// Streams one text per line into {"text", "keyword"} JSONL.
void cmd_extract_keywords(const std::string& input_path, const std::string& output_path,
                          const std::string& stopwords_path = "");

/// CSV of final keyword-graph vectors: "keyword,v0,...,v{d-1}" per node.
/// Optionally also dumps nodes+edges JSON for inspection.
void cmd_dump_embeddings(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& csv_path, const std::string& graph_json_path = "");

}  // namespace hcvae
