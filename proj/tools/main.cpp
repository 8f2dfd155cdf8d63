#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hcvae/errors.hpp"
#include "hcvae/trainer.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

hcvae::RunConfig config_with_overrides(const std::string& config_path,
                                       const std::vector<std::string>& overrides) {
  hcvae::RunConfig cfg =
      config_path.empty() ? hcvae::RunConfig{} : hcvae::load_config(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw hcvae::ConfigError("override must look like key=value, got \"" + kv + "\"");
    hcvae::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keyword-conditioned CVAE with hierarchical contrastive training"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, split = "test", report_path;
  std::string input_path, output_path, stopwords_path, csv_path, graph_json_path;
  std::vector<std::string> overrides;
  bool self_test = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--set", overrides, "key=value override of a config field")
        ->take_all();
  };

  CLI::App* train = app.add_subcommand("train", "Train a model and write the best checkpoint");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "Greedy-decode a split and score it");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
  eval->add_option("--split", split, "train, valid or test");
  eval->add_option("--report", report_path, "where to write the JSON metric report");
  eval->add_flag("--self-test", self_test, "score references against themselves");

  CLI::App* extract = app.add_subcommand("extract-keywords", "TextRank keyword per input line");
  extract->add_option("--input", input_path, "text file, one text per line")->required();
  extract->add_option("--output", output_path, "JSONL of {text, keyword}")->required();
  extract->add_option("--stopwords", stopwords_path, "stopword list, one token per line");

  CLI::App* dump = app.add_subcommand("dump-embeddings", "CSV of final keyword vectors");
  add_common(dump);
  dump->add_option("--checkpoint", checkpoint_path, "checkpoint to read")->required();
  dump->add_option("--output", csv_path, "CSV output path")->required();
  dump->add_option("--graph-json", graph_json_path, "optional nodes+edges JSON dump");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (train->parsed()) {
      auto cfg = config_with_overrides(config_path, overrides);
      auto res = hcvae::cmd_train(cfg);
      std::printf("trained %d steps; checkpoint: %s; log: %s\n", res.steps,
                  res.checkpoint_path.c_str(), res.log_path.c_str());
    } else if (eval->parsed()) {
      auto cfg = config_with_overrides(config_path, overrides);
      if (report_path.empty()) report_path = cfg.checkpoint_dir + "/eval_report.json";
      auto res = hcvae::cmd_eval(cfg, checkpoint_path, split, report_path, self_test);
      std::printf("bleu1 %.4f bleu2 %.4f bleu3 %.4f bleu4 %.4f extrema %.4f average %.4f greedy %.4f (%d pairs)\n",
                  res.report.bleu1, res.report.bleu2, res.report.bleu3, res.report.bleu4,
                  res.report.extrema, res.report.average, res.report.greedy, res.report.pairs);
    } else if (extract->parsed()) {
      hcvae::cmd_extract_keywords(input_path, output_path, stopwords_path);
    } else if (dump->parsed()) {
      auto cfg = config_with_overrides(config_path, overrides);
      hcvae::cmd_dump_embeddings(cfg, checkpoint_path, csv_path, graph_json_path);
    }
  } catch (const hcvae::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const hcvae::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const hcvae::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return 0;
}
