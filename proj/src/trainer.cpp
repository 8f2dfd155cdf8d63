#include "hcvae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "hcvae/errors.hpp"
#include "json.hpp"

namespace hcvae {

using nlohmann::json;
namespace fs = std::filesystem;

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.values_mut();
    for (size_t i = 0; i < w.size(); ++i) {
      m_[pi][i] = beta1_ * m_[pi][i] + (1.0 - beta1_) * g[i];
      v_[pi][i] = beta2_ * v_[pi][i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m_[pi][i] / bc1;
      const double vhat = v_[pi][i] / bc2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

namespace {

struct LoadedCorpora {
  corpus::Dataset train;
  corpus::Dataset valid;
  bool has_valid = false;
  textrank::StopwordSet stopwords;
};

corpus::LoadOptions make_load_options(const RunConfig& cfg, const textrank::StopwordSet* stop) {
  corpus::LoadOptions opts;
  opts.max_input_len = cfg.max_input_len;
  opts.max_output_len = cfg.max_output_len;
  opts.synthesize_negatives = cfg.synthesize_negatives;
  opts.seed = cfg.seed;
  opts.stopwords = stop;
  opts.textrank_opts = {cfg.textrank_window, cfg.textrank_damping, cfg.textrank_tol,
                        cfg.textrank_max_iter};
  return opts;
}

LoadedCorpora load_corpora(const RunConfig& cfg) {
  LoadedCorpora out;
  if (cfg.train_path.empty()) throw ConfigError("train_path is required");
  if (!fs::exists(cfg.train_path)) throw ConfigError("train_path does not exist: " + cfg.train_path);
  out.stopwords = cfg.stopwords_path.empty() ? textrank::builtin_stopwords()
                                             : textrank::load_stopwords(cfg.stopwords_path);
  const auto opts = make_load_options(cfg, &out.stopwords);
  out.train = corpus::load_jsonl(cfg.train_path, opts);
  if (!cfg.valid_path.empty()) {
    if (!fs::exists(cfg.valid_path))
      throw ConfigError("valid_path does not exist: " + cfg.valid_path);
    out.valid = corpus::load_jsonl(cfg.valid_path, opts, out.train.vocab);
    out.has_valid = true;
  }
  return out;
}

ModelConfig make_model_config(const RunConfig& cfg, int vocab_size) {
  ModelConfig mc;
  mc.seq.vocab_size = vocab_size;
  mc.seq.d_model = cfg.d_model;
  mc.seq.d_latent = cfg.d_latent;
  mc.seq.enc_blocks = cfg.enc_blocks;
  mc.seq.dec_blocks = cfg.dec_blocks;
  mc.seq.heads = cfg.heads;
  mc.seq.max_pos =
      std::max({cfg.max_input_len, cfg.max_output_len, cfg.max_decode_len}) + 2;
  mc.graph_iters = cfg.graph_iters;
  mc.identity_node_ffn = cfg.identity_node_ffn;
  mc.impostor_mode = parse_impostor_mode(cfg.impostor_mode);
  return mc;
}

contrast::ContrastConfig make_contrast_config(const RunConfig& cfg, double beta_kl) {
  contrast::ContrastConfig cc;
  cc.tau = cfg.tau;
  cc.lambda_ins = cfg.lambda_ins;
  cc.lambda_kw = cfg.lambda_kw;
  cc.lambda_ma = cfg.lambda_ma;
  cc.ma_mode = parse_ma_mode(cfg.mahalanobis_mode);
  cc.beta_kl = beta_kl;
  return cc;
}

void require_finite_report(const contrast::LossReport& rep, int step) {
  for (double v : {rep.recon, rep.kl_reg, rep.l_ins, rep.l_keyword, rep.l_ma, rep.total})
    if (!std::isfinite(v))
      throw NumericError("non-finite loss at step " + std::to_string(step));
}

json report_json(const contrast::LossReport& rep) {
  return json{{"recon", rep.recon},
              {"kl_reg", rep.kl_reg},
              {"l_ins", rep.l_ins},
              {"l_keyword", rep.l_keyword},
              {"l_ma", rep.l_ma},
              {"total", rep.total},
              {"keyword_fallbacks", rep.keyword_fallbacks},
              {"cosine_guard_hits", rep.cosine_guard_hits}};
}

// Example-weighted mean of per-batch reports over a full split with
// deterministic noise (eps = 0, so z is the posterior mean).
contrast::LossReport evaluate_split(const Model& model, const GraphSnapshot& snapshot,
                                    const corpus::Dataset& ds, const RunConfig& cfg,
                                    uint64_t rng_tag) {
  contrast::LossReport agg;
  Rng fallback_rng = Rng(cfg.seed).fork(rng_tag);
  const auto cc = make_contrast_config(cfg, cfg.beta_kl_max);
  const int n = static_cast<int>(ds.examples.size());
  for (int start = 0; start < n; start += cfg.batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(start + cfg.batch_size, n); ++i) idx.push_back(i);
    corpus::Batch batch = corpus::make_batch(ds, idx);
    Tensor eps = Tensor::zeros({batch.size, cfg.d_latent});
    NoGradGuard ng;
    auto res = contrast::total_loss(model, snapshot, batch, eps, cc, fallback_rng);
    const double w = static_cast<double>(batch.size) / n;
    agg.recon += w * res.report.recon;
    agg.kl_reg += w * res.report.kl_reg;
    agg.l_ins += w * res.report.l_ins;
    agg.l_keyword += w * res.report.l_keyword;
    agg.l_ma += w * res.report.l_ma;
    agg.total += w * res.report.total;
    agg.keyword_fallbacks += res.report.keyword_fallbacks;
    agg.cosine_guard_hits += res.report.cosine_guard_hits;
  }
  return agg;
}

}  // namespace

TrainResult cmd_train(const RunConfig& cfg) {
  LoadedCorpora data = load_corpora(cfg);
  Model model(make_model_config(cfg, data.train.vocab.size()), cfg.seed);
  Adam adam(model.params().tensors(), cfg.learning_rate);

  fs::create_directories(cfg.checkpoint_dir);
  const std::string log_path =
      cfg.log_path.empty() ? cfg.checkpoint_dir + "/train_log.jsonl" : cfg.log_path;
  std::ofstream log(log_path);
  if (!log) throw ConfigError("cannot write training log: " + log_path);

  const int n = static_cast<int>(data.train.examples.size());
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  int total_steps = cfg.epochs * steps_per_epoch;
  if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);
  const double warmup_steps = std::max(1.0, cfg.beta_kl_warmup_frac * total_steps);

  Rng base(cfg.seed);
  Rng shuffle_rng = base.fork(1);
  Rng eps_rng = base.fork(2);
  Rng impostor_rng = base.fork(3);

  TrainResult result;
  result.log_path = log_path;
  result.checkpoint_path = cfg.checkpoint_dir + "/checkpoint.json";
  result.best_valid_total = std::numeric_limits<double>::infinity();

  int step = 0;
  bool saved = false;
  for (int epoch = 0; epoch < cfg.epochs && step < total_steps; ++epoch) {
    GraphSnapshot snapshot = build_graph_snapshot(model, data.train, /*on_tape=*/false);
    const std::vector<int> order = shuffle_rng.permutation(n);

    for (int start = 0; start < n && step < total_steps; start += cfg.batch_size) {
      std::vector<int> idx(order.begin() + start,
                           order.begin() + std::min(start + cfg.batch_size, n));
      corpus::Batch batch = corpus::make_batch(data.train, idx);
      const double beta_kl = cfg.beta_kl_max * std::min(1.0, step / warmup_steps);
      Tensor eps = Tensor::randn({batch.size, cfg.d_latent}, eps_rng, 1.0);

      auto res = contrast::total_loss(model, snapshot, batch, eps,
                                      make_contrast_config(cfg, beta_kl), impostor_rng);
      require_finite_report(res.report, step);

      model.params().zero_grad();
      backward(res.loss);
      adam.step();

      json line = report_json(res.report);
      line["step"] = step;
      line["epoch"] = epoch;
      line["beta_kl"] = beta_kl;
      log << line.dump() << "\n";

      if (step == 0) result.first_total = res.report.total;
      result.last_total = res.report.total;
      ++step;
    }

    if (data.has_valid) {
      GraphSnapshot fresh = build_graph_snapshot(model, data.train, /*on_tape=*/false);
      auto v = evaluate_split(model, fresh, data.valid, cfg, 1000 + static_cast<uint64_t>(epoch));
      json line{{"epoch", epoch}, {"valid_recon", v.recon}, {"valid_total", v.total}};
      log << line.dump() << "\n";
      if (v.total < result.best_valid_total) {
        result.best_valid_total = v.total;
        model.save_checkpoint(result.checkpoint_path, data.train.vocab);
        saved = true;
      }
    }
  }
  if (!saved) model.save_checkpoint(result.checkpoint_path, data.train.vocab);
  result.steps = step;
  return result;
}

EvalResult cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& split, const std::string& report_path, bool self_test) {
  LoadedCheckpoint header = read_checkpoint_header(checkpoint_path);
  Model model(header.config, cfg.seed);
  load_checkpoint_params(model, checkpoint_path);

  const std::string* split_path = nullptr;
  if (split == "train")
    split_path = &cfg.train_path;
  else if (split == "valid")
    split_path = &cfg.valid_path;
  else if (split == "test")
    split_path = &cfg.test_path;
  else
    throw ConfigError("unknown split \"" + split + "\" (want train/valid/test)");
  if (split_path->empty()) throw ConfigError("no corpus path configured for split " + split);

  textrank::StopwordSet stop = cfg.stopwords_path.empty()
                                   ? textrank::builtin_stopwords()
                                   : textrank::load_stopwords(cfg.stopwords_path);
  const auto opts = make_load_options(cfg, &stop);
  corpus::Dataset eval_ds = corpus::load_jsonl(*split_path, opts, header.vocab);
  if (cfg.train_path.empty()) throw ConfigError("train_path is required to build the keyword graph");
  corpus::Dataset train_ds = corpus::load_jsonl(cfg.train_path, opts, header.vocab);

  GraphSnapshot snapshot = build_graph_snapshot(model, train_ds, /*on_tape=*/false);
  NoGradGuard ng;
  kwgraph::IterationResult polished =
      kwgraph::run_iterations(snapshot.structure, snapshot.h0,
                              kwgraph::init_edges(snapshot.structure, snapshot.h0, model.graph),
                              model.graph, header.config.graph_iters);

  metrics::MetricReport rep;
  double sums[7] = {0, 0, 0, 0, 0, 0, 0};
  int embed_pairs = 0;
  for (const auto& ex : eval_ds.examples) {
    const std::vector<int> ref_ids = corpus::strip_padding(ex.pos_tokens);
    std::vector<int> hyp_ids;
    if (self_test) {
      hyp_ids = ref_ids;
    } else {
      Tensor u_in;
      auto it = snapshot.structure.node_of_keyword.find(ex.k_x);
      if (it != snapshot.structure.node_of_keyword.end())
        u_in = slice_rows(polished.h, it->second, 1);
      else
        u_in = gather_rows(model.embed.table, {ex.k_x});
      EncoderState enc_x = model.encoder.encode(model.embed, {ex.input_tokens});
      DiagGaussian prior = model.prior(enc_x.pooled, u_in);
      hyp_ids = model.decoder.greedy(model.embed, prior.mu, u_in, cfg.max_decode_len,
                                     cfg.min_decode_len);
    }

    const auto hyp = corpus::decode_tokens(eval_ds.vocab, hyp_ids);
    const auto ref = corpus::decode_tokens(eval_ds.vocab, ref_ids);
    for (int order = 1; order <= 4; ++order)
      sums[order - 1] += metrics::bleu_n(hyp, ref, order);

    auto ex_m = metrics::embedding_extrema(hyp_ids, ref_ids, model.embed.table);
    auto av_m = metrics::embedding_average(hyp_ids, ref_ids, model.embed.table);
    auto gr_m = metrics::embedding_greedy(hyp_ids, ref_ids, model.embed.table);
    if (ex_m && av_m && gr_m) {
      sums[4] += *ex_m;
      sums[5] += *av_m;
      sums[6] += *gr_m;
      ++embed_pairs;
    } else {
      ++rep.embedding_skipped;
    }
    ++rep.pairs;
  }

  rep.bleu1 = sums[0] / rep.pairs;
  rep.bleu2 = sums[1] / rep.pairs;
  rep.bleu3 = sums[2] / rep.pairs;
  rep.bleu4 = sums[3] / rep.pairs;
  if (embed_pairs > 0) {
    rep.extrema = sums[4] / embed_pairs;
    rep.average = sums[5] / embed_pairs;
    rep.greedy = sums[6] / embed_pairs;
  }

  EvalResult out;
  out.report = rep;
  out.report_path = report_path;
  if (!report_path.empty()) {
    json obj{{"bleu1", rep.bleu1},
             {"bleu2", rep.bleu2},
             {"bleu3", rep.bleu3},
             {"bleu4", rep.bleu4},
             {"extrema", rep.extrema},
             {"average", rep.average},
             {"greedy", rep.greedy},
             {"pairs", rep.pairs},
             {"embedding_skipped", rep.embedding_skipped},
             {"split", split},
             {"self_test", self_test}};
    std::ofstream f(report_path);
    if (!f) throw ConfigError("cannot write report: " + report_path);
    f << obj.dump(2) << "\n";
  }
  return out;
}

void cmd_extract_keywords(const std::string& input_path, const std::string& output_path,
                          const std::string& stopwords_path) {
  std::ifstream in(input_path);
  if (!in) throw DataError("cannot open input: " + input_path);
  std::ofstream out(output_path);
  if (!out) throw DataError("cannot write output: " + output_path);
  const textrank::StopwordSet stop = stopwords_path.empty()
                                         ? textrank::builtin_stopwords()
                                         : textrank::load_stopwords(stopwords_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj{{"text", line}, {"keyword", textrank::extract_keyword(line, stop)}};
    out << obj.dump() << "\n";
  }
}

void cmd_dump_embeddings(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& csv_path, const std::string& graph_json_path) {
  LoadedCheckpoint header = read_checkpoint_header(checkpoint_path);
  Model model(header.config, cfg.seed);
  load_checkpoint_params(model, checkpoint_path);

  if (cfg.train_path.empty()) throw ConfigError("train_path is required to build the keyword graph");
  textrank::StopwordSet stop = cfg.stopwords_path.empty()
                                   ? textrank::builtin_stopwords()
                                   : textrank::load_stopwords(cfg.stopwords_path);
  corpus::Dataset train_ds =
      corpus::load_jsonl(cfg.train_path, make_load_options(cfg, &stop), header.vocab);

  NoGradGuard ng;
  GraphSnapshot snapshot = build_graph_snapshot(model, train_ds, /*on_tape=*/false);
  kwgraph::IterationResult polished =
      kwgraph::run_iterations(snapshot.structure, snapshot.h0,
                              kwgraph::init_edges(snapshot.structure, snapshot.h0, model.graph),
                              model.graph, header.config.graph_iters);

  std::ofstream csv(csv_path);
  if (!csv) throw ConfigError("cannot write csv: " + csv_path);
  char buf[64];
  const int d = polished.h.cols();
  for (int i = 0; i < snapshot.structure.node_count(); ++i) {
    csv << header.vocab.token(snapshot.structure.node_ids[static_cast<size_t>(i)]);
    for (int j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", polished.h.at(i, j));
      csv << "," << buf;
    }
    csv << "\n";
  }

  if (!graph_json_path.empty()) {
    json nodes = json::array();
    for (int i = 0; i < snapshot.structure.node_count(); ++i) {
      std::vector<double> vec(static_cast<size_t>(d));
      for (int j = 0; j < d; ++j) vec[static_cast<size_t>(j)] = polished.h.at(i, j);
      nodes.push_back(json{
          {"keyword", header.vocab.token(snapshot.structure.node_ids[static_cast<size_t>(i)])},
          {"vector", vec}});
    }
    json edges = json::array();
    for (const auto& e : snapshot.structure.edges)
      edges.push_back(json{{"i", e.i},
                           {"j", e.j},
                           {"sign", e.sign == kwgraph::EdgeSign::negative ? "-" : "+"}});
    std::ofstream gj(graph_json_path);
    if (!gj) throw ConfigError("cannot write graph json: " + graph_json_path);
    gj << json{{"nodes", nodes}, {"edges", edges}}.dump() << "\n";
  }
}

}  // namespace hcvae
