// Command line front end: train / eval / ablate / gradcheck / embed.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "sgcl/checkpoint.hpp"
#include "sgcl/eval.hpp"
#include "sgcl/gradcheck.hpp"
#include "sgcl/losses.hpp"
#include "sgcl/runconfig.hpp"
#include "sgcl/selfguide.hpp"
#include "sgcl/trainer.hpp"

namespace fs = std::filesystem;
using namespace sgcl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonArgs {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> override_options;
};

std::string flag_spec(const std::string& key) {
  // Short aliases for the three most-typed knobs.
  if (key == "learning_rate") return "--learning_rate,--lr";
  if (key == "reg_weight") return "--reg_weight,--lambda";
  if (key == "temperature") return "--temperature,--tau";
  return "--" + key;
}

void add_config_flags(CLI::App* cmd, CommonArgs& args,
                      const std::vector<std::string>& skip = {}) {
  cmd->add_option("--config", args.config_file,
                  "structured text config file (key = value under [sections])");
  for (const auto& entry : RunConfig::registry()) {
    if (std::find(skip.begin(), skip.end(), entry.key) != skip.end()) continue;
    auto* opt = cmd->add_option(
        flag_spec(entry.key), args.overrides[entry.key],
        entry.description + " [default: " + entry.default_value + "]");
    args.override_options[entry.key] = opt;
  }
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig config;
  if (!args.config_file.empty()) config.load_file(args.config_file);
  for (const auto& [key, opt] : args.override_options)
    if (opt->count() > 0) config.set(key, args.overrides.at(key));
  return config;
}

void require_readable(const std::string& path, const std::string& flag) {
  if (path.empty()) throw ConfigError("missing required path: " + flag);
  if (!fs::exists(path))
    throw ConfigError("path given by " + flag + " does not exist: " + path);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

void emit_report(const std::vector<std::string>& rows, const fs::path& copy_path) {
  fs::create_directories(copy_path.parent_path());
  auto copy = open_out(copy_path);
  for (const auto& row : rows) {
    std::cout << row << '\n';
    copy << row << '\n';
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct PreparedData {
  std::vector<std::string> sentences;
  std::vector<SimilarityRecord> valid;
  std::vector<SimilarityRecord> test;
  Vocab vocab;
};

PreparedData prepare_data(RunConfig& config, bool need_test) {
  require_readable(config.train_corpus, "--train_corpus");
  require_readable(config.valid_tsv, "--valid_tsv");

  PreparedData data;
  data.sentences = load_raw_sentences(config.train_corpus);
  if (data.sentences.empty())
    throw ConfigError("training corpus is empty: " + config.train_corpus);
  auto valid_loaded = load_similarity_tsv(config.valid_tsv);
  if (valid_loaded.skipped > 0)
    std::cerr << "note: skipped " << valid_loaded.skipped
              << " unparsable validation rows\n";
  data.valid = std::move(valid_loaded.records);
  if (need_test || !config.test_tsv.empty()) {
    const std::string& test_path =
        config.test_tsv.empty() ? config.valid_tsv : config.test_tsv;
    require_readable(test_path, "--test_tsv");
    data.test = load_similarity_tsv(test_path).records;
  }
  data.vocab = build_vocab(data.sentences, config.min_count);
  config.encoder.vocab_size = data.vocab.size();
  config.encoder.seed = config.train.seed;
  return data;
}

// ---- train ---------------------------------------------------------------

int cmd_train(const CommonArgs& args) {
  RunConfig config = resolve_config(args);
  PreparedData data = prepare_data(config, /*need_test=*/false);

  std::cerr << "corpus: " << data.sentences.size() << " sentences, vocab "
            << data.vocab.size() << ", validation pairs " << data.valid.size()
            << "\n";

  EncoderParams initial = init_params(config.encoder);
  DualEncoder dual = clone_dual(initial, config.head_config());
  TrainOutcome outcome =
      train(data.sentences, data.valid, dual, data.vocab, config.train);

  fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir);

  const fs::path ckpt_path = out_dir / "model.sgck";
  save_checkpoint(ckpt_path.string(),
                  make_checkpoint(outcome.best_tuned, data.vocab, config.train,
                                  outcome.best_metric));

  auto log_file = open_out(out_dir / "train_log.tsv");
  for (const auto& line : outcome.log.to_lines()) log_file << line << '\n';

  EvalResult final_eval = evaluate_sts(outcome.best_tuned, data.vocab,
                                       data.valid, EmbeddingStrategy::tuned_cls());
  emit_report({final_eval.tsv_row()}, out_dir / "eval.tsv");

  std::cerr << "checkpoint: " << ckpt_path.string() << " (best validation "
            << outcome.best_metric << " at step " << outcome.log.best_step
            << ")\n";
  return kExitOk;
}

// ---- eval ----------------------------------------------------------------

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path,
             const std::string& tsv_path, const std::string& strategy_name,
             bool sweep) {
  RunConfig config = resolve_config(args);
  require_readable(checkpoint_path, "--checkpoint");
  require_readable(tsv_path, "--tsv");

  Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  EncoderParams params = params_from_checkpoint(checkpoint);
  auto records = load_similarity_tsv(tsv_path).records;

  std::vector<EmbeddingStrategy> strategies;
  if (sweep) {
    strategies.push_back(EmbeddingStrategy::tuned_cls());
    for (int k = 0; k <= params.config.num_layers; ++k)
      for (auto method : {PoolingMethod::Max, PoolingMethod::Mean, PoolingMethod::Cls})
        strategies.push_back(EmbeddingStrategy::layer_pool(k, method));
  } else {
    try {
      strategies.push_back(EmbeddingStrategy::parse(strategy_name));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  std::vector<std::string> rows;
  rows.reserve(strategies.size());
  for (const auto& strategy : strategies) {
    try {
      rows.push_back(
          evaluate_sts(params, checkpoint.vocab, records, strategy).tsv_row());
    } catch (const std::invalid_argument& e) {
      if (!sweep) throw;
      // A degenerate cell (e.g. layer0_cls scores every pair identically)
      // keeps its row so the grid stays complete.
      rows.push_back(strategy.name() + "\tnan\tnan\t" +
                     std::to_string(records.size()));
    }
  }
  emit_report(rows, fs::path(config.out_dir) / "eval_report.tsv");
  return kExitOk;
}

// ---- ablate ----------------------------------------------------------------

struct AblationRow {
  std::string variant_label;
  std::string setting_label;
  TrainConfig train;
  bool identity_head = false;
};

int cmd_ablate(const CommonArgs& args, const std::string& variants_arg,
               const std::string& seeds_arg, bool include_no_head_row,
               const std::string& tau_list, const std::string& lambda_list) {
  RunConfig config = resolve_config(args);
  PreparedData data = prepare_data(config, /*need_test=*/true);

  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(seeds_arg)) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError("invalid seed: '" + s + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds must name at least one seed");

  std::vector<AblationRow> rows;
  for (const auto& name : split_list(variants_arg)) {
    AblationRow r;
    try {
      r.train = config.train;
      r.train.variant = variant_from_string(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    r.variant_label = name;
    r.setting_label = "defaults";
    r.identity_head = config.no_projection_head;
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ConfigError("--variants must name at least one variant");

  for (const auto& tau : split_list(tau_list)) {
    AblationRow r;
    r.train = config.train;
    r.train.temperature = std::stod(tau);
    r.variant_label = to_string(r.train.variant);
    r.setting_label = "tau=" + tau;
    rows.push_back(std::move(r));
  }
  for (const auto& lambda : split_list(lambda_list)) {
    AblationRow r;
    r.train = config.train;
    r.train.reg_weight = std::stod(lambda);
    r.variant_label = to_string(r.train.variant);
    r.setting_label = "lambda=" + lambda;
    rows.push_back(std::move(r));
  }
  if (include_no_head_row) {
    AblationRow r;
    r.train = config.train;
    r.variant_label = to_string(r.train.variant);
    r.setting_label = "- Projection head";
    r.identity_head = true;
    rows.push_back(std::move(r));
  }

  struct Cell {
    std::size_t row;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (auto seed : seeds) cells.push_back({r, seed});
  std::vector<double> metrics(cells.size(), 0.0);
  std::vector<std::string> failures(cells.size());

  auto run_cell = [&](std::size_t index) {
    const Cell& cell = cells[index];
    const AblationRow& row = rows[cell.row];
    try {
      TrainConfig train_config = row.train;
      train_config.seed = cell.seed;
      EncoderConfig encoder_config = config.encoder;
      encoder_config.seed = cell.seed;
      HeadConfig head = config.head_config();
      head.identity = row.identity_head;
      head.seed = cell.seed + 0x5e554ull;

      EncoderParams initial = init_params(encoder_config);
      DualEncoder dual = clone_dual(initial, head);
      TrainOutcome outcome =
          train(data.sentences, data.valid, dual, data.vocab, train_config);
      metrics[index] = evaluate_sts(outcome.best_tuned, data.vocab, data.test,
                                    EmbeddingStrategy::tuned_cls())
                           .spearman_x100;
    } catch (const std::exception& e) {
      failures[index] = e.what();
    }
  };

  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SG_NUM_WORKERS")) {
    try {
      workers = std::max<std::size_t>(1, std::stoul(env));
    } catch (const std::exception&) {
      throw ConfigError("SG_NUM_WORKERS is not a number");
    }
  }
  workers = std::min(workers, cells.size());

  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t index = next.fetch_add(1);
        if (index >= cells.size()) return;
        run_cell(index);
      }
    });
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!failures[i].empty())
      throw std::runtime_error("ablation cell failed (" +
                               rows[cells[i].row].variant_label + ", seed " +
                               std::to_string(cells[i].seed) +
                               "): " + failures[i]);

  std::vector<std::string> report;
  report.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double sum = 0.0, sum_sq = 0.0;
    double n = static_cast<double>(seeds.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].row != r) continue;
      sum += metrics[i];
      sum_sq += metrics[i] * metrics[i];
    }
    const double mean = sum / n;
    const double variance = std::max(0.0, sum_sq / n - mean * mean);
    char buffer[196];
    std::snprintf(buffer, sizeof(buffer), "%s\t%s\t%.17g\t%.17g\t%zu",
                  rows[r].variant_label.c_str(), rows[r].setting_label.c_str(),
                  mean, std::sqrt(variance), seeds.size());
    report.emplace_back(buffer);
  }
  emit_report(report, fs::path(config.out_dir) / "ablation.tsv");
  return kExitOk;
}

// ---- gradcheck -------------------------------------------------------------

int cmd_gradcheck(const CommonArgs& args, double fd_step, int fd_samples,
                  double tolerance, bool corrupt_gradient) {
  RunConfig config = resolve_config(args);

  // Self-contained toy problem: two sentences, l=2, d=16.
  const std::vector<std::string> sentences = {
      "a quick brown fox jumps over the lazy dog",
      "numbers rise while the tide slowly turns away"};
  Vocab vocab = build_vocab(sentences, 1);

  EncoderConfig encoder_config;
  encoder_config.num_layers = 2;
  encoder_config.hidden_size = 16;
  encoder_config.num_heads = 2;
  encoder_config.ffn_size = 32;
  encoder_config.max_seq_len = 16;
  encoder_config.dropout_rate = 0.0;  // the checked loss must be deterministic
  encoder_config.vocab_size = vocab.size();
  encoder_config.seed = config.train.seed;

  // Moderate temperature keeps the softmax away from saturation, where
  // both gradient routes vanish and the relative error turns into noise.
  const double temperature = 0.2;
  const double reg_weight = 0.1;

  std::vector<TokenizedSentence> batch;
  for (const auto& s : sentences)
    batch.push_back(tokenize(s, vocab, encoder_config.max_seq_len));
  pad_batch(batch);

  bool all_passed = true;
  std::vector<std::string> report_rows;

  for (LossVariant variant : {LossVariant::Base, LossVariant::Opt1,
                              LossVariant::Opt2, LossVariant::Opt3}) {
    EncoderParams initial = init_params(encoder_config);
    HeadConfig head_config = config.head_config();
    head_config.seed = encoder_config.seed + 0x5e554ull;
    DualEncoder dual = clone_dual(initial, head_config);

    // Nudge the tuned copy off the clone point so the regularizer and its
    // gradient are nonzero.
    std::mt19937_64 nudge_rng(encoder_config.seed + 17);
    for (auto& p : dual.tuned.params) {
      if (!p.tensor.requires_grad()) continue;
      std::vector<double> values(p.tensor.values());
      for (auto& v : values) v += truncated_normal(nudge_rng, 0.01);
      p.tensor.assign_values(values);
    }

    LayerSampler sampler = LayerSampler::all_layers(encoder_config.num_layers);
    std::mt19937_64 sampler_rng(encoder_config.seed + 29);
    std::vector<int> sampled_layers;
    for (std::size_t i = 0; i < batch.size(); ++i)
      sampled_layers.push_back(sampler.sample(sampler_rng));

    auto loss_fn = [&, variant]() {
      auto views = compute_views(dual, batch, PoolingMethod::Max, sampler);
      auto states = encode(dual.tuned, batch, /*training_mode=*/false);
      std::vector<Tensor> c;
      for (const auto& state : states) c.push_back(cls_vector(state));

      Tensor contrastive;
      if (variant == LossVariant::Opt3) {
        contrastive = contrastive_opt3(c, views, dual.head, temperature);
      } else {
        std::vector<Tensor> sampled;
        for (std::size_t i = 0; i < views.size(); ++i)
          sampled.push_back(views[i][static_cast<std::size_t>(sampled_layers[i])]);
        switch (variant) {
          case LossVariant::Base:
            contrastive = contrastive_base(c, sampled, dual.head, temperature);
            break;
          case LossVariant::Opt1:
            contrastive = contrastive_opt1(c, sampled, dual.head, temperature);
            break;
          default:
            contrastive = contrastive_opt2(c, sampled, dual.head, temperature);
            break;
        }
      }
      Tensor total =
          add(contrastive, scale(reg_term(dual.fixed, dual.tuned), reg_weight));
      if (corrupt_gradient) {
        // Test hook: a term built from parameter values outside the graph;
        // finite differences see it, the analytic gradient cannot.
        double leak = 0.0;
        for (const auto& p : dual.tuned.params)
          if (p.tensor.requires_grad())
            for (double v : p.tensor.values()) leak += v;
        total = add(total, Tensor::scalar(0.05 * leak));
      }
      return total;
    };

    auto trainable = dual.trainable_params();
    GradCheckReport report = finite_difference_check(
        loss_fn, trainable, fd_step, tolerance, fd_samples,
        /*sample_seed=*/encoder_config.seed);

    std::int64_t coords = 0;
    for (const auto& e : report.entries) coords += e.coordinates_checked;
    char buffer[160];
    std::snprintf(buffer, sizeof(buffer), "%s\t%.3e\t%lld\t%s",
                  to_string(variant).c_str(), report.worst(),
                  static_cast<long long>(coords),
                  report.passed() ? "pass" : "FAIL");
    report_rows.emplace_back(buffer);
    all_passed = all_passed && report.passed();
  }

  emit_report(report_rows, fs::path(config.out_dir) / "gradcheck.tsv");
  return all_passed ? kExitOk : kExitRuntime;
}

// ---- embed -----------------------------------------------------------------

int cmd_embed(const std::string& checkpoint_path, const std::string& sentences_path,
              const std::string& out_path) {
  require_readable(checkpoint_path, "--checkpoint");
  require_readable(sentences_path, "--sentences");
  if (out_path.empty()) throw ConfigError("missing required path: --out");

  Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  EncoderParams params = params_from_checkpoint(checkpoint);
  auto sentences = load_raw_sentences(sentences_path);
  export_embeddings(params, checkpoint.vocab, sentences,
                    EmbeddingStrategy::tuned_cls(), out_path);
  std::cerr << "wrote " << sentences.size() << " embeddings to " << out_path
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-guided contrastive sentence-encoder fine-tuning"};
  app.require_subcommand(1);

  CommonArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "fine-tune and save a checkpoint");
  add_config_flags(train_cmd, train_args);

  CommonArgs eval_args;
  std::string eval_checkpoint, eval_tsv, eval_strategy = "tuned_cls";
  bool eval_sweep = false;
  auto* eval_cmd =
      app.add_subcommand("eval", "score sentence pairs against gold similarity");
  add_config_flags(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "trained checkpoint file");
  eval_cmd->add_option("--tsv", eval_tsv, "similarity pair TSV");
  eval_cmd->add_option("--strategy", eval_strategy,
                       "tuned_cls or layer<k>_<max|mean|cls> [default: tuned_cls]");
  eval_cmd->add_flag("--sweep", eval_sweep,
                     "report every layer/pooling combination plus tuned_cls");

  CommonArgs ablate_args;
  std::string ablate_variants = "base,opt1,opt2,opt3";
  std::string ablate_seeds = "1,2,3,4,1234,2345,3456,7890";
  std::string ablate_tau, ablate_lambda;
  bool ablate_no_head = false;
  auto* ablate_cmd = app.add_subcommand(
      "ablate", "train/evaluate the loss-variant and hyperparameter grid");
  add_config_flags(ablate_cmd, ablate_args, {"no_projection_head"});
  ablate_cmd->add_option("--variants", ablate_variants,
                         "comma list of loss variants [default: base,opt1,opt2,opt3]");
  ablate_cmd->add_option("--seeds", ablate_seeds,
                         "comma list of seeds [default: 1,2,3,4,1234,2345,3456,7890]");
  ablate_cmd->add_option("--ablate-tau", ablate_tau,
                         "extra rows with these temperature overrides");
  ablate_cmd->add_option("--ablate-lambda", ablate_lambda,
                         "extra rows with these regularizer-weight overrides");
  ablate_cmd->add_flag("--no-projection-head", ablate_no_head,
                       "add the identity-head ablation row");

  CommonArgs gradcheck_args;
  double fd_step = 1e-5, fd_tolerance = 1e-3;
  int fd_samples = 6;
  bool corrupt_gradient = false;
  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "compare analytic and finite-difference gradients for all "
                   "loss variants on a toy model");
  add_config_flags(gradcheck_cmd, gradcheck_args);
  gradcheck_cmd->add_option("--fd-step", fd_step,
                            "central difference step [default: 1e-5]");
  gradcheck_cmd->add_option("--fd-samples", fd_samples,
                            "coordinates probed per parameter [default: 6]");
  gradcheck_cmd->add_option("--fd-tolerance", fd_tolerance,
                            "max relative error [default: 1e-3]");
  gradcheck_cmd
      ->add_flag("--corrupt-gradient", corrupt_gradient,
                 "test hook: inject a gradient defect and expect failure")
      ->group("");

  std::string embed_checkpoint, embed_sentences, embed_out;
  auto* embed_cmd =
      app.add_subcommand("embed", "export tuned [CLS] embeddings for a sentence file");
  embed_cmd->add_option("--checkpoint", embed_checkpoint, "trained checkpoint file");
  embed_cmd->add_option("--sentences", embed_sentences, "one sentence per line");
  embed_cmd->add_option("--out", embed_out, "output embedding file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd)
      return cmd_eval(eval_args, eval_checkpoint, eval_tsv, eval_strategy,
                      eval_sweep);
    if (*ablate_cmd)
      return cmd_ablate(ablate_args, ablate_variants, ablate_seeds,
                        ablate_no_head, ablate_tau, ablate_lambda);
    if (*gradcheck_cmd)
      return cmd_gradcheck(gradcheck_args, fd_step, fd_samples, fd_tolerance,
                           corrupt_gradient);
    if (*embed_cmd) return cmd_embed(embed_checkpoint, embed_sentences, embed_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
