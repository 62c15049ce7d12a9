#include "sgcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sgcl/eval.hpp"
#include "sgcl/optimizer.hpp"

namespace sgcl {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (eval_step < 1) throw std::invalid_argument("eval_step must be >= 1");
  if (endurance < 1) throw std::invalid_argument("endurance must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (reg_weight < 0.0) throw std::invalid_argument("reg_weight must be >= 0");
  if (learning_rate < 0.0) throw std::invalid_argument("learning_rate must be >= 0");
}

LayerSampler TrainConfig::sampler_for(int num_layers) const {
  if (sampler_layers.empty()) return LayerSampler::all_layers(num_layers);
  LayerSampler sampler;
  sampler.eligible_layers = sampler_layers;
  sampler.validate(num_layers);
  return sampler;
}

std::vector<std::string> TrainLog::to_lines() const {
  std::vector<std::string> lines;
  lines.reserve(steps.size() + evals.size());
  std::size_t next_eval = 0;
  for (const auto& s : steps) {
    std::ostringstream out;
    out << "step=" << s.step << '\t' << s.loss.to_kv();
    lines.push_back(out.str());
    while (next_eval < evals.size() && evals[next_eval].step == s.step) {
      std::ostringstream ev;
      ev.precision(17);
      ev << "eval\tstep=" << evals[next_eval].step
         << "\tspearman_x100=" << evals[next_eval].spearman_x100
         << "\timproved=" << (evals[next_eval].improved ? 1 : 0);
      lines.push_back(ev.str());
      ++next_eval;
    }
  }
  for (; next_eval < evals.size(); ++next_eval) {
    std::ostringstream ev;
    ev.precision(17);
    ev << "eval\tstep=" << evals[next_eval].step
       << "\tspearman_x100=" << evals[next_eval].spearman_x100
       << "\timproved=" << (evals[next_eval].improved ? 1 : 0);
    lines.push_back(ev.str());
  }
  return lines;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

TrainOutcome train(std::span<const std::string> sentences,
                   std::span<const SimilarityRecord> valid_records,
                   DualEncoder& dual, const Vocab& vocab,
                   const TrainConfig& config) {
  config.validate();
  if (sentences.empty()) throw std::invalid_argument("train: empty corpus");
  if (valid_records.empty())
    throw std::invalid_argument("train: empty validation set");

  const int num_layers = dual.config().num_layers;
  LayerSampler sampler = config.sampler_for(num_layers);
  LossConfig loss_config{config.variant, config.temperature, config.reg_weight,
                         config.pooling, sampler};

  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0));
  std::mt19937_64 sampler_rng(mix_seed(config.seed, 1));
  std::mt19937_64 dropout_rng(mix_seed(config.seed, 2));

  AdamW optimizer(dual.trainable_params(),
                  {config.learning_rate, config.beta1, config.beta2,
                   config.adam_eps, config.weight_decay});

  TrainLog log;
  double best_metric = -std::numeric_limits<double>::infinity();
  long best_step = -1;
  EncoderParams best_snapshot;
  int non_improving = 0;
  long step = 0;
  long last_eval_step = -1;
  bool stop = false;

  const EmbeddingStrategy valid_strategy = EmbeddingStrategy::tuned_cls();
  auto run_eval = [&]() {
    const double metric =
        evaluate_sts(dual.tuned, vocab, valid_records, valid_strategy)
            .spearman_x100;
    const bool improved = metric > best_metric;
    if (improved) {
      best_metric = metric;
      best_step = step;
      best_snapshot = dual.tuned.deep_copy();
      non_improving = 0;
    } else {
      ++non_improving;
    }
    log.evals.push_back({step, metric, improved});
    last_eval_step = step;
    return non_improving >= config.endurance;
  };

  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t b = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t begin = 0; begin + b <= order.size() && !stop; begin += b) {
      std::vector<TokenizedSentence> batch;
      batch.reserve(b);
      for (std::size_t i = begin; i < begin + b; ++i)
        batch.push_back(tokenize(sentences[order[i]], vocab,
                                 dual.config().max_seq_len));
      pad_batch(batch);

      auto views = compute_views(dual, batch, config.pooling, sampler);

      auto states = encode(dual.tuned, batch, /*training_mode=*/true, &dropout_rng);
      std::vector<Tensor> c;
      c.reserve(batch.size());
      for (const auto& state : states) c.push_back(cls_vector(state));

      LossResult result;
      if (config.variant == LossVariant::Opt3) {
        result = loss_opt3(c, views, dual, loss_config);
      } else {
        std::vector<Tensor> sampled;
        sampled.reserve(batch.size());
        for (const auto& per_sentence : views)
          sampled.push_back(sample_view(per_sentence, sampler, sampler_rng).second);
        switch (config.variant) {
          case LossVariant::Base:
            result = loss_base(c, sampled, dual, loss_config);
            break;
          case LossVariant::Opt1:
            result = loss_opt1(c, sampled, dual, loss_config);
            break;
          default:
            result = loss_opt2(c, sampled, dual, loss_config);
            break;
        }
      }

      if (!std::isfinite(result.report.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << (step + 1) << ": "
            << result.report.to_kv();
        throw std::runtime_error(msg.str());
      }

      optimizer.zero_grad();
      backward(result.total);
      optimizer.step();
      optimizer.zero_grad();

      ++step;
      log.steps.push_back({step, result.report});
      if (step % config.eval_step == 0) stop = run_eval();
    }
  }

  if (step == 0) throw std::invalid_argument(
      "train: corpus smaller than one batch, no steps performed");
  if (last_eval_step != step && !stop) run_eval();

  log.best_metric = best_metric;
  log.best_step = best_step;
  log.stopped_early = stop;

  TrainOutcome outcome;
  outcome.best_tuned = std::move(best_snapshot);
  outcome.best_metric = best_metric;
  outcome.log = std::move(log);
  return outcome;
}

}  // namespace sgcl
