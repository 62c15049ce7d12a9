#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgcl/losses.hpp"
#include "sgcl/selfguide.hpp"
#include "sgcl/text.hpp"

namespace sgcl {

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.9;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  int epochs = 1;
  int eval_step = 50;
  int endurance = 10;
  double temperature = 0.01;
  double reg_weight = 0.1;
  std::uint64_t seed = 1;
  LossVariant variant = LossVariant::Opt3;
  PoolingMethod pooling = PoolingMethod::Max;
  std::vector<int> sampler_layers;  // empty -> all of 0..l

  void validate() const;
  LayerSampler sampler_for(int num_layers) const;
};

struct TrainStepRecord {
  long step = 0;
  LossReport loss;
};

struct TrainEvalRecord {
  long step = 0;
  double spearman_x100 = 0.0;
  bool improved = false;
};

struct TrainLog {
  std::vector<TrainStepRecord> steps;
  std::vector<TrainEvalRecord> evals;
  double best_metric = 0.0;
  long best_step = 0;
  bool stopped_early = false;

  /// One structured text record per line.
  std::vector<std::string> to_lines() const;
};

struct TrainOutcome {
  EncoderParams best_tuned;  // deep-copied snapshot of the best evaluation
  double best_metric = 0.0;
  TrainLog log;
};

/// Runs the self-guided fine-tuning loop: shuffled mini-batches (last
/// partial batch dropped), validation Spearman x100 every eval_step steps
/// and once at the end, early stopping after `endurance` consecutive
/// non-improving evaluations. Returns the best snapshot, not the last.
TrainOutcome train(std::span<const std::string> sentences,
                   std::span<const SimilarityRecord> valid_records,
                   DualEncoder& dual, const Vocab& vocab,
                   const TrainConfig& config);

}  // namespace sgcl
