#pragma once

#include <span>
#include <string>
#include <vector>

#include "sgcl/encoder.hpp"
#include "sgcl/selfguide.hpp"
#include "sgcl/text.hpp"

namespace sgcl {

/// How to turn a sentence into a vector: the tuned [CLS] embedding, or a
/// pooled hidden matrix from a chosen layer.
struct EmbeddingStrategy {
  enum class Source { TunedCls, LayerPool };
  Source source = Source::TunedCls;
  int layer = 0;
  PoolingMethod pooling = PoolingMethod::Cls;

  static EmbeddingStrategy tuned_cls();
  static EmbeddingStrategy layer_pool(int layer, PoolingMethod pooling);
  static EmbeddingStrategy parse(const std::string& name);
  std::string name() const;
};

struct EvalResult {
  double spearman_x100 = 0.0;
  double pearson_x100 = 0.0;
  std::int64_t n_pairs = 0;
  EmbeddingStrategy strategy;

  /// TSV row: strategy, spearman_x100, pearson_x100, n (metrics at 2
  /// decimals).
  std::string tsv_row() const;
};

/// Embeds one sentence (dropout off, no projection head anywhere on this
/// path).
std::vector<double> sentence_embedding(const EncoderParams& params,
                                       const Vocab& vocab,
                                       const std::string& sentence,
                                       const EmbeddingStrategy& strategy);

double similarity_score(const EncoderParams& params, const Vocab& vocab,
                        const std::string& a, const std::string& b,
                        const EmbeddingStrategy& strategy);

/// Spearman rank correlation with average fractional ranks for ties.
double spearman(std::span<const double> pred, std::span<const double> gold);

/// Product-moment correlation.
double pearson(std::span<const double> pred, std::span<const double> gold);

EvalResult evaluate_sts(const EncoderParams& params, const Vocab& vocab,
                        std::span<const SimilarityRecord> records,
                        const EmbeddingStrategy& strategy);

/// Writes one line per sentence: the text, a tab, then the embedding as
/// space-separated round-trip-exact reals.
void export_embeddings(const EncoderParams& params, const Vocab& vocab,
                       std::span<const std::string> sentences,
                       const EmbeddingStrategy& strategy,
                       const std::string& path);

}  // namespace sgcl
