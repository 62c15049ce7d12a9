#include "sgcl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "sgcl/losses.hpp"

namespace sgcl {

EmbeddingStrategy EmbeddingStrategy::tuned_cls() { return {}; }

EmbeddingStrategy EmbeddingStrategy::layer_pool(int layer, PoolingMethod pooling) {
  EmbeddingStrategy s;
  s.source = Source::LayerPool;
  s.layer = layer;
  s.pooling = pooling;
  return s;
}

EmbeddingStrategy EmbeddingStrategy::parse(const std::string& name) {
  if (name == "tuned_cls") return tuned_cls();
  // layer<k>_<pooling>, e.g. "layer2_max"
  if (name.rfind("layer", 0) == 0) {
    auto underscore = name.find('_');
    if (underscore != std::string::npos && underscore > 5) {
      const std::string digits = name.substr(5, underscore - 5);
      if (!digits.empty() &&
          std::all_of(digits.begin(), digits.end(),
                      [](unsigned char c) { return std::isdigit(c); }))
        return layer_pool(std::stoi(digits),
                          pooling_from_string(name.substr(underscore + 1)));
    }
  }
  throw std::invalid_argument("unknown embedding strategy: " + name);
}

std::string EmbeddingStrategy::name() const {
  if (source == Source::TunedCls) return "tuned_cls";
  return "layer" + std::to_string(layer) + "_" + to_string(pooling);
}

std::string EvalResult::tsv_row() const {
  char buffer[160];
  std::snprintf(buffer, sizeof(buffer), "%s\t%.2f\t%.2f\t%lld",
                strategy.name().c_str(), spearman_x100, pearson_x100,
                static_cast<long long>(n_pairs));
  return buffer;
}

std::vector<double> sentence_embedding(const EncoderParams& params,
                                       const Vocab& vocab,
                                       const std::string& sentence,
                                       const EmbeddingStrategy& strategy) {
  if (strategy.source == EmbeddingStrategy::Source::LayerPool &&
      (strategy.layer < 0 || strategy.layer > params.config.num_layers))
    throw std::invalid_argument("strategy layer out of range");

  NoGradGuard no_grad;
  TokenizedSentence tokens = tokenize(sentence, vocab, params.config.max_seq_len);
  auto states = encode(params, std::span(&tokens, 1), /*training_mode=*/false);
  const EncoderState& state = states[0];

  Tensor vec;
  if (strategy.source == EmbeddingStrategy::Source::TunedCls) {
    vec = cls_vector(state);
  } else {
    vec = pool(state.layers[static_cast<std::size_t>(strategy.layer)],
               tokens.attention_mask, strategy.pooling);
  }
  return vec.values();
}

double similarity_score(const EncoderParams& params, const Vocab& vocab,
                        const std::string& a, const std::string& b,
                        const EmbeddingStrategy& strategy) {
  auto ea = sentence_embedding(params, vocab, a, strategy);
  auto eb = sentence_embedding(params, vocab, b, strategy);
  return cosine(ea, eb);
}

namespace {

void check_metric_inputs(std::span<const double> pred,
                         std::span<const double> gold) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("correlation: length mismatch");
  if (pred.size() < 2)
    throw std::invalid_argument("correlation: need at least two points");
  auto constant = [](std::span<const double> xs) {
    for (double x : xs)
      if (x != xs[0]) return false;
    return true;
  };
  if (constant(pred) || constant(gold))
    throw std::invalid_argument("correlation undefined for constant input");
}

/// Average fractional ranks, 1-based; tied values share the mean of their
/// rank positions.
std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

double pearson_unchecked(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double spearman(std::span<const double> pred, std::span<const double> gold) {
  check_metric_inputs(pred, gold);
  auto rp = average_ranks(pred);
  auto rg = average_ranks(gold);
  return pearson_unchecked(rp, rg);
}

double pearson(std::span<const double> pred, std::span<const double> gold) {
  check_metric_inputs(pred, gold);
  return pearson_unchecked(pred, gold);
}

EvalResult evaluate_sts(const EncoderParams& params, const Vocab& vocab,
                        std::span<const SimilarityRecord> records,
                        const EmbeddingStrategy& strategy) {
  if (records.size() < 2)
    throw std::invalid_argument("evaluate_sts: need at least two records");

  // Sentences repeat across pairs; embed each distinct one once.
  std::unordered_map<std::string, std::vector<double>> cache;
  auto embed_cached = [&](const std::string& s) -> const std::vector<double>& {
    auto it = cache.find(s);
    if (it == cache.end())
      it = cache.emplace(s, sentence_embedding(params, vocab, s, strategy)).first;
    return it->second;
  };

  std::vector<double> pred, gold;
  pred.reserve(records.size());
  gold.reserve(records.size());
  for (const auto& r : records) {
    pred.push_back(cosine(embed_cached(r.sentence_a), embed_cached(r.sentence_b)));
    gold.push_back(r.gold);
  }

  EvalResult result;
  result.strategy = strategy;
  result.n_pairs = static_cast<std::int64_t>(records.size());
  result.spearman_x100 = spearman(pred, gold) * 100.0;
  result.pearson_x100 = pearson(pred, gold) * 100.0;
  return result;
}

void export_embeddings(const EncoderParams& params, const Vocab& vocab,
                       std::span<const std::string> sentences,
                       const EmbeddingStrategy& strategy,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  char buffer[40];
  for (const auto& sentence : sentences) {
    auto values = sentence_embedding(params, vocab, sentence, strategy);
    out << sentence << '\t';
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buffer, sizeof(buffer), "%.17g", values[i]);
      if (i) out << ' ';
      out << buffer;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace sgcl
