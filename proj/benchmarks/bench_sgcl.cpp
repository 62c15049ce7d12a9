#include <benchmark/benchmark.h>

#include <random>

#include "sgcl/encoder.hpp"
#include "sgcl/eval.hpp"
#include "sgcl/losses.hpp"
#include "sgcl/optimizer.hpp"
#include "sgcl/selfguide.hpp"
#include "sgcl/text.hpp"

using namespace sgcl;

namespace {

struct BenchWorld {
  Vocab vocab;
  EncoderConfig config;
  DualEncoder dual;
  std::vector<TokenizedSentence> batch;
  LayerSampler sampler;

  BenchWorld() {
    std::vector<std::string> corpus;
    for (int i = 0; i < 64; ++i) {
      std::string s;
      for (int w = 0; w < 10; ++w)
        s += "tok" + std::to_string((i * 13 + w * 7) % 97) + " ";
      corpus.push_back(s);
    }
    vocab = build_vocab(corpus, 1);
    config.num_layers = 4;
    config.hidden_size = 64;
    config.num_heads = 4;
    config.ffn_size = 128;
    config.max_seq_len = 64;
    config.dropout_rate = 0.1;
    config.vocab_size = vocab.size();
    config.seed = 1;
    HeadConfig head;
    head.seed = 2;
    dual = clone_dual(init_params(config), head);
    for (int i = 0; i < 16; ++i)
      batch.push_back(tokenize(corpus[static_cast<std::size_t>(i)], vocab,
                               config.max_seq_len));
    pad_batch(batch);
    sampler = LayerSampler::all_layers(config.num_layers);
  }
};

BenchWorld& world() {
  static BenchWorld w;
  return w;
}

}  // namespace

static void BM_EncodeForwardEval(benchmark::State& state) {
  auto& w = world();
  NoGradGuard guard;
  for (auto _ : state) {
    auto states = encode(w.dual.tuned, w.batch, false);
    benchmark::DoNotOptimize(states);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(w.batch.size()));
}
BENCHMARK(BM_EncodeForwardEval);

static void BM_ComputeViews(benchmark::State& state) {
  auto& w = world();
  for (auto _ : state) {
    auto views = compute_views(w.dual, w.batch, PoolingMethod::Max, w.sampler);
    benchmark::DoNotOptimize(views);
  }
}
BENCHMARK(BM_ComputeViews);

static void BM_TrainStepOpt3(benchmark::State& state) {
  auto& w = world();
  LossConfig loss_config{LossVariant::Opt3, 0.01, 0.1, PoolingMethod::Max,
                         w.sampler};
  AdamW optimizer(w.dual.trainable_params(), {});
  std::mt19937_64 dropout_rng(3);
  for (auto _ : state) {
    auto views = compute_views(w.dual, w.batch, PoolingMethod::Max, w.sampler);
    auto states = encode(w.dual.tuned, w.batch, true, &dropout_rng);
    std::vector<Tensor> c;
    for (const auto& s : states) c.push_back(cls_vector(s));
    auto result = loss_opt3(c, views, w.dual, loss_config);
    optimizer.zero_grad();
    backward(result.total);
    optimizer.step();
    optimizer.zero_grad();
    benchmark::DoNotOptimize(result.report.total);
  }
}
BENCHMARK(BM_TrainStepOpt3);

static void BM_SpearmanTenThousand(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> pred(10000), gold(10000);
  for (auto& v : pred) v = dist(rng);
  for (auto& v : gold) v = dist(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(spearman(pred, gold));
  }
}
BENCHMARK(BM_SpearmanTenThousand);

BENCHMARK_MAIN();
