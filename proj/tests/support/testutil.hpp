#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "sgcl/encoder.hpp"
#include "sgcl/selfguide.hpp"
#include "sgcl/tensor.hpp"
#include "sgcl/text.hpp"

namespace testutil {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sgcl_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  out << contents;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline sgcl::Tensor random_tensor(sgcl::Shape shape, std::mt19937_64& rng,
                                  double scale = 1.0, bool requires_grad = false) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> values(static_cast<std::size_t>(n));
  for (auto& v : values) v = dist(rng);
  return sgcl::Tensor::from_values(std::move(shape), std::move(values),
                                   requires_grad);
}

inline sgcl::Tensor unit_axis(int dim, int axis) {
  std::vector<double> values(static_cast<std::size_t>(dim), 0.0);
  values[static_cast<std::size_t>(axis)] = 1.0;
  return sgcl::Tensor::from_values({dim}, std::move(values));
}

inline sgcl::ProjectionHead identity_head() {
  sgcl::HeadConfig config;
  config.identity = true;
  return sgcl::init_projection_head(0, config);
}

/// Tiny two-sentence world: vocabulary, tokenized batch and a dual encoder.
struct ToyWorld {
  sgcl::Vocab vocab;
  std::vector<sgcl::TokenizedSentence> batch;
  sgcl::DualEncoder dual;
  sgcl::EncoderConfig config;
};

inline ToyWorld make_toy_world(int num_layers = 2, int hidden = 16,
                               std::uint64_t seed = 11,
                               bool identity_head_flag = false,
                               int batch_sentences = 2) {
  static const std::vector<std::string> base_sentences = {
      "a quick brown fox jumps over the lazy dog",
      "numbers rise while the tide slowly turns away",
      "green boats drift under the old stone bridge",
      "cold wind moves across the silent empty field"};
  ToyWorld world;
  std::vector<std::string> sentences(
      base_sentences.begin(),
      base_sentences.begin() + std::min<std::size_t>(base_sentences.size(),
                                                     static_cast<std::size_t>(
                                                         batch_sentences)));
  world.vocab = sgcl::build_vocab(sentences, 1);
  world.config.num_layers = num_layers;
  world.config.hidden_size = hidden;
  world.config.num_heads = 2;
  world.config.ffn_size = hidden * 2;
  world.config.max_seq_len = 16;
  world.config.dropout_rate = 0.0;
  world.config.vocab_size = world.vocab.size();
  world.config.seed = seed;

  for (const auto& s : sentences)
    world.batch.push_back(sgcl::tokenize(s, world.vocab, world.config.max_seq_len));
  sgcl::pad_batch(world.batch);

  sgcl::HeadConfig head;
  head.identity = identity_head_flag;
  head.seed = seed + 101;
  world.dual = sgcl::clone_dual(sgcl::init_params(world.config), head);
  return world;
}

}  // namespace testutil
