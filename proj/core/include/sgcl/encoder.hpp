#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgcl/tensor.hpp"
#include "sgcl/text.hpp"

namespace sgcl {

struct EncoderConfig {
  int num_layers = 4;   // l
  int hidden_size = 64;  // d, divisible by num_heads
  int num_heads = 4;
  int ffn_size = 128;
  int vocab_size = 0;
  int max_seq_len = 64;
  double dropout_rate = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
  bool same_architecture(const EncoderConfig& other) const;
};

/// Ordered, named parameter set of one encoder copy. The role string labels
/// instrumentation counters ("fixed"/"tuned" after cloning).
struct EncoderParams {
  EncoderConfig config;
  std::string role = "encoder";
  std::vector<NamedParam> params;

  Tensor& find(const std::string& name);
  const Tensor& find(const std::string& name) const;
  bool has(const std::string& name) const;
  std::int64_t parameter_count() const;

  /// Fresh tensors with copied values; requires_grad flags and role carry
  /// over, gradients do not.
  EncoderParams deep_copy() const;
};

/// The l+1 per-layer hidden matrices of one sentence; index 0 is the
/// embedding-layer output.
struct EncoderState {
  std::vector<Tensor> layers;  // each [padded_len x d]
};

/// Truncated-normal (stddev 0.02) weights, zero biases, unit layer-norm
/// gains; deterministic in config.seed.
EncoderParams init_params(const EncoderConfig& config);

/// Runs the post-layer-norm transformer over a consistently padded batch,
/// returning every layer's hidden matrix per sentence. Dropout is applied
/// only in training mode and draws from dropout_rng.
std::vector<EncoderState> encode(const EncoderParams& params,
                                 std::span<const TokenizedSentence> batch,
                                 bool training_mode,
                                 std::mt19937_64* dropout_rng = nullptr);

/// Row 0 of the last layer: the sentence embedding c_i.
Tensor cls_vector(const EncoderState& state);

/// Samples a truncated normal (resampling beyond two standard deviations).
double truncated_normal(std::mt19937_64& rng, double stddev);

}  // namespace sgcl
