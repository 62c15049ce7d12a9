#pragma once

#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgcl/encoder.hpp"
#include "sgcl/tensor.hpp"
#include "sgcl/text.hpp"

namespace sgcl {

enum class PoolingMethod { Max, Mean, Cls };

std::string to_string(PoolingMethod method);
PoolingMethod pooling_from_string(const std::string& name);

/// Uniform choice over an eligible subset of layers {0..l}.
struct LayerSampler {
  std::vector<int> eligible_layers;

  static LayerSampler all_layers(int num_layers);
  void validate(int num_layers) const;
  int sample(std::mt19937_64& rng) const;
};

/// Two affine maps with a gelu between them (d -> hidden -> out). In
/// identity mode (the "- Projection head" ablation) project() passes its
/// input through unchanged.
struct ProjectionHead {
  bool identity = false;
  Tensor w1, b1, w2, b2;

  std::vector<NamedParam> named_params();
  ProjectionHead deep_copy() const;
};

struct HeadConfig {
  int hidden = 0;  // 0 -> 4*d
  int out = 0;     // 0 -> d
  bool identity = false;
  std::uint64_t seed = 1;
};

ProjectionHead init_projection_head(int input_dim, const HeadConfig& config);

Tensor project(const Tensor& v, const ProjectionHead& head);

/// Frozen teacher copy, tuned student copy and the trainable head.
struct DualEncoder {
  EncoderParams fixed;  // requires_grad off everywhere, never updated
  EncoderParams tuned;  // embedding-layer parameters frozen
  ProjectionHead head;

  const EncoderConfig& config() const { return fixed.config; }
  /// Trainable parameters: unfrozen tuned tensors plus the head.
  std::vector<NamedParam> trainable_params();
};

/// Names of the tuned-copy parameters that stay frozen: the embedding
/// tables and the embedding layer norm, i.e. everything feeding layer 0.
std::vector<std::string> frozen_tuned_parameter_names();

DualEncoder clone_dual(const EncoderParams& params, const HeadConfig& head_config);

/// Pooled view h_{i,k} of one hidden matrix.
Tensor pool(const Tensor& hidden, std::span<const int> mask, PoolingMethod method);

/// All pooled views from the fixed encoder: result[i][j] is sentence i's
/// view at sampler.eligible_layers[j]. Computed without gradients; the
/// views are constants.
std::vector<std::vector<Tensor>> compute_views(const DualEncoder& dual,
                                               std::span<const TokenizedSentence> batch,
                                               PoolingMethod method,
                                               const LayerSampler& sampler);

/// Uniformly picks one view for a sentence; returns (layer index, view).
std::pair<int, Tensor> sample_view(std::span<const Tensor> views_for_sentence,
                                   const LayerSampler& sampler,
                                   std::mt19937_64& rng);

}  // namespace sgcl
