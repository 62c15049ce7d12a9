#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgcl/selfguide.hpp"
#include "sgcl/tensor.hpp"

namespace sgcl {

enum class LossVariant { Base, Opt1, Opt2, Opt3 };

std::string to_string(LossVariant variant);
LossVariant variant_from_string(const std::string& name);

struct LossConfig {
  LossVariant variant = LossVariant::Opt3;
  double temperature = 0.01;
  double reg_weight = 0.1;
  PoolingMethod pooling = PoolingMethod::Max;
  LayerSampler sampler;

  void validate() const;
};

/// Flat numeric summary of one loss evaluation. factors holds the mean
/// log-phi per pair class of the batch, (1) c_i/h_i attraction,
/// (2) c_i/c_j, (3) c_i/h_j, (4) h_i/h_j, and is NaN where a class is
/// undefined (b < 2).
struct LossReport {
  double total = 0.0;
  double contrastive = 0.0;
  double regularizer = 0.0;
  std::array<double, 4> factors{};

  std::string to_kv() const;
};

/// Differentiable total plus its plain-number report.
struct LossResult {
  Tensor total;
  LossReport report;
};

/// Scalar cosine similarity, clamped to [-1,1]; zero vectors rejected.
double cosine(std::span<const double> u, std::span<const double> v);

/// Graph cosine of two rank-1 tensors.
Tensor cosine_graph(const Tensor& u, const Tensor& v);

/// log phi(u,v) = g(f(u), f(v)) / tau. Callers combine these with
/// log-sum-exp; phi itself is never materialized.
Tensor log_phi(const Tensor& u, const Tensor& v, const ProjectionHead& head,
               double temperature);

/// Element tag for the matching function: sentence embeddings c_i pair with
/// their views h_i and vice versa.
struct TaggedRef {
  enum class Kind { Untagged, Sentence, View };
  Kind kind = Kind::Untagged;
  int index = -1;
};

TaggedRef matching_mu(const TaggedRef& x);

/// Squared parameter distance between the two encoder copies; the
/// projection head has no fixed counterpart and is excluded.
Tensor reg_term(const EncoderParams& fixed, const EncoderParams& tuned);

// Contrastive parts only (no regularizer), as differentiable scalars.
Tensor contrastive_base(std::span<const Tensor> c, std::span<const Tensor> h,
                        const ProjectionHead& head, double temperature);
Tensor contrastive_opt1(std::span<const Tensor> c, std::span<const Tensor> h,
                        const ProjectionHead& head, double temperature);
Tensor contrastive_opt2(std::span<const Tensor> c, std::span<const Tensor> h,
                        const ProjectionHead& head, double temperature);
Tensor contrastive_opt3(std::span<const Tensor> c,
                        const std::vector<std::vector<Tensor>>& views,
                        const ProjectionHead& head, double temperature);

/// Mean log-phi per pair class over a batch of embeddings and sampled
/// views; diagnostic only, computed without gradients. Requires b >= 2.
std::array<double, 4> factor_report(std::span<const Tensor> c,
                                    std::span<const Tensor> h,
                                    const ProjectionHead& head,
                                    double temperature);

// Full objectives: contrastive part plus reg_weight * reg_term(dual).
LossResult loss_base(std::span<const Tensor> c, std::span<const Tensor> h,
                     const DualEncoder& dual, const LossConfig& config);
LossResult loss_opt1(std::span<const Tensor> c, std::span<const Tensor> h,
                     const DualEncoder& dual, const LossConfig& config);
LossResult loss_opt2(std::span<const Tensor> c, std::span<const Tensor> h,
                     const DualEncoder& dual, const LossConfig& config);
LossResult loss_opt3(std::span<const Tensor> c,
                     const std::vector<std::vector<Tensor>>& views,
                     const DualEncoder& dual, const LossConfig& config);

}  // namespace sgcl
