#include "sgcl/selfguide.hpp"

#include <algorithm>
#include <stdexcept>

#include "sgcl/instrument.hpp"

namespace sgcl {

std::string to_string(PoolingMethod method) {
  switch (method) {
    case PoolingMethod::Max: return "max";
    case PoolingMethod::Mean: return "mean";
    case PoolingMethod::Cls: return "cls";
  }
  throw std::logic_error("unreachable");
}

PoolingMethod pooling_from_string(const std::string& name) {
  if (name == "max") return PoolingMethod::Max;
  if (name == "mean") return PoolingMethod::Mean;
  if (name == "cls") return PoolingMethod::Cls;
  throw std::invalid_argument("unknown pooling method: " + name);
}

LayerSampler LayerSampler::all_layers(int num_layers) {
  LayerSampler sampler;
  for (int k = 0; k <= num_layers; ++k) sampler.eligible_layers.push_back(k);
  return sampler;
}

void LayerSampler::validate(int num_layers) const {
  if (eligible_layers.empty())
    throw std::invalid_argument("sampler needs at least one eligible layer");
  for (int k : eligible_layers)
    if (k < 0 || k > num_layers)
      throw std::invalid_argument("eligible layer out of range: " +
                                  std::to_string(k));
}

int LayerSampler::sample(std::mt19937_64& rng) const {
  if (eligible_layers.empty())
    throw std::invalid_argument("sampler has no eligible layers");
  std::uniform_int_distribution<std::size_t> pick(0, eligible_layers.size() - 1);
  return eligible_layers[pick(rng)];
}

std::vector<NamedParam> ProjectionHead::named_params() {
  if (identity) return {};
  return {{"head.inner.weight", w1},
          {"head.inner.bias", b1},
          {"head.outer.weight", w2},
          {"head.outer.bias", b2}};
}

ProjectionHead ProjectionHead::deep_copy() const {
  ProjectionHead copy;
  copy.identity = identity;
  if (!identity) {
    auto dup = [](const Tensor& t) {
      return Tensor::from_values(t.shape(), t.values(), t.requires_grad());
    };
    copy.w1 = dup(w1);
    copy.b1 = dup(b1);
    copy.w2 = dup(w2);
    copy.b2 = dup(b2);
  }
  return copy;
}

ProjectionHead init_projection_head(int input_dim, const HeadConfig& config) {
  ProjectionHead head;
  head.identity = config.identity;
  if (head.identity) return head;

  const int hidden = config.hidden > 0 ? config.hidden : 4 * input_dim;
  const int out = config.out > 0 ? config.out : input_dim;
  std::mt19937_64 rng(config.seed);
  auto normal_tensor = [&](Shape shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    std::vector<double> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = truncated_normal(rng, 0.02);
    return Tensor::from_values(std::move(shape), std::move(values), true);
  };
  head.w1 = normal_tensor({input_dim, hidden});
  head.b1 = Tensor::zeros({hidden}, true);
  head.w2 = normal_tensor({hidden, out});
  head.b2 = Tensor::zeros({out}, true);
  return head;
}

Tensor project(const Tensor& v, const ProjectionHead& head) {
  instrument::count_head_application();
  if (head.identity) return v;
  if (v.rank() != 1 || v.dim(0) != head.w1.dim(0))
    throw std::invalid_argument("project: input dimension mismatch");
  Tensor hidden = gelu(add(vecmat(v, head.w1), head.b1));
  return add(vecmat(hidden, head.w2), head.b2);
}

std::vector<NamedParam> DualEncoder::trainable_params() {
  std::vector<NamedParam> out;
  for (auto& p : tuned.params)
    if (p.tensor.requires_grad()) out.push_back(p);
  for (auto& p : head.named_params())
    if (p.tensor.requires_grad()) out.push_back(p);
  return out;
}

std::vector<std::string> frozen_tuned_parameter_names() {
  return {"embeddings.token.weight", "embeddings.position.weight",
          "embeddings.norm.gain", "embeddings.norm.bias"};
}

DualEncoder clone_dual(const EncoderParams& params, const HeadConfig& head_config) {
  DualEncoder dual;
  dual.fixed = params.deep_copy();
  dual.fixed.role = "fixed";
  for (auto& p : dual.fixed.params) p.tensor.set_requires_grad(false);

  dual.tuned = params.deep_copy();
  dual.tuned.role = "tuned";
  for (auto& p : dual.tuned.params) p.tensor.set_requires_grad(true);
  for (const auto& name : frozen_tuned_parameter_names())
    dual.tuned.find(name).set_requires_grad(false);

  dual.head = init_projection_head(params.config.hidden_size, head_config);
  return dual;
}

Tensor pool(const Tensor& hidden, std::span<const int> mask, PoolingMethod method) {
  switch (method) {
    case PoolingMethod::Max:
      return masked_max_rows(hidden, mask);
    case PoolingMethod::Mean:
      return masked_mean_rows(hidden, mask);
    case PoolingMethod::Cls:
      if (mask.empty() || mask[0] == 0)
        throw std::invalid_argument("pool: row 0 is masked");
      return row(hidden, 0);
  }
  throw std::logic_error("unreachable");
}

std::vector<std::vector<Tensor>> compute_views(const DualEncoder& dual,
                                               std::span<const TokenizedSentence> batch,
                                               PoolingMethod method,
                                               const LayerSampler& sampler) {
  sampler.validate(dual.config().num_layers);
  NoGradGuard no_grad;
  auto states = encode(dual.fixed, batch, /*training_mode=*/false);
  std::vector<std::vector<Tensor>> views;
  views.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::vector<Tensor> per_sentence;
    per_sentence.reserve(sampler.eligible_layers.size());
    for (int k : sampler.eligible_layers)
      per_sentence.push_back(pool(states[i].layers[static_cast<std::size_t>(k)],
                                  batch[i].attention_mask, method));
    views.push_back(std::move(per_sentence));
  }
  return views;
}

std::pair<int, Tensor> sample_view(std::span<const Tensor> views_for_sentence,
                                   const LayerSampler& sampler,
                                   std::mt19937_64& rng) {
  if (views_for_sentence.size() != sampler.eligible_layers.size())
    throw std::invalid_argument("sample_view: view count does not match sampler");
  std::uniform_int_distribution<std::size_t> pick(0, views_for_sentence.size() - 1);
  const std::size_t j = pick(rng);
  return {sampler.eligible_layers[j], views_for_sentence[j]};
}

}  // namespace sgcl
