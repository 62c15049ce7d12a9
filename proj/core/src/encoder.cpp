#include "sgcl/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "sgcl/instrument.hpp"

namespace sgcl {

namespace {

constexpr double kInitStddev = 0.02;
constexpr double kMaskBias = -1e9;

std::string layer_prefix(int i) { return "layers." + std::to_string(i) + "."; }

}  // namespace

void EncoderConfig::validate() const {
  if (num_layers < 0) throw std::invalid_argument("num_layers must be >= 0");
  if (hidden_size <= 0 || num_heads <= 0 || ffn_size <= 0 || vocab_size <= 0 ||
      max_seq_len < 3)
    throw std::invalid_argument("encoder extents must be positive");
  if (hidden_size % num_heads != 0)
    throw std::invalid_argument("hidden_size must be divisible by num_heads");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("dropout_rate must be in [0,1)");
}

bool EncoderConfig::same_architecture(const EncoderConfig& other) const {
  return num_layers == other.num_layers && hidden_size == other.hidden_size &&
         num_heads == other.num_heads && ffn_size == other.ffn_size &&
         vocab_size == other.vocab_size && max_seq_len == other.max_seq_len;
}

Tensor& EncoderParams::find(const std::string& name) {
  for (auto& p : params)
    if (p.name == name) return p.tensor;
  throw std::invalid_argument("no parameter named " + name);
}

const Tensor& EncoderParams::find(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p.tensor;
  throw std::invalid_argument("no parameter named " + name);
}

bool EncoderParams::has(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return true;
  return false;
}

std::int64_t EncoderParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

EncoderParams EncoderParams::deep_copy() const {
  EncoderParams copy;
  copy.config = config;
  copy.role = role;
  copy.params.reserve(params.size());
  for (const auto& p : params)
    copy.params.push_back(
        {p.name, Tensor::from_values(p.tensor.shape(), p.tensor.values(),
                                     p.tensor.requires_grad())});
  return copy;
}

double truncated_normal(std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (;;) {
    double x = dist(rng);
    if (std::abs(x) <= 2.0 * stddev) return x;
  }
}

EncoderParams init_params(const EncoderConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);

  auto normal_tensor = [&](Shape shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    std::vector<double> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = truncated_normal(rng, kInitStddev);
    return Tensor::from_values(std::move(shape), std::move(values), true);
  };
  auto const_tensor = [&](Shape shape, double value) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return Tensor::from_values(std::move(shape),
                               std::vector<double>(static_cast<std::size_t>(n), value),
                               true);
  };

  EncoderParams out;
  out.config = config;
  const std::int64_t d = config.hidden_size;
  const std::int64_t f = config.ffn_size;

  out.params.push_back(
      {"embeddings.token.weight", normal_tensor({config.vocab_size, d})});
  out.params.push_back(
      {"embeddings.position.weight", normal_tensor({config.max_seq_len, d})});
  out.params.push_back({"embeddings.norm.gain", const_tensor({d}, 1.0)});
  out.params.push_back({"embeddings.norm.bias", const_tensor({d}, 0.0)});

  for (int i = 0; i < config.num_layers; ++i) {
    const std::string p = layer_prefix(i);
    out.params.push_back({p + "attention.query.weight", normal_tensor({d, d})});
    out.params.push_back({p + "attention.query.bias", const_tensor({d}, 0.0)});
    out.params.push_back({p + "attention.key.weight", normal_tensor({d, d})});
    out.params.push_back({p + "attention.key.bias", const_tensor({d}, 0.0)});
    out.params.push_back({p + "attention.value.weight", normal_tensor({d, d})});
    out.params.push_back({p + "attention.value.bias", const_tensor({d}, 0.0)});
    out.params.push_back({p + "attention.output.weight", normal_tensor({d, d})});
    out.params.push_back({p + "attention.output.bias", const_tensor({d}, 0.0)});
    out.params.push_back({p + "attention.norm.gain", const_tensor({d}, 1.0)});
    out.params.push_back({p + "attention.norm.bias", const_tensor({d}, 0.0)});
    out.params.push_back({p + "ffn.inner.weight", normal_tensor({d, f})});
    out.params.push_back({p + "ffn.inner.bias", const_tensor({f}, 0.0)});
    out.params.push_back({p + "ffn.outer.weight", normal_tensor({f, d})});
    out.params.push_back({p + "ffn.outer.bias", const_tensor({d}, 0.0)});
    out.params.push_back({p + "ffn.norm.gain", const_tensor({d}, 1.0)});
    out.params.push_back({p + "ffn.norm.bias", const_tensor({d}, 0.0)});
  }
  return out;
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv_keep = 1.0 / (1.0 - rate);
  std::vector<double> mask(static_cast<std::size_t>(x.numel()));
  for (auto& m : mask) m = keep(rng) ? inv_keep : 0.0;
  return mul(x, Tensor::from_values(x.shape(), std::move(mask)));
}

struct LayerWeights {
  const Tensor *qw, *qb, *kw, *kb, *vw, *vb, *ow, *ob;
  const Tensor *ln1_gain, *ln1_bias;
  const Tensor *ffn_in_w, *ffn_in_b, *ffn_out_w, *ffn_out_b;
  const Tensor *ln2_gain, *ln2_bias;
};

LayerWeights collect_layer(const EncoderParams& params, int i) {
  const std::string p = layer_prefix(i);
  return {
      &params.find(p + "attention.query.weight"),
      &params.find(p + "attention.query.bias"),
      &params.find(p + "attention.key.weight"),
      &params.find(p + "attention.key.bias"),
      &params.find(p + "attention.value.weight"),
      &params.find(p + "attention.value.bias"),
      &params.find(p + "attention.output.weight"),
      &params.find(p + "attention.output.bias"),
      &params.find(p + "attention.norm.gain"),
      &params.find(p + "attention.norm.bias"),
      &params.find(p + "ffn.inner.weight"),
      &params.find(p + "ffn.inner.bias"),
      &params.find(p + "ffn.outer.weight"),
      &params.find(p + "ffn.outer.bias"),
      &params.find(p + "ffn.norm.gain"),
      &params.find(p + "ffn.norm.bias"),
  };
}

Tensor self_attention(const Tensor& x, const LayerWeights& w,
                      const Tensor& mask_bias, int num_heads) {
  const std::int64_t d = x.dim(1);
  const std::int64_t head_dim = d / num_heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Tensor q = linear(x, *w.qw, *w.qb);
  Tensor k = linear(x, *w.kw, *w.kb);
  Tensor v = linear(x, *w.vw, *w.vb);

  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(num_heads));
  for (int h = 0; h < num_heads; ++h) {
    const std::int64_t c0 = h * head_dim, c1 = (h + 1) * head_dim;
    Tensor qh = slice_cols(q, c0, c1);
    Tensor kh = slice_cols(k, c0, c1);
    Tensor vh = slice_cols(v, c0, c1);
    Tensor scores = scale(matmul(qh, transpose(kh)), scale_factor);
    scores = add_rowvec(scores, mask_bias);
    Tensor attn = softmax_rows(scores);
    heads.push_back(matmul(attn, vh));
  }
  Tensor context = concat_cols(heads);
  return linear(context, *w.ow, *w.ob);
}

}  // namespace

std::vector<EncoderState> encode(const EncoderParams& params,
                                 std::span<const TokenizedSentence> batch,
                                 bool training_mode,
                                 std::mt19937_64* dropout_rng) {
  params.config.validate();
  if (batch.empty()) throw std::invalid_argument("encode: empty batch");
  const std::size_t padded_len = batch[0].ids.size();
  for (const auto& s : batch) {
    if (s.ids.size() != padded_len || s.attention_mask.size() != padded_len)
      throw std::invalid_argument("encode: batch with inconsistent padding");
    if (static_cast<int>(padded_len) > params.config.max_seq_len)
      throw std::invalid_argument("encode: sentence longer than max_seq_len");
  }
  const bool use_dropout = training_mode && params.config.dropout_rate > 0.0;
  if (use_dropout && dropout_rng == nullptr)
    throw std::invalid_argument("encode: training mode needs a dropout rng");

  instrument::count_encoder_forwards(params.role,
                                     static_cast<long>(batch.size()));

  const Tensor& tok_table = params.find("embeddings.token.weight");
  const Tensor& pos_table = params.find("embeddings.position.weight");
  const Tensor& emb_gain = params.find("embeddings.norm.gain");
  const Tensor& emb_bias = params.find("embeddings.norm.bias");

  std::vector<LayerWeights> layers;
  layers.reserve(static_cast<std::size_t>(params.config.num_layers));
  for (int i = 0; i < params.config.num_layers; ++i)
    layers.push_back(collect_layer(params, i));

  const double rate = params.config.dropout_rate;
  std::vector<EncoderState> states;
  states.reserve(batch.size());

  for (const auto& sentence : batch) {
    const std::int64_t len = static_cast<std::int64_t>(sentence.ids.size());
    std::vector<double> bias_values(static_cast<std::size_t>(len));
    for (std::int64_t j = 0; j < len; ++j)
      bias_values[static_cast<std::size_t>(j)] =
          sentence.attention_mask[static_cast<std::size_t>(j)] ? 0.0 : kMaskBias;
    Tensor mask_bias = Tensor::from_values({len}, std::move(bias_values));

    Tensor emb = embedding_lookup(tok_table, sentence.ids);
    Tensor pos = slice_rows(pos_table, 0, len);
    Tensor h0 = layer_norm(add(emb, pos), emb_gain, emb_bias);

    EncoderState state;
    state.layers.reserve(static_cast<std::size_t>(params.config.num_layers) + 1);
    state.layers.push_back(h0);

    Tensor x = h0;
    if (use_dropout) x = dropout(x, rate, *dropout_rng);
    for (const auto& w : layers) {
      Tensor attn = self_attention(x, w, mask_bias, params.config.num_heads);
      if (use_dropout) attn = dropout(attn, rate, *dropout_rng);
      x = layer_norm(add(x, attn), *w.ln1_gain, *w.ln1_bias);

      Tensor inner = gelu(linear(x, *w.ffn_in_w, *w.ffn_in_b));
      Tensor ffn = linear(inner, *w.ffn_out_w, *w.ffn_out_b);
      if (use_dropout) ffn = dropout(ffn, rate, *dropout_rng);
      x = layer_norm(add(x, ffn), *w.ln2_gain, *w.ln2_bias);
      state.layers.push_back(x);
    }
    states.push_back(std::move(state));
  }
  return states;
}

Tensor cls_vector(const EncoderState& state) {
  if (state.layers.empty())
    throw std::invalid_argument("cls_vector: empty encoder state");
  return row(state.layers.back(), 0);
}

}  // namespace sgcl
