#include "sgcl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sgcl {

std::string to_string(LossVariant variant) {
  switch (variant) {
    case LossVariant::Base: return "base";
    case LossVariant::Opt1: return "opt1";
    case LossVariant::Opt2: return "opt2";
    case LossVariant::Opt3: return "opt3";
  }
  throw std::logic_error("unreachable");
}

LossVariant variant_from_string(const std::string& name) {
  if (name == "base") return LossVariant::Base;
  if (name == "opt1") return LossVariant::Opt1;
  if (name == "opt2") return LossVariant::Opt2;
  if (name == "opt3") return LossVariant::Opt3;
  throw std::invalid_argument("unknown loss variant: " + name);
}

void LossConfig::validate() const {
  if (!(temperature > 0.0))
    throw std::invalid_argument("temperature must be positive");
  if (reg_weight < 0.0)
    throw std::invalid_argument("reg_weight must be non-negative");
}

std::string LossReport::to_kv() const {
  std::ostringstream out;
  out.precision(17);
  out << "total=" << total << "\tcontrastive=" << contrastive
      << "\tregularizer=" << regularizer;
  for (std::size_t i = 0; i < factors.size(); ++i)
    out << "\tfactor" << (i + 1) << "=" << factors[i];
  return out.str();
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw std::invalid_argument("cosine: dimension mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0)
    throw std::invalid_argument("cosine: zero vector");
  return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

Tensor cosine_graph(const Tensor& u, const Tensor& v) {
  return div(dot(u, v), mul(l2_norm(u), l2_norm(v)));
}

Tensor log_phi(const Tensor& u, const Tensor& v, const ProjectionHead& head,
               double temperature) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("log_phi: temperature must be positive");
  Tensor pu = project(u, head);
  Tensor pv = project(v, head);
  return scale(cosine_graph(pu, pv), 1.0 / temperature);
}

TaggedRef matching_mu(const TaggedRef& x) {
  if (x.kind == TaggedRef::Kind::Untagged || x.index < 0)
    throw std::invalid_argument("matching_mu: untagged input");
  TaggedRef partner = x;
  partner.kind = x.kind == TaggedRef::Kind::Sentence ? TaggedRef::Kind::View
                                                     : TaggedRef::Kind::Sentence;
  return partner;
}

Tensor reg_term(const EncoderParams& fixed, const EncoderParams& tuned) {
  if (fixed.params.size() != tuned.params.size())
    throw std::invalid_argument("reg_term: parameter layout mismatch");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < fixed.params.size(); ++i) {
    const auto& f = fixed.params[i];
    const auto& t = tuned.params[i];
    if (f.name != t.name || f.tensor.shape() != t.tensor.shape())
      throw std::invalid_argument("reg_term: parameter layout mismatch at " +
                                  f.name);
    Tensor diff = sub(t.tensor, f.tensor);
    total = add(total, dot(diff, diff));
  }
  return total;
}

namespace {

void check_batch(std::span<const Tensor> c, std::span<const Tensor> h) {
  if (c.empty()) throw std::invalid_argument("contrastive loss on empty batch");
  if (c.size() != h.size())
    throw std::invalid_argument("need one sampled view per sentence");
}

std::vector<Tensor> project_all(std::span<const Tensor> xs,
                                const ProjectionHead& head) {
  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(project(x, head));
  return out;
}

Tensor scaled_cos(const Tensor& pu, const Tensor& pv, double temperature) {
  return scale(cosine_graph(pu, pv), 1.0 / temperature);
}

}  // namespace

Tensor contrastive_base(std::span<const Tensor> c, std::span<const Tensor> h,
                        const ProjectionHead& head, double temperature) {
  check_batch(c, h);
  const std::size_t b = c.size();
  const std::size_t n = 2 * b;  // X = {c_i} ++ {h_i}

  std::vector<Tensor> projected;
  projected.reserve(n);
  for (const auto& x : c) projected.push_back(project(x, head));
  for (const auto& x : h) projected.push_back(project(x, head));

  // log phi for every unordered pair of X.
  std::vector<std::vector<Tensor>> lp(n, std::vector<Tensor>(n));
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t j = m + 1; j < n; ++j) {
      Tensor v = scaled_cos(projected[m], projected[j], temperature);
      lp[m][j] = v;
      lp[j][m] = v;
    }

  Tensor loss_sum = Tensor::scalar(0.0);
  for (std::size_t m = 0; m < n; ++m) {
    // mu pairs c_i with h_i: partner index is m+b mod 2b.
    const std::size_t partner = m < b ? m + b : m - b;
    std::vector<Tensor> denominator;
    denominator.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != m) denominator.push_back(lp[m][j]);
    Tensor z = log_sum_exp(stack_scalars(denominator));
    loss_sum = add(loss_sum, sub(z, lp[m][partner]));
  }
  return scale(loss_sum, 1.0 / static_cast<double>(n));
}

Tensor contrastive_opt1(std::span<const Tensor> c, std::span<const Tensor> h,
                        const ProjectionHead& head, double temperature) {
  check_batch(c, h);
  const std::size_t b = c.size();
  auto pc = project_all(c, head);
  auto ph = project_all(h, head);

  Tensor loss_sum = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<Tensor> denominator;
    denominator.reserve(2 * b - 1);
    Tensor positive;
    for (std::size_t j = 0; j < b; ++j)
      if (j != i) denominator.push_back(scaled_cos(pc[i], pc[j], temperature));
    for (std::size_t j = 0; j < b; ++j) {
      Tensor term = scaled_cos(pc[i], ph[j], temperature);
      if (j == i) positive = term;
      denominator.push_back(term);
    }
    Tensor z = log_sum_exp(stack_scalars(denominator));
    loss_sum = add(loss_sum, sub(z, positive));
  }
  return scale(loss_sum, 1.0 / static_cast<double>(b));
}

Tensor contrastive_opt2(std::span<const Tensor> c, std::span<const Tensor> h,
                        const ProjectionHead& head, double temperature) {
  check_batch(c, h);
  const std::size_t b = c.size();
  auto pc = project_all(c, head);
  auto ph = project_all(h, head);

  Tensor loss_sum = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<Tensor> denominator;
    denominator.reserve(b);
    Tensor positive;
    for (std::size_t j = 0; j < b; ++j) {
      Tensor term = scaled_cos(pc[i], ph[j], temperature);
      if (j == i) positive = term;
      denominator.push_back(term);
    }
    Tensor z = log_sum_exp(stack_scalars(denominator));
    loss_sum = add(loss_sum, sub(z, positive));
  }
  return scale(loss_sum, 1.0 / static_cast<double>(b));
}

Tensor contrastive_opt3(std::span<const Tensor> c,
                        const std::vector<std::vector<Tensor>>& views,
                        const ProjectionHead& head, double temperature) {
  if (c.empty()) throw std::invalid_argument("contrastive loss on empty batch");
  if (views.size() != c.size())
    throw std::invalid_argument("need views for every sentence");
  const std::size_t b = c.size();
  const std::size_t layers = views[0].size();
  if (layers == 0) throw std::invalid_argument("need at least one view layer");
  for (const auto& per_sentence : views)
    if (per_sentence.size() != layers)
      throw std::invalid_argument("ragged view grid");

  auto pc = project_all(c, head);
  std::vector<std::vector<Tensor>> pv(b);
  for (std::size_t i = 0; i < b; ++i) pv[i] = project_all(views[i], head);

  // lp[i][m][n] = log phi(c_i, h_{m,n})
  std::vector<std::vector<std::vector<Tensor>>> lp(
      b, std::vector<std::vector<Tensor>>(b, std::vector<Tensor>(layers)));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t m = 0; m < b; ++m)
      for (std::size_t n = 0; n < layers; ++n)
        lp[i][m][n] = scaled_cos(pc[i], pv[m][n], temperature);

  Tensor loss_sum = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < layers; ++k) {
      std::vector<Tensor> denominator;
      denominator.reserve(1 + (b - 1) * layers);
      denominator.push_back(lp[i][i][k]);  // other views of s_i are excluded
      for (std::size_t m = 0; m < b; ++m) {
        if (m == i) continue;
        for (std::size_t n = 0; n < layers; ++n)
          denominator.push_back(lp[i][m][n]);
      }
      Tensor z = log_sum_exp(stack_scalars(denominator));
      loss_sum = add(loss_sum, sub(z, lp[i][i][k]));
    }
  }
  return scale(loss_sum, 1.0 / static_cast<double>(b * layers));
}

std::array<double, 4> factor_report(std::span<const Tensor> c,
                                    std::span<const Tensor> h,
                                    const ProjectionHead& head,
                                    double temperature) {
  check_batch(c, h);
  const std::size_t b = c.size();
  if (b < 2) throw std::invalid_argument("factor_report requires b >= 2");

  NoGradGuard no_grad;
  auto pc = project_all(c, head);
  auto ph = project_all(h, head);
  auto lp = [&](const Tensor& u, const Tensor& v) {
    return cosine(u.values(), v.values()) / temperature;
  };

  double attract = 0.0;
  for (std::size_t i = 0; i < b; ++i) attract += lp(pc[i], ph[i]);
  attract /= static_cast<double>(b);

  double cc = 0.0, hh = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) {
      cc += lp(pc[i], pc[j]);
      hh += lp(ph[i], ph[j]);
    }
  const double pair_count = static_cast<double>(b * (b - 1) / 2);
  cc /= pair_count;
  hh /= pair_count;

  double ch = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      if (j != i) ch += lp(pc[i], ph[j]);
  ch /= static_cast<double>(b * (b - 1));

  return {attract, cc, ch, hh};
}

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::array<double, 4> factors_or_nan(std::span<const Tensor> c,
                                     std::span<const Tensor> h,
                                     const ProjectionHead& head,
                                     double temperature) {
  if (c.size() < 2) return {kNan, kNan, kNan, kNan};
  return factor_report(c, h, head, temperature);
}

/// Factor classes generalized to the full view grid used by opt3.
std::array<double, 4> factors_multiview(std::span<const Tensor> c,
                                        const std::vector<std::vector<Tensor>>& views,
                                        const ProjectionHead& head,
                                        double temperature) {
  const std::size_t b = c.size();
  if (b < 2) return {kNan, kNan, kNan, kNan};
  NoGradGuard no_grad;
  auto pc = project_all(c, head);
  std::vector<std::vector<Tensor>> pv(b);
  for (std::size_t i = 0; i < b; ++i) pv[i] = project_all(views[i], head);
  const std::size_t layers = pv[0].size();
  auto lp = [&](const Tensor& u, const Tensor& v) {
    return cosine(u.values(), v.values()) / temperature;
  };

  double attract = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < layers; ++k) attract += lp(pc[i], pv[i][k]);
  attract /= static_cast<double>(b * layers);

  double cc = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) cc += lp(pc[i], pc[j]);
  cc /= static_cast<double>(b * (b - 1) / 2);

  double ch = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t m = 0; m < b; ++m) {
      if (m == i) continue;
      for (std::size_t n = 0; n < layers; ++n) ch += lp(pc[i], pv[m][n]);
    }
  ch /= static_cast<double>(b * (b - 1) * layers);

  double hh = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j)
      for (std::size_t k = 0; k < layers; ++k)
        for (std::size_t n = 0; n < layers; ++n) hh += lp(pv[i][k], pv[j][n]);
  hh /= static_cast<double>((b * (b - 1) / 2) * layers * layers);

  return {attract, cc, ch, hh};
}

LossResult assemble(Tensor contrastive, const DualEncoder& dual,
                    const LossConfig& config, std::array<double, 4> factors) {
  Tensor regularizer = reg_term(dual.fixed, dual.tuned);
  Tensor total = add(contrastive, scale(regularizer, config.reg_weight));
  LossResult result;
  result.total = total;
  result.report.total = total.item();
  result.report.contrastive = contrastive.item();
  result.report.regularizer = regularizer.item();
  result.report.factors = factors;
  return result;
}

}  // namespace

LossResult loss_base(std::span<const Tensor> c, std::span<const Tensor> h,
                     const DualEncoder& dual, const LossConfig& config) {
  config.validate();
  return assemble(contrastive_base(c, h, dual.head, config.temperature), dual,
                  config, factors_or_nan(c, h, dual.head, config.temperature));
}

LossResult loss_opt1(std::span<const Tensor> c, std::span<const Tensor> h,
                     const DualEncoder& dual, const LossConfig& config) {
  config.validate();
  return assemble(contrastive_opt1(c, h, dual.head, config.temperature), dual,
                  config, factors_or_nan(c, h, dual.head, config.temperature));
}

LossResult loss_opt2(std::span<const Tensor> c, std::span<const Tensor> h,
                     const DualEncoder& dual, const LossConfig& config) {
  config.validate();
  return assemble(contrastive_opt2(c, h, dual.head, config.temperature), dual,
                  config, factors_or_nan(c, h, dual.head, config.temperature));
}

LossResult loss_opt3(std::span<const Tensor> c,
                     const std::vector<std::vector<Tensor>>& views,
                     const DualEncoder& dual, const LossConfig& config) {
  config.validate();
  return assemble(contrastive_opt3(c, views, dual.head, config.temperature),
                  dual, config,
                  factors_multiview(c, views, dual.head, config.temperature));
}

}  // namespace sgcl
