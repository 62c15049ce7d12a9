#include "sgcl/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace sgcl {

namespace {

bool wants_decay(const std::string& name) {
  const std::string suffix = ".weight";
  return name.size() >= suffix.size() &&
         name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

AdamW::AdamW(std::vector<NamedParam> params, AdamWConfig config)
    : config_(config) {
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0))
    throw std::invalid_argument("adam betas must lie in [0,1)");
  if (config_.eps <= 0.0) throw std::invalid_argument("adam eps must be positive");
  for (auto& p : params) {
    if (!p.tensor.requires_grad()) continue;
    Slot slot;
    slot.param = p;
    slot.m.assign(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    slot.v.assign(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    slot.decay = wants_decay(p.name);
    slots_.push_back(std::move(slot));
  }
}

void AdamW::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (auto& slot : slots_) {
    Tensor& t = slot.param.tensor;
    const std::vector<double>* grad = t.has_grad() ? &t.grad() : nullptr;
    std::vector<double> values(t.values());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad ? (*grad)[i] : 0.0;
      slot.m[i] = config_.beta1 * slot.m[i] + (1.0 - config_.beta1) * g;
      slot.v[i] = config_.beta2 * slot.v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = slot.m[i] / bc1;
      const double v_hat = slot.v[i] / bc2;
      if (slot.decay)
        values[i] -= config_.learning_rate * config_.weight_decay * values[i];
      values[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
    t.assign_values(values);
  }
}

void AdamW::zero_grad() {
  for (auto& slot : slots_) slot.param.tensor.zero_grad();
}

}  // namespace sgcl
