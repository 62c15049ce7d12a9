#include "sgcl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sgcl {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

bool GradCheckReport::passed() const { return worst() <= tolerance; }

namespace {

double eval_plain(const std::function<Tensor()>& loss_fn) {
  NoGradGuard guard;
  return loss_fn().item();
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

GradCheckReport finite_difference_check(
    const std::function<Tensor()>& loss_fn, std::span<NamedParam> params,
    double step, double tolerance, int samples_per_param,
    std::uint64_t sample_seed) {
  if (step <= 0.0) throw std::invalid_argument("step must be positive");

  const double probe = eval_plain(loss_fn);
  const double reprobe = eval_plain(loss_fn);
  if (probe != reprobe)
    throw std::runtime_error(
        "finite_difference_check: loss is not deterministic under "
        "re-evaluation");

  for (auto& p : params) p.tensor.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);

  GradCheckReport report;
  report.tolerance = tolerance;

  std::mt19937_64 rng(sample_seed);
  for (auto& p : params) {
    Tensor& t = p.tensor;
    const std::int64_t n = t.numel();
    std::vector<std::int64_t> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), 0);
    if (samples_per_param > 0 && n > samples_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(samples_per_param));
    }

    std::vector<double> analytic(static_cast<std::size_t>(n), 0.0);
    if (t.has_grad()) analytic = t.grad();

    GradCheckReport::Entry entry;
    entry.name = p.name;
    entry.coordinates_checked = static_cast<std::int64_t>(coords.size());

    std::vector<double> work(t.values());
    for (auto c : coords) {
      const double original = work[static_cast<std::size_t>(c)];
      work[static_cast<std::size_t>(c)] = original + step;
      t.assign_values(work);
      const double up = eval_plain(loss_fn);
      work[static_cast<std::size_t>(c)] = original - step;
      t.assign_values(work);
      const double down = eval_plain(loss_fn);
      work[static_cast<std::size_t>(c)] = original;
      t.assign_values(work);

      const double numeric = (up - down) / (2.0 * step);
      entry.max_rel_error = std::max(
          entry.max_rel_error,
          relative_error(analytic[static_cast<std::size_t>(c)], numeric));
    }
    report.entries.push_back(std::move(entry));
  }

  for (auto& p : params) p.tensor.zero_grad();
  return report;
}

}  // namespace sgcl
