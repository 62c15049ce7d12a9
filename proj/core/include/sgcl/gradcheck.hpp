#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sgcl/tensor.hpp"

namespace sgcl {

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_error = 0.0;
    std::int64_t coordinates_checked = 0;
  };
  std::vector<Entry> entries;
  double tolerance = 0.0;

  double worst() const;
  bool passed() const;
};

/// Compares analytic gradients of a deterministic scalar loss against
/// central finite differences, coordinate by coordinate.
///
/// The loss closure is re-evaluated with perturbed parameter values, so it
/// must rebuild its graph from the current values on every call and must be
/// deterministic; a re-evaluation mismatch is rejected. When
/// samples_per_param > 0, only that many coordinates per parameter group are
/// probed (chosen deterministically), which keeps whole-model checks cheap.
GradCheckReport finite_difference_check(
    const std::function<Tensor()>& loss_fn, std::span<NamedParam> params,
    double step = 1e-5, double tolerance = 1e-3, int samples_per_param = 0,
    std::uint64_t sample_seed = 0);

}  // namespace sgcl
