#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "capsroute/tensor.hpp"

namespace capsroute {

struct GradCheckOptions {
  // Central-difference step is step_scale * max(1, |x|).
  double step_scale = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double denominator_floor = 1e-3;
  // When non-zero, check only this many elements drawn across all inputs.
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "input#index analytic=... numeric=..."

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Compares tape gradients of the scalar returned by `loss_fn` with central
// finite differences with respect to each element of `inputs`. `loss_fn`
// must rebuild its graph from the current values of `inputs` on every call.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                                const GradCheckOptions& options = {});

}  // namespace capsroute
