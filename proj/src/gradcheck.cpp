#include "capsroute/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "capsroute/rng.hpp"

namespace capsroute {

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                                const GradCheckOptions& options) {
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    for (auto& t : inputs) t.set_requires_grad(true).zero_grad();
    Tensor loss = loss_fn();
    tape.backward(loss);
    for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  std::vector<std::pair<std::size_t, std::size_t>> targets;
  for (std::size_t t = 0; t < inputs.size(); ++t)
    for (std::size_t i = 0; i < inputs[t].numel(); ++i) targets.emplace_back(t, i);
  if (options.sample_count > 0 && options.sample_count < targets.size()) {
    Rng rng(stream_key(options.seed, 0x67726164));
    rng.shuffle(std::span(targets));
    targets.resize(options.sample_count);
    std::sort(targets.begin(), targets.end());
  }

  GradCheckResult result;
  for (auto [t, i] : targets) {
    auto values = inputs[t].data();
    const double original = values[i];
    const double h = options.step_scale * std::max(1.0, std::abs(original));
    values[i] = original + h;
    const double plus = loss_fn().item();
    values[i] = original - h;
    const double minus = loss_fn().item();
    values[i] = original;
    const double numeric = (plus - minus) / (2.0 * h);
    const double a = analytic[t][i];
    const double abs_err = std::abs(a - numeric);
    const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
    result.max_abs_error = std::max(result.max_abs_error, abs_err);
    if (rel > result.max_rel_error || result.checked == 0) {
      result.max_rel_error = std::max(result.max_rel_error, rel);
      std::ostringstream os;
      os.precision(10);
      os << "input" << t << '#' << i << " analytic=" << a << " numeric=" << numeric;
      result.worst = os.str();
    }
    ++result.checked;
  }
  return result;
}

}  // namespace capsroute
