#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capsroute/gradcheck.hpp"

namespace capsroute {

struct GradSuiteEntry {
  std::string name;
  double tolerance = 0.0;
  GradCheckResult result;

  bool passed() const { return result.passed(tolerance); }
};

// Finite-difference checks of every op, capsule layer, routing method, loss
// and an end-to-end small CardioCaps model. Ops and layers use tolerance 1e-6,
// the end-to-end model 1e-4.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 10);

}  // namespace capsroute
