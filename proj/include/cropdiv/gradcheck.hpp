#pragma once

#include <string>
#include <vector>

namespace cropdiv::gradcheck {

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Checks every analytic gradient in the system (MLP backprop, the
/// reparameterization, the latent rescaling Jacobian, and the full VAE loss
/// in both modes) against central finite differences over seeded random
/// instances with dims <= 32.
std::vector<CheckResult> run_suite();

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace cropdiv::gradcheck
