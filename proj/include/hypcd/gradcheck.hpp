#pragma once

// Finite-difference checks of every training objective on small random
// problems.

#include <cstdint>
#include <string>
#include <vector>

namespace hypcd::gradcheck {

struct LossCheck {
  std::string name;
  int configs = 0;
  int failures = 0;
  double max_rel_err = 0.0;

  bool pass() const { return configs > 0 && failures == 0; }
};

/// Runs `configs` random configurations per objective at the given tolerance.
std::vector<LossCheck> run_suite(int configs, std::uint64_t seed, double tol = 1e-4);

}  // namespace hypcd::gradcheck
