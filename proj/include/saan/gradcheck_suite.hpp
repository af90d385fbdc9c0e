#pragma once

// Finite-difference checks of every kernel, each loss, and the end-to-end
// tiny model, all in 64-bit.

#include <cstdint>
#include <string>
#include <vector>

namespace saan {

inline constexpr double kGradTolerance = 1e-4;

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;

  bool passed() const { return checked > 0 && max_rel_error < kGradTolerance; }
};

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

}  // namespace saan
