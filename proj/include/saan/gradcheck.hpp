#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "saan/tensor.hpp"

namespace saan {

// One tensor to perturb. The loss closure must read `value` through the pointer.
struct GradCheckInput {
  GradCheckInput(TensorD* v, const TensorD* g, std::function<bool(std::size_t)> skip_fn = {},
                 std::size_t max = 0)
      : value(v), analytic(g), skip(std::move(skip_fn)), max_coords(max) {}

  TensorD* value = nullptr;
  const TensorD* analytic = nullptr;
  // Coordinates for which skip(i) is true are not checked (non-differentiable points).
  std::function<bool(std::size_t)> skip;
  // 0 checks every coordinate, otherwise a seeded random sample of this many.
  std::size_t max_coords = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Central differences (f(x+h) - f(x-h)) / 2h per coordinate, compared with the
// analytic gradient via |ga - gn| / max(1e-8, |ga| + |gn|); reports the maximum.
// If `branch_signature` is given it is read after every loss evaluation, and a
// coordinate whose two evaluations disagree (a ReLU or max-pool kink lies
// inside [x-h, x+h]) is skipped.
GradCheckReport grad_check(const std::function<double()>& loss, std::vector<GradCheckInput> inputs,
                           double h = 1e-3, std::uint64_t seed = 0,
                           const std::function<std::uint64_t()>& branch_signature = {});

double relative_error(double analytic, double numeric);

}  // namespace saan
