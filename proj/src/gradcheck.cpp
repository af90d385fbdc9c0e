#include "saan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saan/rng.hpp"

namespace saan {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const std::function<double()>& loss, std::vector<GradCheckInput> inputs,
                           double h, std::uint64_t seed,
                           const std::function<std::uint64_t()>& branch_signature) {
  GradCheckReport report;
  Rng rng(seed);
  for (auto& in : inputs) {
    if (in.value->dims() != in.analytic->dims()) {
      throw DimensionError("grad_check", "analytic gradient",
                           shape_string(in.value->dims()) + " vs " + shape_string(in.analytic->dims()));
    }
    std::vector<std::size_t> coords(in.value->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (in.max_coords != 0 && in.max_coords < coords.size()) {
      // Partial Fisher-Yates: first max_coords entries become the sample.
      for (std::size_t i = 0; i < in.max_coords; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                                static_cast<std::int64_t>(coords.size() - 1)));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(in.max_coords);
      std::sort(coords.begin(), coords.end());
    }
    auto& x = *in.value;
    for (std::size_t i : coords) {
      if (in.skip && in.skip(i)) {
        ++report.skipped;
        continue;
      }
      const double orig = x[i];
      x[i] = orig + h;
      const double fp = loss();
      const std::uint64_t sp = branch_signature ? branch_signature() : 0;
      x[i] = orig - h;
      const double fm = loss();
      const std::uint64_t sm = branch_signature ? branch_signature() : 0;
      x[i] = orig;
      if (sp != sm) {
        ++report.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      report.max_rel_error = std::max(report.max_rel_error, relative_error((*in.analytic)[i], numeric));
      ++report.checked;
    }
  }
  return report;
}

}  // namespace saan
