#pragma once

#include <sys/wait.h>

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "saan/rng.hpp"
#include "saan/tensor.hpp"

namespace saan::test {

inline TensorD random_tensor(Rng& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(dims));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Multiples of 1/64 in [-1, 1]: products and sums of a few hundred such values
// are exact in double, so any summation order gives the same bits.
inline TensorD dyadic_tensor(Rng& rng, Shape dims) {
  TensorD t(std::move(dims));
  for (auto& v : t.data()) v = static_cast<double>(rng.uniform_int(-64, 64)) / 64.0;
  return t;
}

struct CommandResult {
  int exit_code = -1;
  std::string out;
};

// Runs a shell command; stdout is captured, stderr goes to the terminal.
inline CommandResult run_command(const std::string& cmd) {
  CommandResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed: " + cmd);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace saan::test
