#pragma once

// Embedded invariant suite run by `iqp selftest`.

#include <string>
#include <vector>

namespace iqp::selftest {

struct Options {
  double tau_frac = 0.99;       ///< fraction-to-boundary used by the interiority check
  bool naive_softplus = false;  ///< evaluate the cancellation witness with the one-branch formula
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<Check> run(const Options& opts = {});

}  // namespace iqp::selftest
