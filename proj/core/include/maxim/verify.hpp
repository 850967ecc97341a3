#pragma once

#include <string>
#include <vector>

#include "maxim/gradcheck.hpp"

namespace maxim {

struct CheckResult {
  std::string name;
  double max_rel_err = 0;
  double threshold = 0;
  bool pass() const { return max_rel_err < threshold; }
};

/// Finite-difference suites, all in 64-bit mode (h = 1e-5 unless stated).
/// Thresholds: < 1e-6 for elementwise/dense/layernorm/activations, < 1e-4
/// for conv/resize/spectral-loss and the composite blocks, < 1e-3 for the
/// end-to-end micro stage.
std::vector<CheckResult> primitive_grad_checks();
std::vector<CheckResult> mixer_grad_checks();
/// which: "mab" | "cgb" | "rcab" | "sam" | "stage" | "" (all)
std::vector<CheckResult> block_grad_checks(const std::string& which);

}  // namespace maxim
