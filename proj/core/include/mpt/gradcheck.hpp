#pragma once

#include <string>
#include <vector>

namespace mpt {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  int coords_checked = 0;
};

// Central finite differences at 64-bit, h = 1e-4, against the analytic
// gradients; relative error |a - n| / max(1, |a|, |n|).
inline constexpr double kOpGradTolerance = 1e-6;
inline constexpr double kModelGradTolerance = 1e-4;

// One fixture per differentiable op, every input coordinate checked.
std::vector<GradCheckResult> run_op_gradchecks();

// The composed pretraining graph (small config, training mode with a frozen
// dropout pattern), sampled over n_coords parameter coordinates.
GradCheckResult run_model_gradcheck(int n_coords = 200);

}  // namespace mpt
