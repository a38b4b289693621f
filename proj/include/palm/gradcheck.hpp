#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace palm::nn {

struct GradCheckResult {
  std::string layer;          // layer type, or "network" for the end-to-end check
  double max_rel_error = 0.0; // max |analytic - numeric| / max(|analytic|, |numeric|)
  std::size_t checked = 0;    // gradient entries compared
};

/// Compares analytic gradients against central finite differences in double
/// precision, on random small instances of every layer type plus one small
/// end-to-end network. Inputs to ReLU and max-pool are drawn away from their
/// kinks by more than `step`, so the differences never straddle one.
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed, double step = 1e-3);

/// Relative error with a floor on the denominator so two near-zero values
/// compare as equal.
double relative_error(double analytic, double numeric);

} // namespace palm::nn
