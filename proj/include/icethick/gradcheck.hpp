#pragma once

// Central-difference gradient checking in 64-bit, plus the built-in suite
// behind `icethick gradcheck`.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "icethick/tensor.hpp"

namespace icethick {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::size_t checked = 0;  // number of scalar coordinates compared
  bool passed() const { return max_rel_error < threshold; }
};

// Builds a scalar loss from the inputs. Called once under a tape for the
// analytic gradient and twice per coordinate without one.
using LossFn = std::function<Tensor<double>(std::span<const Tensor<double>>)>;

// |analytic - numeric| / max(|analytic|, |numeric|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-4);

// Compares tape gradients of fn w.r.t. every element of every input that
// requires grad against (f(x+h) - f(x-h)) / 2h.
GradCheckResult check_gradients(std::string name, const LossFn& fn,
                                std::vector<Tensor<double>> inputs, double step,
                                double threshold);

struct GradCheckCase {
  std::string name;
  std::function<GradCheckResult()> run;
};

// One case per differentiable op, one per backbone family on a shrunken
// architecture, and the small end-to-end network.
std::vector<GradCheckCase> builtin_gradcheck_cases();

// Runs the cases, prints one line per case, returns 0 if all pass and 1 if
// any fails.
int run_gradcheck_suite(std::span<const GradCheckCase> cases, std::ostream& out);

}  // namespace icethick
