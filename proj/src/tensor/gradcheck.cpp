#include "icethick/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "icethick/error.hpp"

namespace icethick {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckResult check_gradients(std::string name, const LossFn& fn,
                                std::vector<Tensor<double>> inputs, double step,
                                double threshold) {
  // Private copies: the probe writes into them.
  for (auto& in : inputs) {
    in = Tensor<double>(in.shape(), std::vector<double>(in.data().begin(), in.data().end()),
                        in.requires_grad());
  }
  std::vector<std::vector<double>> analytic;
  {
    GradientTape<double> tape;
    TapeScope<double> scope(tape);
    const Tensor<double> loss = fn(inputs);
    tape.backward(loss);
    for (const auto& in : inputs) analytic.push_back(in.grad_or_zeros());
  }
  GradCheckResult result{std::move(name), 0.0, threshold, 0};
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& in = inputs[t];
    if (!in.requires_grad()) continue;
    std::vector<double> values(in.data().begin(), in.data().end());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      in.assign(values);
      const double plus = fn(inputs).item();
      values[i] = original - step;
      in.assign(values);
      const double minus = fn(inputs).item();
      values[i] = original;
      in.assign(values);
      const double numeric = (plus - minus) / (2.0 * step);
      result.max_rel_error =
          std::max(result.max_rel_error, relative_error(analytic[t][i], numeric));
      ++result.checked;
    }
  }
  return result;
}

int run_gradcheck_suite(std::span<const GradCheckCase> cases, std::ostream& out) {
  int failures = 0;
  for (const auto& c : cases) {
    GradCheckResult r;
    try {
      r = c.run();
    } catch (const Error& e) {
      out << "FAIL " << c.name << " error: " << e.what() << "\n";
      ++failures;
      continue;
    }
    out << (r.passed() ? "PASS " : "FAIL ") << r.name << " max_rel_error=" << r.max_rel_error
        << " threshold=" << r.threshold << " coords=" << r.checked << "\n";
    if (!r.passed()) ++failures;
  }
  out << (failures == 0 ? "all gradient checks passed" : "gradient check failures: ")
      << (failures == 0 ? std::string() : std::to_string(failures)) << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace icethick
