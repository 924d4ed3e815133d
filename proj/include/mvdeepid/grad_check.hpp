#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mvdeepid {

/// One block of differentiable variables: the live values (perturbed in
/// place during the check) and the analytic gradient computed beforehand.
struct GradCheckVariable {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckResult {
  double maxRelativeError = 0.0;
  std::string worstVariable;
  std::size_t worstIndex = 0;
  double worstAnalytic = 0.0;
  double worstNumeric = 0.0;
  std::size_t componentsChecked = 0;
};

inline double relative_gradient_error(double analytic, double numeric) {
  const double scale =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

/// Compares analytic gradients with central differences of `loss`, which
/// must be deterministic and read the variables through the spans given.
/// Every component is restored bitwise after probing.
inline GradCheckResult grad_check(const std::function<double()>& loss,
                                  std::span<const GradCheckVariable> variables,
                                  double eps) {
  GradCheckResult result;
  for (const GradCheckVariable& var : variables) {
    if (var.values.size() != var.analytic.size())
      throw std::invalid_argument("grad_check: variable '" + var.name +
                                  "' has mismatched gradient length");
    for (std::size_t i = 0; i < var.values.size(); ++i) {
      const double saved = var.values[i];
      var.values[i] = saved + eps;
      const double up = loss();
      var.values[i] = saved - eps;
      const double down = loss();
      var.values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_gradient_error(var.analytic[i], numeric);
      ++result.componentsChecked;
      if (err > result.maxRelativeError || result.worstVariable.empty()) {
        result.maxRelativeError = std::max(result.maxRelativeError, err);
        result.worstVariable = var.name;
        result.worstIndex = i;
        result.worstAnalytic = var.analytic[i];
        result.worstNumeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace mvdeepid
