#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gradmod/tensor.hpp"

namespace gradmod {

inline constexpr double kFdStep = 1e-4;
inline constexpr double kGradTolerance = 1e-4;
/// Denominator floor of the relative error, so coordinates whose true
/// derivative is zero are compared absolutely.
inline constexpr double kRelErrorFloor = 1e-8;

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = kRelErrorFloor);

struct GradCheckResult {
  std::string name;
  std::size_t probes = 0;
  /// Drawn coordinates whose difference stencil straddled a kink and were
  /// replaced by fresh draws.
  std::size_t redrawn = 0;
  double max_rel_error = 0.0;
  double tolerance = kGradTolerance;
  bool passed() const { return probes > 0 && redrawn <= probes && max_rel_error < tolerance; }
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of the scalar f(inputs) against central
/// differences (step kFdStep) at `probes` randomly chosen input coordinates.
/// `inputs` must be leaves with requires_grad set; f must rebuild its graph on
/// every call. When `numeric` is given, the differences are taken on it
/// instead of f.
///
/// A central difference is only an oracle where f is smooth over the stencil.
/// Each probe is therefore repeated with step kFdStep / 10; when the two
/// differences disagree by more than the tolerance the stencil crossed a kink
/// (a leaky-ReLU switch, say) and the coordinate is redrawn. The check fails
/// if more than `probes` coordinates need redrawing.
GradCheckResult check_gradient(const std::string& name, std::vector<Tensor> inputs, const ScalarFn& f,
                               std::size_t probes, std::uint64_t seed, double tolerance = kGradTolerance,
                               const ScalarFn& numeric = nullptr);

/// Every differentiable tensor op, the generator, the modules, the losses and
/// the full module -> theta' -> generator -> objective chain.
std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed, std::size_t probes = 20);

}  // namespace gradmod
