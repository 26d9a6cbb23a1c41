#pragma once

#include "scg/autodiff.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace scg {

/// Outcome of comparing analytic gradients to central differences.
struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;   // flat index within the worst tensor
  std::size_t worst_tensor = 0;  // which tensor, for multi-tensor checks
  std::size_t checked = 0;
  /// Coordinates where one-sided differences disagree by more than the
  /// tolerance (a kink such as relu at 0). There the analytic value is only
  /// required to lie between the two one-sided slopes.
  std::vector<std::pair<std::size_t, std::size_t>> kinks;
  std::optional<std::string> non_finite;  // set when a gradient is NaN/inf
  bool passed = false;
};

using ScalarFn = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

/// Checks d f / d x for each tensor in `inputs`. `f` must return a
/// single-valued Var. Relative error per coordinate is
/// |analytic - numeric| / max(1, |analytic|).
GradcheckReport gradcheck(const ScalarFn& f, std::vector<Tensor<double>> inputs,
                          double step = 1e-6, double tol = 1e-4);

/// Single-input convenience overload.
GradcheckReport gradcheck(const std::function<Var<double>(Tape<double>&, Var<double>)>& f,
                          const Tensor<double>& x, double step = 1e-6, double tol = 1e-4);

/// Checks gradients with respect to tensors borrowed by `f` through
/// `Tape::parameter`. The tensors are perturbed in place and restored.
GradcheckReport gradcheck_parameters(const std::function<Var<double>(Tape<double>&)>& f,
                                     const std::vector<Tensor<double>*>& params,
                                     double step = 1e-6, double tol = 1e-4);

}  // namespace scg
