#pragma once

#include <functional>
#include <string>

#include "lamkit/tensor.hpp"

namespace lamkit {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

using LossFunction = std::function<Tensor(const ParameterStore&)>;

/// Compares reverse-mode gradients against central differences for every
/// scalar of every parameter in `store`. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8). Parameter values are restored on return.
GradCheckResult finite_diff_check(const LossFunction& loss_fn, ParameterStore& store,
                                  double step = 1e-5);

}  // namespace lamkit
