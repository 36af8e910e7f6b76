#include "lamkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lamkit {

namespace {

double evaluate(const LossFunction& loss_fn, const ParameterStore& store) {
  const double v = loss_fn(store).scalar();
  if (!std::isfinite(v)) throw std::domain_error("finite_diff_check: non-finite loss value");
  return v;
}

}  // namespace

GradCheckResult finite_diff_check(const LossFunction& loss_fn, ParameterStore& store,
                                  double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");

  store.zero_grad();
  Tensor loss = loss_fn(store);
  if (!std::isfinite(loss.scalar())) {
    throw std::domain_error("finite_diff_check: non-finite loss value");
  }
  backward(loss, store);

  GradCheckResult result;
  for (auto& [name, param] : store.entries()) {
    const Matrix analytic = param.grad();
    double* data = param.mutable_value().data();
    for (Index i = 0; i < param.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = evaluate(loss_fn, store);
      data[i] = saved - step;
      const double down = evaluate(loss_fn, store);
      data[i] = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++result.checked;
      if (err > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = std::max(err, result.max_relative_error);
        result.worst_parameter = name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace lamkit
