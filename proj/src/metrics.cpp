#include "lamkit/metrics.hpp"

namespace lamkit {

F1Scores f1_scores(const LabelMatrix& predictions, const LabelMatrix& labels) {
  if (predictions.rows() != labels.rows() || predictions.cols() != labels.cols()) {
    throw ShapeError("f1_scores: predictions " + shape_string(predictions.rows(), predictions.cols()) +
                     " vs labels " + shape_string(labels.rows(), labels.cols()));
  }
  const auto p = (predictions.array() != 0).cast<long>();
  const auto y = (labels.array() != 0).cast<long>();
  const Eigen::Array<long, 1, Eigen::Dynamic> tp = (p * y).colwise().sum();
  const Eigen::Array<long, 1, Eigen::Dynamic> fp = (p * (1 - y)).colwise().sum();
  const Eigen::Array<long, 1, Eigen::Dynamic> fn = ((1 - p) * y).colwise().sum();

  auto f1 = [](long t, long f_pos, long f_neg) {
    const long denom = 2 * t + f_pos + f_neg;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(t) / static_cast<double>(denom);
  };

  F1Scores out;
  out.micro = f1(tp.sum(), fp.sum(), fn.sum());
  if (labels.cols() > 0) {
    double total = 0.0;
    for (Index c = 0; c < labels.cols(); ++c) total += f1(tp(c), fp(c), fn(c));
    out.macro = total / static_cast<double>(labels.cols());
  }
  return out;
}

}  // namespace lamkit
