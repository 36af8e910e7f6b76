#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lamkit {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Index = Eigen::Index;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(Index rows, Index cols);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the recorded computation. Interior nodes keep their parents
// alive; the whole graph is released when the last handle to the output goes.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;  // leaf parameter
  bool tracked = false;        // reaches at least one leaf parameter
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  // grad += g, allocating zeros on first touch. No-op for untracked nodes.
  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!tracked) return;
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    grad += g;
  }
};

}  // namespace detail

/// Dense row-major double matrix with optional reverse-mode gradient.
///
/// Tensor is a shared handle: copies alias the same storage, which is what
/// lets a ParameterStore and an in-flight graph refer to one parameter.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Matrix values, bool requires_grad = false);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  // Writable access for optimizers and finite-difference probes.
  Matrix& mutable_value() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  bool tracked() const { return node_->tracked; }
  // Zero-shaped when the tensor does not require grad.
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  void zero_grad();

  double scalar() const;

  /// Deep copy of the values; the copy is a fresh leaf.
  Tensor clone() const;

  const detail::NodePtr& node() const { return node_; }
  static Tensor from_node(detail::NodePtr node);

 private:
  detail::NodePtr node_;
};

/// Named learnable matrices, iterated in lexicographic name order.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Matrix init);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::map<std::string, Tensor>& entries() { return entries_; }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();
  double grad_norm() const;

  /// Independent copy (no shared storage).
  ParameterStore clone() const;

 private:
  std::map<std::string, Tensor> entries_;
};

/// Reverse pass from a 1x1 loss. Gradients accumulate into every reachable
/// leaf; parameters in `store` that were not reached keep their current
/// gradient (zero after zero_grad()).
void backward(const Tensor& loss, ParameterStore& store);
void backward(const Tensor& loss);

}  // namespace lamkit
