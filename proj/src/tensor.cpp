#include "lamkit/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace lamkit {

std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {}

Tensor::Tensor(Matrix values, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  node_->tracked = requires_grad;
  if (requires_grad) node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.setZero(rows(), cols());
}

double Tensor::scalar() const {
  if (rows() != 1 || cols() != 1) {
    throw ShapeError("scalar() on " + shape_string(rows(), cols()) + " tensor");
  }
  return node_->value(0, 0);
}

Tensor Tensor::clone() const { return Tensor(node_->value, node_->requires_grad); }

Tensor Tensor::from_node(detail::NodePtr node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor& ParameterStore::add(const std::string& name, Matrix init) {
  auto [it, inserted] = entries_.emplace(name, Tensor(std::move(init), true));
  if (!inserted) throw std::invalid_argument("duplicate parameter name: " + name);
  return it->second;
}

bool ParameterStore::contains(const std::string& name) const { return entries_.count(name) > 0; }

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += static_cast<std::size_t>(t.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

double ParameterStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& [name, t] : entries_) sq += t.grad().squaredNorm();
  return std::sqrt(sq);
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  for (const auto& [name, t] : entries_) out.add(name, t.value());
  return out;
}

void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("backward() needs a 1x1 loss, got " + shape_string(loss.rows(), loss.cols()));
  }
  const detail::NodePtr& root = loss.node();
  if (!root->tracked) return;

  // Iterative post-order DFS; reversed it is a valid reverse-topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->tracked && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (!n->requires_grad) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  }
  root->grad.array() += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  // Interior gradients are scratch space; drop them now.
  for (detail::Node* n : order) {
    if (!n->requires_grad) n->grad.resize(0, 0);
  }
}

void backward(const Tensor& loss, ParameterStore& store) {
  for (auto& [name, t] : store.entries()) {
    if (t.grad().size() == 0) t.mutable_grad() = Matrix::Zero(t.rows(), t.cols());
  }
  backward(loss);
}

}  // namespace lamkit
