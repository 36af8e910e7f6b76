#include "lamkit/ops.hpp"

#include <cmath>
#include <numbers>

namespace lamkit {
namespace {

using detail::Node;

template <typename Fn>
Tensor make_op(Matrix value, std::initializer_list<Tensor> inputs, Fn&& fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Tensor& in : inputs) node->tracked = node->tracked || in.tracked();
  if (node->tracked) {
    for (const Tensor& in : inputs) node->parents.push_back(in.node());
    node->backward = std::forward<Fn>(fn);
  }
  return Tensor::from_node(std::move(node));
}

template <typename Fn>
Tensor make_op(Matrix value, const std::vector<Tensor>& inputs, Fn&& fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Tensor& in : inputs) node->tracked = node->tracked || in.tracked();
  if (node->tracked) {
    for (const Tensor& in : inputs) node->parents.push_back(in.node());
    node->backward = std::forward<Fn>(fn);
  }
  return Tensor::from_node(std::move(node));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.rows(), a.cols()) +
                     " vs " + shape_string(b.rows(), b.cols()));
  }
}

void require_row(const char* op, const Tensor& row, Index cols) {
  if (row.rows() != 1 || row.cols() != cols) {
    throw ShapeError(std::string(op) + ": expected 1x" + std::to_string(cols) + " row, got " +
                     shape_string(row.rows(), row.cols()));
  }
}

void require_ranges(const char* op, const std::vector<RowRange>& ranges, Index rows) {
  for (const RowRange& r : ranges) {
    if (r.begin < 0 || r.length < 1 || r.end() > rows) {
      throw ShapeError(std::string(op) + ": row range [" + std::to_string(r.begin) + ", " +
                       std::to_string(r.end()) + ") invalid for " + std::to_string(rows) + " rows");
    }
  }
}

constexpr double kMaskedLogit = -1e30;

}  // namespace

SequenceLayout single_sequence(Index rows) { return {RowRange{0, rows}}; }

SequenceLayout uniform_blocks(Index blocks, Index block_rows) {
  SequenceLayout layout;
  layout.reserve(static_cast<std::size_t>(blocks));
  for (Index b = 0; b < blocks; ++b) layout.push_back({b * block_rows, block_rows});
  return layout;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_string(a.rows(), a.cols()) + " x " +
                     shape_string(b.rows(), b.cols()));
  }
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.tracked) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.tracked) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(-self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.tracked) pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (pb.tracked) pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Tensor scale(const Tensor& a, double factor) {
  return make_op(a.value() * factor, {a},
                 [factor](Node& self) { self.parents[0]->accumulate(self.grad * factor); });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_row("add_row", row, a.cols());
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->tracked) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.cols() != weight.rows()) {
    throw ShapeError("linear: shape mismatch " + shape_string(x.rows(), x.cols()) + " x " +
                     shape_string(weight.rows(), weight.cols()));
  }
  require_row("linear", bias, weight.cols());
  Matrix out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return make_op(std::move(out), {x, weight, bias}, [](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    if (px.tracked) px.accumulate(self.grad * pw.value.transpose());
    if (pw.tracked) pw.accumulate(px.value.transpose() * self.grad);
    if (pb.tracked) pb.accumulate(self.grad.colwise().sum());
  });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor softmax_rows(const Tensor& x) {
  if (x.cols() < 1) throw ShapeError("softmax_rows: no columns");
  Matrix y = x.value();
  for (Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return make_op(std::move(y), {x}, [](Node& self) {
    const Matrix& y = self.value;
    const Eigen::VectorXd dot = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix gx = y.cwiseProduct((self.grad.colwise() - dot));
    self.parents[0]->accumulate(gx);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_row("layer_norm gain", gain, x.cols());
  require_row("layer_norm bias", bias, x.cols());
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const Index rows = x.rows();
  const Index cols = x.cols();
  Matrix xhat(rows, cols);
  Eigen::VectorXd rstd(rows);
  for (Index r = 0; r < rows; ++r) {
    const double mu = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mu).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * rstd(r);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return make_op(std::move(out), {x, gain, bias},
                 [xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pg = *self.parents[1];
                   Node& pb = *self.parents[2];
                   const Matrix& g = self.grad;
                   if (pg.tracked) pg.accumulate(g.cwiseProduct(xhat).colwise().sum());
                   if (pb.tracked) pb.accumulate(g.colwise().sum());
                   if (px.tracked) {
                     Matrix dxhat = g.array().rowwise() * pg.value.row(0).array();
                     const Eigen::VectorXd m1 = dxhat.rowwise().mean();
                     const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                     Matrix dx(dxhat.rows(), dxhat.cols());
                     for (Index r = 0; r < dx.rows(); ++r) {
                       dx.row(r) = rstd(r) * (dxhat.row(r).array() - m1(r) -
                                              xhat.row(r).array() * m2(r))
                                                 .matrix();
                     }
                     px.accumulate(dx);
                   }
                 });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Tensor activation(const Tensor& x, Activation kind) {
  if (kind == Activation::kRelu) {
    Matrix out = x.value().cwiseMax(0.0);
    return make_op(std::move(out), {x}, [](Node& self) {
      Node& p = *self.parents[0];
      p.accumulate((p.value.array() > 0.0).select(self.grad, 0.0));
    });
  }
  Matrix out = x.value().unaryExpr([](double v) { return gelu_value(v); });
  return make_op(std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = p.value.unaryExpr([inv_sqrt_2pi](double v) {
      return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    p.accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = uniform01(rng) < rate ? 0.0 : keep_scale;
  }
  Matrix out = x.value().cwiseProduct(mask);
  return make_op(std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    self.parents[0]->accumulate(self.grad.cwiseProduct(mask));
  });
}

Tensor gather_rows(const Tensor& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(rows[i]) + " out of range for " +
                       std::to_string(x.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = x.value().row(rows[i]);
  }
  return make_op(std::move(out), {x}, [rows](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += self.grad.row(static_cast<Index>(i));
    p.accumulate(g);
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Tensor& t : parts) {
    if (t.cols() != cols) {
      throw ShapeError("concat_rows: column mismatch " + std::to_string(cols) + " vs " +
                       std::to_string(t.cols()));
    }
    rows += t.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Tensor& t : parts) {
    out.middleRows(at, t.rows()) = t.value();
    at += t.rows();
  }
  return make_op(std::move(out), parts, [](Node& self) {
    Index at = 0;
    for (const auto& p : self.parents) {
      const Index r = p->value.rows();
      if (p->tracked) p->accumulate(self.grad.middleRows(at, r));
      at += r;
    }
  });
}

Tensor range_max(const Tensor& x, const std::vector<RowRange>& ranges) {
  require_ranges("range_max", ranges, x.rows());
  const Index cols = x.cols();
  Matrix out(static_cast<Index>(ranges.size()), cols);
  std::vector<Index> argmax(ranges.size() * static_cast<std::size_t>(cols));
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    for (Index c = 0; c < cols; ++c) {
      Index best = ranges[i].begin;
      for (Index r = ranges[i].begin + 1; r < ranges[i].end(); ++r) {
        if (x.value()(r, c) > x.value()(best, c)) best = r;
      }
      argmax[i * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)] = best;
      out(static_cast<Index>(i), c) = x.value()(best, c);
    }
  }
  return make_op(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    Node& p = *self.parents[0];
    const Index cols = p.value.cols();
    Matrix g = Matrix::Zero(p.value.rows(), cols);
    for (Index i = 0; i < self.grad.rows(); ++i) {
      for (Index c = 0; c < cols; ++c) g(argmax[static_cast<std::size_t>(i * cols + c)], c) += self.grad(i, c);
    }
    p.accumulate(g);
  });
}

Tensor range_mean(const Tensor& x, const std::vector<RowRange>& ranges) {
  require_ranges("range_mean", ranges, x.rows());
  Matrix out(static_cast<Index>(ranges.size()), x.cols());
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    out.row(static_cast<Index>(i)) = x.value().middleRows(ranges[i].begin, ranges[i].length).colwise().mean();
  }
  return make_op(std::move(out), {x}, [ranges](Node& self) {
    Node& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < ranges.size(); ++i) {
      const RowVector share = self.grad.row(static_cast<Index>(i)) / static_cast<double>(ranges[i].length);
      g.middleRows(ranges[i].begin, ranges[i].length).rowwise() += share;
    }
    p.accumulate(g);
  });
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, Index heads,
                      const SequenceLayout& layout, const std::vector<bool>& mask) {
  require_same_shape("attention_core q/k", q, k);
  require_same_shape("attention_core q/v", q, v);
  if (heads < 1 || q.cols() % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(q.cols()) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (static_cast<Index>(mask.size()) != q.rows()) {
    throw ShapeError("attention: mask length " + std::to_string(mask.size()) + " != rows " +
                     std::to_string(q.rows()));
  }
  require_ranges("attention", layout, q.rows());

  const Index dh = q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix out = Matrix::Zero(q.rows(), q.cols());
  std::vector<Matrix> probs;
  probs.reserve(layout.size() * static_cast<std::size_t>(heads));

  for (const RowRange& blk : layout) {
    for (Index h = 0; h < heads; ++h) {
      const auto qb = q.value().block(blk.begin, h * dh, blk.length, dh);
      const auto kb = k.value().block(blk.begin, h * dh, blk.length, dh);
      const auto vb = v.value().block(blk.begin, h * dh, blk.length, dh);
      Matrix s = (qb * kb.transpose()) * inv_sqrt;
      for (Index j = 0; j < blk.length; ++j) {
        if (!mask[static_cast<std::size_t>(blk.begin + j)]) s.col(j).setConstant(kMaskedLogit);
      }
      for (Index i = 0; i < blk.length; ++i) {
        const double m = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - m).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      Matrix o = s * vb;
      for (Index i = 0; i < blk.length; ++i) {
        if (!mask[static_cast<std::size_t>(blk.begin + i)]) o.row(i).setZero();
      }
      out.block(blk.begin, h * dh, blk.length, dh) = o;
      probs.push_back(std::move(s));
    }
  }

  return make_op(std::move(out), {q, k, v},
                 [probs = std::move(probs), layout, mask, heads, dh, inv_sqrt](Node& self) {
                   Node& pq = *self.parents[0];
                   Node& pk = *self.parents[1];
                   Node& pv = *self.parents[2];
                   Matrix gq = Matrix::Zero(pq.value.rows(), pq.value.cols());
                   Matrix gk = Matrix::Zero(gq.rows(), gq.cols());
                   Matrix gv = Matrix::Zero(gq.rows(), gq.cols());
                   std::size_t at = 0;
                   for (const RowRange& blk : layout) {
                     for (Index h = 0; h < heads; ++h, ++at) {
                       const Matrix& p = probs[at];
                       Matrix dout = self.grad.block(blk.begin, h * dh, blk.length, dh);
                       for (Index i = 0; i < blk.length; ++i) {
                         if (!mask[static_cast<std::size_t>(blk.begin + i)]) dout.row(i).setZero();
                       }
                       const auto qb = pq.value.block(blk.begin, h * dh, blk.length, dh);
                       const auto kb = pk.value.block(blk.begin, h * dh, blk.length, dh);
                       const auto vb = pv.value.block(blk.begin, h * dh, blk.length, dh);
                       gv.block(blk.begin, h * dh, blk.length, dh) += p.transpose() * dout;
                       const Matrix dp = dout * vb.transpose();
                       const Eigen::VectorXd dot = dp.cwiseProduct(p).rowwise().sum();
                       const Matrix ds = p.cwiseProduct(dp.colwise() - dot) * inv_sqrt;
                       gq.block(blk.begin, h * dh, blk.length, dh) += ds * kb;
                       gk.block(blk.begin, h * dh, blk.length, dh) += ds.transpose() * qb;
                     }
                   }
                   pq.accumulate(gq);
                   pk.accumulate(gk);
                   pv.accumulate(gv);
                 });
}

Tensor multi_head_attention(const Tensor& x, const AttentionWeights& w, Index heads,
                            const std::vector<bool>& mask, const SequenceLayout& layout) {
  if (heads < 1 || x.cols() % heads != 0) {
    throw ShapeError("multi_head_attention: width " + std::to_string(x.cols()) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  Tensor q = linear(x, w.wq, w.bq);
  Tensor k = linear(x, w.wk, w.bk);
  Tensor v = linear(x, w.wv, w.bv);
  Tensor ctx = attention_core(q, k, v, heads, layout, mask);
  return linear(ctx, w.wo, w.bo);
}

Tensor multi_head_attention(const Tensor& x, const AttentionWeights& w, Index heads,
                            const std::vector<bool>& mask) {
  return multi_head_attention(x, w, heads, mask, single_sequence(x.rows()));
}

Tensor softmax_cross_entropy(const Tensor& logits, const Matrix& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw ShapeError("softmax_cross_entropy: targets " + shape_string(targets.rows(), targets.cols()) +
                     " vs logits " + shape_string(logits.rows(), logits.cols()));
  }
  const Index rows = logits.rows();
  if (rows == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  Matrix probs(rows, logits.cols());
  double total = 0.0;
  for (Index r = 0; r < rows; ++r) {
    const double m = logits.value().row(r).maxCoeff();
    const double lse = m + std::log((logits.value().row(r).array() - m).exp().sum());
    probs.row(r) = (logits.value().row(r).array() - lse).exp().matrix();
    total -= targets.row(r).dot((logits.value().row(r).array() - lse).matrix());
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(rows);
  return make_op(std::move(out), {logits}, [probs = std::move(probs), targets](Node& self) {
    const double g = self.grad(0, 0) / static_cast<double>(targets.rows());
    const Eigen::VectorXd mass = targets.rowwise().sum();
    Matrix d = (probs.array().colwise() * mass.array()).matrix() - targets;
    self.parents[0]->accumulate(d * g);
  });
}

Tensor sigmoid_binary_cross_entropy(const Tensor& logits, const Matrix& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw ShapeError("sigmoid_binary_cross_entropy: targets " +
                     shape_string(targets.rows(), targets.cols()) + " vs logits " +
                     shape_string(logits.rows(), logits.cols()));
  }
  if (logits.size() == 0) throw ShapeError("sigmoid_binary_cross_entropy: empty batch");
  const auto& z = logits.value().array();
  const auto per = z.max(0.0) - z * targets.array() + (-z.abs()).exp().log1p();
  Matrix out(1, 1);
  out(0, 0) = per.sum() / static_cast<double>(logits.size());
  return make_op(std::move(out), {logits}, [targets](Node& self) {
    Node& p = *self.parents[0];
    const double g = self.grad(0, 0) / static_cast<double>(p.value.size());
    Matrix sig = p.value.unaryExpr([](double v) {
      return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
    p.accumulate((sig - targets) * g);
  });
}

}  // namespace lamkit
