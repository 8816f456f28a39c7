#include "archrank/tape.hpp"

#include <cmath>
#include <string>

#include "archrank/eigen_view.hpp"

namespace archrank::num {

NodeId Tape::push(Matrix value, bool needs_grad, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Matrix{}, needs_grad, std::move(backward)});
  return nodes_.size() - 1;
}

void Tape::check(NodeId id) const {
  require(id < nodes_.size(), "tape: unknown node " + std::to_string(id));
}

NodeId Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }

NodeId Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

const Matrix& Tape::grad(NodeId id) const {
  check(id);
  return nodes_[id].grad;
}

Matrix& Tape::grad_buffer(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

NodeId Tape::matmul_transposed(NodeId x, NodeId weight) {
  check(x);
  check(weight);
  const Matrix& xv = value(x);
  const Matrix& wv = value(weight);
  require(xv.cols() == wv.cols(),
          "matmul: input " + shape_string(xv) + " vs weight " + shape_string(wv));
  Matrix out(xv.rows(), wv.rows());
  view(out).noalias() = view(xv) * view(wv).transpose();
  return push(std::move(out), needs(x) || needs(weight), [x, weight](Tape& t, NodeId self) {
    const auto g = view(t.nodes_[self].grad);
    if (t.needs(x)) view(t.grad_buffer(x)).noalias() += g * view(t.value(weight));
    if (t.needs(weight)) view(t.grad_buffer(weight)).noalias() += g.transpose() * view(t.value(x));
  });
}

NodeId Tape::add_row(NodeId x, NodeId row) {
  check(x);
  check(row);
  const Matrix& xv = value(x);
  const Matrix& rv = value(row);
  require(rv.rows() == 1 && rv.cols() == xv.cols(),
          "add_row: row " + shape_string(rv) + " vs " + shape_string(xv));
  Matrix out = xv;
  view(out).rowwise() += view(rv).row(0);
  return push(std::move(out), needs(x) || needs(row), [x, row](Tape& t, NodeId self) {
    const auto g = view(t.nodes_[self].grad);
    if (t.needs(x)) view(t.grad_buffer(x)) += g;
    if (t.needs(row)) view(t.grad_buffer(row)).row(0) += g.colwise().sum();
  });
}

NodeId Tape::activate(NodeId x, Activation act) {
  check(x);
  Matrix out = value(x);
  auto o = view(out);
  switch (act) {
    case Activation::identity: break;
    case Activation::relu: o = o.cwiseMax(0.0); break;
    case Activation::tanh: o = o.array().tanh().matrix(); break;
  }
  return push(std::move(out), needs(x), [x, act](Tape& t, NodeId self) {
    const auto g = view(t.nodes_[self].grad).array();
    const auto y = view(t.nodes_[self].value).array();
    auto gx = view(t.grad_buffer(x)).array();
    switch (act) {
      case Activation::identity: gx += g; break;
      case Activation::relu: gx += (y > 0.0).select(g, 0.0); break;
      case Activation::tanh: gx += g * (1.0 - y * y); break;
    }
  });
}

NodeId Tape::linear(NodeId x, NodeId weight, NodeId bias, Activation act) {
  return activate(add_row(matmul_transposed(x, weight), bias), act);
}

NodeId Tape::add(NodeId a, NodeId b) {
  check(a);
  check(b);
  require(value(a).same_shape(value(b)),
          "add: " + shape_string(value(a)) + " vs " + shape_string(value(b)));
  Matrix out = value(a);
  view(out) += view(value(b));
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, NodeId self) {
    const auto g = view(t.nodes_[self].grad);
    if (t.needs(a)) view(t.grad_buffer(a)) += g;
    if (t.needs(b)) view(t.grad_buffer(b)) += g;
  });
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check(a);
  check(b);
  require(value(a).same_shape(value(b)),
          "sub: " + shape_string(value(a)) + " vs " + shape_string(value(b)));
  Matrix out = value(a);
  view(out) -= view(value(b));
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, NodeId self) {
    const auto g = view(t.nodes_[self].grad);
    if (t.needs(a)) view(t.grad_buffer(a)) += g;
    if (t.needs(b)) view(t.grad_buffer(b)) -= g;
  });
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check(a);
  check(b);
  require(value(a).same_shape(value(b)),
          "mul: " + shape_string(value(a)) + " vs " + shape_string(value(b)));
  Matrix out = value(a);
  view(out).array() *= view(value(b)).array();
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, NodeId self) {
    const auto g = view(t.nodes_[self].grad).array();
    if (t.needs(a)) view(t.grad_buffer(a)).array() += g * view(t.value(b)).array();
    if (t.needs(b)) view(t.grad_buffer(b)).array() += g * view(t.value(a)).array();
  });
}

NodeId Tape::scale(NodeId x, double factor) {
  check(x);
  Matrix out = value(x);
  view(out) *= factor;
  return push(std::move(out), needs(x), [x, factor](Tape& t, NodeId self) {
    view(t.grad_buffer(x)) += factor * view(t.nodes_[self].grad);
  });
}

NodeId Tape::add_scalar(NodeId x, double offset) {
  check(x);
  Matrix out = value(x);
  view(out).array() += offset;
  return push(std::move(out), needs(x), [x](Tape& t, NodeId self) {
    view(t.grad_buffer(x)) += view(t.nodes_[self].grad);
  });
}

NodeId Tape::scale_by(NodeId x, NodeId scalar) {
  check(x);
  check(scalar);
  require(value(scalar).size() == 1, "scale_by: factor must be 1x1, got " +
                                         shape_string(value(scalar)));
  const double s = value(scalar)[0];
  Matrix out = value(x);
  view(out) *= s;
  return push(std::move(out), needs(x) || needs(scalar), [x, scalar](Tape& t, NodeId self) {
    const auto g = view(t.nodes_[self].grad);
    if (t.needs(x)) view(t.grad_buffer(x)) += t.value(scalar)[0] * g;
    if (t.needs(scalar)) {
      t.grad_buffer(scalar)[0] += (g.array() * view(t.value(x)).array()).sum();
    }
  });
}

NodeId Tape::square(NodeId x) {
  check(x);
  Matrix out = value(x);
  view(out).array() = view(out).array().square();
  return push(std::move(out), needs(x), [x](Tape& t, NodeId self) {
    view(t.grad_buffer(x)).array() +=
        2.0 * view(t.value(x)).array() * view(t.nodes_[self].grad).array();
  });
}

NodeId Tape::exp(NodeId x) {
  check(x);
  Matrix out = value(x);
  view(out).array() = view(out).array().exp();
  return push(std::move(out), needs(x), [x](Tape& t, NodeId self) {
    view(t.grad_buffer(x)).array() +=
        view(t.nodes_[self].value).array() * view(t.nodes_[self].grad).array();
  });
}

NodeId Tape::softmax_rows(NodeId x) {
  check(x);
  require(value(x).cols() > 0, "softmax of an empty vector");
  Matrix out = num::softmax_rows(value(x));
  return push(std::move(out), needs(x), [x](Tape& t, NodeId self) {
    const auto y = view(t.nodes_[self].value);
    const auto g = view(t.nodes_[self].grad);
    auto gx = view(t.grad_buffer(x));
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double inner = y.row(r).dot(g.row(r));
      gx.row(r).array() += y.row(r).array() * (g.row(r).array() - inner);
    }
  });
}

NodeId Tape::concat_cols(std::span<const NodeId> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  bool any = false;
  for (NodeId p : parts) {
    check(p);
    require(value(p).rows() == rows, "concat_cols: row counts differ");
    cols += value(p).cols();
    any = any || needs(p);
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (NodeId p : parts) {
    const Matrix& v = value(p);
    view(out).middleCols(offset, v.cols()) = view(v);
    offset += v.cols();
  }
  std::vector<NodeId> inputs(parts.begin(), parts.end());
  return push(std::move(out), any, [inputs = std::move(inputs)](Tape& t, NodeId self) {
    const auto g = view(t.nodes_[self].grad);
    std::size_t off = 0;
    for (NodeId p : inputs) {
      const auto width = static_cast<Eigen::Index>(t.value(p).cols());
      if (t.needs(p)) view(t.grad_buffer(p)) += g.middleCols(off, width);
      off += width;
    }
  });
}

NodeId Tape::slice_cols(NodeId x, std::size_t begin, std::size_t count) {
  check(x);
  require(begin + count <= value(x).cols(), "slice_cols: range past end of " +
                                                shape_string(value(x)));
  Matrix out(value(x).rows(), count);
  view(out) = view(value(x)).middleCols(begin, count);
  return push(std::move(out), needs(x), [x, begin, count](Tape& t, NodeId self) {
    view(t.grad_buffer(x)).middleCols(begin, count) += view(t.nodes_[self].grad);
  });
}

NodeId Tape::reshape(NodeId x, std::size_t rows, std::size_t cols) {
  check(x);
  require(rows * cols == value(x).size(), "reshape: size mismatch");
  Matrix out(rows, cols, value(x).data());
  return push(std::move(out), needs(x), [x](Tape& t, NodeId self) {
    Matrix& gx = t.grad_buffer(x);
    const Matrix& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

NodeId Tape::mean_rows(NodeId x) {
  check(x);
  const Matrix& xv = value(x);
  require(xv.rows() > 0, "mean_rows: empty batch");
  Matrix out(1, xv.cols());
  view(out).row(0) = view(xv).colwise().mean();
  return push(std::move(out), needs(x), [x](Tape& t, NodeId self) {
    auto gx = view(t.grad_buffer(x));
    const double inv = 1.0 / static_cast<double>(gx.rows());
    gx.rowwise() += inv * view(t.nodes_[self].grad).row(0);
  });
}

NodeId Tape::repeat_rows(NodeId row, std::size_t n) {
  check(row);
  require(value(row).rows() == 1, "repeat_rows: input must be a single row");
  Matrix out(n, value(row).cols());
  view(out).rowwise() = view(value(row)).row(0);
  return push(std::move(out), needs(row), [row](Tape& t, NodeId self) {
    view(t.grad_buffer(row)).row(0) += view(t.nodes_[self].grad).colwise().sum();
  });
}

NodeId Tape::sum(NodeId x) {
  check(x);
  Matrix out(1, 1, view(value(x)).sum());
  return push(std::move(out), needs(x), [x](Tape& t, NodeId self) {
    view(t.grad_buffer(x)).array() += t.nodes_[self].grad[0];
  });
}

NodeId Tape::mean(NodeId x) {
  check(x);
  require(value(x).size() > 0, "mean of an empty node");
  return scale(sum(x), 1.0 / static_cast<double>(value(x).size()));
}

NodeId Tape::pair_differences(NodeId x,
                              std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  check(x);
  const Matrix& xv = value(x);
  require(xv.cols() == 1, "pair_differences: expects a column vector");
  Matrix out(pairs.size(), 1);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    require(i < xv.rows() && j < xv.rows(), "pair_differences: index out of range");
    out[k] = xv[i] - xv[j];
  }
  std::vector<std::pair<std::size_t, std::size_t>> idx(pairs.begin(), pairs.end());
  return push(std::move(out), needs(x), [x, idx = std::move(idx)](Tape& t, NodeId self) {
    Matrix& gx = t.grad_buffer(x);
    const Matrix& g = t.nodes_[self].grad;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      gx[idx[k].first] += g[k];
      gx[idx[k].second] -= g[k];
    }
  });
}

NodeId Tape::hinge(NodeId x, double margin) {
  return relu(add_scalar(scale(x, -1.0), margin));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::span<const int> labels) {
  check(logits);
  const Matrix& lv = value(logits);
  require(labels.size() == lv.rows(), "softmax_cross_entropy: label count mismatch");
  Matrix probs = num::softmax_rows(lv);
  double loss = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    require(labels[r] >= 0 && static_cast<std::size_t>(labels[r]) < lv.cols(),
            "softmax_cross_entropy: label out of range");
    loss -= std::log(std::max(probs(r, labels[r]), 1e-300));
  }
  loss /= static_cast<double>(lv.rows());
  std::vector<int> y(labels.begin(), labels.end());
  return push(Matrix(1, 1, loss), needs(logits),
              [logits, probs = std::move(probs), y = std::move(y)](Tape& t, NodeId self) {
                Matrix& gx = t.grad_buffer(logits);
                const double g = t.nodes_[self].grad[0] / static_cast<double>(y.size());
                for (std::size_t r = 0; r < probs.rows(); ++r) {
                  for (std::size_t c = 0; c < probs.cols(); ++c) {
                    const double target = static_cast<int>(c) == y[r] ? 1.0 : 0.0;
                    gx(r, c) += g * (probs(r, c) - target);
                  }
                }
              });
}

void Tape::backward(NodeId output) {
  check(output);
  require(value(output).size() == 1, "backward: output must be scalar, got " +
                                         shape_string(value(output)));
  for (Node& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
  nodes_[output].grad[0] = 1.0;
  for (NodeId id = output + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.needs_grad && n.backward) n.backward(*this, id);
  }
}

}  // namespace archrank::num
