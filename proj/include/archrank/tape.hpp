#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "archrank/numerics.hpp"

namespace archrank::num {

using NodeId = std::size_t;

// Reverse-mode differentiation over matrix-valued nodes. Nodes are appended
// in evaluation order, so creation order is a topological order and backward()
// walks it once in reverse. A tape belongs to one thread.
class Tape {
 public:
  // Leaf whose gradient is accumulated by backward().
  NodeId variable(Matrix value);
  // Leaf excluded from differentiation.
  NodeId constant(Matrix value);

  const Matrix& value(NodeId id) const { return nodes_.at(id).value; }
  // Adjoint of a node after backward(); zeros if the node did not influence
  // the output.
  const Matrix& grad(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // x W^T (+ b) then activation; the differentiable twin of forward_fc.
  NodeId linear(NodeId x, NodeId weight, NodeId bias, Activation act = Activation::identity);
  NodeId matmul_transposed(NodeId x, NodeId weight);
  NodeId add_row(NodeId x, NodeId row);
  NodeId activate(NodeId x, Activation act);
  NodeId relu(NodeId x) { return activate(x, Activation::relu); }
  NodeId tanh(NodeId x) { return activate(x, Activation::tanh); }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double factor);
  NodeId add_scalar(NodeId x, double offset);
  // Multiplies every entry of x by the single entry of a 1x1 node.
  NodeId scale_by(NodeId x, NodeId scalar);
  NodeId square(NodeId x);
  NodeId exp(NodeId x);

  NodeId softmax_rows(NodeId x);
  NodeId concat_cols(std::span<const NodeId> parts);
  NodeId concat_cols(NodeId a, NodeId b) {
    const NodeId parts[] = {a, b};
    return concat_cols(parts);
  }
  NodeId slice_cols(NodeId x, std::size_t begin, std::size_t count);
  NodeId reshape(NodeId x, std::size_t rows, std::size_t cols);
  NodeId mean_rows(NodeId x);
  NodeId repeat_rows(NodeId row, std::size_t n);

  NodeId sum(NodeId x);
  NodeId mean(NodeId x);

  // Column vector of x[i] - x[j] for each (i, j), x being an n x 1 node.
  NodeId pair_differences(NodeId x, std::span<const std::pair<std::size_t, std::size_t>> pairs);
  // max(0, margin - x), elementwise.
  NodeId hinge(NodeId x, double margin);
  // Mean negative log-likelihood of a row-wise softmax over logits.
  NodeId softmax_cross_entropy(NodeId logits, std::span<const int> labels);

  // Populates adjoints of every node reachable from a 1x1 output.
  void backward(NodeId output);

 private:
  using BackwardFn = std::function<void(Tape&, NodeId)>;

  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  NodeId push(Matrix value, bool needs_grad, BackwardFn backward);
  Matrix& grad_buffer(NodeId id);
  bool needs(NodeId id) const { return nodes_[id].needs_grad; }
  void check(NodeId id) const;

  std::vector<Node> nodes_;
};

}  // namespace archrank::num
