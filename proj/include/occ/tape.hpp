#pragma once

#include <cstdint>
#include <vector>

#include "occ/tensor.hpp"

namespace occ {

using NodeId = std::size_t;

enum class BnMode { train, eval };

// Per-layer running statistics for batch normalization. Owned by the model,
// updated in place by train-mode forward passes.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
};

enum class OpKind {
  leaf,
  affine,
  relu,
  batch_norm,
  l2_normalize_rows,
  softmax_cross_entropy,
  matmul_nt,
  rowwise_dot,
  concat_cols,
  mask_shifted_diagonal,
  scale,
  add,
  sum_all,
  mean_all,
  inner_with,
};

struct TapeNode {
  OpKind op = OpKind::leaf;
  std::vector<NodeId> inputs;
  Tensor value;
  std::vector<Tensor> saved;   // op-specific activations needed by backward
  std::vector<std::int64_t> iattrs;
  std::vector<double> dattrs;
  BatchNormState* bn_state = nullptr;
  BnMode bn_mode = BnMode::eval;
  bool requires_grad = false;
};

// Ordered record of executed operations. Node creation order is the
// topological order, so one reverse sweep computes exact gradients for every
// recorded tensor. A Tape is confined to one thread.
class Tape {
 public:
  NodeId leaf(Tensor value, bool requires_grad = false);

  // out[b,j] = sum_i x[b,i] * w[i,j] + bias[j]
  NodeId affine(NodeId x, NodeId w, NodeId bias);
  // elementwise max(0, x); subgradient at 0 is 0
  NodeId relu(NodeId x);
  // train mode normalizes by batch statistics (variance floor eps) and decays
  // the running statistics; eval mode normalizes by the running statistics
  NodeId batch_norm(NodeId x, NodeId scale, NodeId shift, BatchNormState* state,
                    BnMode mode, double eps = 1e-5, double decay = 0.9);
  // rows divided by max(||row||, eps_norm)
  NodeId l2_normalize_rows(NodeId x, double eps_norm = 1e-12);
  // mean over batch of -log softmax(logits)[label], log-sum-exp stabilized
  NodeId softmax_cross_entropy(NodeId logits, const std::vector<int>& labels);
  // a [m x k], b [n x k] -> a * b^T [m x n]
  NodeId matmul_nt(NodeId a, NodeId b);
  // out[i,0] = sum_k a[i,k] * b[i,k]
  NodeId rowwise_dot(NodeId a, NodeId b);
  NodeId concat_cols(NodeId a, NodeId b);
  // out = x except out[i, i + col_offset] = fill (treated as constant)
  NodeId mask_shifted_diagonal(NodeId x, std::size_t col_offset, double fill);
  NodeId scale(NodeId x, double c);
  NodeId add(NodeId a, NodeId b);
  NodeId sum_all(NodeId x);
  NodeId mean_all(NodeId x);
  // scalar sum(x * weights), weights constant; seeds `weights` into x on the
  // backward pass (used to compose analytic outer gradients with the tape)
  NodeId inner_with(NodeId x, const Tensor& weights);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  // smallest |x| fed into any relu on this tape (infinity when there is
  // none); lets gradient checks skip kink neighborhoods
  double min_abs_relu_input() const;

  // Reverse sweep from a scalar root. Returns one gradient slot per node;
  // slots of nodes that do not require a gradient stay empty, and
  // grad-requiring nodes unreachable from the root get zeros.
  std::vector<Tensor> backward(NodeId root);

 private:
  NodeId push(TapeNode node, const char* opname);
  const Tensor& in(const TapeNode& n, std::size_t i) const {
    return nodes_[n.inputs[i]].value;
  }
  void backward_node(std::size_t id, std::vector<Tensor>& grads);
  void accumulate(std::vector<Tensor>& grads, NodeId id, const Tensor& g);

  std::vector<TapeNode> nodes_;
};

}  // namespace occ
