#include "occ/tape.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <stdexcept>
#include <string>

namespace occ {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Dtype out_dtype(const Tensor& a) { return a.dtype(); }

Dtype out_dtype(const Tensor& a, const Tensor& b) {
  return (a.dtype() == Dtype::f32 && b.dtype() == Dtype::f32) ? Dtype::f32 : Dtype::f64;
}

Dtype out_dtype(const Tensor& a, const Tensor& b, const Tensor& c) {
  return (a.dtype() == Dtype::f32 && b.dtype() == Dtype::f32 && c.dtype() == Dtype::f32)
             ? Dtype::f32
             : Dtype::f64;
}

}  // namespace

NodeId Tape::push(TapeNode node, const char* opname) {
  node.value.quantize();
  node.value.check_finite(opname);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
  TapeNode n;
  n.op = OpKind::leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n), "leaf");
}

NodeId Tape::affine(NodeId x, NodeId w, NodeId bias) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor& bv = nodes_[bias].value;
  require(xv.rank() == 2 && wv.rank() == 2 && bv.rank() == 1,
          "affine: expected x[b x in], w[in x out], bias[out]");
  require(xv.cols() == wv.rows(),
          "affine: inner dimensions disagree, x " + xv.shape_str() + " vs w " + wv.shape_str());
  require(bv.size() == wv.cols(), "affine: bias length does not match w columns");

  std::size_t b = xv.rows(), in = xv.cols(), out = wv.cols();
  Tensor y({b, out}, out_dtype(xv, wv, bv));
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < out; ++j) {
      double acc = bv[j];
      for (std::size_t i = 0; i < in; ++i) acc += xv.at(r, i) * wv.at(i, j);
      y.at(r, j) = acc;
    }
  }
  TapeNode n;
  n.op = OpKind::affine;
  n.inputs = {x, w, bias};
  n.value = std::move(y);
  n.requires_grad = nodes_[x].requires_grad || nodes_[w].requires_grad || nodes_[bias].requires_grad;
  return push(std::move(n), "affine");
}

NodeId Tape::relu(NodeId x) {
  const Tensor& xv = nodes_[x].value;
  Tensor y(xv.shape(), out_dtype(xv));
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  TapeNode n;
  n.op = OpKind::relu;
  n.inputs = {x};
  n.value = std::move(y);
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n), "relu");
}

NodeId Tape::batch_norm(NodeId x, NodeId scale, NodeId shift, BatchNormState* state,
                        BnMode mode, double eps, double decay) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& gv = nodes_[scale].value;
  const Tensor& bv = nodes_[shift].value;
  require(xv.rank() == 2, "batch_norm: expected x[b x d]");
  std::size_t b = xv.rows(), d = xv.cols();
  require(gv.size() == d && bv.size() == d, "batch_norm: scale/shift length mismatch");
  require(state != nullptr, "batch_norm: missing running state");
  require(state->running_mean.size() == d && state->running_var.size() == d,
          "batch_norm: running state length mismatch");
  if (mode == BnMode::train)
    require(b >= 2, "batch_norm: train mode requires batch >= 2");

  // the floor (rather than an additive shift) keeps normalized variance
  // exactly 1 away from the degenerate constant-column case
  Tensor y({b, d}, out_dtype(xv, gv, bv));
  Tensor xhat({b, d});
  Tensor inv_std({d});
  Tensor var_active({d});  // 1 when batch variance exceeded the floor
  if (mode == BnMode::train) {
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t r = 0; r < b; ++r) mean += xv.at(r, j);
      mean /= static_cast<double>(b);
      double var = 0.0;
      for (std::size_t r = 0; r < b; ++r) {
        double c = xv.at(r, j) - mean;
        var += c * c;
      }
      var /= static_cast<double>(b);
      bool active = var > eps;
      var_active[j] = active ? 1.0 : 0.0;
      double is = 1.0 / std::sqrt(active ? var : eps);
      inv_std[j] = is;
      for (std::size_t r = 0; r < b; ++r) {
        double xh = (xv.at(r, j) - mean) * is;
        xhat.at(r, j) = xh;
        y.at(r, j) = gv[j] * xh + bv[j];
      }
      state->running_mean[j] = decay * state->running_mean[j] + (1.0 - decay) * mean;
      state->running_var[j] = decay * state->running_var[j] + (1.0 - decay) * var;
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      double rv = state->running_var[j];
      var_active[j] = 0.0;  // eval mode treats the statistics as constants
      double is = 1.0 / std::sqrt(rv > eps ? rv : eps);
      inv_std[j] = is;
      for (std::size_t r = 0; r < b; ++r) {
        double xh = (xv.at(r, j) - state->running_mean[j]) * is;
        xhat.at(r, j) = xh;
        y.at(r, j) = gv[j] * xh + bv[j];
      }
    }
  }
  TapeNode n;
  n.op = OpKind::batch_norm;
  n.inputs = {x, scale, shift};
  n.value = std::move(y);
  n.saved = {std::move(xhat), std::move(inv_std), std::move(var_active)};
  n.bn_state = state;
  n.bn_mode = mode;
  n.requires_grad =
      nodes_[x].requires_grad || nodes_[scale].requires_grad || nodes_[shift].requires_grad;
  return push(std::move(n), "batch_norm");
}

NodeId Tape::l2_normalize_rows(NodeId x, double eps_norm) {
  const Tensor& xv = nodes_[x].value;
  require(xv.rank() == 2, "l2_normalize_rows: expected x[b x d]");
  std::size_t b = xv.rows(), d = xv.cols();
  Tensor y({b, d}, out_dtype(xv));
  Tensor denom({b});
  Tensor normalized_flag({b});
  for (std::size_t r = 0; r < b; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += xv.at(r, j) * xv.at(r, j);
    double norm = std::sqrt(s);
    bool active = norm >= eps_norm;
    double dn = active ? norm : eps_norm;
    denom[r] = dn;
    normalized_flag[r] = active ? 1.0 : 0.0;
    for (std::size_t j = 0; j < d; ++j) y.at(r, j) = xv.at(r, j) / dn;
  }
  TapeNode n;
  n.op = OpKind::l2_normalize_rows;
  n.inputs = {x};
  n.value = std::move(y);
  n.saved = {std::move(denom), std::move(normalized_flag)};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n), "l2_normalize_rows");
}

NodeId Tape::softmax_cross_entropy(NodeId logits, const std::vector<int>& labels) {
  const Tensor& lv = nodes_[logits].value;
  require(lv.rank() == 2, "softmax_cross_entropy: expected logits[b x k]");
  std::size_t b = lv.rows(), k = lv.cols();
  require(labels.size() == b, "softmax_cross_entropy: label count does not match batch");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < k,
            "softmax_cross_entropy: label " + std::to_string(y) + " out of range [0," +
                std::to_string(k) + ")");

  Tensor probs({b, k});
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    double m = lv.at(r, 0);
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, lv.at(r, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(lv.at(r, j) - m);
    double lse = m + std::log(sum);
    for (std::size_t j = 0; j < k; ++j) probs.at(r, j) = std::exp(lv.at(r, j) - lse);
    total += lse - lv.at(r, static_cast<std::size_t>(labels[r]));
  }
  TapeNode n;
  n.op = OpKind::softmax_cross_entropy;
  n.inputs = {logits};
  n.value = Tensor({1}, {total / static_cast<double>(b)}, out_dtype(lv));
  n.saved = {std::move(probs)};
  n.iattrs.assign(labels.begin(), labels.end());
  n.requires_grad = nodes_[logits].requires_grad;
  return push(std::move(n), "softmax_cross_entropy");
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(),
          "matmul_nt: expected a[m x k], b[n x k], got " + av.shape_str() + " and " +
              bv.shape_str());
  std::size_t m = av.rows(), nn = bv.rows(), k = av.cols();
  Tensor y({m, nn}, out_dtype(av, bv));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < nn; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += av.at(i, t) * bv.at(j, t);
      y.at(i, j) = acc;
    }
  TapeNode n;
  n.op = OpKind::matmul_nt;
  n.inputs = {a, b};
  n.value = std::move(y);
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n), "matmul_nt");
}

NodeId Tape::rowwise_dot(NodeId a, NodeId b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  require(av.rank() == 2 && av.same_shape(bv),
          "rowwise_dot: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  std::size_t m = av.rows(), k = av.cols();
  Tensor y({m, 1}, out_dtype(av, bv));
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < k; ++t) acc += av.at(i, t) * bv.at(i, t);
    y.at(i, 0) = acc;
  }
  TapeNode n;
  n.op = OpKind::rowwise_dot;
  n.inputs = {a, b};
  n.value = std::move(y);
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n), "rowwise_dot");
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  require(av.rank() == 2 && bv.rank() == 2 && av.rows() == bv.rows(),
          "concat_cols: row counts differ");
  std::size_t m = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor y({m, ca + cb}, out_dtype(av, bv));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < ca; ++j) y.at(i, j) = av.at(i, j);
    for (std::size_t j = 0; j < cb; ++j) y.at(i, ca + j) = bv.at(i, j);
  }
  TapeNode n;
  n.op = OpKind::concat_cols;
  n.inputs = {a, b};
  n.value = std::move(y);
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n), "concat_cols");
}

NodeId Tape::mask_shifted_diagonal(NodeId x, std::size_t col_offset, double fill) {
  const Tensor& xv = nodes_[x].value;
  require(xv.rank() == 2, "mask_shifted_diagonal: expected matrix");
  Tensor y = xv;
  std::size_t m = xv.rows(), c = xv.cols();
  for (std::size_t i = 0; i < m; ++i)
    if (i + col_offset < c) y.at(i, i + col_offset) = fill;
  TapeNode n;
  n.op = OpKind::mask_shifted_diagonal;
  n.inputs = {x};
  n.value = std::move(y);
  n.iattrs = {static_cast<std::int64_t>(col_offset)};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n), "mask_shifted_diagonal");
}

NodeId Tape::scale(NodeId x, double c) {
  const Tensor& xv = nodes_[x].value;
  Tensor y(xv.shape(), out_dtype(xv));
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = c * xv[i];
  TapeNode n;
  n.op = OpKind::scale;
  n.inputs = {x};
  n.value = std::move(y);
  n.dattrs = {c};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n), "scale");
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  require(av.same_shape(bv), "add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor y(av.shape(), out_dtype(av, bv));
  for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
  TapeNode n;
  n.op = OpKind::add;
  n.inputs = {a, b};
  n.value = std::move(y);
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n), "add");
}

NodeId Tape::sum_all(NodeId x) {
  const Tensor& xv = nodes_[x].value;
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  TapeNode n;
  n.op = OpKind::sum_all;
  n.inputs = {x};
  n.value = Tensor({1}, {acc}, out_dtype(xv));
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n), "sum_all");
}

NodeId Tape::mean_all(NodeId x) {
  const Tensor& xv = nodes_[x].value;
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  TapeNode n;
  n.op = OpKind::mean_all;
  n.inputs = {x};
  n.value = Tensor({1}, {acc / static_cast<double>(xv.size())}, out_dtype(xv));
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n), "mean_all");
}

NodeId Tape::inner_with(NodeId x, const Tensor& weights) {
  const Tensor& xv = nodes_[x].value;
  require(xv.same_shape(weights), "inner_with: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * weights[i];
  TapeNode n;
  n.op = OpKind::inner_with;
  n.inputs = {x};
  n.value = Tensor({1}, {acc}, out_dtype(xv));
  n.saved = {weights};
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n), "inner_with");
}

double Tape::min_abs_relu_input() const {
  double best = std::numeric_limits<double>::infinity();
  for (const TapeNode& n : nodes_) {
    if (n.op != OpKind::relu) continue;
    const Tensor& x = nodes_[n.inputs[0]].value;
    for (std::size_t i = 0; i < x.size(); ++i) best = std::min(best, std::abs(x[i]));
  }
  return best;
}

void Tape::accumulate(std::vector<Tensor>& grads, NodeId id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  if (grads[id].size() == 0) {
    grads[id] = g;
    grads[id].quantize();
    return;
  }
  Tensor& acc = grads[id];
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  acc.quantize();
}

std::vector<Tensor> Tape::backward(NodeId root) {
  require(root < nodes_.size(), "backward: invalid root node");
  require(nodes_[root].value.size() == 1, "backward: root must be a scalar");

  std::vector<Tensor> grads(nodes_.size());
  Tensor seed({1}, {1.0}, nodes_[root].value.dtype());
  grads[root] = seed;
  if (!nodes_[root].requires_grad) {
    // no differentiable inputs anywhere below the root
    grads[root] = Tensor();
  } else {
    for (std::size_t id = root + 1; id-- > 0;) {
      if (!nodes_[id].requires_grad || grads[id].size() == 0) continue;
      backward_node(id, grads);
    }
  }
  // zero-fill grad-requiring leaves that the root never touched
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].requires_grad && grads[id].size() == 0)
      grads[id] = Tensor::zeros(nodes_[id].value.shape(), nodes_[id].value.dtype());
  }
  return grads;
}

void Tape::backward_node(std::size_t id, std::vector<Tensor>& grads) {
  const TapeNode& n = nodes_[id];
  const Tensor& go = grads[id];
  switch (n.op) {
    case OpKind::leaf:
      break;
    case OpKind::affine: {
      const Tensor& xv = in(n, 0);
      const Tensor& wv = in(n, 1);
      std::size_t b = xv.rows(), ind = xv.cols(), out = wv.cols();
      if (nodes_[n.inputs[0]].requires_grad) {
        Tensor gx({b, ind});
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t i = 0; i < ind; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < out; ++j) acc += go.at(r, j) * wv.at(i, j);
            gx.at(r, i) = acc;
          }
        accumulate(grads, n.inputs[0], gx);
      }
      if (nodes_[n.inputs[1]].requires_grad) {
        Tensor gw({ind, out});
        for (std::size_t i = 0; i < ind; ++i)
          for (std::size_t j = 0; j < out; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < b; ++r) acc += xv.at(r, i) * go.at(r, j);
            gw.at(i, j) = acc;
          }
        accumulate(grads, n.inputs[1], gw);
      }
      if (nodes_[n.inputs[2]].requires_grad) {
        Tensor gb({out});
        for (std::size_t j = 0; j < out; ++j) {
          double acc = 0.0;
          for (std::size_t r = 0; r < b; ++r) acc += go.at(r, j);
          gb[j] = acc;
        }
        accumulate(grads, n.inputs[2], gb);
      }
      break;
    }
    case OpKind::relu: {
      const Tensor& xv = in(n, 0);
      Tensor gx(xv.shape());
      for (std::size_t i = 0; i < xv.size(); ++i) gx[i] = xv[i] > 0.0 ? go[i] : 0.0;
      accumulate(grads, n.inputs[0], gx);
      break;
    }
    case OpKind::batch_norm: {
      const Tensor& xhat = n.saved[0];
      const Tensor& inv_std = n.saved[1];
      const Tensor& gv = in(n, 1);
      std::size_t b = xhat.rows(), d = xhat.cols();
      if (nodes_[n.inputs[1]].requires_grad) {
        Tensor gscale({d});
        for (std::size_t j = 0; j < d; ++j) {
          double acc = 0.0;
          for (std::size_t r = 0; r < b; ++r) acc += go.at(r, j) * xhat.at(r, j);
          gscale[j] = acc;
        }
        accumulate(grads, n.inputs[1], gscale);
      }
      if (nodes_[n.inputs[2]].requires_grad) {
        Tensor gshift({d});
        for (std::size_t j = 0; j < d; ++j) {
          double acc = 0.0;
          for (std::size_t r = 0; r < b; ++r) acc += go.at(r, j);
          gshift[j] = acc;
        }
        accumulate(grads, n.inputs[2], gshift);
      }
      if (nodes_[n.inputs[0]].requires_grad) {
        const Tensor& var_active = n.saved[2];
        Tensor gx({b, d});
        if (n.bn_mode == BnMode::train) {
          // active variance: dL/dx = inv_std/B (B dxhat - sum dxhat - xhat sum(dxhat xhat));
          // floored variance: the scale is constant, so the xhat term drops
          for (std::size_t j = 0; j < d; ++j) {
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (std::size_t r = 0; r < b; ++r) {
              double dxh = go.at(r, j) * gv[j];
              sum_dxh += dxh;
              sum_dxh_xh += dxh * xhat.at(r, j);
            }
            double bn = static_cast<double>(b);
            bool active = var_active[j] != 0.0;
            for (std::size_t r = 0; r < b; ++r) {
              double dxh = go.at(r, j) * gv[j];
              double coupled = bn * dxh - sum_dxh;
              if (active) coupled -= xhat.at(r, j) * sum_dxh_xh;
              gx.at(r, j) = inv_std[j] / bn * coupled;
            }
          }
        } else {
          for (std::size_t j = 0; j < d; ++j)
            for (std::size_t r = 0; r < b; ++r)
              gx.at(r, j) = go.at(r, j) * gv[j] * inv_std[j];
        }
        accumulate(grads, n.inputs[0], gx);
      }
      break;
    }
    case OpKind::l2_normalize_rows: {
      const Tensor& denom = n.saved[0];
      const Tensor& active = n.saved[1];
      const Tensor& yv = n.value;
      std::size_t b = yv.rows(), d = yv.cols();
      Tensor gx({b, d});
      for (std::size_t r = 0; r < b; ++r) {
        if (active[r] != 0.0) {
          double ydotg = 0.0;
          for (std::size_t j = 0; j < d; ++j) ydotg += yv.at(r, j) * go.at(r, j);
          for (std::size_t j = 0; j < d; ++j)
            gx.at(r, j) = (go.at(r, j) - yv.at(r, j) * ydotg) / denom[r];
        } else {
          for (std::size_t j = 0; j < d; ++j) gx.at(r, j) = go.at(r, j) / denom[r];
        }
      }
      accumulate(grads, n.inputs[0], gx);
      break;
    }
    case OpKind::softmax_cross_entropy: {
      const Tensor& probs = n.saved[0];
      std::size_t b = probs.rows(), k = probs.cols();
      double g0 = go[0] / static_cast<double>(b);
      Tensor gl({b, k});
      for (std::size_t r = 0; r < b; ++r) {
        std::size_t y = static_cast<std::size_t>(n.iattrs[r]);
        for (std::size_t j = 0; j < k; ++j)
          gl.at(r, j) = g0 * (probs.at(r, j) - (j == y ? 1.0 : 0.0));
      }
      accumulate(grads, n.inputs[0], gl);
      break;
    }
    case OpKind::matmul_nt: {
      const Tensor& av = in(n, 0);
      const Tensor& bv = in(n, 1);
      std::size_t m = av.rows(), nn = bv.rows(), k = av.cols();
      if (nodes_[n.inputs[0]].requires_grad) {
        Tensor ga({m, k});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < nn; ++j) acc += go.at(i, j) * bv.at(j, t);
            ga.at(i, t) = acc;
          }
        accumulate(grads, n.inputs[0], ga);
      }
      if (nodes_[n.inputs[1]].requires_grad) {
        Tensor gb({nn, k});
        for (std::size_t j = 0; j < nn; ++j)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += go.at(i, j) * av.at(i, t);
            gb.at(j, t) = acc;
          }
        accumulate(grads, n.inputs[1], gb);
      }
      break;
    }
    case OpKind::rowwise_dot: {
      const Tensor& av = in(n, 0);
      const Tensor& bv = in(n, 1);
      std::size_t m = av.rows(), k = av.cols();
      if (nodes_[n.inputs[0]].requires_grad) {
        Tensor ga({m, k});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) ga.at(i, t) = go.at(i, 0) * bv.at(i, t);
        accumulate(grads, n.inputs[0], ga);
      }
      if (nodes_[n.inputs[1]].requires_grad) {
        Tensor gb({m, k});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) gb.at(i, t) = go.at(i, 0) * av.at(i, t);
        accumulate(grads, n.inputs[1], gb);
      }
      break;
    }
    case OpKind::concat_cols: {
      const Tensor& av = in(n, 0);
      const Tensor& bv = in(n, 1);
      std::size_t m = av.rows(), ca = av.cols(), cb = bv.cols();
      if (nodes_[n.inputs[0]].requires_grad) {
        Tensor ga({m, ca});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < ca; ++j) ga.at(i, j) = go.at(i, j);
        accumulate(grads, n.inputs[0], ga);
      }
      if (nodes_[n.inputs[1]].requires_grad) {
        Tensor gb({m, cb});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < cb; ++j) gb.at(i, j) = go.at(i, ca + j);
        accumulate(grads, n.inputs[1], gb);
      }
      break;
    }
    case OpKind::mask_shifted_diagonal: {
      Tensor gx = go;
      std::size_t off = static_cast<std::size_t>(n.iattrs[0]);
      std::size_t m = gx.rows(), c = gx.cols();
      for (std::size_t i = 0; i < m; ++i)
        if (i + off < c) gx.at(i, i + off) = 0.0;
      accumulate(grads, n.inputs[0], gx);
      break;
    }
    case OpKind::scale: {
      Tensor gx(go.shape());
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] = n.dattrs[0] * go[i];
      accumulate(grads, n.inputs[0], gx);
      break;
    }
    case OpKind::add: {
      accumulate(grads, n.inputs[0], go);
      accumulate(grads, n.inputs[1], go);
      break;
    }
    case OpKind::sum_all: {
      const Tensor& xv = in(n, 0);
      Tensor gx(xv.shape());
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = go[0];
      accumulate(grads, n.inputs[0], gx);
      break;
    }
    case OpKind::mean_all: {
      const Tensor& xv = in(n, 0);
      Tensor gx(xv.shape());
      double g = go[0] / static_cast<double>(xv.size());
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g;
      accumulate(grads, n.inputs[0], gx);
      break;
    }
    case OpKind::inner_with: {
      const Tensor& w = n.saved[0];
      Tensor gx(w.shape());
      for (std::size_t i = 0; i < w.size(); ++i) gx[i] = go[0] * w[i];
      accumulate(grads, n.inputs[0], gx);
      break;
    }
  }
}

}  // namespace occ
