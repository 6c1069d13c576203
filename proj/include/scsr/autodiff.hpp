#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "scsr/sensing.hpp"
#include "scsr/tensor.hpp"

namespace scsr {

// Reverse-mode tape. Nodes are appended in execution order and walked
// backwards once; interior values and gradients are released as soon as the
// sweep passes them so peak memory stays near the forward footprint.
//
// Feature tensors are channels-last: [B, P, C] flattened row-major, with P
// the pixel count (or 1-D length). Measurement tensors are [B, Mmax] with
// rows past a sample's own measurement count kept at zero.

template <typename T>
class Tape {
 public:
  using NodeId = int32_t;
  static constexpr NodeId kNone = -1;

  NodeId leaf(Tensor<T> v, bool requires_grad = false);

  const Tensor<T>& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].val; }
  Tensor<T>& grad(NodeId id);
  bool needs_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  void keep(NodeId id) { nodes_[static_cast<size_t>(id)].keep = true; }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId relu(NodeId a);
  NodeId add_const(NodeId a, Tensor<T> c);

  // kernel-3, stride-1, zero-pad-1 convolutions over channels-last features;
  // w is [3*cin, cout] (1-D) or [9*cin, cout] (2-D), bias [cout]
  NodeId conv1d(NodeId x, NodeId w, NodeId b, int64_t B, int64_t L, int64_t cin, int64_t cout);
  NodeId conv2d(NodeId x, NodeId w, NodeId b, int64_t B, int64_t H, int64_t W, int64_t cin,
                int64_t cout);

  NodeId concat_channels(NodeId a, NodeId b, int64_t B, int64_t P, int64_t ca, int64_t cb);
  NodeId add_channel_vec(NodeId x, NodeId v, int64_t B, int64_t P, int64_t C);
  // x[B,P,C] + broadcast_over_B(W_up[P,hw] * e[hw,C])
  NodeId upsample_add(NodeId x, NodeId e, std::shared_ptr<const Tensor<T>> W_up, int64_t B,
                      int64_t P, int64_t C, int64_t hw);

  // z = x - rho * A^T (A x - y) applied to channel 0 of X; rho = sigmoid(tau)
  // when tau is a node, else exactly 1
  NodeId gd_step(NodeId X, NodeId y, std::shared_ptr<const BatchedOp<T>> op, int64_t B, int64_t P,
                 int64_t C, NodeId tau = kNone);

  NodeId measure(NodeId x, std::shared_ptr<const BatchedOp<T>> op, int64_t B, int64_t P);
  // x0 = init_scale * A^T y
  NodeId adjoint_init(NodeId y, std::shared_ptr<const BatchedOp<T>> op, int64_t B, int64_t P);
  // out[b,p] = x[b, src[b][p]]; src must be a bijection per sample
  NodeId permute(NodeId x, std::shared_ptr<const std::vector<std::vector<int64_t>>> src, int64_t B,
                 int64_t P);
  // (1/B) * sum_b sum_{k < valid[b]} |v[b,k]|^p; empty valid means all entries
  NodeId lp_loss(NodeId v, double p, int64_t B, std::vector<int64_t> valid = {});

  void backward(NodeId loss_node);
  void clear();
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;
    bool requires_grad = false;
    bool keep = false;
    std::function<void(Tape&, NodeId)> back;
  };

  NodeId push(Tensor<T> val, bool rg, std::function<void(Tape&, NodeId)> back);
  void accum(NodeId id, const T* src, int64_t n);

  std::vector<Node> nodes_;
  bool swept_ = false;
  std::vector<T> cols_, dcols_;  // im2col scratch, reused across convs

  template <typename>
  friend struct TapeTestAccess;

  void im2col1d(const Tensor<T>& x, int64_t B, int64_t L, int64_t cin);
  void im2col2d(const Tensor<T>& x, int64_t B, int64_t H, int64_t W, int64_t cin);
  NodeId conv_common(NodeId x, NodeId w, NodeId b, int64_t B, int64_t P, int64_t cin, int64_t cout,
                     int64_t k, bool two_d, int64_t H, int64_t W);
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace scsr
