// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "voxfuse/tensor.hpp"

namespace voxfuse {

/// Additive value standing in for minus infinity in attention masks. Large
/// enough that exp() underflows to exactly zero in both float and double,
/// small enough that (mask - max) never produces NaN.
inline constexpr double kMaskedLogit = -1e9;

/// Handle to a node recorded in a graph.
struct Var {
  int id = -1;
  [[nodiscard]] bool valid() const { return id >= 0; }
};

enum class Reduction { kMean, kSum };

/// Tape-based reverse-mode differentiation over rank-1/2 tensors.
///
/// Nodes are recorded in evaluation order, so the tape itself is a valid
/// topological order and `backward` walks it once in reverse. Parameters are
/// referenced, not copied; frozen parameters are recorded without a gradient
/// path and never receive a gradient buffer.
///
/// Every op evaluates each output row from its own input rows with a fixed
/// summation order. Computing a prefix of rows therefore gives bit-identical
/// results to computing all rows, which incremental decoding relies on.
template <typename T>
class BasicGraph {
 public:
  using TensorT = BasicTensor<T>;

  BasicGraph() = default;
  BasicGraph(const BasicGraph&) = delete;
  BasicGraph& operator=(const BasicGraph&) = delete;

  Var input(TensorT value);
  Var param(Param<T>& p);

  Var matmul(Var a, Var b);
  /// a · bᵀ
  Var matmul_nt(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var add_bias(Var x, Var bias);
  Var scale(Var x, T factor);
  Var mul(Var a, Var b);
  Var sum(Var x);
  Var gelu(Var x);
  Var dropout(Var x, T rate, std::mt19937_64& rng);
  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5));
  /// Gathers rows of `table` (n×d) for each id.
  Var embedding(Var table, std::span<const int> ids);
  /// Row softmax of logits + mask. `mask` holds 0 or kMaskedLogit.
  Var masked_softmax(Var logits, const TensorT& mask);
  /// Scaled dot-product attention split over `heads` column groups.
  /// `mask` may be null (no masking) or T×S additive.
  Var attention(Var q, Var k, Var v, const TensorT* mask, int heads);
  Var cross_entropy(Var logits, std::span<const int> targets, Reduction reduction = Reduction::kMean);

  [[nodiscard]] const TensorT& value(Var v) const;
  /// Gradient buffer of a node after backward; null when the node carries none.
  [[nodiscard]] const std::vector<T>* grad(Var v) const;
  [[nodiscard]] const std::vector<T>* param_grad(const Param<T>& p) const;
  [[nodiscard]] bool requires_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  void backward(Var loss);
  /// Adds leaf gradients into `Param::value.grad` of every trainable parameter.
  void accumulate_param_grads();
  /// Throws NumericError naming the first op whose output is not finite.
  void check_finite() const;

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] std::size_t last_backward_visits() const { return backward_visits_; }
  [[nodiscard]] const char* op_name(Var v) const { return nodes_.at(v.id).op; }

 private:
  using BackwardFn = std::function<void(BasicGraph&, int)>;

  struct Node {
    const char* op = "";
    TensorT own;
    Param<T>* param = nullptr;
    std::vector<T> grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  const TensorT& val(int id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.own;
  }
  std::vector<T>& grad_buf(int id);
  bool needs(int id) const { return nodes_[id].needs_grad; }
  Var push(const char* op, TensorT value, bool needs_grad, BackwardFn fn);
  void require_rank2(Var v, const char* op) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Param<T>*, int> param_nodes_;
  std::size_t backward_visits_ = 0;
};

using Graph = BasicGraph<float>;

namespace kernel {

/// c[m×n] += a[m×k] · b[k×n]; each c element accumulates over k in order.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, int m, int k, int n);

template <typename T>
std::vector<T> transposed(const T* a, int rows, int cols);

}  // namespace kernel

}  // namespace voxfuse
