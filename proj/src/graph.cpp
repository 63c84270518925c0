// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace voxfuse {

namespace kernel {

template <typename T>
void gemm_acc(const T* __restrict a, const T* __restrict b, T* __restrict c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    T* __restrict crow = c + static_cast<std::size_t>(i) * n;
    const T* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* __restrict brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* a, int rows, int cols) {
  std::vector<T> out(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c) * rows + r] = a[static_cast<std::size_t>(r) * cols + c];
  }
  return out;
}

template void gemm_acc<float>(const float*, const float*, float*, int, int, int);
template void gemm_acc<double>(const double*, const double*, double*, int, int, int);
template std::vector<float> transposed<float>(const float*, int, int);
template std::vector<double> transposed<double>(const double*, int, int);

}  // namespace kernel

namespace {

template <typename T>
void softmax_rows(std::vector<T>& x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    T* row = x.data() + static_cast<std::size_t>(r) * cols;
    T mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    T total = 0;
    for (int j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (int j = 0; j < cols; ++j) row[j] /= total;
  }
}

// dlogits = p ⊙ (dp − Σ_j dp·p), in place on dp.
template <typename T>
void softmax_backward_rows(const T* p, T* dp, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const T* prow = p + static_cast<std::size_t>(r) * cols;
    T* drow = dp + static_cast<std::size_t>(r) * cols;
    T dot = 0;
    for (int j = 0; j < cols; ++j) dot += prow[j] * drow[j];
    for (int j = 0; j < cols; ++j) drow[j] = prow[j] * (drow[j] - dot);
  }
}

template <typename T>
void validate_mask_rows(const BasicTensor<T>& mask, const char* op) {
  const T open_threshold = static_cast<T>(kMaskedLogit / 2);
  for (int r = 0; r < mask.rows(); ++r) {
    bool open = false;
    for (T x : mask.row(r)) open = open || x > open_threshold;
    if (!open) {
      throw DomainError(std::string(op) + ": row " + std::to_string(r) +
                        " is fully masked; every row needs at least one open position");
    }
  }
}

}  // namespace

template <typename T>
Var BasicGraph<T>::push(const char* op, TensorT value, bool needs_grad, BackwardFn fn) {
  Node n;
  n.op = op;
  n.own = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
std::vector<T>& BasicGraph<T>::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(val(id).size(), T(0));
  return n.grad;
}

template <typename T>
void BasicGraph<T>::require_rank2(Var v, const char* op) const {
  if (val(v.id).rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got dims " +
                     TensorT::dims_string(val(v.id).dims));
  }
}

template <typename T>
Var BasicGraph<T>::input(TensorT value) {
  return push("input", std::move(value), false, nullptr);
}

template <typename T>
Var BasicGraph<T>::param(Param<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
  Node n;
  n.op = "param";
  n.param = &p;
  n.needs_grad = p.trainable;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var{id};
}

template <typename T>
Var BasicGraph<T>::matmul(Var a, Var b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const TensorT& A = val(a.id);
  const TensorT& B = val(b.id);
  const int m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) {
    throw ShapeError("matmul: inner dims differ (" + std::to_string(k) + " vs " + std::to_string(B.rows()) +
                     ") for " + TensorT::dims_string(A.dims) + " x " + TensorT::dims_string(B.dims));
  }
  TensorT out({m, n});
  kernel::gemm_acc(A.values.data(), B.values.data(), out.values.data(), m, k, n);
  return push("matmul", std::move(out), needs(a.id) || needs(b.id), [a, b, m, k, n](BasicGraph& g, int self) {
    const std::vector<T>& dc = g.nodes_[self].grad;
    if (g.needs(a.id)) {
      const auto bt = kernel::transposed(g.val(b.id).values.data(), k, n);
      kernel::gemm_acc(dc.data(), bt.data(), g.grad_buf(a.id).data(), m, n, k);
    }
    if (g.needs(b.id)) {
      const auto at = kernel::transposed(g.val(a.id).values.data(), m, k);
      kernel::gemm_acc(at.data(), dc.data(), g.grad_buf(b.id).data(), k, m, n);
    }
  });
}

template <typename T>
Var BasicGraph<T>::matmul_nt(Var a, Var b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const TensorT& A = val(a.id);
  const TensorT& B = val(b.id);
  const int m = A.rows(), k = A.cols(), n = B.rows();
  if (B.cols() != k) {
    throw ShapeError("matmul_nt: inner dims differ (" + std::to_string(k) + " vs " + std::to_string(B.cols()) +
                     ")");
  }
  TensorT out({m, n});
  const auto bt = kernel::transposed(B.values.data(), n, k);
  kernel::gemm_acc(A.values.data(), bt.data(), out.values.data(), m, k, n);
  return push("matmul_nt", std::move(out), needs(a.id) || needs(b.id), [a, b, m, k, n](BasicGraph& g, int self) {
    const std::vector<T>& dc = g.nodes_[self].grad;
    // c = a bᵀ: da = dc b, db = dcᵀ a
    if (g.needs(a.id)) kernel::gemm_acc(dc.data(), g.val(b.id).values.data(), g.grad_buf(a.id).data(), m, n, k);
    if (g.needs(b.id)) {
      const auto dct = kernel::transposed(dc.data(), m, n);
      kernel::gemm_acc(dct.data(), g.val(a.id).values.data(), g.grad_buf(b.id).data(), n, m, k);
    }
  });
}

template <typename T>
Var BasicGraph<T>::transpose(Var a) {
  require_rank2(a, "transpose");
  const TensorT& A = val(a.id);
  const int r = A.rows(), c = A.cols();
  TensorT out({c, r}, kernel::transposed(A.values.data(), r, c));
  return push("transpose", std::move(out), needs(a.id), [a, r, c](BasicGraph& g, int self) {
    const auto back = kernel::transposed(g.nodes_[self].grad.data(), c, r);
    auto& ga = g.grad_buf(a.id);
    for (std::size_t i = 0; i < back.size(); ++i) ga[i] += back[i];
  });
}

template <typename T>
Var BasicGraph<T>::add(Var a, Var b) {
  const TensorT& A = val(a.id);
  const TensorT& B = val(b.id);
  if (A.dims != B.dims) {
    throw ShapeError("add: dims " + TensorT::dims_string(A.dims) + " vs " + TensorT::dims_string(B.dims));
  }
  TensorT out = A;
  out.grad.reset();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += B.values[i];
  return push("add", std::move(out), needs(a.id) || needs(b.id), [a, b](BasicGraph& g, int self) {
    const auto& d = g.nodes_[self].grad;
    for (Var v : {a, b}) {
      if (!g.needs(v.id)) continue;
      auto& gv = g.grad_buf(v.id);
      for (std::size_t i = 0; i < d.size(); ++i) gv[i] += d[i];
    }
  });
}

template <typename T>
Var BasicGraph<T>::add_bias(Var x, Var bias) {
  require_rank2(x, "add_bias");
  const TensorT& X = val(x.id);
  const TensorT& B = val(bias.id);
  if (B.size() != static_cast<std::size_t>(X.cols())) {
    throw ShapeError("add_bias: bias of " + std::to_string(B.size()) + " for " + std::to_string(X.cols()) +
                     " columns");
  }
  TensorT out = X;
  out.grad.reset();
  const int rows = X.rows(), cols = X.cols();
  for (int r = 0; r < rows; ++r) {
    T* o = out.values.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) o[c] += B.values[c];
  }
  return push("add_bias", std::move(out), needs(x.id) || needs(bias.id), [x, bias, rows, cols](BasicGraph& g, int self) {
    const auto& d = g.nodes_[self].grad;
    if (g.needs(x.id)) {
      auto& gx = g.grad_buf(x.id);
      for (std::size_t i = 0; i < d.size(); ++i) gx[i] += d[i];
    }
    if (g.needs(bias.id)) {
      auto& gb = g.grad_buf(bias.id);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) gb[c] += d[static_cast<std::size_t>(r) * cols + c];
      }
    }
  });
}

template <typename T>
Var BasicGraph<T>::scale(Var x, T factor) {
  TensorT out = val(x.id);
  out.grad.reset();
  for (auto& v : out.values) v *= factor;
  return push("scale", std::move(out), needs(x.id), [x, factor](BasicGraph& g, int self) {
    const auto& d = g.nodes_[self].grad;
    auto& gx = g.grad_buf(x.id);
    for (std::size_t i = 0; i < d.size(); ++i) gx[i] += factor * d[i];
  });
}

template <typename T>
Var BasicGraph<T>::mul(Var a, Var b) {
  const TensorT& A = val(a.id);
  const TensorT& B = val(b.id);
  if (A.dims != B.dims) {
    throw ShapeError("mul: dims " + TensorT::dims_string(A.dims) + " vs " + TensorT::dims_string(B.dims));
  }
  TensorT out = A;
  out.grad.reset();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= B.values[i];
  return push("mul", std::move(out), needs(a.id) || needs(b.id), [a, b](BasicGraph& g, int self) {
    const auto& d = g.nodes_[self].grad;
    if (g.needs(a.id)) {
      const auto& bv = g.val(b.id).values;
      auto& ga = g.grad_buf(a.id);
      for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * bv[i];
    }
    if (g.needs(b.id)) {
      const auto& av = g.val(a.id).values;
      auto& gb = g.grad_buf(b.id);
      for (std::size_t i = 0; i < d.size(); ++i) gb[i] += d[i] * av[i];
    }
  });
}

template <typename T>
Var BasicGraph<T>::sum(Var x) {
  T total = 0;
  for (T v : val(x.id).values) total += v;
  return push("sum", TensorT({1}, {total}), needs(x.id), [x](BasicGraph& g, int self) {
    const T d = g.nodes_[self].grad[0];
    for (auto& v : g.grad_buf(x.id)) v += d;
  });
}

template <typename T>
Var BasicGraph<T>::gelu(Var x) {
  const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  const T k = static_cast<T>(0.044715);
  TensorT out = val(x.id);
  out.grad.reset();
  for (auto& v : out.values) v = T(0.5) * v * (T(1) + std::tanh(c * (v + k * v * v * v)));
  return push("gelu", std::move(out), needs(x.id), [x, c, k](BasicGraph& g, int self) {
    const auto& d = g.nodes_[self].grad;
    const auto& xv = g.val(x.id).values;
    auto& gx = g.grad_buf(x.id);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const T v = xv[i];
      const T th = std::tanh(c * (v + k * v * v * v));
      const T dth = (T(1) - th * th) * c * (T(1) + T(3) * k * v * v);
      gx[i] += d[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * dth);
    }
  });
}

template <typename T>
Var BasicGraph<T>::dropout(Var x, T rate, std::mt19937_64& rng) {
  if (rate < T(0) || rate >= T(1)) throw DomainError("dropout: rate must lie in [0, 1)");
  if (rate == T(0)) return x;
  const TensorT& X = val(x.id);
  TensorT keep(X.dims);
  std::bernoulli_distribution coin(1.0 - static_cast<double>(rate));
  const T inv = T(1) / (T(1) - rate);
  for (auto& v : keep.values) v = coin(rng) ? inv : T(0);
  return mul(x, input(std::move(keep)));
}

template <typename T>
Var BasicGraph<T>::layer_norm(Var x, Var gamma, Var beta, T eps) {
  require_rank2(x, "layer_norm");
  const TensorT& X = val(x.id);
  const int rows = X.rows(), cols = X.cols();
  if (val(gamma.id).size() != static_cast<std::size_t>(cols) || val(beta.id).size() != static_cast<std::size_t>(cols)) {
    throw ShapeError("layer_norm: gain/bias size does not match " + std::to_string(cols) + " columns");
  }
  const auto& gm = val(gamma.id).values;
  const auto& bt = val(beta.id).values;
  TensorT out({rows, cols});
  std::vector<T> xhat(X.size());
  std::vector<T> inv_std(rows);
  for (int r = 0; r < rows; ++r) {
    const T* xr = X.values.data() + static_cast<std::size_t>(r) * cols;
    T mean = 0;
    for (int c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<T>(cols);
    T var = 0;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      xhat[i] = (xr[c] - mean) * is;
      out.values[i] = xhat[i] * gm[c] + bt[c];
    }
  }
  const bool ng = needs(x.id) || needs(gamma.id) || needs(beta.id);
  return push("layer_norm", std::move(out), ng,
              [x, gamma, beta, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](BasicGraph& g, int self) {
                const auto& d = g.nodes_[self].grad;
                if (g.needs(gamma.id) || g.needs(beta.id)) {
                  std::vector<T> dg(cols, T(0)), db(cols, T(0));
                  for (int r = 0; r < rows; ++r) {
                    for (int c = 0; c < cols; ++c) {
                      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
                      dg[c] += d[i] * xhat[i];
                      db[c] += d[i];
                    }
                  }
                  if (g.needs(gamma.id)) {
                    auto& gg = g.grad_buf(gamma.id);
                    for (int c = 0; c < cols; ++c) gg[c] += dg[c];
                  }
                  if (g.needs(beta.id)) {
                    auto& gb = g.grad_buf(beta.id);
                    for (int c = 0; c < cols; ++c) gb[c] += db[c];
                  }
                }
                if (g.needs(x.id)) {
                  const auto& gm2 = g.val(gamma.id).values;
                  auto& gx = g.grad_buf(x.id);
                  const T n = static_cast<T>(cols);
                  for (int r = 0; r < rows; ++r) {
                    T sum_dy = 0, sum_dy_xhat = 0;
                    for (int c = 0; c < cols; ++c) {
                      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
                      const T dy = d[i] * gm2[c];
                      sum_dy += dy;
                      sum_dy_xhat += dy * xhat[i];
                    }
                    for (int c = 0; c < cols; ++c) {
                      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
                      const T dy = d[i] * gm2[c];
                      gx[i] += inv_std[r] * (dy - sum_dy / n - xhat[i] * sum_dy_xhat / n);
                    }
                  }
                }
              });
}

template <typename T>
Var BasicGraph<T>::embedding(Var table, std::span<const int> ids) {
  require_rank2(table, "embedding");
  const TensorT& W = val(table.id);
  const int n = W.rows(), d = W.cols();
  if (ids.empty()) throw ShapeError("embedding: empty id sequence");
  TensorT out({static_cast<int>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= n) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(n) + " rows");
    }
    std::copy_n(W.values.data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.values.data() + i * static_cast<std::size_t>(d));
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return push("embedding", std::move(out), needs(table.id), [table, d, idv = std::move(idv)](BasicGraph& g, int self) {
    const auto& dd = g.nodes_[self].grad;
    auto& gw = g.grad_buf(table.id);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      for (int c = 0; c < d; ++c) gw[static_cast<std::size_t>(idv[i]) * d + c] += dd[i * d + c];
    }
  });
}

template <typename T>
Var BasicGraph<T>::masked_softmax(Var logits, const TensorT& mask) {
  require_rank2(logits, "masked_softmax");
  const TensorT& L = val(logits.id);
  if (mask.dims != L.dims) {
    throw ShapeError("masked_softmax: mask dims " + TensorT::dims_string(mask.dims) + " vs logits " +
                     TensorT::dims_string(L.dims));
  }
  validate_mask_rows(mask, "masked_softmax");
  const int rows = L.rows(), cols = L.cols();
  TensorT out = L;
  out.grad.reset();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += mask.values[i];
  softmax_rows(out.values, rows, cols);
  return push("masked_softmax", std::move(out), needs(logits.id), [logits, rows, cols](BasicGraph& g, int self) {
    std::vector<T> d = g.nodes_[self].grad;
    softmax_backward_rows(g.nodes_[self].own.values.data(), d.data(), rows, cols);
    auto& gl = g.grad_buf(logits.id);
    for (std::size_t i = 0; i < d.size(); ++i) gl[i] += d[i];
  });
}

template <typename T>
Var BasicGraph<T>::attention(Var q, Var k, Var v, const TensorT* mask, int heads) {
  require_rank2(q, "attention");
  require_rank2(k, "attention");
  require_rank2(v, "attention");
  const TensorT& Q = val(q.id);
  const TensorT& K = val(k.id);
  const TensorT& V = val(v.id);
  const int tq = Q.rows(), s = K.rows(), d = Q.cols();
  if (K.cols() != d || V.cols() != d || V.rows() != s) throw ShapeError("attention: q/k/v dims disagree");
  if (heads <= 0 || d % heads != 0) throw ShapeError("attention: width not divisible by head count");
  if (mask) {
    if (mask->rows() != tq || mask->cols() != s) throw ShapeError("attention: mask dims do not match T x S");
    validate_mask_rows(*mask, "attention");
  }
  const int dh = d / heads;
  const T scl = T(1) / std::sqrt(static_cast<T>(dh));

  auto head_cols = [](const TensorT& x, int h, int dh_) {
    const int r = x.rows(), c = x.cols();
    std::vector<T> out(static_cast<std::size_t>(r) * dh_);
    for (int i = 0; i < r; ++i) std::copy_n(x.values.data() + static_cast<std::size_t>(i) * c + h * dh_, dh_, out.data() + static_cast<std::size_t>(i) * dh_);
    return out;
  };

  TensorT out({tq, d});
  std::vector<std::vector<T>> probs(heads);
  std::vector<T> oh(static_cast<std::size_t>(tq) * dh);
  for (int h = 0; h < heads; ++h) {
    const auto qh = head_cols(Q, h, dh);
    const auto kh = head_cols(K, h, dh);
    const auto vh = head_cols(V, h, dh);
    const auto kt = kernel::transposed(kh.data(), s, dh);
    std::vector<T> p(static_cast<std::size_t>(tq) * s, T(0));
    kernel::gemm_acc(qh.data(), kt.data(), p.data(), tq, dh, s);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= scl;
      if (mask) p[i] += mask->values[i];
    }
    softmax_rows(p, tq, s);
    std::fill(oh.begin(), oh.end(), T(0));
    kernel::gemm_acc(p.data(), vh.data(), oh.data(), tq, s, dh);
    for (int i = 0; i < tq; ++i) std::copy_n(oh.data() + static_cast<std::size_t>(i) * dh, dh, out.values.data() + static_cast<std::size_t>(i) * d + h * dh);
    probs[h] = std::move(p);
  }

  const bool ng = needs(q.id) || needs(k.id) || needs(v.id);
  return push("attention", std::move(out), ng,
              [q, k, v, tq, s, d, dh, heads, scl, head_cols, probs = std::move(probs)](BasicGraph& g, int self) {
                const auto& dout = g.nodes_[self].grad;
                for (int h = 0; h < heads; ++h) {
                  std::vector<T> doh(static_cast<std::size_t>(tq) * dh);
                  for (int i = 0; i < tq; ++i) std::copy_n(dout.data() + static_cast<std::size_t>(i) * d + h * dh, dh, doh.data() + static_cast<std::size_t>(i) * dh);
                  const auto& p = probs[h];
                  const auto qh = head_cols(g.val(q.id), h, dh);
                  const auto kh = head_cols(g.val(k.id), h, dh);
                  const auto vh = head_cols(g.val(v.id), h, dh);
                  // dP = dO · Vᵀ
                  std::vector<T> dp(static_cast<std::size_t>(tq) * s, T(0));
                  const auto vt = kernel::transposed(vh.data(), s, dh);
                  kernel::gemm_acc(doh.data(), vt.data(), dp.data(), tq, dh, s);
                  if (g.needs(v.id)) {
                    std::vector<T> dvh(static_cast<std::size_t>(s) * dh, T(0));
                    const auto pt = kernel::transposed(p.data(), tq, s);
                    kernel::gemm_acc(pt.data(), doh.data(), dvh.data(), s, tq, dh);
                    auto& gv = g.grad_buf(v.id);
                    for (int i = 0; i < s; ++i) {
                      for (int c = 0; c < dh; ++c) gv[static_cast<std::size_t>(i) * d + h * dh + c] += dvh[static_cast<std::size_t>(i) * dh + c];
                    }
                  }
                  softmax_backward_rows(p.data(), dp.data(), tq, s);
                  for (auto& x : dp) x *= scl;
                  if (g.needs(q.id)) {
                    std::vector<T> dqh(static_cast<std::size_t>(tq) * dh, T(0));
                    kernel::gemm_acc(dp.data(), kh.data(), dqh.data(), tq, s, dh);
                    auto& gq = g.grad_buf(q.id);
                    for (int i = 0; i < tq; ++i) {
                      for (int c = 0; c < dh; ++c) gq[static_cast<std::size_t>(i) * d + h * dh + c] += dqh[static_cast<std::size_t>(i) * dh + c];
                    }
                  }
                  if (g.needs(k.id)) {
                    std::vector<T> dkh(static_cast<std::size_t>(s) * dh, T(0));
                    const auto dpt = kernel::transposed(dp.data(), tq, s);
                    kernel::gemm_acc(dpt.data(), qh.data(), dkh.data(), s, tq, dh);
                    auto& gk = g.grad_buf(k.id);
                    for (int i = 0; i < s; ++i) {
                      for (int c = 0; c < dh; ++c) gk[static_cast<std::size_t>(i) * d + h * dh + c] += dkh[static_cast<std::size_t>(i) * dh + c];
                    }
                  }
                }
              });
}

template <typename T>
Var BasicGraph<T>::cross_entropy(Var logits, std::span<const int> targets, Reduction reduction) {
  require_rank2(logits, "cross_entropy");
  const TensorT& L = val(logits.id);
  const int rows = L.rows(), cols = L.cols();
  if (targets.size() != static_cast<std::size_t>(rows)) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                     " rows");
  }
  std::vector<T> p = L.values;
  softmax_rows(p, rows, cols);
  T total = 0;
  for (int r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || t >= cols) throw IndexError("cross_entropy: target " + std::to_string(t) + " out of range");
    const T* lr = L.values.data() + static_cast<std::size_t>(r) * cols;
    T mx = lr[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, lr[c]);
    T se = 0;
    for (int c = 0; c < cols; ++c) se += std::exp(lr[c] - mx);
    total += std::log(se) + mx - lr[t];
  }
  const T norm = reduction == Reduction::kMean ? T(1) / static_cast<T>(rows) : T(1);
  std::vector<int> tv(targets.begin(), targets.end());
  return push("cross_entropy", TensorT({1}, {total * norm}), needs(logits.id),
              [logits, rows, cols, norm, p = std::move(p), tv = std::move(tv)](BasicGraph& g, int self) {
                const T d = g.nodes_[self].grad[0] * norm;
                auto& gl = g.grad_buf(logits.id);
                for (int r = 0; r < rows; ++r) {
                  for (int c = 0; c < cols; ++c) {
                    const std::size_t i = static_cast<std::size_t>(r) * cols + c;
                    gl[i] += d * (p[i] - (c == tv[r] ? T(1) : T(0)));
                  }
                }
              });
}

template <typename T>
const BasicTensor<T>& BasicGraph<T>::value(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw IndexError("graph: invalid variable");
  return val(v.id);
}

template <typename T>
const std::vector<T>* BasicGraph<T>::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (!n.needs_grad || n.grad.empty()) return nullptr;
  return &n.grad;
}

template <typename T>
const std::vector<T>* BasicGraph<T>::param_grad(const Param<T>& p) const {
  auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end()) return nullptr;
  return grad(Var{it->second});
}

template <typename T>
void BasicGraph<T>::backward(Var loss) {
  if (val(loss.id).size() != 1) throw ShapeError("backward: loss must be a scalar");
  backward_visits_ = 0;
  if (!needs(loss.id)) return;
  grad_buf(loss.id)[0] += T(1);
  for (int id = loss.id; id >= 0; --id) {
    ++backward_visits_;
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
}

template <typename T>
void BasicGraph<T>::accumulate_param_grads() {
  for (const auto& [key, id] : param_nodes_) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    auto& g = n.param->value.grad;
    if (!g) g.emplace(n.grad.size(), T(0));
    auto& dst = *g;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
  }
}

template <typename T>
void BasicGraph<T>::check_finite() const {
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    for (T x : val(static_cast<int>(id)).values) {
      if (!std::isfinite(x)) {
        throw NumericError(std::string("non-finite value produced by op '") + nodes_[id].op + "' (node " +
                           std::to_string(id) + ")");
      }
    }
  }
}

template class BasicGraph<float>;
template class BasicGraph<double>;

}  // namespace voxfuse
