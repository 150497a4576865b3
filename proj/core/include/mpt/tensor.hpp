#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "mpt/geometry.hpp"
#include "mpt/rng.hpp"

namespace mpt {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// When on (default), every op scans its output and faults on NaN/Inf so a
// diverging run stops at the op that produced the bad value.
inline bool& tensor_finite_checks() {
  static bool on = true;
  return on;
}

namespace detail {

inline uint64_t next_node_id() {
  static std::atomic<uint64_t> seq{1};
  return seq.fetch_add(1, std::memory_order_relaxed);
}

template <typename S>
void check_finite(const std::vector<S>& v, const char* op) {
  if (!tensor_finite_checks()) return;
  for (S x : v)
    if (!std::isfinite(double(x))) throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
}

}  // namespace detail

// Dense row-major n-d array participating in a reverse-mode gradient graph.
// Handles are cheap shared references to graph nodes; ops build the graph
// define-by-run. Node ids increase in creation order, which is a valid
// topological order for the backward sweep. Single-threaded per graph.
template <typename S>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // allocated on first use, same length as value
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;  // reads this->grad, accumulates into parents
    uint64_t id = 0;
    bool requires_grad = false;

    void ensure_grad() {
      if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    }
  };
  using NodePtr = std::shared_ptr<Node>;

  Tensor() = default;

  static Tensor from(Shape shape, std::vector<S> data) {
    if (shape_numel(shape) != int64_t(data.size()))
      throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match data size " +
                                  std::to_string(data.size()));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->id = detail::next_node_id();
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape) {
    return from(std::move(shape), std::vector<S>(size_t(shape_numel(shape)), S(0)));
  }

  static Tensor full(Shape shape, S v) {
    return from(std::move(shape), std::vector<S>(size_t(shape_numel(shape)), v));
  }

  static Tensor scalar(S v) { return from({1}, {v}); }

  // Leaf with requires_grad set: a trainable parameter or a gradcheck input.
  static Tensor param(Shape shape, std::vector<S> data) {
    Tensor t = from(std::move(shape), std::move(data));
    t.n_->requires_grad = true;
    return t;
  }

  static Tensor make_op(Shape shape, std::vector<S> value, std::vector<Tensor> parents,
                        std::function<void(Node&)> back, const char* opname) {
    detail::check_finite(value, opname);
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->id = detail::next_node_id();
    n->parents.reserve(parents.size());
    for (auto& p : parents) {
      if (!p.defined()) throw std::invalid_argument(std::string(opname) + ": undefined input tensor");
      n->requires_grad = n->requires_grad || p.n_->requires_grad;
      n->parents.push_back(p.n_);
    }
    if (n->requires_grad) n->backward = std::move(back);
    return Tensor(std::move(n));
  }

  bool defined() const { return bool(n_); }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return int(n_->shape.size()); }
  int dim(int i) const { return n_->shape[size_t(i)]; }
  int64_t size() const { return int64_t(n_->value.size()); }
  const std::vector<S>& value() const { return n_->value; }
  std::vector<S>& value_mut() { return n_->value; }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  S item() const {
    if (size() != 1) throw std::invalid_argument("item: tensor is not scalar");
    return n_->value[0];
  }

  const std::vector<S>& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }

  void zero_grad() {
    if (n_) n_->grad.assign(n_->value.size(), S(0));
  }

  NodePtr node() const { return n_; }

 private:
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}
  NodePtr n_;
};

// ---------------------------------------------------------------------------
// backward

// Reverse-mode sweep from a scalar loss. Children always have larger ids
// than their parents, so descending-id order visits every node after all of
// its consumers. Gradients accumulate additively across fan-out.
template <typename S>
void backward(const Tensor<S>& loss) {
  if (!loss.defined() || loss.size() != 1) throw std::invalid_argument("backward: loss must be a defined scalar");
  auto root = loss.node();
  if (!root->requires_grad) return;

  using Node = typename Tensor<S>::Node;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

  root->ensure_grad();
  root->grad[0] += S(1);
  for (Node* n : order)
    if (n->backward) n->backward(*n);
}

// ---------------------------------------------------------------------------
// gemm kernels
//
// Deterministic accumulation: the inner sum for every output element always
// runs in ascending index order, and each output row depends only on the
// corresponding input row(s). That makes per-row results independent of how
// many other rows are in the batch, which the decoder relies on.

namespace detail {

// C[M,N] += A[M,K] * B[K,N]
template <typename S>
void gemm_nn_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + size_t(i) * size_t(k);
    S* crow = c + size_t(i) * size_t(n);
    for (int t = 0; t < k; ++t) {
      const S ait = arow[t];
      const S* brow = b + size_t(t) * size_t(n);
      for (int j = 0; j < n; ++j) crow[j] += ait * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T (row-by-row dot products)
template <typename S>
void gemm_nt_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + size_t(i) * size_t(k);
    S* crow = c + size_t(i) * size_t(n);
    for (int j = 0; j < n; ++j) {
      const S* brow = b + size_t(j) * size_t(k);
      S acc = 0;
      for (int t = 0; t < k; ++t) acc += arow[t] * brow[t];
      crow[j] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename S>
void gemm_tn_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int t = 0; t < k; ++t) {
    const S* arow = a + size_t(t) * size_t(m);
    const S* brow = b + size_t(t) * size_t(n);
    for (int i = 0; i < m; ++i) {
      const S ati = arow[i];
      S* crow = c + size_t(i) * size_t(n);
      for (int j = 0; j < n; ++j) crow[j] += ati * brow[j];
    }
  }
}

template <typename S>
void require_rank2(const Tensor<S>& t, const char* op) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and structural ops

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<S> out = a.value();
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return Tensor<S>::make_op(
      a.shape(), std::move(out), {a, b},
      [](typename Tensor<S>::Node& n) {
        for (int p = 0; p < 2; ++p) {
          auto& par = *n.parents[size_t(p)];
          if (!par.requires_grad) continue;
          par.ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) par.grad[i] += n.grad[i];
        }
      },
      "add");
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<S> out = a.value();
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return Tensor<S>::make_op(
      a.shape(), std::move(out), {a, b},
      [](typename Tensor<S>::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
        }
      },
      "sub");
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<S> out = a.value();
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return Tensor<S>::make_op(
      a.shape(), std::move(out), {a, b},
      [](typename Tensor<S>::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
        }
      },
      "mul");
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  std::vector<S> out = a.value();
  for (S& v : out) v *= c;
  return Tensor<S>::make_op(
      a.shape(), std::move(out), {a},
      [c](typename Tensor<S>::Node& n) {
        auto& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += c * n.grad[i];
      },
      "scale");
}

// X[m,n] + row vector b[n] broadcast over rows (bias add).
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& b) {
  detail::require_rank2(x, "add_rowvec");
  const int m = x.dim(0), n = x.dim(1);
  if (int64_t(b.size()) != int64_t(n))
    throw std::invalid_argument("add_rowvec: vector size " + std::to_string(b.size()) + " != cols " + std::to_string(n));
  std::vector<S> out = x.value();
  const auto& bv = b.value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[size_t(i) * size_t(n) + size_t(j)] += bv[size_t(j)];
  return Tensor<S>::make_op(
      x.shape(), std::move(out), {x, b},
      [m, n](typename Tensor<S>::Node& nd) {
        auto& px = *nd.parents[0];
        auto& pb = *nd.parents[1];
        if (px.requires_grad) {
          px.ensure_grad();
          for (size_t i = 0; i < nd.grad.size(); ++i) px.grad[i] += nd.grad[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) pb.grad[size_t(j)] += nd.grad[size_t(i) * size_t(n) + size_t(j)];
        }
      },
      "add_rowvec");
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw std::invalid_argument("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<S> out(size_t(m) * size_t(n), S(0));
  detail::gemm_nn_acc(a.value().data(), b.value().data(), out.data(), m, k, n);
  return Tensor<S>::make_op(
      {m, n}, std::move(out), {a, b},
      [m, k, n](typename Tensor<S>::Node& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          // dA[m,k] = G[m,n] * B[k,n]^T
          detail::gemm_nt_acc(nd.grad.data(), pb.value.data(), pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          // dB[k,n] = A[m,k]^T * G[m,n]
          detail::gemm_tn_acc(pa.value.data(), nd.grad.data(), pb.grad.data(), k, m, n);
        }
      },
      "matmul");
}

// a[m,k] * b[n,k]^T -> [m,n]; attention scores without materialized transposes.
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_rank2(a, "matmul_nt");
  detail::require_rank2(b, "matmul_nt");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw std::invalid_argument("matmul_nt: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  std::vector<S> out(size_t(m) * size_t(n), S(0));
  detail::gemm_nt_acc(a.value().data(), b.value().data(), out.data(), m, k, n);
  return Tensor<S>::make_op(
      {m, n}, std::move(out), {a, b},
      [m, k, n](typename Tensor<S>::Node& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          // dA[m,k] = G[m,n] * B[n,k]
          detail::gemm_nn_acc(nd.grad.data(), pb.value.data(), pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          // dB[n,k] = G[m,n]^T * A[m,k]
          detail::gemm_tn_acc(nd.grad.data(), pa.value.data(), pb.grad.data(), n, m, k);
        }
      },
      "matmul_nt");
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  std::vector<S> out = a.value();
  for (S& v : out) v = v > S(0) ? v : S(0);
  return Tensor<S>::make_op(
      a.shape(), std::move(out), {a},
      [](typename Tensor<S>::Node& n) {
        auto& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
          if (pa.value[i] > S(0)) pa.grad[i] += n.grad[i];
      },
      "relu");
}

namespace detail {
template <typename S>
S normal_cdf(S x) {
  return S(0.5) * (S(1) + S(std::erf(double(x) * 0.70710678118654752440)));
}
template <typename S>
S normal_pdf(S x) {
  return S(std::exp(-0.5 * double(x) * double(x)) * 0.39894228040143267794);
}
}  // namespace detail

// Exact gelu: x * Phi(x) with the Gaussian CDF via erf.
template <typename S>
Tensor<S> gelu(const Tensor<S>& a) {
  std::vector<S> out = a.value();
  for (S& v : out) v = v * detail::normal_cdf(v);
  return Tensor<S>::make_op(
      a.shape(), std::move(out), {a},
      [](typename Tensor<S>::Node& n) {
        auto& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
          const S x = pa.value[i];
          pa.grad[i] += n.grad[i] * (detail::normal_cdf(x) + x * detail::normal_pdf(x));
        }
      },
      "gelu");
}

namespace detail {
template <typename S>
S sigmoid_stable(S x) {
  if (x >= S(0)) return S(1) / (S(1) + S(std::exp(-double(x))));
  const S e = S(std::exp(double(x)));
  return e / (S(1) + e);
}
}  // namespace detail

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  std::vector<S> out = a.value();
  for (S& v : out) v = detail::sigmoid_stable(v);
  return Tensor<S>::make_op(
      a.shape(), std::move(out), {a},
      [](typename Tensor<S>::Node& n) {
        auto& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
          const S s = n.value[i];
          pa.grad[i] += n.grad[i] * s * (S(1) - s);
        }
      },
      "sigmoid");
}

// Row-wise softmax with max subtraction.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
  detail::require_rank2(x, "softmax_rows");
  const int m = x.dim(0), n = x.dim(1);
  if (n < 1) throw std::invalid_argument("softmax_rows: empty rows");
  std::vector<S> out(x.value());
  for (int i = 0; i < m; ++i) {
    S* row = out.data() + size_t(i) * size_t(n);
    S mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    S sum = 0;
    for (int j = 0; j < n; ++j) {
      row[j] = S(std::exp(double(row[j] - mx)));
      sum += row[j];
    }
    for (int j = 0; j < n; ++j) row[j] /= sum;
  }
  return Tensor<S>::make_op(
      {m, n}, std::move(out), {x},
      [m, n](typename Tensor<S>::Node& nd) {
        auto& px = *nd.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int i = 0; i < m; ++i) {
          const S* y = nd.value.data() + size_t(i) * size_t(n);
          const S* g = nd.grad.data() + size_t(i) * size_t(n);
          S dot = 0;
          for (int j = 0; j < n; ++j) dot += g[j] * y[j];
          S* d = px.grad.data() + size_t(i) * size_t(n);
          for (int j = 0; j < n; ++j) d[j] += (g[j] - dot) * y[j];
        }
      },
      "softmax_rows");
}

// Row-wise layer normalization with learned gain/bias; population variance.
template <typename S>
Tensor<S> layer_norm_rows(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias, double eps) {
  detail::require_rank2(x, "layer_norm_rows");
  const int m = x.dim(0), n = x.dim(1);
  if (int64_t(gain.size()) != n || int64_t(bias.size()) != n)
    throw std::invalid_argument("layer_norm_rows: gain/bias size mismatch");
  std::vector<S> out(size_t(m) * size_t(n));
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (int i = 0; i < m; ++i) {
    const S* row = xv.data() + size_t(i) * size_t(n);
    S mu = 0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= S(n);
    S var = 0;
    for (int j = 0; j < n; ++j) {
      const S d = row[j] - mu;
      var += d * d;
    }
    var /= S(n);
    const S inv = S(1) / S(std::sqrt(double(var) + eps));
    S* o = out.data() + size_t(i) * size_t(n);
    for (int j = 0; j < n; ++j) o[j] = (row[j] - mu) * inv * gv[size_t(j)] + bv[size_t(j)];
  }
  return Tensor<S>::make_op(
      {m, n}, std::move(out), {x, gain, bias},
      [m, n, eps](typename Tensor<S>::Node& nd) {
        auto& px = *nd.parents[0];
        auto& pg = *nd.parents[1];
        auto& pb = *nd.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        std::vector<S> xhat(static_cast<size_t>(n));
        for (int i = 0; i < m; ++i) {
          const S* row = px.value.data() + size_t(i) * size_t(n);
          const S* g = nd.grad.data() + size_t(i) * size_t(n);
          S mu = 0;
          for (int j = 0; j < n; ++j) mu += row[j];
          mu /= S(n);
          S var = 0;
          for (int j = 0; j < n; ++j) {
            const S d = row[j] - mu;
            var += d * d;
          }
          var /= S(n);
          const S inv = S(1) / S(std::sqrt(double(var) + eps));
          for (int j = 0; j < n; ++j) xhat[size_t(j)] = (row[j] - mu) * inv;

          if (pg.requires_grad)
            for (int j = 0; j < n; ++j) pg.grad[size_t(j)] += g[j] * xhat[size_t(j)];
          if (pb.requires_grad)
            for (int j = 0; j < n; ++j) pb.grad[size_t(j)] += g[j];
          if (px.requires_grad) {
            S sum1 = 0, sum2 = 0;
            for (int j = 0; j < n; ++j) {
              const S dxh = g[j] * pg.value[size_t(j)];
              sum1 += dxh;
              sum2 += dxh * xhat[size_t(j)];
            }
            S* d = px.grad.data() + size_t(i) * size_t(n);
            for (int j = 0; j < n; ++j) {
              const S dxh = g[j] * pg.value[size_t(j)];
              d[j] += inv * (dxh - sum1 / S(n) - xhat[size_t(j)] * sum2 / S(n));
            }
          }
        }
      },
      "layer_norm_rows");
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
  S total = 0;
  for (S v : a.value()) total += v;
  return Tensor<S>::make_op(
      {1}, {total}, {a},
      [](typename Tensor<S>::Node& n) {
        auto& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const S g = n.grad[0];
        for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += g;
      },
      "sum_all");
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& a) {
  if (a.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
  return scale(sum_all(a), S(1) / S(double(a.size())));
}

// Column-wise max over rows: [m,n] -> [1,n]. Gradient routes to the first
// row attaining each maximum (ties toward the lowest row index).
template <typename S>
Tensor<S> max_over_rows(const Tensor<S>& x) {
  detail::require_rank2(x, "max_over_rows");
  const int m = x.dim(0), n = x.dim(1);
  if (m < 1) throw std::invalid_argument("max_over_rows: no rows");
  std::vector<S> out(static_cast<size_t>(n));
  std::vector<int> arg(size_t(n), 0);
  const auto& xv = x.value();
  for (int j = 0; j < n; ++j) out[size_t(j)] = xv[size_t(j)];
  for (int i = 1; i < m; ++i) {
    const S* row = xv.data() + size_t(i) * size_t(n);
    for (int j = 0; j < n; ++j) {
      if (row[j] > out[size_t(j)]) {
        out[size_t(j)] = row[j];
        arg[size_t(j)] = i;
      }
    }
  }
  return Tensor<S>::make_op(
      {1, n}, std::move(out), {x},
      [n, arg = std::move(arg)](typename Tensor<S>::Node& nd) {
        auto& px = *nd.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int j = 0; j < n; ++j) px.grad[size_t(arg[size_t(j)]) * size_t(n) + size_t(j)] += nd.grad[size_t(j)];
      },
      "max_over_rows");
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  detail::require_rank2(parts[0], "concat_rows");
  const int n = parts[0].dim(1);
  int m = 0;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_rows");
    if (p.dim(1) != n) throw std::invalid_argument("concat_rows: column mismatch");
    m += p.dim(0);
  }
  std::vector<S> out;
  out.reserve(size_t(m) * size_t(n));
  std::vector<int> row_counts;
  for (const auto& p : parts) {
    out.insert(out.end(), p.value().begin(), p.value().end());
    row_counts.push_back(p.dim(0));
  }
  return Tensor<S>::make_op(
      {m, n}, std::move(out), parts,
      [n, row_counts = std::move(row_counts)](typename Tensor<S>::Node& nd) {
        size_t offset = 0;
        for (size_t p = 0; p < nd.parents.size(); ++p) {
          auto& par = *nd.parents[p];
          const size_t count = size_t(row_counts[p]) * size_t(n);
          if (par.requires_grad) {
            par.ensure_grad();
            for (size_t i = 0; i < count; ++i) par.grad[i] += nd.grad[offset + i];
          }
          offset += count;
        }
      },
      "concat_rows");
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& x, int row0, int nrows) {
  detail::require_rank2(x, "slice_rows");
  const int m = x.dim(0), n = x.dim(1);
  if (row0 < 0 || nrows < 1 || row0 + nrows > m) throw std::invalid_argument("slice_rows: range out of bounds");
  std::vector<S> out(x.value().begin() + size_t(row0) * size_t(n),
                     x.value().begin() + size_t(row0 + nrows) * size_t(n));
  return Tensor<S>::make_op(
      {nrows, n}, std::move(out), {x},
      [row0, n](typename Tensor<S>::Node& nd) {
        auto& px = *nd.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const size_t base = size_t(row0) * size_t(n);
        for (size_t i = 0; i < nd.grad.size(); ++i) px.grad[base + i] += nd.grad[i];
      },
      "slice_rows");
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  detail::require_rank2(parts[0], "concat_cols");
  const int m = parts[0].dim(0);
  int n = 0;
  std::vector<int> col_counts;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_cols");
    if (p.dim(0) != m) throw std::invalid_argument("concat_cols: row mismatch");
    n += p.dim(1);
    col_counts.push_back(p.dim(1));
  }
  std::vector<S> out(size_t(m) * size_t(n));
  int col0 = 0;
  for (const auto& p : parts) {
    const int pc = p.dim(1);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < pc; ++j)
        out[size_t(i) * size_t(n) + size_t(col0 + j)] = p.value()[size_t(i) * size_t(pc) + size_t(j)];
    col0 += pc;
  }
  return Tensor<S>::make_op(
      {m, n}, std::move(out), parts,
      [m, n, col_counts = std::move(col_counts)](typename Tensor<S>::Node& nd) {
        int col0 = 0;
        for (size_t p = 0; p < nd.parents.size(); ++p) {
          auto& par = *nd.parents[p];
          const int pc = col_counts[p];
          if (par.requires_grad) {
            par.ensure_grad();
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < pc; ++j)
                par.grad[size_t(i) * size_t(pc) + size_t(j)] += nd.grad[size_t(i) * size_t(n) + size_t(col0 + j)];
          }
          col0 += pc;
        }
      },
      "concat_cols");
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, int col0, int ncols) {
  detail::require_rank2(x, "slice_cols");
  const int m = x.dim(0), n = x.dim(1);
  if (col0 < 0 || ncols < 1 || col0 + ncols > n) throw std::invalid_argument("slice_cols: range out of bounds");
  std::vector<S> out(size_t(m) * size_t(ncols));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < ncols; ++j)
      out[size_t(i) * size_t(ncols) + size_t(j)] = x.value()[size_t(i) * size_t(n) + size_t(col0 + j)];
  return Tensor<S>::make_op(
      {m, ncols}, std::move(out), {x},
      [m, n, col0, ncols](typename Tensor<S>::Node& nd) {
        auto& px = *nd.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < ncols; ++j)
            px.grad[size_t(i) * size_t(n) + size_t(col0 + j)] += nd.grad[size_t(i) * size_t(ncols) + size_t(j)];
      },
      "slice_cols");
}

// Same data, new shape; gradient passes through untouched.
template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_numel(shape) != x.size()) throw std::invalid_argument("reshape: element count mismatch");
  std::vector<S> out = x.value();
  return Tensor<S>::make_op(
      std::move(shape), std::move(out), {x},
      [](typename Tensor<S>::Node& nd) {
        auto& px = *nd.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (size_t i = 0; i < nd.grad.size(); ++i) px.grad[i] += nd.grad[i];
      },
      "reshape");
}

// Inverted dropout: kept entries scale by 1/(1-p) so eval is the identity.
// Consumes one uniform draw per element in training mode, none otherwise.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  if (!training || p == 0.0) return x;
  const S keep_scale = S(1.0 / (1.0 - p));
  std::vector<S> factor(size_t(x.size()));
  for (auto& f : factor) f = rng.uniform() < p ? S(0) : keep_scale;
  std::vector<S> out = x.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return Tensor<S>::make_op(
      x.shape(), std::move(out), {x},
      [factor = std::move(factor)](typename Tensor<S>::Node& nd) {
        auto& px = *nd.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (size_t i = 0; i < nd.grad.size(); ++i) px.grad[i] += nd.grad[i] * factor[i];
      },
      "dropout");
}

// Stochastic depth: zeroes the whole tensor (one residual branch) with
// probability p, otherwise scales by 1/(1-p). One uniform draw per call in
// training mode.
template <typename S>
Tensor<S> droppath(const Tensor<S>& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("droppath: p must be in [0,1)");
  if (!training || p == 0.0) return x;
  const S factor = rng.uniform() < p ? S(0) : S(1.0 / (1.0 - p));
  return scale(x, factor);
}

// ---------------------------------------------------------------------------
// losses

// Mean binary focal loss over logits with {0,1} labels:
//   FL = -alpha_t (1 - p_t)^gamma log(p_t),  p_t = sigmoid(label ? z : -z),
//   alpha_t = alpha for label 1, (1 - alpha) for label 0.
// Computed around log-sigmoid for stability at large |z|.
template <typename S>
Tensor<S> focal_loss_mean(const Tensor<S>& logits, const std::vector<int>& labels, double alpha, double gamma) {
  const int64_t n = logits.size();
  if (n < 1) throw std::invalid_argument("focal_loss_mean: no logits");
  if (int64_t(labels.size()) != n) throw std::invalid_argument("focal_loss_mean: label count mismatch");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("focal_loss_mean: alpha must be in [0,1]");
  if (gamma < 0.0) throw std::invalid_argument("focal_loss_mean: gamma must be >= 0");

  auto softplus = [](double t) {  // log(1 + e^t), overflow-safe
    return std::log1p(std::exp(-std::abs(t))) + std::max(t, 0.0);
  };

  double total = 0.0;
  const auto& zv = logits.value();
  for (int64_t i = 0; i < n; ++i) {
    const double s = labels[size_t(i)] ? 1.0 : -1.0;
    const double zt = s * double(zv[size_t(i)]);
    const double log_pt = -softplus(-zt);
    const double one_minus_pt = double(detail::sigmoid_stable(-zt));
    const double at = labels[size_t(i)] ? alpha : 1.0 - alpha;
    total += -at * std::pow(one_minus_pt, gamma) * log_pt;
  }
  total /= double(n);

  return Tensor<S>::make_op(
      {1}, {S(total)}, {logits},
      [labels, alpha, gamma, n, softplus](typename Tensor<S>::Node& nd) {
        auto& pz = *nd.parents[0];
        if (!pz.requires_grad) return;
        pz.ensure_grad();
        const double g0 = double(nd.grad[0]) / double(n);
        for (int64_t i = 0; i < n; ++i) {
          const double s = labels[size_t(i)] ? 1.0 : -1.0;
          const double zt = s * double(pz.value[size_t(i)]);
          const double pt = double(detail::sigmoid_stable(S(zt)));
          const double one_minus_pt = double(detail::sigmoid_stable(S(-zt)));
          const double log_pt = -softplus(-zt);
          const double at = labels[size_t(i)] ? alpha : 1.0 - alpha;
          // d/dz_t of -at (1-pt)^gamma log(pt), see the loss definition above
          const double d = at * std::pow(one_minus_pt, gamma) * (gamma * pt * log_pt - one_minus_pt);
          pz.grad[size_t(i)] += S(g0 * s * d);
        }
      },
      "focal_loss_mean");
}

// Mean softmax cross-entropy over rows of logits with integer class labels.
template <typename S>
Tensor<S> cross_entropy_logits(const Tensor<S>& logits, const std::vector<int>& labels) {
  detail::require_rank2(logits, "cross_entropy_logits");
  const int m = logits.dim(0), c = logits.dim(1);
  if (int(labels.size()) != m) throw std::invalid_argument("cross_entropy_logits: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= c) throw std::invalid_argument("cross_entropy_logits: label out of range");

  const auto& zv = logits.value();
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    const S* row = zv.data() + size_t(i) * size_t(c);
    double mx = double(row[0]);
    for (int j = 1; j < c; ++j) mx = std::max(mx, double(row[j]));
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(double(row[j]) - mx);
    total += std::log(sum) + mx - double(row[labels[size_t(i)]]);
  }
  total /= double(m);

  return Tensor<S>::make_op(
      {1}, {S(total)}, {logits},
      [labels, m, c](typename Tensor<S>::Node& nd) {
        auto& pz = *nd.parents[0];
        if (!pz.requires_grad) return;
        pz.ensure_grad();
        const double g0 = double(nd.grad[0]) / double(m);
        for (int i = 0; i < m; ++i) {
          const S* row = pz.value.data() + size_t(i) * size_t(c);
          double mx = double(row[0]);
          for (int j = 1; j < c; ++j) mx = std::max(mx, double(row[j]));
          double sum = 0.0;
          for (int j = 0; j < c; ++j) sum += std::exp(double(row[j]) - mx);
          for (int j = 0; j < c; ++j) {
            const double p = std::exp(double(row[j]) - mx) / sum;
            const double onehot = (j == labels[size_t(i)]) ? 1.0 : 0.0;
            pz.grad[size_t(i) * size_t(c) + size_t(j)] += S(g0 * (p - onehot));
          }
        }
      },
      "cross_entropy_logits");
}

// Symmetric squared-distance Chamfer between predicted points [m,3] and a
// fixed target cloud; differentiable w.r.t. the prediction. Nearest
// neighbors resolve ties toward the lower index.
template <typename S>
Tensor<S> chamfer_loss(const Tensor<S>& pred, const PointCloud& target) {
  detail::require_rank2(pred, "chamfer_loss");
  if (pred.dim(1) != 3) throw std::invalid_argument("chamfer_loss: prediction must be [m,3]");
  const int m = pred.dim(0);
  const int t = int(target.size());
  if (m < 1 || t < 1) throw std::invalid_argument("chamfer_loss: empty cloud");

  const auto& pv = pred.value();
  auto point_at = [&](int i) {
    return Point3{double(pv[size_t(i) * 3]), double(pv[size_t(i) * 3 + 1]), double(pv[size_t(i) * 3 + 2])};
  };

  std::vector<int> nn_fwd(static_cast<size_t>(m));  // pred -> target
  std::vector<int> nn_bwd(static_cast<size_t>(t));  // target -> pred
  double forward = 0.0, backward_term = 0.0;
  for (int i = 0; i < m; ++i) {
    const Point3 p = point_at(i);
    double best = dist2(p, target[0]);
    int arg = 0;
    for (int j = 1; j < t; ++j) {
      const double d = dist2(p, target[size_t(j)]);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    nn_fwd[size_t(i)] = arg;
    forward += best;
  }
  for (int j = 0; j < t; ++j) {
    double best = dist2(target[size_t(j)], point_at(0));
    int arg = 0;
    for (int i = 1; i < m; ++i) {
      const double d = dist2(target[size_t(j)], point_at(i));
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    nn_bwd[size_t(j)] = arg;
    backward_term += best;
  }
  const double loss = forward / double(m) + backward_term / double(t);

  return Tensor<S>::make_op(
      {1}, {S(loss)}, {pred},
      [target, m, t, nn_fwd = std::move(nn_fwd), nn_bwd = std::move(nn_bwd)](typename Tensor<S>::Node& nd) {
        auto& pp = *nd.parents[0];
        if (!pp.requires_grad) return;
        pp.ensure_grad();
        const double g0 = double(nd.grad[0]);
        auto point_at = [&](int i) {
          return Point3{double(pp.value[size_t(i) * 3]), double(pp.value[size_t(i) * 3 + 1]),
                        double(pp.value[size_t(i) * 3 + 2])};
        };
        for (int i = 0; i < m; ++i) {
          const Point3 p = point_at(i);
          const Point3 q = target[size_t(nn_fwd[size_t(i)])];
          const double w = 2.0 * g0 / double(m);
          pp.grad[size_t(i) * 3 + 0] += S(w * (p.x - q.x));
          pp.grad[size_t(i) * 3 + 1] += S(w * (p.y - q.y));
          pp.grad[size_t(i) * 3 + 2] += S(w * (p.z - q.z));
        }
        for (int j = 0; j < t; ++j) {
          const int i = nn_bwd[size_t(j)];
          const Point3 p = point_at(i);
          const Point3 q = target[size_t(j)];
          const double w = 2.0 * g0 / double(t);
          pp.grad[size_t(i) * 3 + 0] += S(w * (p.x - q.x));
          pp.grad[size_t(i) * 3 + 1] += S(w * (p.y - q.y));
          pp.grad[size_t(i) * 3 + 2] += S(w * (p.z - q.z));
        }
      },
      "chamfer_loss");
}

// [n,3] constant tensor from a point cloud.
template <typename S>
Tensor<S> tensor_from_cloud(const PointCloud& cloud) {
  std::vector<S> data;
  data.reserve(cloud.size() * 3);
  for (const Point3& p : cloud) {
    data.push_back(S(p.x));
    data.push_back(S(p.y));
    data.push_back(S(p.z));
  }
  return Tensor<S>::from({int(cloud.size()), 3}, std::move(data));
}

}  // namespace mpt
