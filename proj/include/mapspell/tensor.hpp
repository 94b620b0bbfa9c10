#pragma once

// Dense row-major tensors of doubles with reverse-mode differentiation.
//
// A Tensor is a shared handle to a node. Ops executed while grad mode is on
// and at least one input requires grad record their inputs and a backward
// rule; backward() walks the record in reverse topological order.
// Leaf grads accumulate across backward calls; call zero_grad between steps.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mapspell/error.hpp"
#include "mapspell/rng.hpp"

namespace mapspell {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

struct Node;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;  // empty for leaves

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables graph recording for its lifetime (inference, frozen encoders).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (values.size() != numel(shape))
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(numel(shape), 0.0);
    return from(std::move(shape), std::move(v), requires_grad);
  }
  static Tensor scalar(double x, bool requires_grad = false) { return from({}, {x}, requires_grad); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }
  double item() const {
    if (size() != 1) throw ContractError("item(): tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::vector<double>& grad() { return node_->grad_buffer(); }
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  bool is_leaf() const { return !node_->backward; }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor record(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const auto& t : inputs) n->inputs.push_back(t.ptr());
      n->backward = std::move(fn);
    }
  }
  return Tensor(std::move(n));
}

// Input i's grad buffer when it wants one, else nullptr.
inline double* grad_of(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? in.grad_buffer().data() : nullptr;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

inline void require_suffix(const char* op, const Tensor& a, const Tensor& b) {
  if (!is_suffix(b.shape(), a.shape()))
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(a.shape()));
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) * (0.5 * M_2_SQRTPI * M_SQRT1_2);
  return cdf + x * pdf;
}

}  // namespace detail

/// Backpropagates from a scalar. Non-leaf grads are recomputed from zero;
/// leaf grads accumulate.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " + (loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
  if (!loss.requires_grad()) throw ContractError("backward: loss does not depend on any tensor that requires grad");

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    n->backward(*n);
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

namespace ops {

// ---------------------------------------------------------------------------
// Linear algebra

/// x[..., K] · w[K, N] -> [..., N]
inline Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2 || x.rank() < 1 || x.shape().back() != w.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const std::size_t K = w.dim(0), N = w.dim(1), M = x.size() / K;
  Shape out = x.shape();
  out.back() = N;
  std::vector<double> y(M * N);
  detail::MapMat(y.data(), M, N).noalias() = detail::CMapMat(x.data().data(), M, K) * detail::CMapMat(w.data().data(), K, N);
  return detail::record(std::move(out), std::move(y), {x, w}, [M, K, N](Node& n) {
    detail::CMapMat dy(n.grad.data(), M, N);
    if (double* gx = detail::grad_of(n, 0))
      detail::MapMat(gx, M, K).noalias() += dy * detail::CMapMat(n.inputs[1]->value.data(), K, N).transpose();
    if (double* gw = detail::grad_of(n, 1))
      detail::MapMat(gw, K, N).noalias() += detail::CMapMat(n.inputs[0]->value.data(), M, K).transpose() * dy;
  });
}

/// Batched product a[B, M, K] · b[B, K, N] (or b[B, N, K] transposed) -> [B, M, N].
inline Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1)))
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     (transpose_b ? " (b transposed)" : ""));
  const std::size_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = transpose_b ? b.dim(1) : b.dim(2);
  std::vector<double> y(B * M * N);
  for (std::size_t i = 0; i < B; ++i) {
    detail::CMapMat A(a.data().data() + i * M * K, M, K);
    detail::MapMat Y(y.data() + i * M * N, M, N);
    if (transpose_b) Y.noalias() = A * detail::CMapMat(b.data().data() + i * N * K, N, K).transpose();
    else Y.noalias() = A * detail::CMapMat(b.data().data() + i * K * N, K, N);
  }
  return detail::record({B, M, N}, std::move(y), {a, b}, [B, M, K, N, transpose_b](Node& n) {
    double* ga = detail::grad_of(n, 0);
    double* gb = detail::grad_of(n, 1);
    const double* av = n.inputs[0]->value.data();
    const double* bv = n.inputs[1]->value.data();
    for (std::size_t i = 0; i < B; ++i) {
      detail::CMapMat dy(n.grad.data() + i * M * N, M, N);
      detail::CMapMat A(av + i * M * K, M, K);
      if (transpose_b) {
        detail::CMapMat Bm(bv + i * N * K, N, K);
        if (ga) detail::MapMat(ga + i * M * K, M, K).noalias() += dy * Bm;
        if (gb) detail::MapMat(gb + i * N * K, N, K).noalias() += dy.transpose() * A;
      } else {
        detail::CMapMat Bm(bv + i * K * N, K, N);
        if (ga) detail::MapMat(ga + i * M * K, M, K).noalias() += dy * Bm.transpose();
        if (gb) detail::MapMat(gb + i * K * N, K, N).noalias() += A.transpose() * dy;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

/// a + b, where b's shape is a suffix of a's (broadcast over leading dims).
inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_suffix("add", a, b);
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> y(a.data());
  const auto& bv = b.data();
  for (std::size_t i = 0; i < n; i += m)
    for (std::size_t j = 0; j < m; ++j) y[i + j] += bv[j];
  return detail::record(a.shape(), std::move(y), {a, b}, [n, m](Node& nd) {
    const double* dy = nd.grad.data();
    if (double* ga = detail::grad_of(nd, 0))
      for (std::size_t i = 0; i < n; ++i) ga[i] += dy[i];
    if (double* gb = detail::grad_of(nd, 1))
      for (std::size_t i = 0; i < n; i += m)
        for (std::size_t j = 0; j < m; ++j) gb[j] += dy[i + j];
  });
}

/// Elementwise a * b with the same broadcast rule as add.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_suffix("mul", a, b);
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> y(n);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < n; i += m)
    for (std::size_t j = 0; j < m; ++j) y[i + j] = av[i + j] * bv[j];
  return detail::record(a.shape(), std::move(y), {a, b}, [n, m](Node& nd) {
    const double* dy = nd.grad.data();
    const double* av = nd.inputs[0]->value.data();
    const double* bv = nd.inputs[1]->value.data();
    if (double* ga = detail::grad_of(nd, 0))
      for (std::size_t i = 0; i < n; i += m)
        for (std::size_t j = 0; j < m; ++j) ga[i + j] += dy[i + j] * bv[j];
    if (double* gb = detail::grad_of(nd, 1))
      for (std::size_t i = 0; i < n; i += m)
        for (std::size_t j = 0; j < m; ++j) gb[j] += dy[i + j] * av[i + j];
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> y(a.data());
  for (double& v : y) v *= s;
  return detail::record(a.shape(), std::move(y), {a}, [s](Node& nd) {
    double* ga = detail::grad_of(nd, 0);
    for (std::size_t i = 0; i < nd.grad.size(); ++i) ga[i] += s * nd.grad[i];
  });
}

namespace detail_unary {
template <class F, class DF>
Tensor unary(const Tensor& a, F f, DF df_from_xy) {
  std::vector<double> y(a.size());
  const auto& x = a.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  return mapspell::detail::record(a.shape(), std::move(y), {a}, [df_from_xy](Node& nd) {
    double* ga = mapspell::detail::grad_of(nd, 0);
    const double* x = nd.inputs[0]->value.data();
    const double* yv = nd.value.data();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) ga[i] += nd.grad[i] * df_from_xy(x[i], yv[i]);
  });
}
}  // namespace detail_unary

inline Tensor sigmoid(const Tensor& a) {
  return detail_unary::unary(
      a, [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
  return detail_unary::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

/// Exact (erf-based) GELU.
inline Tensor gelu(const Tensor& a) {
  return detail_unary::unary(a, detail::gelu, [](double x, double) { return detail::gelu_grad(x); });
}

inline Tensor relu(const Tensor& a) {
  return detail_unary::unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Normalization

/// Softmax over the last axis.
inline Tensor softmax(const Tensor& a) {
  if (a.rank() < 1) throw ShapeError("softmax: scalar input");
  const std::size_t d = a.shape().back(), rows = a.size() / std::max<std::size_t>(d, 1);
  std::vector<double> y(a.size());
  const auto& x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    double* yr = y.data() + r * d;
    const double mx = *std::max_element(xr, xr + d);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < d; ++j) yr[j] /= s;
  }
  return detail::record(a.shape(), std::move(y), {a}, [rows, d](Node& nd) {
    double* ga = detail::grad_of(nd, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = nd.value.data() + r * d;
      const double* dy = nd.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += dy[j] * yr[j];
      for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += yr[j] * (dy[j] - dot);
    }
  });
}

/// Softmax over the last axis of x[G*B, M, N] that gives zero weight to keys
/// with key_valid[b*N + n] == 0, where b = row_block / G. A row whose keys are
/// all invalid is all zeros.
inline Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>& key_valid, std::size_t batch) {
  if (x.rank() != 3 || batch == 0 || x.dim(0) % batch != 0 || key_valid.size() != batch * x.dim(2))
    throw ShapeError("masked_softmax: scores " + shape_str(x.shape()) + " vs mask of " + std::to_string(key_valid.size()) +
                     " for batch " + std::to_string(batch));
  const std::size_t blocks = x.dim(0), M = x.dim(1), N = x.dim(2), G = blocks / batch;
  std::vector<double> y(x.size(), 0.0);
  const auto& xv = x.data();
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::uint8_t* valid = key_valid.data() + (blk / G) * N;
    for (std::size_t i = 0; i < M; ++i) {
      const std::size_t off = (blk * M + i) * N;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < N; ++j)
        if (valid[j]) mx = std::max(mx, xv[off + j]);
      if (mx == -std::numeric_limits<double>::infinity()) continue;
      double s = 0.0;
      for (std::size_t j = 0; j < N; ++j)
        if (valid[j]) s += (y[off + j] = std::exp(xv[off + j] - mx));
      for (std::size_t j = 0; j < N; ++j) y[off + j] /= s;
    }
  }
  const std::size_t rows = blocks * M;
  return detail::record(x.shape(), std::move(y), {x}, [rows, N](Node& nd) {
    double* ga = detail::grad_of(nd, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = nd.value.data() + r * N;
      const double* dy = nd.grad.data() + r * N;
      double dot = 0.0;
      for (std::size_t j = 0; j < N; ++j) dot += dy[j] * yr[j];
      for (std::size_t j = 0; j < N; ++j) ga[r * N + j] += yr[j] * (dy[j] - dot);
    }
  });
}

/// Layer normalization over the last axis with gain and bias of that size.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  if (x.rank() < 1 || gain.shape() != Shape{x.shape().back()} || bias.shape() != gain.shape())
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " with gain " + shape_str(gain.shape()) + " and bias " +
                     shape_str(bias.shape()));
  const std::size_t d = x.shape().back(), rows = x.size() / d;
  std::vector<double> xhat(x.size()), rstd(rows), y(x.size());
  const auto& xv = x.data();
  const auto& g = gain.data();
  const auto& b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mean) * rstd[r];
      y[r * d + j] = xhat[r * d + j] * g[j] + b[j];
    }
  }
  return detail::record(x.shape(), std::move(y), {x, gain, bias},
                        [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& nd) {
    double* gx = detail::grad_of(nd, 0);
    double* gg = detail::grad_of(nd, 1);
    double* gb = detail::grad_of(nd, 2);
    const double* g = nd.inputs[1]->value.data();
    const double inv_d = 1.0 / static_cast<double>(d);
    std::vector<double> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dy = nd.grad.data() + r * d;
      const double* xh = xhat.data() + r * d;
      if (gg)
        for (std::size_t j = 0; j < d; ++j) gg[j] += dy[j] * xh[j];
      if (gb)
        for (std::size_t j = 0; j < d; ++j) gb[j] += dy[j];
      if (gx) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dxhat[j] = dy[j] * g[j];
          s1 += dxhat[j];
          s2 += dxhat[j] * xh[j];
        }
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += rstd[r] * (dxhat[j] - inv_d * s1 - xh[j] * inv_d * s2);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Indexing and layout

/// Rows of weight[V, D] selected by ids -> [prefix..., D]; numel(prefix) == ids.size().
inline Tensor embedding(const Tensor& weight, const std::vector<std::int32_t>& ids, Shape prefix) {
  if (weight.rank() != 2 || numel(prefix) != ids.size())
    throw ShapeError("embedding: table " + shape_str(weight.shape()) + " with " + std::to_string(ids.size()) +
                     " ids for prefix " + shape_str(prefix));
  const std::size_t V = weight.dim(0), D = weight.dim(1);
  std::vector<double> y(ids.size() * D);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V)
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(V) + " rows");
    std::copy_n(weight.data().data() + static_cast<std::size_t>(ids[i]) * D, D, y.data() + i * D);
  }
  prefix.push_back(D);
  return detail::record(std::move(prefix), std::move(y), {weight}, [ids, D](Node& nd) {
    double* gw = detail::grad_of(nd, 0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* row = gw + static_cast<std::size_t>(ids[i]) * D;
      const double* dy = nd.grad.data() + i * D;
      for (std::size_t j = 0; j < D; ++j) row[j] += dy[j];
    }
  });
}

/// Identifies one dropout site: masks are a pure function of these keys and
/// the element index.
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t layer = 0;
  std::uint64_t step = 0;
};

/// Inverted dropout: survivors scaled by 1/(1-p). Identity when !train or p == 0.
inline Tensor dropout(const Tensor& x, double p, bool train, const DropoutKey& key) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must lie in [0,1)");
  if (!train || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size()), y(x.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = counter_uniform(key.seed, key.layer, key.step, i) < p ? 0.0 : keep_scale;
    y[i] = x.data()[i] * mask[i];
  }
  return detail::record(x.shape(), std::move(y), {x}, [mask = std::move(mask)](Node& nd) {
    double* gx = detail::grad_of(nd, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += nd.grad[i] * mask[i];
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  return detail::record(std::move(shape), x.data(), {x}, [](Node& nd) {
    double* gx = detail::grad_of(nd, 0);
    for (std::size_t i = 0; i < nd.grad.size(); ++i) gx[i] += nd.grad[i];
  });
}

/// Concatenation along the last axis; all other dims must agree.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape lead = parts[0].shape();
  if (lead.empty()) throw ShapeError("concat: scalar input");
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape l = p.shape();
    if (l.empty()) throw ShapeError("concat: scalar input");
    const std::size_t w = l.back();
    l.pop_back();
    if (l != lead) throw ShapeError("concat: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    widths.push_back(w);
    total += w;
  }
  const std::size_t rows = numel(lead);
  std::vector<double> y(rows * total);
  for (std::size_t r = 0, off = 0; r < rows; ++r)
    for (std::size_t k = 0; k < parts.size(); ++k) {
      std::copy_n(parts[k].data().data() + r * widths[k], widths[k], y.data() + off);
      off += widths[k];
    }
  Shape out = lead;
  out.push_back(total);
  auto n = std::make_shared<Node>();
  n->shape = std::move(out);
  n->value = std::move(y);
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (grad_enabled() && any) {
    n->requires_grad = true;
    for (const auto& p : parts) n->inputs.push_back(p.ptr());
    n->backward = [rows, total, widths](Node& nd) {
      std::size_t col = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        if (double* g = detail::grad_of(nd, k))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += nd.grad[r * total + col + j];
        col += widths[k];
      }
    };
  }
  return Tensor(std::move(n));
}

/// Columns [begin, end) of the last axis.
inline Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() < 1 || begin >= end || end > x.shape().back())
    throw ShapeError("slice: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_str(x.shape()));
  const std::size_t d = x.shape().back(), w = end - begin, rows = x.size() / d;
  std::vector<double> y(rows * w);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data().data() + r * d + begin, w, y.data() + r * w);
  Shape out = x.shape();
  out.back() = w;
  return detail::record(std::move(out), std::move(y), {x}, [rows, d, w, begin](Node& nd) {
    double* gx = detail::grad_of(nd, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) gx[r * d + begin + j] += nd.grad[r * w + j];
  });
}

/// Rows of x viewed as [R, D] (D = last dim) picked by index -> [idx.size(), D].
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  if (x.rank() < 1) throw ShapeError("gather_rows: scalar input");
  const std::size_t d = x.shape().back(), rows = x.size() / d;
  std::vector<double> y(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) throw ContractError("gather_rows: row " + std::to_string(idx[i]) + " of " + std::to_string(rows));
    std::copy_n(x.data().data() + idx[i] * d, d, y.data() + i * d);
  }
  return detail::record({idx.size(), d}, std::move(y), {x}, [idx, d](Node& nd) {
    double* gx = detail::grad_of(nd, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gx[idx[i] * d + j] += nd.grad[i * d + j];
  });
}

/// Row-wise choice: keep[r] ? a[r] : b[r], with rows over the last axis.
inline Tensor where_rows(const std::vector<std::uint8_t>& keep, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() < 1 || keep.size() != a.size() / a.shape().back())
    throw ShapeError("where_rows: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()) + " with " +
                     std::to_string(keep.size()) + " selectors");
  const std::size_t d = a.shape().back();
  std::vector<double> y(a.size());
  for (std::size_t r = 0; r < keep.size(); ++r)
    std::copy_n((keep[r] ? a : b).data().data() + r * d, d, y.data() + r * d);
  return detail::record(a.shape(), std::move(y), {a, b}, [keep, d](Node& nd) {
    double* ga = detail::grad_of(nd, 0);
    double* gb = detail::grad_of(nd, 1);
    for (std::size_t r = 0; r < keep.size(); ++r) {
      double* g = keep[r] ? ga : gb;
      if (!g) continue;
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += nd.grad[r * d + j];
    }
  });
}

/// [B, T, H] -> [B*heads, T, H/heads], head-major within each batch row.
inline Tensor split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0)
    throw ShapeError("split_heads: " + shape_str(x.shape()) + " into " + std::to_string(heads) + " heads");
  const std::size_t B = x.dim(0), T = x.dim(1), H = x.dim(2), d = H / heads;
  std::vector<double> y(x.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(x.data().data() + (b * T + t) * H + h * d, d, y.data() + ((b * heads + h) * T + t) * d);
  return detail::record({B * heads, T, d}, std::move(y), {x}, [B, T, H, d, heads](Node& nd) {
    double* gx = detail::grad_of(nd, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t h = 0; h < heads; ++h) {
          double* dst = gx + (b * T + t) * H + h * d;
          const double* src = nd.grad.data() + ((b * heads + h) * T + t) * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
  });
}

/// Inverse of split_heads: [B*heads, T, d] -> [B, T, heads*d].
inline Tensor merge_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(0) % heads != 0)
    throw ShapeError("merge_heads: " + shape_str(x.shape()) + " with " + std::to_string(heads) + " heads");
  const std::size_t B = x.dim(0) / heads, T = x.dim(1), d = x.dim(2), H = heads * d;
  std::vector<double> y(x.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(x.data().data() + ((b * heads + h) * T + t) * d, d, y.data() + (b * T + t) * H + h * d);
  return detail::record({B, T, H}, std::move(y), {x}, [B, T, H, d, heads](Node& nd) {
    double* gx = detail::grad_of(nd, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t h = 0; h < heads; ++h) {
          double* dst = gx + ((b * heads + h) * T + t) * d;
          const double* src = nd.grad.data() + (b * T + t) * H + h * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::record({}, {s}, {x}, [](Node& nd) {
    double* gx = detail::grad_of(nd, 0);
    for (std::size_t i = 0; i < nd.inputs[0]->value.size(); ++i) gx[i] += nd.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

/// Mean negative log-softmax of logits[..., C] at the target classes, over
/// positions whose target differs from ignore_id.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::int32_t>& targets,
                            std::optional<std::int32_t> ignore_id = std::nullopt) {
  if (logits.rank() < 2) throw ShapeError("cross_entropy: logits need rank >= 2, got " + shape_str(logits.shape()));
  const std::size_t C = logits.shape().back(), N = logits.size() / C;
  if (targets.size() != N)
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " with " + std::to_string(targets.size()) + " targets");
  std::vector<double> prob(logits.size());
  double total = 0.0;
  std::size_t counted = 0;
  const auto& x = logits.data();
  for (std::size_t r = 0; r < N; ++r) {
    if (ignore_id && targets[r] == *ignore_id) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= C)
      throw ContractError("cross_entropy: target " + std::to_string(targets[r]) + " outside " + std::to_string(C) + " classes");
    const double* xr = x.data() + r * C;
    const double mx = *std::max_element(xr, xr + C);
    double s = 0.0;
    for (std::size_t j = 0; j < C; ++j) s += (prob[r * C + j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < C; ++j) prob[r * C + j] /= s;
    total += std::log(s) + mx - xr[targets[r]];
    ++counted;
  }
  if (counted == 0) throw ContractError("cross_entropy: every position is ignored, loss is undefined");
  const double inv = 1.0 / static_cast<double>(counted);
  return detail::record({}, {total * inv}, {logits}, [prob = std::move(prob), targets, ignore_id, C, N, inv](Node& nd) {
    double* gx = detail::grad_of(nd, 0);
    const double g = nd.grad[0] * inv;
    for (std::size_t r = 0; r < N; ++r) {
      if (ignore_id && targets[r] == *ignore_id) continue;
      for (std::size_t j = 0; j < C; ++j) gx[r * C + j] += g * prob[r * C + j];
      gx[r * C + static_cast<std::size_t>(targets[r])] -= g;
    }
  });
}

}  // namespace ops
}  // namespace mapspell
