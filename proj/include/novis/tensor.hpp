#pragma once

// Dense tensor with reverse-mode autodiff. Values are row-major; ops are
// free functions recording pull-back closures on a thread-local tape.
// Everything is templated on the scalar so the same graph can run in f32
// (training/inference) or f64 (gradient shadow checks). Eigen provides the
// matrix kernels; loops are fixed-order so results are bit-reproducible.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace novis {

struct contract_error : std::runtime_error {
  explicit contract_error(const std::string& what) : std::runtime_error(what) {}
};

inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw contract_error(msg);
}

using Shape = std::vector<int>;

inline long long shape_numel(const Shape& s) {
  long long n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename S>
struct TensorNodeT {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated lazily, same length as value
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

template <typename S>
class TapeT;

template <typename S>
class TensorT {
 public:
  using Scalar = S;

  TensorT() = default;

  explicit TensorT(Shape shape, S fill = S(0)) {
    for (int d : shape) check_contract(d > 0, "tensor extents must be positive");
    node_ = std::make_shared<TensorNodeT<S>>();
    node_->shape = std::move(shape);
    node_->value.assign(static_cast<std::size_t>(shape_numel(node_->shape)), fill);
  }

  TensorT(Shape shape, std::vector<S> values) {
    for (int d : shape) check_contract(d > 0, "tensor extents must be positive");
    check_contract(shape_numel(shape) == static_cast<long long>(values.size()),
                   "value count does not match shape " + shape_str(shape));
    node_ = std::make_shared<TensorNodeT<S>>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
  }

  static TensorT scalar(S v) { return TensorT(Shape{1}, std::vector<S>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  long long size() const { return static_cast<long long>(node_->value.size()); }

  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }
  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }

  S item() const {
    check_contract(size() == 1, "item() requires a 1-element tensor");
    return node_->value[0];
  }

  TensorT& set_requires_grad(bool b = true) {
    node_->requires_grad = b;
    if (b) node_->ensure_grad();
    return *this;
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  S* grad_data() {
    node_->ensure_grad();
    return node_->grad.data();
  }
  const std::vector<S>& grad() const { return node_->grad; }
  void zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), S(0));
  }

  // Value copy detached from any gradient bookkeeping.
  TensorT detached() const {
    TensorT out(node_->shape, node_->value);
    return out;
  }

  template <typename T>
  TensorT<T> cast() const {
    std::vector<T> v(node_->value.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(node_->value[i]);
    return TensorT<T>(node_->shape, std::move(v));
  }

  std::shared_ptr<TensorNodeT<S>> node() const { return node_; }

 private:
  std::shared_ptr<TensorNodeT<S>> node_;
};

using Tensor = TensorT<float>;

// --------------------------------------------------------------------------
// Tape: ordered op records; backward replays the pull-backs in reverse.
// Activation is scoped and thread-local, one tape per training step.
// --------------------------------------------------------------------------

template <typename S>
class TapeT {
 public:
  TapeT() : previous_(active_ptr()) { active_ptr() = this; }
  ~TapeT() { active_ptr() = previous_; }
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT* active() { return active_ptr(); }
  static bool tracing() { return active_ptr() != nullptr; }

  void record(std::function<void()> pullback) { ops_.push_back(std::move(pullback)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // Seeds d(loss)/d(loss)=1 and accumulates grads for everything recorded
  // before the loss. The tape is consumed.
  void run_backward(TensorT<S>& loss) {
    check_contract(loss.size() == 1, "backward requires a scalar loss");
    check_contract(loss.requires_grad(), "loss is not connected to the tape");
    loss.grad_data()[0] += S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

 private:
  static TapeT*& active_ptr() {
    thread_local TapeT* tape = nullptr;
    return tape;
  }
  std::vector<std::function<void()>> ops_;
  TapeT* previous_;
};

template <typename S>
void backward(TensorT<S> loss) {
  check_contract(TapeT<S>::tracing(), "backward called with no active tape");
  TapeT<S>::active()->run_backward(loss);
}

namespace detail {

template <typename S>
bool track(std::initializer_list<const TensorT<S>*> inputs) {
  if (!TapeT<S>::tracing()) return false;
  for (const TensorT<S>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename S>
void mark_output(TensorT<S>& out) {
  out.set_requires_grad(true);
}

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

// --------------------------------------------------------------------------
// Elementwise arithmetic
// --------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  check_contract(a.shape() == b.shape(),
                 "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<S> out(a.shape());
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (long long i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  if (detail::track<S>({&a, &b})) {
    detail::mark_output(out);
    auto an = a.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record([an, bn, on] {
      const std::size_t n = on->value.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  check_contract(a.shape() == b.shape(), "sub: shape mismatch");
  TensorT<S> out(a.shape());
  for (long long i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (detail::track<S>({&a, &b})) {
    detail::mark_output(out);
    auto an = a.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record([an, bn, on] {
      const std::size_t n = on->value.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  check_contract(a.shape() == b.shape(), "mul: shape mismatch");
  TensorT<S> out(a.shape());
  for (long long i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::track<S>({&a, &b})) {
    detail::mark_output(out);
    auto an = a.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record([an, bn, on] {
      const std::size_t n = on->value.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> div(const TensorT<S>& a, const TensorT<S>& b) {
  check_contract(a.shape() == b.shape(), "div: shape mismatch");
  TensorT<S> out(a.shape());
  for (long long i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] / b.data()[i];
  if (detail::track<S>({&a, &b})) {
    detail::mark_output(out);
    auto an = a.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record([an, bn, on] {
      const std::size_t n = on->value.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] / bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          bn->grad[i] -= on->grad[i] * an->value[i] / (bn->value[i] * bn->value[i]);
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S c) {
  TensorT<S> out(a.shape());
  for (long long i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * c;
  if (detail::track<S>({&a})) {
    detail::mark_output(out);
    auto an = a.node(), on = out.node();
    TapeT<S>::active()->record([an, on, c] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->value.size(); ++i) an->grad[i] += on->grad[i] * c;
    });
  }
  return out;
}

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
  TensorT<S> out(a.shape());
  for (long long i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] + c;
  if (detail::track<S>({&a})) {
    detail::mark_output(out);
    auto an = a.node(), on = out.node();
    TapeT<S>::active()->record([an, on] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->value.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> relu(const TensorT<S>& a) {
  TensorT<S> out(a.shape());
  for (long long i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] > S(0) ? a.data()[i] : S(0);
  if (detail::track<S>({&a})) {
    detail::mark_output(out);
    auto an = a.node(), on = out.node();
    TapeT<S>::active()->record([an, on] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->value.size(); ++i)
        if (an->value[i] > S(0)) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& a) {
  TensorT<S> out(a.shape());
  for (long long i = 0; i < out.size(); ++i) {
    const S z = a.data()[i];
    out.data()[i] = z >= S(0) ? S(1) / (S(1) + std::exp(-z))
                              : std::exp(z) / (S(1) + std::exp(z));
  }
  if (detail::track<S>({&a})) {
    detail::mark_output(out);
    auto an = a.node(), on = out.node();
    TapeT<S>::active()->record([an, on] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->value.size(); ++i) {
        const S y = on->value[i];
        an->grad[i] += on->grad[i] * y * (S(1) - y);
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Reductions and shape ops
// --------------------------------------------------------------------------

// Sum of all elements -> [1]. Fixed left-to-right accumulation order.
template <typename S>
TensorT<S> sum(const TensorT<S>& a) {
  S acc = S(0);
  for (long long i = 0; i < a.size(); ++i) acc += a.data()[i];
  TensorT<S> out = TensorT<S>::scalar(acc);
  if (detail::track<S>({&a})) {
    detail::mark_output(out);
    auto an = a.node(), on = out.node();
    TapeT<S>::active()->record([an, on] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      const S g = on->grad[0];
      for (std::size_t i = 0; i < an->value.size(); ++i) an->grad[i] += g;
    });
  }
  return out;
}

template <typename S>
TensorT<S> mean(const TensorT<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.size()));
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& a, Shape new_shape) {
  check_contract(shape_numel(new_shape) == a.size(),
                 "reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                     shape_str(new_shape));
  TensorT<S> out(std::move(new_shape), a.values());
  if (detail::track<S>({&a})) {
    detail::mark_output(out);
    auto an = a.node(), on = out.node();
    TapeT<S>::active()->record([an, on] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->value.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

namespace detail {

inline std::vector<long long> row_major_strides(const Shape& s) {
  std::vector<long long> st(s.size());
  long long acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

// Maps flat output index -> flat input index for a permutation of axes.
inline std::vector<long long> permute_index_map(const Shape& in_shape,
                                                const std::vector<int>& axes) {
  const auto in_strides = row_major_strides(in_shape);
  Shape out_shape(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i)
    out_shape[i] = in_shape[static_cast<std::size_t>(axes[i])];
  const auto out_strides = row_major_strides(out_shape);
  const long long n = shape_numel(in_shape);
  std::vector<long long> map(static_cast<std::size_t>(n));
  std::vector<int> idx(axes.size(), 0);
  for (long long flat = 0; flat < n; ++flat) {
    long long rem = flat, src = 0;
    for (std::size_t d = 0; d < axes.size(); ++d) {
      const long long q = rem / out_strides[d];
      rem -= q * out_strides[d];
      src += q * in_strides[static_cast<std::size_t>(axes[d])];
    }
    map[static_cast<std::size_t>(flat)] = src;
  }
  return map;
}

}  // namespace detail

template <typename S>
TensorT<S> permute(const TensorT<S>& a, const std::vector<int>& axes) {
  check_contract(static_cast<int>(axes.size()) == a.rank(), "permute: axes rank mismatch");
  Shape out_shape(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = a.dim(axes[i]);
  auto map = detail::permute_index_map(a.shape(), axes);
  TensorT<S> out(out_shape);
  for (long long i = 0; i < out.size(); ++i)
    out.data()[i] = a.data()[map[static_cast<std::size_t>(i)]];
  if (detail::track<S>({&a})) {
    detail::mark_output(out);
    auto an = a.node(), on = out.node();
    auto shared_map = std::make_shared<std::vector<long long>>(std::move(map));
    TapeT<S>::active()->record([an, on, shared_map] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->value.size(); ++i)
        an->grad[static_cast<std::size_t>((*shared_map)[i])] += on->grad[i];
    });
  }
  return out;
}

// Gathers rows of a [N x rest] tensor; duplicate indices are allowed.
template <typename S>
TensorT<S> gather_rows(const TensorT<S>& a, const std::vector<int>& rows) {
  check_contract(a.rank() >= 1, "gather_rows: rank must be >= 1");
  check_contract(!rows.empty(), "gather_rows: empty index list");
  const long long row_len = a.size() / a.dim(0);
  for (int r : rows)
    check_contract(r >= 0 && r < a.dim(0), "gather_rows: index out of range");
  Shape out_shape = a.shape();
  out_shape[0] = static_cast<int>(rows.size());
  TensorT<S> out(out_shape);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(a.data() + rows[i] * row_len, a.data() + (rows[i] + 1) * row_len,
              out.data() + static_cast<long long>(i) * row_len);
  if (detail::track<S>({&a})) {
    detail::mark_output(out);
    auto an = a.node(), on = out.node();
    auto idx = std::make_shared<std::vector<int>>(rows);
    TapeT<S>::active()->record([an, on, idx, row_len] {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < idx->size(); ++i) {
        const long long src = static_cast<long long>(i) * row_len;
        const long long dst = static_cast<long long>((*idx)[i]) * row_len;
        for (long long j = 0; j < row_len; ++j) an->grad[dst + j] += on->grad[src + j];
      }
    });
  }
  return out;
}

// out[i*P + p, c] = a[i, c] + b[p, c]. Combines per-frame rows with
// per-position rows into one flattened token table.
template <typename S>
TensorT<S> cross_add_rows(const TensorT<S>& a, const TensorT<S>& b) {
  check_contract(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
                 "cross_add_rows: operands must be [T x C] and [P x C]");
  const int t = a.dim(0), p = b.dim(0), c = a.dim(1);
  TensorT<S> out(Shape{t * p, c});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < p; ++j) {
      const S* av = a.data() + static_cast<long long>(i) * c;
      const S* bv = b.data() + static_cast<long long>(j) * c;
      S* ov = out.data() + (static_cast<long long>(i) * p + j) * c;
      for (int k = 0; k < c; ++k) ov[k] = av[k] + bv[k];
    }
  if (detail::track<S>({&a, &b})) {
    detail::mark_output(out);
    auto an = a.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record([an, bn, on, t, p, c] {
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < p; ++j) {
          const S* g = on->grad.data() + (static_cast<long long>(i) * p + j) * c;
          if (an->requires_grad) {
            an->ensure_grad();
            S* ga = an->grad.data() + static_cast<long long>(i) * c;
            for (int k = 0; k < c; ++k) ga[k] += g[k];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            S* gb = bn->grad.data() + static_cast<long long>(j) * c;
            for (int k = 0; k < c; ++k) gb[k] += g[k];
          }
        }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Matrix products
// --------------------------------------------------------------------------

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  check_contract(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 operands required");
  check_contract(a.dim(1) == b.dim(0), "matmul: inner dimensions " + shape_str(a.shape()) +
                                           " vs " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TensorT<S> out(Shape{m, n});
  detail::ConstMatMap<S> A(a.data(), m, k), B(b.data(), k, n);
  detail::MatMap<S>(out.data(), m, n).noalias() = A * B;
  if (detail::track<S>({&a, &b})) {
    detail::mark_output(out);
    auto an = a.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record([an, bn, on, m, k, n] {
      detail::ConstMatMap<S> G(on->grad.data(), m, n);
      if (an->requires_grad) {
        an->ensure_grad();
        detail::ConstMatMap<S> B(bn->value.data(), k, n);
        detail::MatMap<S>(an->grad.data(), m, k).noalias() += G * B.transpose();
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        detail::ConstMatMap<S> A(an->value.data(), m, k);
        detail::MatMap<S>(bn->grad.data(), k, n).noalias() += A.transpose() * G;
      }
    });
  }
  return out;
}

namespace detail {

// Shared batched product core: C[b] = A[b] * op(B[b]), op = identity or transpose.
template <typename S, bool TransposeB>
TensorT<S> bmm_impl(const TensorT<S>& a, const TensorT<S>& b) {
  check_contract(a.rank() == 3 && b.rank() == 3, "bmm: rank-3 operands required");
  check_contract(a.dim(0) == b.dim(0), "bmm: batch dims differ");
  const int batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const int n = TransposeB ? b.dim(1) : b.dim(2);
  check_contract(TransposeB ? (b.dim(2) == k) : (b.dim(1) == k), "bmm: inner dims differ");
  TensorT<S> out(Shape{batch, m, n});
  const long long sa = static_cast<long long>(m) * k;
  const long long sb = static_cast<long long>(b.dim(1)) * b.dim(2);
  const long long so = static_cast<long long>(m) * n;
  for (int t = 0; t < batch; ++t) {
    ConstMatMap<S> A(a.data() + t * sa, m, k);
    MatMap<S> C(out.data() + t * so, m, n);
    if constexpr (TransposeB) {
      ConstMatMap<S> B(b.data() + t * sb, n, k);
      C.noalias() = A * B.transpose();
    } else {
      ConstMatMap<S> B(b.data() + t * sb, k, n);
      C.noalias() = A * B;
    }
  }
  if (track<S>({&a, &b})) {
    mark_output(out);
    auto an = a.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record([an, bn, on, batch, m, k, n, sa, sb, so] {
      for (int t = 0; t < batch; ++t) {
        ConstMatMap<S> G(on->grad.data() + t * so, m, n);
        if (an->requires_grad) {
          an->ensure_grad();
          MatMap<S> dA(an->grad.data() + t * sa, m, k);
          if constexpr (TransposeB) {
            ConstMatMap<S> B(bn->value.data() + t * sb, n, k);
            dA.noalias() += G * B;
          } else {
            ConstMatMap<S> B(bn->value.data() + t * sb, k, n);
            dA.noalias() += G * B.transpose();
          }
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          ConstMatMap<S> A(an->value.data() + t * sa, m, k);
          if constexpr (TransposeB) {
            MatMap<S> dB(bn->grad.data() + t * sb, n, k);
            dB.noalias() += G.transpose() * A;
          } else {
            MatMap<S> dB(bn->grad.data() + t * sb, k, n);
            dB.noalias() += A.transpose() * G;
          }
        }
      }
    });
  }
  return out;
}

}  // namespace detail

// C[b] = A[b] (m x k) * B[b] (k x n)
template <typename S>
TensorT<S> bmm(const TensorT<S>& a, const TensorT<S>& b) {
  return detail::bmm_impl<S, false>(a, b);
}

// C[b] = A[b] (m x k) * B[b]^T with B[b] (n x k)
template <typename S>
TensorT<S> bmm_nt(const TensorT<S>& a, const TensorT<S>& b) {
  return detail::bmm_impl<S, true>(a, b);
}

// x [N x Cin] * W^T + b with W [Cout x Cin], b [Cout]
template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  check_contract(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "linear: bad ranks");
  check_contract(x.dim(1) == w.dim(1) && w.dim(0) == b.dim(0), "linear: shape mismatch");
  const int n = x.dim(0), cin = x.dim(1), cout = w.dim(0);
  TensorT<S> out(Shape{n, cout});
  detail::ConstMatMap<S> X(x.data(), n, cin), W(w.data(), cout, cin);
  detail::MatMap<S> Y(out.data(), n, cout);
  Y.noalias() = X * W.transpose();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cout; ++j) out.data()[i * cout + j] += b.data()[j];
  if (detail::track<S>({&x, &w, &b})) {
    detail::mark_output(out);
    auto xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record([xn, wn, bn, on, n, cin, cout] {
      detail::ConstMatMap<S> G(on->grad.data(), n, cout);
      if (xn->requires_grad) {
        xn->ensure_grad();
        detail::ConstMatMap<S> W(wn->value.data(), cout, cin);
        detail::MatMap<S>(xn->grad.data(), n, cin).noalias() += G * W;
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        detail::ConstMatMap<S> X(xn->value.data(), n, cin);
        detail::MatMap<S>(wn->grad.data(), cout, cin).noalias() += G.transpose() * X;
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < cout; ++j) bn->grad[static_cast<std::size_t>(j)] += G(i, j);
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Masked softmax over the last axis.
//
// mask holds 0/1 and must either match the logits shape or be a trailing
// suffix of it (then it is broadcast over the leading axes). Masked entries
// get probability exactly 0. A row whose mask is entirely zero falls back to
// an unmasked softmax so attention never produces NaNs.
// --------------------------------------------------------------------------

template <typename S>
TensorT<S> masked_softmax(const TensorT<S>& logits, const TensorT<S>& mask) {
  check_contract(logits.rank() >= 1, "masked_softmax: rank must be >= 1");
  check_contract(mask.rank() >= 1 && mask.rank() <= logits.rank(),
                 "masked_softmax: mask rank incompatible");
  const int off = logits.rank() - mask.rank();
  for (int i = 0; i < mask.rank(); ++i)
    check_contract(mask.dim(i) == logits.dim(off + i),
                   "masked_softmax: mask is not a trailing suffix of logits shape");
  const long long n = logits.dim(logits.rank() - 1);
  const long long rows = logits.size() / n;
  const long long mask_rows = mask.size() / n;

  TensorT<S> out(logits.shape());
  // Effective mask after the all-zero fallback; kept for the pull-back.
  auto eff = std::make_shared<std::vector<std::uint8_t>>(
      static_cast<std::size_t>(logits.size()), std::uint8_t{1});

  for (long long r = 0; r < rows; ++r) {
    const S* lv = logits.data() + r * n;
    const S* mv = mask.data() + (r % mask_rows) * n;
    std::uint8_t* ev = eff->data() + r * n;
    S* ov = out.data() + r * n;

    bool any = false;
    for (long long j = 0; j < n; ++j)
      if (mv[j] != S(0)) {
        any = true;
        break;
      }
    if (any)
      for (long long j = 0; j < n; ++j) ev[j] = mv[j] != S(0) ? 1 : 0;
    // else: fallback, row fully unmasked (ev stays all ones)

    S mx = -std::numeric_limits<S>::infinity();
    for (long long j = 0; j < n; ++j)
      if (ev[j] && lv[j] > mx) mx = lv[j];
    S denom = S(0);
    for (long long j = 0; j < n; ++j) {
      if (ev[j]) {
        ov[j] = std::exp(lv[j] - mx);
        denom += ov[j];
      } else {
        ov[j] = S(0);
      }
    }
    for (long long j = 0; j < n; ++j) ov[j] /= denom;
  }

  if (detail::track<S>({&logits})) {
    detail::mark_output(out);
    auto ln = logits.node(), on = out.node();
    TapeT<S>::active()->record([ln, on, eff, rows, n] {
      if (!ln->requires_grad) return;
      ln->ensure_grad();
      for (long long r = 0; r < rows; ++r) {
        const S* y = on->value.data() + r * n;
        const S* g = on->grad.data() + r * n;
        S* dx = ln->grad.data() + r * n;
        S dot = S(0);
        for (long long j = 0; j < n; ++j) dot += g[j] * y[j];
        for (long long j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Layer normalization over the last axis, eps 1e-5.
// --------------------------------------------------------------------------

template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gain, const TensorT<S>& bias) {
  check_contract(x.rank() >= 1, "layer_norm: rank must be >= 1");
  const int c = x.dim(x.rank() - 1);
  check_contract(gain.rank() == 1 && gain.dim(0) == c, "layer_norm: gain must be [C]");
  check_contract(bias.rank() == 1 && bias.dim(0) == c, "layer_norm: bias must be [C]");
  const long long rows = x.size() / c;
  constexpr S kEps = S(1e-5);

  TensorT<S> out(x.shape());
  auto rstd = std::make_shared<std::vector<S>>(static_cast<std::size_t>(rows));
  auto xhat = std::make_shared<std::vector<S>>(static_cast<std::size_t>(x.size()));
  for (long long r = 0; r < rows; ++r) {
    const S* xv = x.data() + r * c;
    S* ov = out.data() + r * c;
    S mu = S(0);
    for (int j = 0; j < c; ++j) mu += xv[j];
    mu /= static_cast<S>(c);
    S var = S(0);
    for (int j = 0; j < c; ++j) {
      const S d = xv[j] - mu;
      var += d * d;
    }
    var /= static_cast<S>(c);
    const S rs = S(1) / std::sqrt(var + kEps);
    (*rstd)[static_cast<std::size_t>(r)] = rs;
    for (int j = 0; j < c; ++j) {
      const S h = (xv[j] - mu) * rs;
      (*xhat)[static_cast<std::size_t>(r * c + j)] = h;
      ov[j] = h * gain.data()[j] + bias.data()[j];
    }
  }

  if (detail::track<S>({&x, &gain, &bias})) {
    detail::mark_output(out);
    auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    TapeT<S>::active()->record([xn, gn, bn, on, rstd, xhat, rows, c] {
      for (long long r = 0; r < rows; ++r) {
        const S* g = on->grad.data() + r * c;
        const S* h = xhat->data() + r * c;
        if (gn->requires_grad) {
          gn->ensure_grad();
          for (int j = 0; j < c; ++j) gn->grad[static_cast<std::size_t>(j)] += g[j] * h[j];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int j = 0; j < c; ++j) bn->grad[static_cast<std::size_t>(j)] += g[j];
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          S* dx = xn->grad.data() + r * c;
          const S rs = (*rstd)[static_cast<std::size_t>(r)];
          // dL/dxhat_j = g_j * gain_j; standard layer-norm pull-back.
          S sum_dh = S(0), sum_dh_h = S(0);
          for (int j = 0; j < c; ++j) {
            const S dh = g[j] * gn->value[static_cast<std::size_t>(j)];
            sum_dh += dh;
            sum_dh_h += dh * h[j];
          }
          const S inv_c = S(1) / static_cast<S>(c);
          for (int j = 0; j < c; ++j) {
            const S dh = g[j] * gn->value[static_cast<std::size_t>(j)];
            dx[j] += rs * (dh - inv_c * sum_dh - h[j] * inv_c * sum_dh_h);
          }
        }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// 2-D convolution, cross-correlation convention, zero padding k/2,
// H' = ceil(H/stride). x is [Cin x H x W] or [B x Cin x H x W].
// --------------------------------------------------------------------------

template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, int stride) {
  check_contract(x.rank() == 3 || x.rank() == 4, "conv2d: input must be rank 3 or 4");
  check_contract(w.rank() == 4, "conv2d: weight must be [Cout x Cin x k x k]");
  check_contract(stride >= 1, "conv2d: stride must be >= 1");
  const bool batched = x.rank() == 4;
  const int B = batched ? x.dim(0) : 1;
  const int cin = x.dim(batched ? 1 : 0);
  const int H = x.dim(batched ? 2 : 1);
  const int W = x.dim(batched ? 3 : 2);
  const int cout = w.dim(0), k = w.dim(2);
  check_contract(w.dim(1) == cin, "conv2d: channel mismatch");
  check_contract(w.dim(2) == w.dim(3) && k % 2 == 1, "conv2d: kernel must be square and odd");
  const int pad = k / 2;
  const int Ho = (H - 1) / stride + 1;
  const int Wo = (W - 1) / stride + 1;

  Shape out_shape = batched ? Shape{B, cout, Ho, Wo} : Shape{cout, Ho, Wo};
  TensorT<S> out(out_shape);

  const int patch = cin * k * k;
  const long long cols = static_cast<long long>(Ho) * Wo;
  using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  EMat col(patch, cols);
  detail::ConstMatMap<S> Wm(w.data(), cout, patch);
  const long long in_plane = static_cast<long long>(H) * W;
  const long long in_stride = static_cast<long long>(cin) * in_plane;
  const long long out_stride = static_cast<long long>(cout) * cols;

  auto fill_col = [&](const S* xb, EMat& c) {
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int prow = (ci * k + ky) * k + kx;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * stride + kx - pad;
              c(prow, static_cast<long long>(oy) * Wo + ox) =
                  (iy >= 0 && iy < H && ix >= 0 && ix < W)
                      ? xb[ci * in_plane + static_cast<long long>(iy) * W + ix]
                      : S(0);
            }
          }
        }
  };

  for (int b = 0; b < B; ++b) {
    fill_col(x.data() + b * in_stride, col);
    detail::MatMap<S>(out.data() + b * out_stride, cout, cols).noalias() = Wm * col;
  }

  if (detail::track<S>({&x, &w})) {
    detail::mark_output(out);
    auto xn = x.node(), wn = w.node(), on = out.node();
    TapeT<S>::active()->record([xn, wn, on, B, cin, H, W, cout, k, pad, stride, Ho, Wo, patch,
                                cols, in_plane, in_stride, out_stride] {
      EMat col(patch, cols);
      auto fill = [&](const S* xb) {
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int prow = (ci * k + ky) * k + kx;
              for (int oy = 0; oy < Ho; ++oy) {
                const int iy = oy * stride + ky - pad;
                for (int ox = 0; ox < Wo; ++ox) {
                  const int ix = ox * stride + kx - pad;
                  col(prow, static_cast<long long>(oy) * Wo + ox) =
                      (iy >= 0 && iy < H && ix >= 0 && ix < W)
                          ? xb[ci * in_plane + static_cast<long long>(iy) * W + ix]
                          : S(0);
                }
              }
            }
      };
      for (int b = 0; b < B; ++b) {
        detail::ConstMatMap<S> G(on->grad.data() + b * out_stride, cout, cols);
        if (wn->requires_grad) {
          wn->ensure_grad();
          fill(xn->value.data() + b * in_stride);
          detail::MatMap<S>(wn->grad.data(), cout, patch).noalias() += G * col.transpose();
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          detail::ConstMatMap<S> Wm(wn->value.data(), cout, patch);
          EMat dcol = Wm.transpose() * G;  // [patch x cols]
          S* dx = xn->grad.data() + b * in_stride;
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int prow = (ci * k + ky) * k + kx;
                for (int oy = 0; oy < Ho; ++oy) {
                  const int iy = oy * stride + ky - pad;
                  if (iy < 0 || iy >= H) continue;
                  for (int ox = 0; ox < Wo; ++ox) {
                    const int ix = ox * stride + kx - pad;
                    if (ix < 0 || ix >= W) continue;
                    dx[ci * in_plane + static_cast<long long>(iy) * W + ix] +=
                        dcol(prow, static_cast<long long>(oy) * Wo + ox);
                  }
                }
              }
        }
      }
    });
  }
  return out;
}

// Adds a per-channel bias to [C x H x W] or [B x C x H x W].
template <typename S>
TensorT<S> bias_channels(const TensorT<S>& x, const TensorT<S>& b) {
  check_contract(x.rank() == 3 || x.rank() == 4, "bias_channels: input must be rank 3 or 4");
  const bool batched = x.rank() == 4;
  const int C = x.dim(batched ? 1 : 0);
  check_contract(b.rank() == 1 && b.dim(0) == C, "bias_channels: bias must be [C]");
  const long long plane = static_cast<long long>(x.dim(batched ? 2 : 1)) * x.dim(batched ? 3 : 2);
  const int B = batched ? x.dim(0) : 1;
  TensorT<S> out(x.shape());
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c) {
      const long long base = (static_cast<long long>(bi) * C + c) * plane;
      const S bc = b.data()[c];
      for (long long i = 0; i < plane; ++i) out.data()[base + i] = x.data()[base + i] + bc;
    }
  if (detail::track<S>({&x, &b})) {
    detail::mark_output(out);
    auto xn = x.node(), bn = b.node(), on = out.node();
    TapeT<S>::active()->record([xn, bn, on, B, C, plane] {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->value.size(); ++i) xn->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int bi = 0; bi < B; ++bi)
          for (int c = 0; c < C; ++c) {
            const long long base = (static_cast<long long>(bi) * C + c) * plane;
            S acc = S(0);
            for (long long i = 0; i < plane; ++i) acc += on->grad[base + i];
            bn->grad[static_cast<std::size_t>(c)] += acc;
          }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Bilinear resize (align-corners=false). x is [C x H x W] or [B x C x H x W].
// Uses the lerp form a + t*(b-a) so constant images resize exactly.
// --------------------------------------------------------------------------

namespace detail {

struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<double> frac;
};

inline LerpAxis make_lerp_axis(int in, int out) {
  LerpAxis ax;
  ax.i0.resize(static_cast<std::size_t>(out));
  ax.i1.resize(static_cast<std::size_t>(out));
  ax.frac.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(src);
    if (lo > in - 1) lo = in - 1;
    const int hi = lo + 1 < in ? lo + 1 : in - 1;
    ax.i0[static_cast<std::size_t>(d)] = lo;
    ax.i1[static_cast<std::size_t>(d)] = hi;
    ax.frac[static_cast<std::size_t>(d)] = src - lo;
  }
  return ax;
}

}  // namespace detail

template <typename S>
TensorT<S> bilinear_resize(const TensorT<S>& x, int out_h, int out_w) {
  check_contract(x.rank() == 3 || x.rank() == 4, "bilinear_resize: input must be rank 3 or 4");
  check_contract(out_h >= 1 && out_w >= 1, "bilinear_resize: target extents must be >= 1");
  const bool batched = x.rank() == 4;
  const int B = batched ? x.dim(0) : 1;
  const int C = x.dim(batched ? 1 : 0);
  const int H = x.dim(batched ? 2 : 1);
  const int W = x.dim(batched ? 3 : 2);
  const auto ay = detail::make_lerp_axis(H, out_h);
  const auto ax = detail::make_lerp_axis(W, out_w);

  Shape out_shape = batched ? Shape{B, C, out_h, out_w} : Shape{C, out_h, out_w};
  TensorT<S> out(out_shape);
  const long long in_plane = static_cast<long long>(H) * W;
  const long long out_plane = static_cast<long long>(out_h) * out_w;
  const long long planes = static_cast<long long>(B) * C;
  for (long long p = 0; p < planes; ++p) {
    const S* src = x.data() + p * in_plane;
    S* dst = out.data() + p * out_plane;
    for (int oy = 0; oy < out_h; ++oy) {
      const int y0 = ay.i0[static_cast<std::size_t>(oy)], y1 = ay.i1[static_cast<std::size_t>(oy)];
      const S fy = static_cast<S>(ay.frac[static_cast<std::size_t>(oy)]);
      for (int ox = 0; ox < out_w; ++ox) {
        const int x0 = ax.i0[static_cast<std::size_t>(ox)], x1 = ax.i1[static_cast<std::size_t>(ox)];
        const S fx = static_cast<S>(ax.frac[static_cast<std::size_t>(ox)]);
        const S v00 = src[static_cast<long long>(y0) * W + x0];
        const S v01 = src[static_cast<long long>(y0) * W + x1];
        const S v10 = src[static_cast<long long>(y1) * W + x0];
        const S v11 = src[static_cast<long long>(y1) * W + x1];
        const S top = v00 + fx * (v01 - v00);
        const S bot = v10 + fx * (v11 - v10);
        dst[static_cast<long long>(oy) * out_w + ox] = top + fy * (bot - top);
      }
    }
  }

  if (detail::track<S>({&x})) {
    detail::mark_output(out);
    auto xn = x.node(), on = out.node();
    auto say = std::make_shared<detail::LerpAxis>(ay);
    auto sax = std::make_shared<detail::LerpAxis>(ax);
    TapeT<S>::active()->record([xn, on, say, sax, planes, in_plane, out_plane, W, out_h, out_w] {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (long long p = 0; p < planes; ++p) {
        const S* g = on->grad.data() + p * out_plane;
        S* dx = xn->grad.data() + p * in_plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int y0 = say->i0[static_cast<std::size_t>(oy)];
          const int y1 = say->i1[static_cast<std::size_t>(oy)];
          const S fy = static_cast<S>(say->frac[static_cast<std::size_t>(oy)]);
          for (int ox = 0; ox < out_w; ++ox) {
            const int x0 = sax->i0[static_cast<std::size_t>(ox)];
            const int x1 = sax->i1[static_cast<std::size_t>(ox)];
            const S fx = static_cast<S>(sax->frac[static_cast<std::size_t>(ox)]);
            const S gv = g[static_cast<long long>(oy) * out_w + ox];
            dx[static_cast<long long>(y0) * W + x0] += (S(1) - fy) * (S(1) - fx) * gv;
            dx[static_cast<long long>(y0) * W + x1] += (S(1) - fy) * fx * gv;
            dx[static_cast<long long>(y1) * W + x0] += fy * (S(1) - fx) * gv;
            dx[static_cast<long long>(y1) * W + x1] += fy * fx * gv;
          }
        }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Loss kernels
// --------------------------------------------------------------------------

// Elementwise binary cross-entropy from logits against a constant target,
// computed in the overflow-safe form. Targets carry no gradient.
template <typename S>
TensorT<S> bce_with_logits(const TensorT<S>& logits, const TensorT<S>& targets) {
  check_contract(logits.shape() == targets.shape(), "bce_with_logits: shape mismatch");
  TensorT<S> out(logits.shape());
  for (long long i = 0; i < out.size(); ++i) {
    const S z = logits.data()[i];
    const S y = targets.data()[i];
    const S abs_z = z >= S(0) ? z : -z;
    out.data()[i] = (z >= S(0) ? z : S(0)) - z * y + std::log1p(std::exp(-abs_z));
  }
  if (detail::track<S>({&logits})) {
    detail::mark_output(out);
    auto ln = logits.node(), tn = targets.node(), on = out.node();
    TapeT<S>::active()->record([ln, tn, on] {
      if (!ln->requires_grad) return;
      ln->ensure_grad();
      for (std::size_t i = 0; i < on->value.size(); ++i) {
        const S z = ln->value[i];
        const S p = z >= S(0) ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
        ln->grad[i] += on->grad[i] * (p - tn->value[i]);
      }
    });
  }
  return out;
}

// Weighted softmax cross-entropy over rows of [N x K] logits with integer
// targets; follows the weighted-mean convention (divide by the weight sum).
template <typename S>
TensorT<S> softmax_cross_entropy(const TensorT<S>& logits, const std::vector<int>& targets,
                                 const std::vector<S>& class_weights) {
  check_contract(logits.rank() == 2, "softmax_cross_entropy: logits must be [N x K]");
  const int n = logits.dim(0), k = logits.dim(1);
  check_contract(static_cast<int>(targets.size()) == n, "softmax_cross_entropy: target count");
  check_contract(static_cast<int>(class_weights.size()) == k,
                 "softmax_cross_entropy: weight count");
  for (int t : targets) check_contract(t >= 0 && t < k, "softmax_cross_entropy: target range");

  auto probs = std::make_shared<std::vector<S>>(static_cast<std::size_t>(logits.size()));
  S weight_sum = S(0), loss = S(0);
  for (int i = 0; i < n; ++i) {
    const S* lv = logits.data() + static_cast<long long>(i) * k;
    S* pv = probs->data() + static_cast<long long>(i) * k;
    S mx = lv[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, lv[j]);
    S denom = S(0);
    for (int j = 0; j < k; ++j) {
      pv[j] = std::exp(lv[j] - mx);
      denom += pv[j];
    }
    S log_denom = std::log(denom);
    for (int j = 0; j < k; ++j) pv[j] /= denom;
    const S w = class_weights[static_cast<std::size_t>(targets[static_cast<std::size_t>(i)])];
    loss += w * (log_denom - (lv[targets[static_cast<std::size_t>(i)]] - mx));
    weight_sum += w;
  }
  check_contract(weight_sum > S(0), "softmax_cross_entropy: zero total weight");
  TensorT<S> out = TensorT<S>::scalar(loss / weight_sum);

  if (detail::track<S>({&logits})) {
    detail::mark_output(out);
    auto ln = logits.node(), on = out.node();
    auto tgt = std::make_shared<std::vector<int>>(targets);
    auto wts = std::make_shared<std::vector<S>>(class_weights);
    TapeT<S>::active()->record([ln, on, probs, tgt, wts, n, k, weight_sum] {
      if (!ln->requires_grad) return;
      ln->ensure_grad();
      const S g = on->grad[0] / weight_sum;
      for (int i = 0; i < n; ++i) {
        const int t = (*tgt)[static_cast<std::size_t>(i)];
        const S w = (*wts)[static_cast<std::size_t>(t)];
        const S* pv = probs->data() + static_cast<long long>(i) * k;
        S* dv = ln->grad.data() + static_cast<long long>(i) * k;
        for (int j = 0; j < k; ++j) dv[j] += g * w * (pv[j] - (j == t ? S(1) : S(0)));
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Operator sugar
// --------------------------------------------------------------------------

template <typename S>
TensorT<S> operator+(const TensorT<S>& a, const TensorT<S>& b) { return add(a, b); }
template <typename S>
TensorT<S> operator-(const TensorT<S>& a, const TensorT<S>& b) { return sub(a, b); }
template <typename S>
TensorT<S> operator*(const TensorT<S>& a, const TensorT<S>& b) { return mul(a, b); }

}  // namespace novis
