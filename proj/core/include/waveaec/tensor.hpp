#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "waveaec/errors.hpp"

// Minimal dense tensor engine with reverse-mode differentiation. Templated
// on the scalar so the production float32 build and the float64 gradient
// check build share one implementation.

namespace waveaec {

using Real = float;  // production scalar

template <typename T>
struct TensorNode;

template <typename T>
using Tensor = std::shared_ptr<TensorNode<T>>;

template <typename T>
struct TensorNode {
  std::vector<int> shape;
  std::vector<T> v;
  std::vector<T> g;
  bool requires_grad = false;
  std::vector<Tensor<T>> parents;
  std::function<void(TensorNode<T>&)> backfn;
  std::string name;

  std::size_t numel() const { return v.size(); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), T(0));
  }
  void zero_grad() { g.assign(v.size(), T(0)); }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(s));
    n *= std::size_t(d);
  }
  return n;
}

// Optional NaN screening for tests; off by default.
inline bool& tensor_nan_check() {
  static bool enabled = false;
  return enabled;
}

template <typename T>
void assert_finite(const Tensor<T>& t, const std::string& what) {
  for (T x : t->v)
    if (!std::isfinite(double(x)))
      throw NumericError("non-finite value in " + what);
}

template <typename T>
Tensor<T> make_tensor(std::vector<int> shape, bool requires_grad = false) {
  auto t = std::make_shared<TensorNode<T>>();
  t->v.assign(shape_numel(shape), T(0));
  t->shape = std::move(shape);
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> from_values(std::vector<int> shape, std::vector<T> values,
                      bool requires_grad = false) {
  if (values.size() != shape_numel(shape))
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  auto t = std::make_shared<TensorNode<T>>();
  t->shape = std::move(shape);
  t->v = std::move(values);
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> scalar_tensor(T value) {
  return from_values<T>({1}, {value});
}

namespace detail {

template <typename T>
Tensor<T> make_op(std::vector<int> shape, std::vector<Tensor<T>> parents,
                  std::function<void(TensorNode<T>&)> backfn) {
  auto t = make_tensor<T>(std::move(shape));
  for (const auto& p : parents)
    if (p->requires_grad) t->requires_grad = true;
  if (t->requires_grad) {
    t->parents = std::move(parents);
    t->backfn = std::move(backfn);
  }
  return t;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* op) {
  if (a->shape != b->shape)
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a->shape) + " vs " + shape_str(b->shape));
}

template <typename T>
using EMat =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<EMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const EMat<T>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and arithmetic ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  auto out = detail::make_op<T>(a->shape, {a, b}, [a, b](TensorNode<T>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.g.size(); ++i) a->g[i] += n.g[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.g.size(); ++i) b->g[i] += n.g[i];
    }
  });
  for (std::size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] + b->v[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  auto out = detail::make_op<T>(a->shape, {a, b}, [a, b](TensorNode<T>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.g.size(); ++i) a->g[i] += n.g[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.g.size(); ++i) b->g[i] -= n.g[i];
    }
  });
  for (std::size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] - b->v[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  auto out = detail::make_op<T>(a->shape, {a, b}, [a, b](TensorNode<T>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.g.size(); ++i) a->g[i] += n.g[i] * b->v[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.g.size(); ++i) b->g[i] += n.g[i] * a->v[i];
    }
  });
  for (std::size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] * b->v[i];
  return out;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  auto out = detail::make_op<T>(a->shape, {a, b}, [a, b](TensorNode<T>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.g.size(); ++i) a->g[i] += n.g[i] / b->v[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.g.size(); ++i)
        b->g[i] -= n.g[i] * a->v[i] / (b->v[i] * b->v[i]);
    }
  });
  for (std::size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] / b->v[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double c) {
  const T cc = T(c);
  auto out = detail::make_op<T>(a->shape, {a}, [a, cc](TensorNode<T>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.g.size(); ++i) a->g[i] += n.g[i] * cc;
  });
  for (std::size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] * cc;
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double c) {
  const T cc = T(c);
  auto out = detail::make_op<T>(a->shape, {a}, [a](TensorNode<T>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.g.size(); ++i) a->g[i] += n.g[i];
  });
  for (std::size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] + cc;
  return out;
}

// Broadcast multiply of a scalar tensor [1] against x.
template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& alpha, const Tensor<T>& x) {
  if (alpha->numel() != 1) throw ShapeError("scalar_mul: alpha must be [1]");
  auto out = detail::make_op<T>(x->shape, {alpha, x},
                                [alpha, x](TensorNode<T>& n) {
    if (x->requires_grad) {
      x->ensure_grad();
      for (std::size_t i = 0; i < n.g.size(); ++i)
        x->g[i] += n.g[i] * alpha->v[0];
    }
    if (alpha->requires_grad) {
      alpha->ensure_grad();
      T acc = T(0);
      for (std::size_t i = 0; i < n.g.size(); ++i) acc += n.g[i] * x->v[i];
      alpha->g[0] += acc;
    }
  });
  for (std::size_t i = 0; i < out->v.size(); ++i)
    out->v[i] = x->v[i] * alpha->v[0];
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto out = detail::make_op<T>(a->shape, {a}, [a](TensorNode<T>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.g.size(); ++i)
      a->g[i] += n.g[i] * n.v[i] * (T(1) - n.v[i]);
  });
  for (std::size_t i = 0; i < out->v.size(); ++i)
    out->v[i] = T(1) / (T(1) + std::exp(-a->v[i]));
  return out;
}

template <typename T>
Tensor<T> tanh_t(const Tensor<T>& a) {
  auto out = detail::make_op<T>(a->shape, {a}, [a](TensorNode<T>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.g.size(); ++i)
      a->g[i] += n.g[i] * (T(1) - n.v[i] * n.v[i]);
  });
  for (std::size_t i = 0; i < out->v.size(); ++i) out->v[i] = std::tanh(a->v[i]);
  return out;
}

// x * sigmoid(x)
template <typename T>
Tensor<T> swish(const Tensor<T>& a) {
  auto out = detail::make_op<T>(a->shape, {a}, [a](TensorNode<T>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.g.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-a->v[i]));
      a->g[i] += n.g[i] * (s + a->v[i] * s * (T(1) - s));
    }
  });
  for (std::size_t i = 0; i < out->v.size(); ++i) {
    const T s = T(1) / (T(1) + std::exp(-a->v[i]));
    out->v[i] = a->v[i] * s;
  }
  return out;
}

// Elementwise x^p. Gradient is p*x^(p-1); callers keep x away from zero for
// fractional p.
template <typename T>
Tensor<T> power(const Tensor<T>& a, double p) {
  auto out = detail::make_op<T>(a->shape, {a}, [a, p](TensorNode<T>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.g.size(); ++i)
      a->g[i] += n.g[i] * T(p) * T(std::pow(double(a->v[i]), p - 1.0));
  });
  for (std::size_t i = 0; i < out->v.size(); ++i)
    out->v[i] = T(std::pow(double(a->v[i]), p));
  return out;
}

template <typename T>
Tensor<T> log10_t(const Tensor<T>& a) {
  auto out = detail::make_op<T>(a->shape, {a}, [a](TensorNode<T>& n) {
    a->ensure_grad();
    const T inv_ln10 = T(1.0 / std::log(10.0));
    for (std::size_t i = 0; i < n.g.size(); ++i)
      a->g[i] += n.g[i] * inv_ln10 / a->v[i];
  });
  for (std::size_t i = 0; i < out->v.size(); ++i)
    out->v[i] = T(std::log10(double(a->v[i])));
  return out;
}

// ln(max(x, floor)); gradient is blocked below the floor.
template <typename T>
Tensor<T> log_floor(const Tensor<T>& a, double floor_val) {
  const T fl = T(floor_val);
  auto out = detail::make_op<T>(a->shape, {a}, [a, fl](TensorNode<T>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.g.size(); ++i)
      if (a->v[i] > fl) a->g[i] += n.g[i] / a->v[i];
  });
  for (std::size_t i = 0; i < out->v.size(); ++i)
    out->v[i] = T(std::log(double(std::max(a->v[i], fl))));
  return out;
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto out = detail::make_op<T>({1}, {a}, [a](TensorNode<T>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < a->g.size(); ++i) a->g[i] += n.g[0];
  });
  T acc = T(0);
  for (T x : a->v) acc += x;
  out->v[0] = acc;
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const T inv = T(1) / T(a->numel());
  auto out = detail::make_op<T>({1}, {a}, [a, inv](TensorNode<T>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < a->g.size(); ++i) a->g[i] += n.g[0] * inv;
  });
  T acc = T(0);
  for (T x : a->v) acc += x;
  out->v[0] = acc * inv;
  return out;
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "dot");
  auto out = detail::make_op<T>({1}, {a, b}, [a, b](TensorNode<T>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->g.size(); ++i) a->g[i] += n.g[0] * b->v[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < b->g.size(); ++i) b->g[i] += n.g[0] * a->v[i];
    }
  });
  T acc = T(0);
  for (std::size_t i = 0; i < a->v.size(); ++i) acc += a->v[i] * b->v[i];
  out->v[0] = acc;
  return out;
}

template <typename T>
Tensor<T> sum_sq(const Tensor<T>& a) {
  return dot(a, a);
}

template <typename T>
Tensor<T> l2_norm(const Tensor<T>& a) {
  auto out = detail::make_op<T>({1}, {a}, [a](TensorNode<T>& n) {
    a->ensure_grad();
    const T nv = n.v[0];
    if (nv > T(0))
      for (std::size_t i = 0; i < a->g.size(); ++i)
        a->g[i] += n.g[0] * a->v[i] / nv;
  });
  T acc = T(0);
  for (T x : a->v) acc += x * x;
  out->v[0] = T(std::sqrt(double(acc)));
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 ||
      a->shape[1] != b->shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) +
                     " vs " + shape_str(b->shape));
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = detail::make_op<T>({m, n}, {a, b}, [a, b, m, k, n](TensorNode<T>& nd) {
    detail::CMapMat<T> G(nd.g.data(), m, n);
    if (a->requires_grad) {
      a->ensure_grad();
      detail::MapMat<T> dA(a->g.data(), m, k);
      detail::CMapMat<T> B(b->v.data(), k, n);
      dA.noalias() += G * B.transpose();
    }
    if (b->requires_grad) {
      b->ensure_grad();
      detail::MapMat<T> dB(b->g.data(), k, n);
      detail::CMapMat<T> A(a->v.data(), m, k);
      dB.noalias() += A.transpose() * G;
    }
  });
  detail::CMapMat<T> A(a->v.data(), m, k);
  detail::CMapMat<T> B(b->v.data(), k, n);
  detail::MapMat<T> C(out->v.data(), m, n);
  C.noalias() = A * B;
  return out;
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
  if (x->shape.size() != 2 || b->shape.size() != 1 || b->shape[0] != x->shape[1])
    throw ShapeError("add_rowvec: " + shape_str(x->shape) + " vs " +
                     shape_str(b->shape));
  const int rows = x->shape[0], cols = x->shape[1];
  auto out =
      detail::make_op<T>(x->shape, {x, b}, [x, b, rows, cols](TensorNode<T>& n) {
        if (x->requires_grad) {
          x->ensure_grad();
          for (std::size_t i = 0; i < n.g.size(); ++i) x->g[i] += n.g[i];
        }
        if (b->requires_grad) {
          b->ensure_grad();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              b->g[std::size_t(c)] += n.g[std::size_t(r * cols + c)];
        }
      });
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out->v[std::size_t(r * cols + c)] =
          x->v[std::size_t(r * cols + c)] + b->v[std::size_t(c)];
  return out;
}

template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& x, const Tensor<T>& w) {
  if (x->shape.size() != 2 || w->shape.size() != 1 || w->shape[0] != x->shape[1])
    throw ShapeError("mul_rowvec: " + shape_str(x->shape) + " vs " +
                     shape_str(w->shape));
  const int rows = x->shape[0], cols = x->shape[1];
  auto out =
      detail::make_op<T>(x->shape, {x, w}, [x, w, rows, cols](TensorNode<T>& n) {
        if (x->requires_grad) {
          x->ensure_grad();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              x->g[std::size_t(r * cols + c)] +=
                  n.g[std::size_t(r * cols + c)] * w->v[std::size_t(c)];
        }
        if (w->requires_grad) {
          w->ensure_grad();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              w->g[std::size_t(c)] += n.g[std::size_t(r * cols + c)] *
                                      x->v[std::size_t(r * cols + c)];
        }
      });
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out->v[std::size_t(r * cols + c)] =
          x->v[std::size_t(r * cols + c)] * w->v[std::size_t(c)];
  return out;
}

// x[T x in] * W[in x out] + b[out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b) {
  return add_rowvec(matmul(x, W), b);
}

// ---------------------------------------------------------------------------
// structural ops

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 ||
      a->shape[0] != b->shape[0])
    throw ShapeError("concat_cols: " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  const int rows = a->shape[0], ca = a->shape[1], cb = b->shape[1];
  auto out = detail::make_op<T>({rows, ca + cb}, {a, b},
                                [a, b, rows, ca, cb](TensorNode<T>& n) {
    const int cols = ca + cb;
    if (a->requires_grad) {
      a->ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < ca; ++c)
          a->g[std::size_t(r * ca + c)] += n.g[std::size_t(r * cols + c)];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cb; ++c)
          b->g[std::size_t(r * cb + c)] += n.g[std::size_t(r * cols + ca + c)];
    }
  });
  const int cols = ca + cb;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < ca; ++c)
      out->v[std::size_t(r * cols + c)] = a->v[std::size_t(r * ca + c)];
    for (int c = 0; c < cb; ++c)
      out->v[std::size_t(r * cols + ca + c)] = b->v[std::size_t(r * cb + c)];
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int len) {
  if (x->shape.size() != 2 || start < 0 || start + len > x->shape[1])
    throw ShapeError("slice_cols: bad range on " + shape_str(x->shape));
  const int rows = x->shape[0], cols = x->shape[1];
  auto out = detail::make_op<T>({rows, len}, {x},
                                [x, start, len, rows, cols](TensorNode<T>& n) {
    x->ensure_grad();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < len; ++c)
        x->g[std::size_t(r * cols + start + c)] += n.g[std::size_t(r * len + c)];
  });
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < len; ++c)
      out->v[std::size_t(r * len + c)] = x->v[std::size_t(r * cols + start + c)];
  return out;
}

// Gated linear unit over the last dimension: first half gated by sigmoid of
// the second half.
template <typename T>
Tensor<T> glu(const Tensor<T>& x) {
  if (x->shape.size() != 2 || x->shape[1] % 2 != 0)
    throw ShapeError("glu: needs even column count, got " +
                     shape_str(x->shape));
  const int half = x->shape[1] / 2;
  auto value = slice_cols(x, 0, half);
  auto gate = slice_cols(x, half, half);
  return mul(value, sigmoid(gate));
}

// Row-wise softmax.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x->shape.size() != 2) throw ShapeError("softmax: expected 2-D input");
  const int rows = x->shape[0], cols = x->shape[1];
  auto out = detail::make_op<T>(x->shape, {x}, [x, rows, cols](TensorNode<T>& n) {
    x->ensure_grad();
    for (int r = 0; r < rows; ++r) {
      const T* p = n.v.data() + std::size_t(r * cols);
      const T* go = n.g.data() + std::size_t(r * cols);
      T inner = T(0);
      for (int c = 0; c < cols; ++c) inner += p[c] * go[c];
      T* gx = x->g.data() + std::size_t(r * cols);
      for (int c = 0; c < cols; ++c) gx[c] += p[c] * (go[c] - inner);
    }
  });
  for (int r = 0; r < rows; ++r) {
    const T* px = x->v.data() + std::size_t(r * cols);
    T* po = out->v.data() + std::size_t(r * cols);
    T mx = px[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, px[c]);
    T denom = T(0);
    for (int c = 0; c < cols; ++c) {
      po[c] = std::exp(px[c] - mx);
      denom += po[c];
    }
    for (int c = 0; c < cols; ++c) po[c] /= denom;
  }
  return out;
}

// Per-row normalization over channels (never over time), with affine
// gamma/beta. group_norm with a single group is the same computation.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps = 1e-5) {
  if (x->shape.size() != 2 || gamma->shape != std::vector<int>{x->shape[1]} ||
      beta->shape != std::vector<int>{x->shape[1]})
    throw ShapeError("layer_norm: " + shape_str(x->shape) + " with gamma " +
                     shape_str(gamma->shape));
  const int rows = x->shape[0], cols = x->shape[1];
  auto stats = std::make_shared<std::vector<T>>(std::size_t(rows) * 2);
  auto out = detail::make_op<T>(
      x->shape, {x, gamma, beta},
      [x, gamma, beta, stats, rows, cols, eps](TensorNode<T>& n) {
        for (int r = 0; r < rows; ++r) {
          const T mu = (*stats)[std::size_t(2 * r)];
          const T inv_sigma = (*stats)[std::size_t(2 * r + 1)];
          const T* px = x->v.data() + std::size_t(r * cols);
          const T* go = n.g.data() + std::size_t(r * cols);
          // dxhat, and its row sums needed for the mean/var terms
          T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
          for (int c = 0; c < cols; ++c) {
            const T xhat = (px[c] - mu) * inv_sigma;
            const T dxhat = go[c] * gamma->v[std::size_t(c)];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            if (gamma->requires_grad) {
              gamma->ensure_grad();
              gamma->g[std::size_t(c)] += go[c] * xhat;
            }
            if (beta->requires_grad) {
              beta->ensure_grad();
              beta->g[std::size_t(c)] += go[c];
            }
          }
          if (x->requires_grad) {
            x->ensure_grad();
            T* gx = x->g.data() + std::size_t(r * cols);
            const T invn = T(1) / T(cols);
            for (int c = 0; c < cols; ++c) {
              const T xhat = (px[c] - mu) * inv_sigma;
              const T dxhat = go[c] * gamma->v[std::size_t(c)];
              gx[c] += inv_sigma *
                       (dxhat - invn * sum_dxhat - invn * xhat * sum_dxhat_xhat);
            }
          }
        }
      });
  for (int r = 0; r < rows; ++r) {
    const T* px = x->v.data() + std::size_t(r * cols);
    T mu = T(0);
    for (int c = 0; c < cols; ++c) mu += px[c];
    mu /= T(cols);
    T var = T(0);
    for (int c = 0; c < cols; ++c) var += (px[c] - mu) * (px[c] - mu);
    var /= T(cols);
    const T inv_sigma = T(1) / T(std::sqrt(double(var) + eps));
    (*stats)[std::size_t(2 * r)] = mu;
    (*stats)[std::size_t(2 * r + 1)] = inv_sigma;
    T* po = out->v.data() + std::size_t(r * cols);
    for (int c = 0; c < cols; ++c)
      po[c] = gamma->v[std::size_t(c)] * (px[c] - mu) * inv_sigma +
              beta->v[std::size_t(c)];
  }
  return out;
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps = 1e-5) {
  return layer_norm(x, gamma, beta, eps);
}

// ---------------------------------------------------------------------------
// convolutions (causal: output t reads inputs t-k+1 .. t only)

template <typename T>
Tensor<T> conv1d_causal(const Tensor<T>& x, const Tensor<T>& kernel) {
  if (x->shape.size() != 1 || kernel->shape.size() != 1)
    throw ShapeError("conv1d_causal: expected 1-D signal and kernel, got " +
                     shape_str(x->shape) + " and " + shape_str(kernel->shape));
  const int n = x->shape[0], k = kernel->shape[0];
  auto out =
      detail::make_op<T>(x->shape, {x, kernel}, [x, kernel, n, k](TensorNode<T>& nd) {
        for (int t = 0; t < n; ++t) {
          const T go = nd.g[std::size_t(t)];
          for (int i = 0; i < k; ++i) {
            const int src = t - (k - 1) + i;
            if (src < 0) continue;
            if (x->requires_grad) {
              x->ensure_grad();
              x->g[std::size_t(src)] += go * kernel->v[std::size_t(i)];
            }
            if (kernel->requires_grad) {
              kernel->ensure_grad();
              kernel->g[std::size_t(i)] += go * x->v[std::size_t(src)];
            }
          }
        }
      });
  for (int t = 0; t < n; ++t) {
    T acc = T(0);
    for (int i = 0; i < k; ++i) {
      const int src = t - (k - 1) + i;
      if (src >= 0) acc += kernel->v[std::size_t(i)] * x->v[std::size_t(src)];
    }
    out->v[std::size_t(t)] = acc;
  }
  return out;
}

// x [T x C], kernel [C x K], bias [C]; per-channel causal convolution along
// time with implicit left zero padding.
template <typename T>
Tensor<T> depthwise_conv1d_causal(const Tensor<T>& x, const Tensor<T>& kernel,
                                  const Tensor<T>& bias) {
  if (x->shape.size() != 2 || kernel->shape.size() != 2 ||
      kernel->shape[0] != x->shape[1] || bias->shape != std::vector<int>{x->shape[1]})
    throw ShapeError("depthwise_conv1d_causal: " + shape_str(x->shape) +
                     " with kernel " + shape_str(kernel->shape));
  const int Tn = x->shape[0], C = x->shape[1], K = kernel->shape[1];
  auto out = detail::make_op<T>(
      x->shape, {x, kernel, bias}, [x, kernel, bias, Tn, C, K](TensorNode<T>& nd) {
        for (int t = 0; t < Tn; ++t) {
          const T* go = nd.g.data() + std::size_t(t * C);
          for (int i = 0; i < K; ++i) {
            const int src = t - (K - 1) + i;
            if (src < 0) continue;
            if (x->requires_grad) {
              x->ensure_grad();
              T* gx = x->g.data() + std::size_t(src * C);
              for (int c = 0; c < C; ++c)
                gx[c] += go[c] * kernel->v[std::size_t(c * K + i)];
            }
            if (kernel->requires_grad) {
              kernel->ensure_grad();
              const T* px = x->v.data() + std::size_t(src * C);
              for (int c = 0; c < C; ++c)
                kernel->g[std::size_t(c * K + i)] += go[c] * px[c];
            }
          }
          if (bias->requires_grad) {
            bias->ensure_grad();
            for (int c = 0; c < C; ++c) bias->g[std::size_t(c)] += go[c];
          }
        }
      });
  for (int t = 0; t < Tn; ++t) {
    T* po = out->v.data() + std::size_t(t * C);
    for (int c = 0; c < C; ++c) po[c] = bias->v[std::size_t(c)];
    for (int i = 0; i < K; ++i) {
      const int src = t - (K - 1) + i;
      if (src < 0) continue;
      const T* px = x->v.data() + std::size_t(src * C);
      for (int c = 0; c < C; ++c)
        po[c] += kernel->v[std::size_t(c * K + i)] * px[c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// attention

// Multi-head self attention where frame t attends to frames
// [t-left_context, t] (plus `lookahead` future frames, used only by the
// non-causal ablation). No positional embedding.
template <typename T>
Tensor<T> causal_local_attention(const Tensor<T>& q, const Tensor<T>& k,
                                 const Tensor<T>& v, int heads,
                                 int left_context, int lookahead = 0) {
  detail::check_same_shape(q, k, "attention");
  detail::check_same_shape(q, v, "attention");
  if (q->shape.size() != 2 || q->shape[1] % heads != 0)
    throw ShapeError("attention: dim " + shape_str(q->shape) +
                     " not divisible by " + std::to_string(heads) + " heads");
  const int Tn = q->shape[0], D = q->shape[1], hd = D / heads;
  const T inv_sqrt = T(1.0 / std::sqrt(double(hd)));
  const int W = left_context + 1 + lookahead;  // max window size
  // probabilities saved for backward: [t][h][w]
  auto probs =
      std::make_shared<std::vector<T>>(std::size_t(Tn) * heads * W, T(0));

  auto out = detail::make_op<T>(
      q->shape, {q, k, v},
      [q, k, v, probs, Tn, D, hd, heads, left_context, lookahead, W,
       inv_sqrt](TensorNode<T>& nd) {
        q->ensure_grad();
        k->ensure_grad();
        v->ensure_grad();
        std::vector<T> dp(static_cast<std::size_t>(W));
        std::vector<T> ds(static_cast<std::size_t>(W));
        for (int t = 0; t < Tn; ++t) {
          const int j0 = std::max(0, t - left_context);
          const int j1 = std::min(Tn - 1, t + lookahead);
          for (int h = 0; h < heads; ++h) {
            const std::size_t qoff = std::size_t(t * D + h * hd);
            const T* go = nd.g.data() + qoff;
            const T* p = probs->data() + std::size_t((t * heads + h) * W);
            const int wlen = j1 - j0 + 1;
            // dv and dp
            T inner = T(0);
            for (int j = j0; j <= j1; ++j) {
              const std::size_t voff = std::size_t(j * D + h * hd);
              T acc = T(0);
              for (int c = 0; c < hd; ++c) {
                v->g[voff + std::size_t(c)] += p[j - j0] * go[c];
                acc += go[c] * v->v[voff + std::size_t(c)];
              }
              dp[std::size_t(j - j0)] = acc;
              inner += p[j - j0] * acc;
            }
            for (int w = 0; w < wlen; ++w)
              ds[std::size_t(w)] =
                  p[w] * (dp[std::size_t(w)] - inner) * inv_sqrt;
            for (int j = j0; j <= j1; ++j) {
              const std::size_t koff = std::size_t(j * D + h * hd);
              const T dsj = ds[std::size_t(j - j0)];
              for (int c = 0; c < hd; ++c) {
                q->g[qoff + std::size_t(c)] += dsj * k->v[koff + std::size_t(c)];
                k->g[koff + std::size_t(c)] += dsj * q->v[qoff + std::size_t(c)];
              }
            }
          }
        }
      });

  std::vector<T> scores(static_cast<std::size_t>(W));
  for (int t = 0; t < Tn; ++t) {
    const int j0 = std::max(0, t - left_context);
    const int j1 = std::min(Tn - 1, t + lookahead);
    for (int h = 0; h < heads; ++h) {
      const std::size_t qoff = std::size_t(t * D + h * hd);
      const int wlen = j1 - j0 + 1;
      T mx = -std::numeric_limits<T>::infinity();
      for (int j = j0; j <= j1; ++j) {
        const std::size_t koff = std::size_t(j * D + h * hd);
        T s = T(0);
        for (int c = 0; c < hd; ++c)
          s += q->v[qoff + std::size_t(c)] * k->v[koff + std::size_t(c)];
        s *= inv_sqrt;
        scores[std::size_t(j - j0)] = s;
        mx = std::max(mx, s);
      }
      T denom = T(0);
      for (int w = 0; w < wlen; ++w) {
        scores[std::size_t(w)] = std::exp(scores[std::size_t(w)] - mx);
        denom += scores[std::size_t(w)];
      }
      T* p = probs->data() + std::size_t((t * heads + h) * W);
      for (int w = 0; w < wlen; ++w) p[w] = scores[std::size_t(w)] / denom;
      T* po = out->v.data() + qoff;
      for (int c = 0; c < hd; ++c) po[c] = T(0);
      for (int j = j0; j <= j1; ++j) {
        const std::size_t voff = std::size_t(j * D + h * hd);
        const T pj = p[j - j0];
        for (int c = 0; c < hd; ++c)
          po[c] += pj * v->v[voff + std::size_t(c)];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// framing ops (differentiable mirrors of audio-core framing)

template <typename T>
Tensor<T> frame_rows(const Tensor<T>& x, int window_len, int hop) {
  if (x->shape.size() != 1)
    throw ShapeError("frame_rows: expected 1-D signal");
  const int n = x->shape[0];
  const int Tn = n <= window_len
                     ? 1
                     : int((std::size_t(n - window_len) + std::size_t(hop) - 1) /
                               std::size_t(hop) +
                           1);
  auto out = detail::make_op<T>({Tn, window_len}, {x},
                                [x, window_len, hop, n, Tn](TensorNode<T>& nd) {
    x->ensure_grad();
    for (int t = 0; t < Tn; ++t)
      for (int i = 0; i < window_len; ++i) {
        const int src = t * hop + i;
        if (src < n)
          x->g[std::size_t(src)] += nd.g[std::size_t(t * window_len + i)];
      }
  });
  for (int t = 0; t < Tn; ++t)
    for (int i = 0; i < window_len; ++i) {
      const int src = t * hop + i;
      out->v[std::size_t(t * window_len + i)] =
          src < n ? x->v[std::size_t(src)] : T(0);
    }
  return out;
}

template <typename T>
Tensor<T> overlap_add_rows(const Tensor<T>& frames, int hop) {
  if (frames->shape.size() != 2)
    throw ShapeError("overlap_add_rows: expected 2-D frames");
  const int Tn = frames->shape[0], win = frames->shape[1];
  const int n = (Tn - 1) * hop + win;
  const T gain = T(double(hop) / double(win));
  auto out = detail::make_op<T>({n}, {frames},
                                [frames, hop, Tn, win, gain](TensorNode<T>& nd) {
    frames->ensure_grad();
    for (int t = 0; t < Tn; ++t)
      for (int i = 0; i < win; ++i)
        frames->g[std::size_t(t * win + i)] +=
            nd.g[std::size_t(t * hop + i)] * gain;
  });
  for (int t = 0; t < Tn; ++t)
    for (int i = 0; i < win; ++i)
      out->v[std::size_t(t * hop + i)] +=
          frames->v[std::size_t(t * win + i)] * gain;
  return out;
}

// Row t becomes the concatenation of rows t..t+n-1 (clamped at the end).
template <typename T>
Tensor<T> stack_frames(const Tensor<T>& x, int n) {
  if (x->shape.size() != 2) throw ShapeError("stack_frames: expected 2-D");
  const int Tn = x->shape[0], C = x->shape[1];
  auto out = detail::make_op<T>({Tn, C * n}, {x}, [x, n, Tn, C](TensorNode<T>& nd) {
    x->ensure_grad();
    for (int t = 0; t < Tn; ++t)
      for (int j = 0; j < n; ++j) {
        const int src = std::min(t + j, Tn - 1);
        for (int c = 0; c < C; ++c)
          x->g[std::size_t(src * C + c)] +=
              nd.g[std::size_t(t * C * n + j * C + c)];
      }
  });
  for (int t = 0; t < Tn; ++t)
    for (int j = 0; j < n; ++j) {
      const int src = std::min(t + j, Tn - 1);
      for (int c = 0; c < C; ++c)
        out->v[std::size_t(t * C * n + j * C + c)] = x->v[std::size_t(src * C + c)];
    }
  return out;
}

template <typename T>
Tensor<T> subsample_rows(const Tensor<T>& x, int stride) {
  if (x->shape.size() != 2 || stride < 1)
    throw ShapeError("subsample_rows: expected 2-D input and stride >= 1");
  const int Tn = x->shape[0], C = x->shape[1];
  const int K = (Tn + stride - 1) / stride;
  auto out = detail::make_op<T>({K, C}, {x}, [x, stride, K, C](TensorNode<T>& nd) {
    x->ensure_grad();
    for (int r = 0; r < K; ++r)
      for (int c = 0; c < C; ++c)
        x->g[std::size_t(r * stride * C + c)] += nd.g[std::size_t(r * C + c)];
  });
  for (int r = 0; r < K; ++r)
    for (int c = 0; c < C; ++c)
      out->v[std::size_t(r * C + c)] = x->v[std::size_t(r * stride * C + c)];
  return out;
}

// Value copy that blocks gradient flow.
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  auto t = std::make_shared<TensorNode<T>>();
  t->shape = x->shape;
  t->v = x->v;
  return t;
}

// ---------------------------------------------------------------------------
// backward

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss->numel() != 1)
    throw ShapeError("backward: loss must be a scalar, got " +
                     shape_str(loss->shape));
  // topological order by DFS over parents
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode<T>* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->ensure_grad();
  loss->g[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* node = *it;
    if (node->backfn && node->g.size() == node->v.size()) node->backfn(*node);
  }
}

// ---------------------------------------------------------------------------
// optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
};

template <typename T>
struct AdamState {
  AdamConfig cfg;
  std::vector<std::vector<T>> m, v;
  long step_count = 0;

  explicit AdamState(const std::vector<Tensor<T>>& params, AdamConfig c = {})
      : cfg(c) {
    for (const auto& p : params) {
      m.emplace_back(p->numel(), T(0));
      v.emplace_back(p->numel(), T(0));
    }
  }
};

// Global gradient-norm clipping; returns the pre-clip norm.
template <typename T>
double clip_grad_norm(const std::vector<Tensor<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    p->ensure_grad();
    for (T g : p->g) sq += double(g) * double(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T s = T(max_norm / norm);
    for (const auto& p : params)
      for (T& g : p->g) g *= s;
  }
  return norm;
}

template <typename T>
void adam_step(const std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (params.size() != state.m.size())
    throw ShapeError("adam_step: parameter count changed");
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.cfg.beta1, double(state.step_count));
  const double bc2 = 1.0 - std::pow(state.cfg.beta2, double(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    p->ensure_grad();
    if (p->numel() != state.m[i].size())
      throw ShapeError("adam_step: shape mismatch for parameter " + p->name);
    for (std::size_t j = 0; j < p->numel(); ++j) {
      const double g = double(p->g[j]);
      double mj = double(state.m[i][j]);
      double vj = double(state.v[i][j]);
      mj = state.cfg.beta1 * mj + (1.0 - state.cfg.beta1) * g;
      vj = state.cfg.beta2 * vj + (1.0 - state.cfg.beta2) * g * g;
      state.m[i][j] = T(mj);
      state.v[i][j] = T(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p->v[j] -= T(state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.epsilon));
    }
  }
}

// ---------------------------------------------------------------------------
// initialization

// Glorot-uniform fill over fan_in/fan_out.
template <typename T>
void glorot_init(const Tensor<T>& t, int fan_in, int fan_out,
                 std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& x : t->v) x = T(dist(rng));
}

}  // namespace waveaec
