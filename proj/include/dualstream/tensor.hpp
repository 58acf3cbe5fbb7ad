#pragma once

// Dense tensors with reverse-mode differentiation. Ops record backward
// closures on an explicit Tape; forward order is topological by construction,
// so backward() is a single reverse sweep. Templated on the scalar type:
// float for training, double for finite-difference gradient checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dualstream/common.hpp"

namespace dualstream {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline void check_shape(const Shape& s, const char* what) {
  if (s.empty()) throw Error(std::string(what) + ": empty shape");
  for (int d : s)
    if (d <= 0) throw Error(std::string(what) + ": non-positive extent in " + shape_str(s));
}

template <typename T>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    check_shape(shape, "Tensor");
    TensorT t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->value.assign(static_cast<size_t>(shape_numel(t.s_->shape)), T(0));
    if (requires_grad) t.set_requires_grad(true);
    return t;
  }

  static TensorT full(Shape shape, T fill, bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), fill);
    return t;
  }

  static TensorT from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    check_shape(shape, "Tensor");
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
      throw Error("Tensor: data length " + std::to_string(data.size()) +
                  " does not match shape " + shape_str(shape));
    TensorT t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->value = std::move(data);
    if (requires_grad) t.set_requires_grad(true);
    return t;
  }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  int ndim() const { return static_cast<int>(s_->shape.size()); }
  int dim(int i) const { return s_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(s_->value.size()); }

  std::vector<T>& values() { return s_->value; }
  const std::vector<T>& values() const { return s_->value; }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) {
    s_->requires_grad = on;
    if (on && s_->grad.size() != s_->value.size()) s_->grad.assign(s_->value.size(), T(0));
  }
  bool has_grad() const { return !s_->grad.empty(); }
  std::vector<T>& grad() {
    if (s_->grad.empty()) throw Error("Tensor: gradient not allocated");
    return s_->grad;
  }
  const std::vector<T>& grad() const {
    if (s_->grad.empty()) throw Error("Tensor: gradient not allocated");
    return s_->grad;
  }
  void zero_grad() {
    std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }

  int node_id() const { return s_->node_id; }
  void set_node_id(int id) { s_->node_id = id; }

  // Identity of the underlying buffer; two handles alias iff equal.
  const void* storage_id() const { return s_.get(); }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty unless requires_grad
    bool requires_grad = false;
    int node_id = -1;
  };
  std::shared_ptr<Storage> s_;

  template <typename U>
  friend class Tape;
};

using Tensor = TensorT<float>;

template <typename T>
void require_finite(const TensorT<T>& t, const char* what) {
  const auto& v = t.values();
  for (size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(static_cast<double>(v[i])))
      throw NumericError(std::string(what) + ": non-finite value at flat index " +
                         std::to_string(i));
}

// Records one entry per op in forward order. One backward pass per forward
// pass: a consumed tape refuses both backward() and new recordings until
// reset().
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    if (consumed_)
      throw Error("Tape: already consumed by backward(); reset() before a new forward");
    entries_.push_back(std::move(backward_fn));
  }

  void backward(TensorT<T>& loss) {
    if (consumed_) throw Error("Tape: backward() already ran for this forward pass");
    if (loss.size() != 1) throw Error("Tape: backward() expects a scalar, got " + shape_str(loss.shape()));
    if (!loss.has_grad()) throw Error("Tape: loss does not participate in this tape");
    loss.grad()[0] = T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    consumed_ = true;
  }

  void reset() {
    entries_.clear();
    consumed_ = false;
  }

  size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  // Assigns the output's position in this tape; inputs always precede it.
  int next_node_id() { return static_cast<int>(entries_.size()); }

 private:
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

inline int conv_out_extent(int in, int k, int stride, int pad) {
  int span = in + 2 * pad - k;
  if (span < 0) return 0;
  return span / stride + 1;
}

// col is (C*kh*kw) x (OH*OW), row-major.
template <typename T>
void im2col(const T* src, int C, int H, int W, int kh, int kw, int stride, int pad,
            int OH, int OW, T* col) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + (static_cast<int64_t>((c * kh + ky) * kw + kx)) * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride - pad + kx;
            row[oy * OW + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    ? src[(static_cast<int64_t>(c) * H + iy) * W + ix]
                                    : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad,
                int OH, int OW, T* dst) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + (static_cast<int64_t>((c * kh + ky) * kw + kx)) * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= W) continue;
            dst[(static_cast<int64_t>(c) * H + iy) * W + ix] += row[oy * OW + ox];
          }
        }
      }
    }
  }
}

template <typename T>
bool any_requires_grad(std::initializer_list<const TensorT<T>*> ts) {
  for (const auto* t : ts)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

// Output of a taped op: tracks gradients iff some input does.
template <typename T>
TensorT<T> make_output(Tape<T>* tape, Shape shape,
                       std::initializer_list<const TensorT<T>*> inputs) {
  bool rg = tape != nullptr && any_requires_grad<T>(inputs);
  TensorT<T> out = TensorT<T>::zeros(std::move(shape), rg);
  if (tape) out.set_node_id(tape->next_node_id());
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Layer ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv2d(Tape<T>* tape, const TensorT<T>& input, const TensorT<T>& weight,
                  const TensorT<T>* bias, int stride, int padding) {
  if (input.ndim() != 4) throw Error("conv2d: input must be NCHW, got " + shape_str(input.shape()));
  if (weight.ndim() != 4) throw Error("conv2d: weight must be OCKK, got " + shape_str(weight.shape()));
  if (stride < 1) throw Error("conv2d: stride must be >= 1");
  if (padding < 0) throw Error("conv2d: padding must be >= 0");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int O = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != C)
    throw Error("conv2d: weight channels " + std::to_string(weight.dim(1)) +
                " do not match input channels " + std::to_string(C));
  if (bias && (bias->ndim() != 1 || bias->dim(0) != O))
    throw Error("conv2d: bias must have shape [" + std::to_string(O) + "]");
  const int OH = detail::conv_out_extent(H, kh, stride, padding);
  const int OW = detail::conv_out_extent(W, kw, stride, padding);
  if (OH < 1 || OW < 1)
    throw Error("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                " does not fit input " + shape_str(input.shape()));

  TensorT<T> out = detail::make_output<T>(tape, {N, O, OH, OW},
                                          {&input, &weight, bias});
  const int64_t ckk = static_cast<int64_t>(C) * kh * kw;
  const int64_t ohow = static_cast<int64_t>(OH) * OW;
  std::vector<T> col(static_cast<size_t>(ckk * ohow));
  detail::CMapRM<T> wm(weight.values().data(), O, ckk);
  for (int n = 0; n < N; ++n) {
    detail::im2col(input.values().data() + static_cast<int64_t>(n) * C * H * W, C, H, W,
                   kh, kw, stride, padding, OH, OW, col.data());
    detail::CMapRM<T> cm(col.data(), ckk, ohow);
    detail::MapRM<T> om(out.values().data() + static_cast<int64_t>(n) * O * ohow, O, ohow);
    om.noalias() = wm * cm;
    if (bias)
      for (int o = 0; o < O; ++o)
        om.row(o).array() += bias->values()[static_cast<size_t>(o)];
  }

  if (tape && out.requires_grad()) {
    TensorT<T> x = input, w = weight, y = out;
    TensorT<T> b = bias ? *bias : TensorT<T>();
    tape->record([x, w, b, y, stride, padding]() mutable {
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      const int O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
      const int OH = y.dim(2), OW = y.dim(3);
      const int64_t ckk = static_cast<int64_t>(C) * kh * kw;
      const int64_t ohow = static_cast<int64_t>(OH) * OW;
      std::vector<T> col(static_cast<size_t>(ckk * ohow));
      std::vector<T> dcol(static_cast<size_t>(ckk * ohow));
      for (int n = 0; n < N; ++n) {
        detail::CMapRM<T> gy(y.grad().data() + static_cast<int64_t>(n) * O * ohow, O, ohow);
        if (w.requires_grad()) {
          detail::im2col(x.values().data() + static_cast<int64_t>(n) * C * H * W, C, H, W,
                         kh, kw, stride, padding, OH, OW, col.data());
          detail::CMapRM<T> cm(col.data(), ckk, ohow);
          detail::MapRM<T> gw(w.grad().data(), O, ckk);
          gw.noalias() += gy * cm.transpose();
        }
        if (x.requires_grad()) {
          detail::CMapRM<T> wm(w.values().data(), O, ckk);
          detail::MapRM<T> gc(dcol.data(), ckk, ohow);
          gc.noalias() = wm.transpose() * gy;
          detail::col2im_add(dcol.data(), C, H, W, kh, kw, stride, padding, OH, OW,
                             x.grad().data() + static_cast<int64_t>(n) * C * H * W);
        }
        if (b.defined() && b.requires_grad())
          for (int o = 0; o < O; ++o)
            b.grad()[static_cast<size_t>(o)] += gy.row(o).sum();
      }
    });
  }
  return out;
}

// One filter per input channel; output channel c depends only on input channel c.
template <typename T>
TensorT<T> depthwise_conv2d(Tape<T>* tape, const TensorT<T>& input, const TensorT<T>& weight,
                            int stride, int padding) {
  if (input.ndim() != 4) throw Error("depthwise_conv2d: input must be NCHW");
  if (weight.ndim() != 4 || weight.dim(1) != 1)
    throw Error("depthwise_conv2d: weight must be C1KK, got " + shape_str(weight.shape()));
  if (stride < 1 || padding < 0) throw Error("depthwise_conv2d: bad stride/padding");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(0) != C)
    throw Error("depthwise_conv2d: filter count " + std::to_string(weight.dim(0)) +
                " does not match channels " + std::to_string(C));
  const int OH = detail::conv_out_extent(H, kh, stride, padding);
  const int OW = detail::conv_out_extent(W, kw, stride, padding);
  if (OH < 1 || OW < 1) throw Error("depthwise_conv2d: kernel does not fit input");

  TensorT<T> out = detail::make_output<T>(tape, {N, C, OH, OW}, {&input, &weight});
  const T* xv = input.values().data();
  const T* wv = weight.values().data();
  T* yv = out.values().data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xc = xv + (static_cast<int64_t>(n) * C + c) * H * W;
      const T* wc = wv + static_cast<int64_t>(c) * kh * kw;
      T* yc = yv + (static_cast<int64_t>(n) * C + c) * OH * OW;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          T acc = 0;
          for (int ky = 0; ky < kh; ++ky) {
            int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < kw; ++kx) {
              int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= W) continue;
              acc += xc[iy * W + ix] * wc[ky * kw + kx];
            }
          }
          yc[oy * OW + ox] = acc;
        }
    }

  if (tape && out.requires_grad()) {
    TensorT<T> x = input, w = weight, y = out;
    tape->record([x, w, y, stride, padding]() mutable {
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      const int kh = w.dim(2), kw = w.dim(3);
      const int OH = y.dim(2), OW = y.dim(3);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T* xc = x.values().data() + (static_cast<int64_t>(n) * C + c) * H * W;
          const T* wc = w.values().data() + static_cast<int64_t>(c) * kh * kw;
          const T* gy = y.grad().data() + (static_cast<int64_t>(n) * C + c) * OH * OW;
          T* gx = x.requires_grad()
                      ? x.grad().data() + (static_cast<int64_t>(n) * C + c) * H * W
                      : nullptr;
          T* gw = w.requires_grad() ? w.grad().data() + static_cast<int64_t>(c) * kh * kw
                                    : nullptr;
          for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
              T g = gy[oy * OW + ox];
              if (g == T(0)) continue;
              for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  int ix = ox * stride - padding + kx;
                  if (ix < 0 || ix >= W) continue;
                  if (gx) gx[iy * W + ix] += wc[ky * kw + kx] * g;
                  if (gw) gw[ky * kw + kx] += xc[iy * W + ix] * g;
                }
              }
            }
        }
    });
  }
  return out;
}

template <typename T>
struct BatchNormState {
  TensorT<T> running_mean;
  TensorT<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Train mode normalizes with batch statistics (biased variance) and updates
// running stats; eval mode uses running stats only. Batch size 1 in train
// mode is rejected.
template <typename T>
TensorT<T> batchnorm2d(Tape<T>* tape, const TensorT<T>& input, const TensorT<T>& gamma,
                       const TensorT<T>& beta, BatchNormState<T>& state, bool training) {
  if (input.ndim() != 4) throw Error("batchnorm2d: input must be NCHW");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (gamma.size() != C || beta.size() != C || state.running_mean.size() != C ||
      state.running_var.size() != C)
    throw Error("batchnorm2d: parameter length does not match channel count " +
                std::to_string(C));
  if (training && N < 2) throw Error("batchnorm2d: train mode requires batch size >= 2");

  TensorT<T> out = detail::make_output<T>(tape, input.shape(), {&input, &gamma, &beta});
  const int64_t hw = static_cast<int64_t>(H) * W;
  const int64_t m = static_cast<int64_t>(N) * hw;
  std::vector<T> xhat(input.values().size());
  std::vector<T> inv_std(static_cast<size_t>(C));

  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (training) {
      double sum = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = input.values().data() + (static_cast<int64_t>(n) * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) sum += p[i];
      }
      mean = sum / static_cast<double>(m);
      double sq = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = input.values().data() + (static_cast<int64_t>(n) * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          double d = p[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(m);
      auto& rm = state.running_mean.values()[static_cast<size_t>(c)];
      auto& rv = state.running_var.values()[static_cast<size_t>(c)];
      rm = static_cast<T>((1.0 - state.momentum) * rm + state.momentum * mean);
      rv = static_cast<T>((1.0 - state.momentum) * rv + state.momentum * var);
    } else {
      mean = state.running_mean.values()[static_cast<size_t>(c)];
      var = state.running_var.values()[static_cast<size_t>(c)];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + state.eps));
    inv_std[static_cast<size_t>(c)] = inv;
    const T g = gamma.values()[static_cast<size_t>(c)];
    const T b = beta.values()[static_cast<size_t>(c)];
    for (int n = 0; n < N; ++n) {
      const int64_t base = (static_cast<int64_t>(n) * C + c) * hw;
      const T* p = input.values().data() + base;
      T* xh = xhat.data() + base;
      T* q = out.values().data() + base;
      for (int64_t i = 0; i < hw; ++i) {
        xh[i] = (p[i] - static_cast<T>(mean)) * inv;
        q[i] = g * xh[i] + b;
      }
    }
  }

  if (tape && out.requires_grad()) {
    TensorT<T> x = input, gm = gamma, bt = beta, y = out;
    auto xh = std::make_shared<std::vector<T>>(std::move(xhat));
    auto inv = std::make_shared<std::vector<T>>(std::move(inv_std));
    tape->record([x, gm, bt, y, xh, inv, training]() mutable {
      const int N = x.dim(0), C = x.dim(1);
      const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
      const int64_t m = static_cast<int64_t>(N) * hw;
      for (int c = 0; c < C; ++c) {
        const T g = gm.values()[static_cast<size_t>(c)];
        const T ic = (*inv)[static_cast<size_t>(c)];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int n = 0; n < N; ++n) {
          const int64_t base = (static_cast<int64_t>(n) * C + c) * hw;
          const T* gy = y.grad().data() + base;
          const T* xhp = xh->data() + base;
          for (int64_t i = 0; i < hw; ++i) {
            sum_dy += gy[i];
            sum_dy_xhat += static_cast<double>(gy[i]) * xhp[i];
          }
        }
        if (gm.requires_grad()) gm.grad()[static_cast<size_t>(c)] += static_cast<T>(sum_dy_xhat);
        if (bt.requires_grad()) bt.grad()[static_cast<size_t>(c)] += static_cast<T>(sum_dy);
        if (!x.requires_grad()) continue;
        for (int n = 0; n < N; ++n) {
          const int64_t base = (static_cast<int64_t>(n) * C + c) * hw;
          const T* gy = y.grad().data() + base;
          const T* xhp = xh->data() + base;
          T* gx = x.grad().data() + base;
          if (training) {
            // dL/dx = inv/m * (m*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
            for (int64_t i = 0; i < hw; ++i) {
              double dxhat = static_cast<double>(gy[i]) * g;
              double t = static_cast<double>(m) * dxhat - g * sum_dy -
                         static_cast<double>(xhp[i]) * g * sum_dy_xhat;
              gx[i] += static_cast<T>(ic * t / static_cast<double>(m));
            }
          } else {
            for (int64_t i = 0; i < hw; ++i) gx[i] += gy[i] * g * ic;
          }
        }
      }
    });
  }
  return out;
}

namespace detail {

template <typename T, typename FwdFn, typename GradFn>
TensorT<T> elementwise(Tape<T>* tape, const TensorT<T>& input, FwdFn fwd, GradFn dfx) {
  TensorT<T> out = make_output<T>(tape, input.shape(), {&input});
  const auto& xv = input.values();
  auto& yv = out.values();
  for (size_t i = 0; i < xv.size(); ++i) yv[i] = fwd(xv[i]);
  if (tape && out.requires_grad()) {
    TensorT<T> x = input, y = out;
    tape->record([x, y, dfx]() mutable {
      if (!x.requires_grad()) return;
      const auto& xv = x.values();
      const auto& yv = y.values();
      const auto& gy = y.grad();
      auto& gx = x.grad();
      for (size_t i = 0; i < xv.size(); ++i) gx[i] += gy[i] * dfx(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace detail

// Subgradient at the kinks (0 for relu/relu6, 0 and 6 for relu6) is 0.
template <typename T>
TensorT<T> relu(Tape<T>* tape, const TensorT<T>& input) {
  return detail::elementwise<T>(
      tape, input, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
TensorT<T> relu6(Tape<T>* tape, const TensorT<T>& input) {
  return detail::elementwise<T>(
      tape, input, [](T x) { return std::min(std::max(x, T(0)), T(6)); },
      [](T x, T) { return (x > T(0) && x < T(6)) ? T(1) : T(0); });
}

template <typename T>
TensorT<T> sigmoid(Tape<T>* tape, const TensorT<T>& input) {
  return detail::elementwise<T>(
      tape, input,
      [](T x) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
TensorT<T> add(Tape<T>* tape, const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape())
    throw Error("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out = detail::make_output<T>(tape, a.shape(), {&a, &b});
  for (int64_t i = 0; i < a.size(); ++i)
    out.values()[static_cast<size_t>(i)] =
        a.values()[static_cast<size_t>(i)] + b.values()[static_cast<size_t>(i)];
  if (tape && out.requires_grad()) {
    TensorT<T> x = a, z = b, y = out;
    tape->record([x, z, y]() mutable {
      const auto& gy = y.grad();
      if (x.requires_grad())
        for (size_t i = 0; i < gy.size(); ++i) x.grad()[i] += gy[i];
      if (z.requires_grad())
        for (size_t i = 0; i < gy.size(); ++i) z.grad()[i] += gy[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul(Tape<T>* tape, const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape())
    throw Error("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out = detail::make_output<T>(tape, a.shape(), {&a, &b});
  for (int64_t i = 0; i < a.size(); ++i)
    out.values()[static_cast<size_t>(i)] =
        a.values()[static_cast<size_t>(i)] * b.values()[static_cast<size_t>(i)];
  if (tape && out.requires_grad()) {
    TensorT<T> x = a, z = b, y = out;
    tape->record([x, z, y]() mutable {
      const auto& gy = y.grad();
      if (x.requires_grad())
        for (size_t i = 0; i < gy.size(); ++i) x.grad()[i] += gy[i] * z.values()[i];
      if (z.requires_grad())
        for (size_t i = 0; i < gy.size(); ++i) z.grad()[i] += gy[i] * x.values()[i];
    });
  }
  return out;
}

// NCHW -> NC; gradient distributes 1/(H*W).
template <typename T>
TensorT<T> global_avg_pool(Tape<T>* tape, const TensorT<T>& input) {
  if (input.ndim() != 4) throw Error("global_avg_pool: input must be NCHW");
  const int N = input.dim(0), C = input.dim(1);
  const int64_t hw = static_cast<int64_t>(input.dim(2)) * input.dim(3);
  TensorT<T> out = detail::make_output<T>(tape, {N, C}, {&input});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = input.values().data() + (static_cast<int64_t>(n) * C + c) * hw;
      double s = 0;
      for (int64_t i = 0; i < hw; ++i) s += p[i];
      out.values()[static_cast<size_t>(n) * C + c] = static_cast<T>(s / static_cast<double>(hw));
    }
  if (tape && out.requires_grad()) {
    TensorT<T> x = input, y = out;
    tape->record([x, y, hw]() mutable {
      if (!x.requires_grad()) return;
      const int N = x.dim(0), C = x.dim(1);
      const T scale = static_cast<T>(1.0 / static_cast<double>(hw));
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          T g = y.grad()[static_cast<size_t>(n) * C + c] * scale;
          T* gx = x.grad().data() + (static_cast<int64_t>(n) * C + c) * hw;
          for (int64_t i = 0; i < hw; ++i) gx[i] += g;
        }
    });
  }
  return out;
}

// 2x2 average pooling, stride 2 (dense-stream transitions). Odd trailing
// rows/columns are dropped.
template <typename T>
TensorT<T> avg_pool2d_2x2(Tape<T>* tape, const TensorT<T>& input) {
  if (input.ndim() != 4) throw Error("avg_pool2d: input must be NCHW");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int OH = H / 2, OW = W / 2;
  if (OH < 1 || OW < 1) throw Error("avg_pool2d: input too small " + shape_str(input.shape()));
  TensorT<T> out = detail::make_output<T>(tape, {N, C, OH, OW}, {&input});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = input.values().data() + (static_cast<int64_t>(n) * C + c) * H * W;
      T* q = out.values().data() + (static_cast<int64_t>(n) * C + c) * OH * OW;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          int iy = oy * 2, ix = ox * 2;
          q[oy * OW + ox] = static_cast<T>(
              (p[iy * W + ix] + p[iy * W + ix + 1] + p[(iy + 1) * W + ix] +
               p[(iy + 1) * W + ix + 1]) /
              T(4));
        }
    }
  if (tape && out.requires_grad()) {
    TensorT<T> x = input, y = out;
    tape->record([x, y]() mutable {
      if (!x.requires_grad()) return;
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      const int OH = y.dim(2), OW = y.dim(3);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          T* gx = x.grad().data() + (static_cast<int64_t>(n) * C + c) * H * W;
          const T* gy = y.grad().data() + (static_cast<int64_t>(n) * C + c) * OH * OW;
          for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
              T g = gy[oy * OW + ox] / T(4);
              int iy = oy * 2, ix = ox * 2;
              gx[iy * W + ix] += g;
              gx[iy * W + ix + 1] += g;
              gx[(iy + 1) * W + ix] += g;
              gx[(iy + 1) * W + ix + 1] += g;
            }
        }
    });
  }
  return out;
}

// Concatenation along the channel axis (dim 1) for NC or NCHW tensors.
// Backward routes gradient slices back to the matching input.
template <typename T>
TensorT<T> concat_channels(Tape<T>* tape, const TensorT<T>& a, const TensorT<T>& b) {
  if (a.ndim() != b.ndim() || (a.ndim() != 2 && a.ndim() != 4))
    throw Error("concat_channels: inputs must both be NC or NCHW");
  if (a.dim(0) != b.dim(0)) throw Error("concat_channels: batch mismatch");
  int64_t inner_a = 1, inner_b = 1;
  for (int i = 2; i < a.ndim(); ++i) {
    if (a.dim(i) != b.dim(i))
      throw Error("concat_channels: spatial dims differ " + shape_str(a.shape()) + " vs " +
                  shape_str(b.shape()));
    inner_a *= a.dim(i);
    inner_b *= b.dim(i);
  }
  const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  Shape out_shape = a.shape();
  out_shape[1] = Ca + Cb;
  TensorT<T> out = detail::make_output<T>(tape, out_shape, {&a, &b});
  const int64_t stride_a = Ca * inner_a, stride_b = Cb * inner_b;
  for (int n = 0; n < N; ++n) {
    std::copy_n(a.values().data() + n * stride_a, stride_a,
                out.values().data() + n * (stride_a + stride_b));
    std::copy_n(b.values().data() + n * stride_b, stride_b,
                out.values().data() + n * (stride_a + stride_b) + stride_a);
  }
  if (tape && out.requires_grad()) {
    TensorT<T> x = a, z = b, y = out;
    tape->record([x, z, y, stride_a, stride_b]() mutable {
      const int N = x.dim(0);
      for (int n = 0; n < N; ++n) {
        const T* gy = y.grad().data() + n * (stride_a + stride_b);
        if (x.requires_grad()) {
          T* gx = x.grad().data() + n * stride_a;
          for (int64_t i = 0; i < stride_a; ++i) gx[i] += gy[i];
        }
        if (z.requires_grad()) {
          T* gz = z.grad().data() + n * stride_b;
          for (int64_t i = 0; i < stride_b; ++i) gz[i] += gy[i + stride_a];
        }
      }
    });
  }
  return out;
}

// input NF x weight GF^T + bias -> NG. Forward is computed row by row so
// eval-mode results are independent of batch composition.
template <typename T>
TensorT<T> linear(Tape<T>* tape, const TensorT<T>& input, const TensorT<T>& weight,
                  const TensorT<T>* bias) {
  if (input.ndim() != 2) throw Error("linear: input must be NF, got " + shape_str(input.shape()));
  if (weight.ndim() != 2) throw Error("linear: weight must be GF");
  const int N = input.dim(0), F = input.dim(1), G = weight.dim(0);
  if (weight.dim(1) != F)
    throw Error("linear: weight features " + std::to_string(weight.dim(1)) +
                " do not match input features " + std::to_string(F));
  if (bias && (bias->ndim() != 1 || bias->dim(0) != G))
    throw Error("linear: bias must have shape [" + std::to_string(G) + "]");
  TensorT<T> out = detail::make_output<T>(tape, {N, G}, {&input, &weight, bias});
  detail::CMapRM<T> wm(weight.values().data(), G, F);
  for (int n = 0; n < N; ++n) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xr(
        input.values().data() + static_cast<int64_t>(n) * F, F);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yr(
        out.values().data() + static_cast<int64_t>(n) * G, G);
    yr.noalias() = wm * xr;
    if (bias)
      for (int g = 0; g < G; ++g)
        yr[g] += bias->values()[static_cast<size_t>(g)];
  }
  if (tape && out.requires_grad()) {
    TensorT<T> x = input, w = weight, y = out;
    TensorT<T> b = bias ? *bias : TensorT<T>();
    tape->record([x, w, b, y]() mutable {
      const int N = x.dim(0), F = x.dim(1), G = w.dim(0);
      detail::CMapRM<T> xm(x.values().data(), N, F);
      detail::CMapRM<T> wm(w.values().data(), G, F);
      detail::CMapRM<T> gy(y.grad().data(), N, G);
      if (w.requires_grad()) {
        detail::MapRM<T> gw(w.grad().data(), G, F);
        gw.noalias() += gy.transpose() * xm;
      }
      if (x.requires_grad()) {
        detail::MapRM<T> gx(x.grad().data(), N, F);
        gx.noalias() += gy * wm;
      }
      if (b.defined() && b.requires_grad())
        for (int g = 0; g < G; ++g)
          b.grad()[static_cast<size_t>(g)] += gy.col(g).sum();
    });
  }
  return out;
}

// Row-wise softmax without gradient tracking (prediction path).
template <typename T>
std::vector<T> softmax_rows(const TensorT<T>& logits) {
  if (logits.ndim() != 2) throw Error("softmax_rows: input must be NK");
  const int N = logits.dim(0), K = logits.dim(1);
  std::vector<T> p(logits.values().size());
  for (int n = 0; n < N; ++n) {
    const T* row = logits.values().data() + static_cast<int64_t>(n) * K;
    T* out = p.data() + static_cast<int64_t>(n) * K;
    T mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double denom = 0;
    for (int k = 0; k < K; ++k) {
      out[k] = std::exp(row[k] - mx);
      denom += out[k];
    }
    for (int k = 0; k < K; ++k) out[k] = static_cast<T>(out[k] / denom);
  }
  return p;
}

// Mean over the batch of -log softmax(logits)[label], stabilized by row-max
// subtraction. Gradient is (softmax - onehot)/N.
template <typename T>
TensorT<T> softmax_cross_entropy(Tape<T>* tape, const TensorT<T>& logits,
                                 const std::vector<int>& labels) {
  if (logits.ndim() != 2) throw Error("softmax_cross_entropy: logits must be NK");
  const int N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw Error("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                std::to_string(N));
  for (int y : labels)
    if (y < 0 || y >= K)
      throw Error("softmax_cross_entropy: label " + std::to_string(y) + " outside [0," +
                  std::to_string(K) + ")");
  require_finite(logits, "softmax_cross_entropy logits");

  auto probs = std::make_shared<std::vector<T>>(softmax_rows(logits));
  double loss = 0;
  for (int n = 0; n < N; ++n) {
    double p = (*probs)[static_cast<size_t>(n) * K + labels[static_cast<size_t>(n)]];
    loss -= std::log(std::max(p, 1e-300));
  }
  loss /= N;
  TensorT<T> out = detail::make_output<T>(tape, {1}, {&logits});
  out.values()[0] = static_cast<T>(loss);
  if (tape && out.requires_grad()) {
    TensorT<T> x = logits, y = out;
    auto lab = std::make_shared<std::vector<int>>(labels);
    tape->record([x, y, probs, lab]() mutable {
      if (!x.requires_grad()) return;
      const int N = x.dim(0), K = x.dim(1);
      const T g = y.grad()[0] / static_cast<T>(N);
      for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) {
          T p = (*probs)[static_cast<size_t>(n) * K + k];
          T onehot = (k == (*lab)[static_cast<size_t>(n)]) ? T(1) : T(0);
          x.grad()[static_cast<size_t>(n) * K + k] += (p - onehot) * g;
        }
    });
  }
  return out;
}

// Selects one element as a scalar; used to backpropagate a single class logit.
template <typename T>
TensorT<T> pick(Tape<T>* tape, const TensorT<T>& input, int64_t flat_index) {
  if (flat_index < 0 || flat_index >= input.size())
    throw Error("pick: index " + std::to_string(flat_index) + " outside tensor of size " +
                std::to_string(input.size()));
  TensorT<T> out = detail::make_output<T>(tape, {1}, {&input});
  out.values()[0] = input.values()[static_cast<size_t>(flat_index)];
  if (tape && out.requires_grad()) {
    TensorT<T> x = input, y = out;
    tape->record([x, y, flat_index]() mutable {
      if (x.requires_grad()) x.grad()[static_cast<size_t>(flat_index)] += y.grad()[0];
    });
  }
  return out;
}

// Fixed-coefficient contraction to a scalar; the gradient-check harness uses
// it to scalarize non-scalar op outputs.
template <typename T>
TensorT<T> weighted_sum(Tape<T>* tape, const TensorT<T>& input, const std::vector<T>& coeffs) {
  if (static_cast<int64_t>(coeffs.size()) != input.size())
    throw Error("weighted_sum: coefficient count mismatch");
  TensorT<T> out = detail::make_output<T>(tape, {1}, {&input});
  double acc = 0;
  for (size_t i = 0; i < coeffs.size(); ++i)
    acc += static_cast<double>(coeffs[i]) * input.values()[i];
  out.values()[0] = static_cast<T>(acc);
  if (tape && out.requires_grad()) {
    TensorT<T> x = input, y = out;
    auto c = std::make_shared<std::vector<T>>(coeffs);
    tape->record([x, y, c]() mutable {
      if (!x.requires_grad()) return;
      const T g = y.grad()[0];
      for (size_t i = 0; i < c->size(); ++i) x.grad()[i] += (*c)[i] * g;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

// v <- momentum * v + g ; p <- p - lr * v. Pure given (params, grads, state).
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum)
      : lr_(learning_rate), momentum_(momentum) {
    if (learning_rate <= 0) throw Error("SgdMomentum: learning rate must be positive");
    if (momentum < 0 || momentum >= 1) throw Error("SgdMomentum: momentum must be in [0,1)");
  }

  double learning_rate() const { return lr_; }
  double momentum() const { return momentum_; }

  void step(std::vector<TensorT<T>>& params) {
    if (velocity_.empty()) {
      velocity_.reserve(params.size());
      for (auto& p : params) velocity_.emplace_back(p.values().size(), T(0));
    }
    if (velocity_.size() != params.size())
      throw Error("SgdMomentum: parameter count changed between steps");
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (velocity_[i].size() != p.values().size())
        throw Error("SgdMomentum: parameter shape changed between steps");
      const auto& g = p.grad();
      auto& v = velocity_[i];
      auto& w = p.values();
      for (size_t j = 0; j < w.size(); ++j) {
        v[j] = static_cast<T>(momentum_ * v[j] + g[j]);
        w[j] = static_cast<T>(w[j] - lr_ * v[j]);
      }
    }
  }

 private:
  double lr_;
  double momentum_;
  std::vector<std::vector<T>> velocity_;
};

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = false;
};

// Central differences at the given step; relative error uses
// |a-n| / max(|a|, |n|, 1e-4). The floor keeps near-zero gradients (dead
// units, saturated activations) in absolute-error territory, where the
// truncation noise of the difference quotient would otherwise swamp a
// meaningless relative measure; disagreements above ~1e-8 absolute still fail.
// fn must rebuild the scalar output from the inputs on each call; it receives
// a tape only for the analytic pass.
template <typename Fn>
GradCheckResult gradient_check(const std::string& name, Fn&& fn,
                               std::vector<TensorT<double>> inputs, double h = 1e-5,
                               double tol = 1e-4) {
  // Tensors share storage across handles, so clear any gradient left over
  // from a previous check on the same inputs.
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }

  Tape<double> tape;
  TensorT<double> out = fn(&tape, inputs);
  if (out.size() != 1) throw Error("gradient_check: fn must produce a scalar");
  tape.backward(out);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) analytic.push_back(t.grad());

  double max_rel = 0.0;
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& vals = inputs[ti].values();
    for (size_t j = 0; j < vals.size(); ++j) {
      const double orig = vals[j];
      vals[j] = orig + h;
      double fp = fn(nullptr, inputs).values()[0];
      vals[j] = orig - h;
      double fm = fn(nullptr, inputs).values()[0];
      vals[j] = orig;
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[ti][j];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
      max_rel = std::max(max_rel, rel);
    }
  }
  return {name, max_rel, max_rel < tol};
}

namespace detail {

template <typename T>
TensorT<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorT<T> t = TensorT<T>::zeros(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Keeps samples away from the relu/relu6 kinks where the subgradient
// convention and finite differences legitimately disagree.
template <typename T>
void nudge_from_kinks(TensorT<T>& t, std::initializer_list<double> kinks, double margin = 0.05) {
  for (auto& v : t.values())
    for (double k : kinks)
      if (std::abs(static_cast<double>(v) - k) < margin)
        v = static_cast<T>(k + (v >= k ? margin : -margin) * 2.0);
}

}  // namespace detail

// Finite-difference sweep over every layer op, one run per seed. The full
// fusion-model check lives with the model (see gradient_check_fusion_model).
std::vector<GradCheckResult> gradient_check_suite(int num_seeds, uint64_t master_seed);

}  // namespace dualstream
