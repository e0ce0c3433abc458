#pragma once

// Dense float tensors and a small tape-free reverse-mode autodiff engine.
//
// A Var is a shared node holding a value, a lazily allocated gradient and a
// closure that pushes its gradient into its parents. Parameters are leaf
// nodes; intermediate nodes are released together with the last Var that
// refers to them. Graph recording is skipped when no parent requires a
// gradient or a NoGradGuard is alive, so target-network and inference passes
// never build a graph.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "coftad/error.hpp"

namespace coftad::nn {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_)) {
      throw ContractError("tensor data size " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != data_.size()) {
      throw ContractError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Concatenates tensors along the first dimension.
inline Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  Shape shape = parts.front().shape();
  int rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(shape.size()) ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw ContractError("concat_rows: mismatched shapes");
    }
    rows += p.dim(0);
  }
  shape[0] = rows;
  std::vector<float> data;
  data.reserve(numel(shape));
  for (const auto& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
  return Tensor(std::move(shape), std::move(data));
}

// ---------------------------------------------------------------------------
// Autodiff graph

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad() {
    if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
    return grad;
  }
  void zero_grad() { grad = Tensor(); }
};

using Var = std::shared_ptr<Node>;

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

inline Var parameter(Tensor value, bool requires_grad = true) {
  auto node = constant(std::move(value));
  node->requires_grad = requires_grad;
  return node;
}

/// Builds an op output. The closure is kept only when a gradient is needed.
inline Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& p : parents) {
      if (p && p->requires_grad) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return node;
}

/// Seeds each (node, gradient) pair and back-propagates through the graph in
/// reverse topological order. Leaf gradients accumulate.
inline void backward(const std::vector<std::pair<Var, Tensor>>& seeds) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack;
  for (const auto& [var, grad] : seeds) {
    if (!var->requires_grad) continue;
    if (!grad.same_shape(var->value)) {
      throw ContractError("backward: seed gradient shape " + shape_string(grad.shape()) +
                          " does not match value " + shape_string(var->value.shape()));
    }
    Tensor& g = var->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i];
    if (visited.insert(var.get()).second) stack.emplace_back(var.get(), 0);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* parent = node->parents[next++].get();
        if (parent && parent->requires_grad && visited.insert(parent).second) {
          stack.emplace_back(parent, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

namespace detail {
inline Tensor& grad_of(const Var& v) { return v->ensure_grad(); }
}  // namespace detail

// ---------------------------------------------------------------------------
// Ops

inline Var relu(const Var& x) {
  Tensor y = x->value;
  for (auto& v : y.values()) v = v > 0.0f ? v : 0.0f;
  return make_result(std::move(y), {x}, [](Node& self) {
    auto& in = self.parents[0];
    Tensor& gx = detail::grad_of(in);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (in->value[i] > 0.0f) gx[i] += self.grad[i];
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) throw ContractError("add: shape mismatch");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b->value[i];
  return make_result(std::move(y), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      Tensor& g = detail::grad_of(p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

/// Rows [begin, end) of the first dimension.
inline Var slice_rows(const Var& x, int begin, int end) {
  const int rows = x->value.dim(0);
  if (begin < 0 || end > rows || begin > end) throw ContractError("slice_rows: bad range");
  const std::size_t stride = x->value.size() / static_cast<std::size_t>(rows);
  Shape shape = x->value.shape();
  shape[0] = end - begin;
  std::vector<float> data(x->value.data() + begin * stride, x->value.data() + end * stride);
  return make_result(Tensor(std::move(shape), std::move(data)), {x},
                     [begin, stride](Node& self) {
                       Tensor& g = detail::grad_of(self.parents[0]);
                       float* dst = g.data() + begin * stride;
                       for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
                     });
}

namespace detail {

struct ConvGeometry {
  int n, c, h, w, o, k, stride, pad, ho, wo;
  int patch() const { return c * k * k; }
  int out_pixels() const { return ho * wo; }
};

inline void im2col(const float* img, const ConvGeometry& g, float* cols) {
  const int hw_out = g.out_pixels();
  for (int c = 0; c < g.c; ++c) {
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        float* row = cols + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * hw_out;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          float* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0f);
            continue;
          }
          const float* src = img + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

inline void col2im(const float* cols, const ConvGeometry& g, float* img) {
  const int hw_out = g.out_pixels();
  for (int c = 0; c < g.c; ++c) {
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const float* row = cols + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * hw_out;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          float* dst = img + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          const float* src = row + oy * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D convolution, NCHW input, weight [O, C, k, k], optional bias [O].
inline Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Tensor& xv = x->value;
  const Tensor& wv = weight->value;
  if (xv.rank() != 4 || wv.rank() != 4 || wv.dim(1) != xv.dim(1) || wv.dim(2) != wv.dim(3)) {
    throw ContractError("conv2d: input " + shape_string(xv.shape()) + " incompatible with weight " +
                        shape_string(wv.shape()));
  }
  detail::ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2),
                         stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ContractError("conv2d: input too small");

  Tensor y({g.n, g.o, g.ho, g.wo});
  MatrixRM cols(g.patch(), g.out_pixels());
  Eigen::Map<const MatrixRM> w(wv.data(), g.o, g.patch());
  const std::size_t in_stride = static_cast<std::size_t>(g.c) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.o) * g.out_pixels();
  for (int n = 0; n < g.n; ++n) {
    detail::im2col(xv.data() + n * in_stride, g, cols.data());
    Eigen::Map<MatrixRM> out(y.data() + n * out_stride, g.o, g.out_pixels());
    out.noalias() = w * cols;
    if (bias) {
      for (int o = 0; o < g.o; ++o) out.row(o).array() += bias->value[o];
    }
  }

  return make_result(std::move(y), {x, weight, bias}, [g, in_stride, out_stride](Node& self) {
    const Var& x = self.parents[0];
    const Var& weight = self.parents[1];
    const Var& bias = self.parents[2];
    Eigen::Map<const MatrixRM> w(weight->value.data(), g.o, g.patch());
    MatrixRM cols(g.patch(), g.out_pixels());
    MatrixRM dcols(g.patch(), g.out_pixels());
    const bool need_w = weight->requires_grad;
    const bool need_x = x->requires_grad;
    const bool need_b = bias && bias->requires_grad;
    for (int n = 0; n < g.n; ++n) {
      Eigen::Map<const MatrixRM> dy(self.grad.data() + n * out_stride, g.o, g.out_pixels());
      if (need_w) {
        detail::im2col(x->value.data() + n * in_stride, g, cols.data());
        Eigen::Map<MatrixRM> dw(detail::grad_of(weight).data(), g.o, g.patch());
        dw.noalias() += dy * cols.transpose();
      }
      if (need_b) {
        Tensor& db = detail::grad_of(bias);
        for (int o = 0; o < g.o; ++o) db[o] += dy.row(o).sum();
      }
      if (need_x) {
        dcols.noalias() = w.transpose() * dy;
        detail::col2im(dcols.data(), g, detail::grad_of(x).data() + n * in_stride);
      }
    }
  });
}

/// Per-channel affine map with frozen statistics (inference-mode batch norm):
/// y = gamma * (x - mean) / sqrt(var + eps) + beta.
inline Var frozen_batch_norm2d(const Var& x, const Var& gamma, const Var& beta, const Tensor& mean,
                               const Tensor& var, float eps) {
  const Tensor& xv = x->value;
  const int n = xv.dim(0), c = xv.dim(1);
  const std::size_t hw = xv.size() / (static_cast<std::size_t>(n) * c);
  std::vector<float> inv_std(static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) inv_std[ch] = 1.0f / std::sqrt(var[ch] + eps);
  Tensor y(xv.shape());
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const float scale = gamma->value[ch] * inv_std[ch];
      const float shift = beta->value[ch] - mean[ch] * scale;
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) y[off + p] = xv[off + p] * scale + shift;
    }
  }
  return make_result(std::move(y), {x, gamma, beta},
                     [n, c, hw, inv_std, mean](Node& self) {
                       const Var& x = self.parents[0];
                       const Var& gamma = self.parents[1];
                       const Var& beta = self.parents[2];
                       for (int i = 0; i < n; ++i) {
                         for (int ch = 0; ch < c; ++ch) {
                           const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
                           const float scale = gamma->value[ch] * inv_std[ch];
                           double sum_dy = 0.0, sum_dy_xhat = 0.0;
                           for (std::size_t p = 0; p < hw; ++p) {
                             const float dy = self.grad[off + p];
                             sum_dy += dy;
                             sum_dy_xhat += dy * (x->value[off + p] - mean[ch]) * inv_std[ch];
                           }
                           if (gamma->requires_grad) detail::grad_of(gamma)[ch] += static_cast<float>(sum_dy_xhat);
                           if (beta->requires_grad) detail::grad_of(beta)[ch] += static_cast<float>(sum_dy);
                           if (x->requires_grad) {
                             Tensor& gx = detail::grad_of(x);
                             for (std::size_t p = 0; p < hw; ++p) gx[off + p] += self.grad[off + p] * scale;
                           }
                         }
                       }
                     });
}

/// Batch norm over the rows of an [N, F] matrix. In training mode batch
/// statistics are used (biased variance) and the running buffers are updated
/// with the given momentum; otherwise the running buffers are used.
inline Var batch_norm1d(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
                        Tensor& running_var, bool training, float momentum, float eps) {
  const Tensor& xv = x->value;
  const int n = xv.dim(0), f = xv.dim(1);
  std::vector<float> mean(static_cast<std::size_t>(f)), inv_std(static_cast<std::size_t>(f));
  if (training) {
    for (int j = 0; j < f; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += xv[static_cast<std::size_t>(i) * f + j];
      const double m = s / n;
      double v = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d = xv[static_cast<std::size_t>(i) * f + j] - m;
        v += d * d;
      }
      v /= n;
      mean[j] = static_cast<float>(m);
      inv_std[j] = static_cast<float>(1.0 / std::sqrt(v + eps));
      const double unbiased = n > 1 ? v * n / (n - 1) : v;
      running_mean[j] = static_cast<float>((1.0 - momentum) * running_mean[j] + momentum * m);
      running_var[j] = static_cast<float>((1.0 - momentum) * running_var[j] + momentum * unbiased);
    }
  } else {
    for (int j = 0; j < f; ++j) {
      mean[j] = running_mean[j];
      inv_std[j] = 1.0f / std::sqrt(running_var[j] + eps);
    }
  }
  Tensor xhat(xv.shape());
  Tensor y(xv.shape());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < f; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * f + j;
      xhat[idx] = (xv[idx] - mean[j]) * inv_std[j];
      y[idx] = gamma->value[j] * xhat[idx] + beta->value[j];
    }
  }
  return make_result(std::move(y), {x, gamma, beta},
                     [n, f, training, inv_std, xhat = std::move(xhat)](Node& self) {
                       const Var& x = self.parents[0];
                       const Var& gamma = self.parents[1];
                       const Var& beta = self.parents[2];
                       for (int j = 0; j < f; ++j) {
                         double sum_dy = 0.0, sum_dy_xhat = 0.0;
                         for (int i = 0; i < n; ++i) {
                           const std::size_t idx = static_cast<std::size_t>(i) * f + j;
                           sum_dy += self.grad[idx];
                           sum_dy_xhat += static_cast<double>(self.grad[idx]) * xhat[idx];
                         }
                         if (gamma->requires_grad) detail::grad_of(gamma)[j] += static_cast<float>(sum_dy_xhat);
                         if (beta->requires_grad) detail::grad_of(beta)[j] += static_cast<float>(sum_dy);
                         if (!x->requires_grad) continue;
                         Tensor& gx = detail::grad_of(x);
                         const double g = gamma->value[j];
                         for (int i = 0; i < n; ++i) {
                           const std::size_t idx = static_cast<std::size_t>(i) * f + j;
                           if (training) {
                             gx[idx] += static_cast<float>(
                                 g * inv_std[j] / n *
                                 (n * self.grad[idx] - sum_dy - xhat[idx] * sum_dy_xhat));
                           } else {
                             gx[idx] += static_cast<float>(g * inv_std[j] * self.grad[idx]);
                           }
                         }
                       }
                     });
}

/// x [N, F] times weight [O, F] transposed, plus bias [O].
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x->value;
  const Tensor& wv = weight->value;
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1)) {
    throw ContractError("linear: input " + shape_string(xv.shape()) + " incompatible with weight " +
                        shape_string(wv.shape()));
  }
  const int n = xv.dim(0), f = xv.dim(1), o = wv.dim(0);
  Tensor y({n, o});
  Eigen::Map<const MatrixRM> xm(xv.data(), n, f);
  Eigen::Map<const MatrixRM> wm(wv.data(), o, f);
  Eigen::Map<MatrixRM> ym(y.data(), n, o);
  ym.noalias() = xm * wm.transpose();
  if (bias) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < o; ++j) ym(i, j) += bias->value[j];
    }
  }
  return make_result(std::move(y), {x, weight, bias}, [n, f, o](Node& self) {
    const Var& x = self.parents[0];
    const Var& weight = self.parents[1];
    const Var& bias = self.parents[2];
    Eigen::Map<const MatrixRM> dy(self.grad.data(), n, o);
    if (weight->requires_grad) {
      Eigen::Map<const MatrixRM> xm(x->value.data(), n, f);
      Eigen::Map<MatrixRM> dw(detail::grad_of(weight).data(), o, f);
      dw.noalias() += dy.transpose() * xm;
    }
    if (bias && bias->requires_grad) {
      Tensor& db = detail::grad_of(bias);
      for (int j = 0; j < o; ++j) db[j] += dy.col(j).sum();
    }
    if (x->requires_grad) {
      Eigen::Map<const MatrixRM> wm(weight->value.data(), o, f);
      Eigen::Map<MatrixRM> dx(detail::grad_of(x).data(), n, f);
      dx.noalias() += dy * wm;
    }
  });
}

inline Var max_pool2d(const Var& x, int k, int stride, int pad) {
  const Tensor& xv = x->value;
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  Tensor y({n, c, ho, wo});
  std::vector<std::size_t> argmax(y.size());
  std::size_t out = 0;
  for (int plane = 0; plane < n * c; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++out) {
        float best = -std::numeric_limits<float>::infinity();
        std::size_t best_idx = base;
        for (int ki = 0; ki < k; ++ki) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          for (int kj = 0; kj < k; ++kj) {
            const int ix = ox * stride - pad + kj;
            if (ix < 0 || ix >= w) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * w + ix;
            if (xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
            }
          }
        }
        y[out] = best;
        argmax[out] = best_idx;
      }
    }
  }
  return make_result(std::move(y), {x}, [argmax = std::move(argmax)](Node& self) {
    Tensor& gx = detail::grad_of(self.parents[0]);
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += self.grad[i];
  });
}

/// Mean over spatial dimensions: [N, C, H, W] -> [N, C].
inline Var global_avg_pool(const Var& x) {
  const Tensor& xv = x->value;
  const int n = xv.dim(0), c = xv.dim(1);
  const std::size_t hw = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor y({n, c});
  for (std::size_t plane = 0; plane < static_cast<std::size_t>(n) * c; ++plane) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += xv[plane * hw + p];
    y[plane] = static_cast<float>(s / static_cast<double>(hw));
  }
  return make_result(std::move(y), {x}, [hw](Node& self) {
    Tensor& gx = detail::grad_of(self.parents[0]);
    const float inv = 1.0f / static_cast<float>(hw);
    for (std::size_t plane = 0; plane < self.grad.size(); ++plane) {
      const float g = self.grad[plane] * inv;
      for (std::size_t p = 0; p < hw; ++p) gx[plane * hw + p] += g;
    }
  });
}

// ---------------------------------------------------------------------------
// Eigen interop for [N, D] tensors.

inline Eigen::MatrixXd to_matrix(const Tensor& t) {
  if (t.rank() != 2) throw ContractError("to_matrix: expected rank-2 tensor");
  Eigen::Map<const MatrixRM> m(t.data(), t.dim(0), t.dim(1));
  return m.cast<double>();
}

inline Tensor from_matrix(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  Eigen::Map<MatrixRM> out(t.data(), m.rows(), m.cols());
  out = m.cast<float>();
  return t;
}

}  // namespace coftad::nn
