#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "segcl/rng.hpp"
#include "segcl/tensor.hpp"

namespace segcl::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using CVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

/// Learnable tensor with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void setup(std::string n, std::vector<int> shape) {
    name = std::move(n);
    value = Tensor<T>(shape);
    grad = Tensor<T>(std::move(shape));
  }
};

template <typename T>
using ParamVisitor = std::function<void(Param<T>&)>;

template <typename T>
void he_normal_init(Tensor<T>& w, int fan_in, RngStream& rng) {
  const T std = std::sqrt(T(2) / T(fan_in));
  for (auto& v : w.data) v = static_cast<T>(rng.normal()) * std;
}

// ---------------------------------------------------------------------------
// Conv2d: stride 1, same padding, square kernel. im2col + GEMM.
// ---------------------------------------------------------------------------
template <typename T>
class Conv2d {
 public:
  Conv2d(std::string name, int in_c, int out_c, int ksize)
      : in_c_(in_c), out_c_(out_c), k_(ksize), pad_(ksize / 2) {
    w_.setup(name + ".w", {out_c, in_c * ksize * ksize});
    b_.setup(name + ".b", {out_c});
  }

  void init(RngStream& rng) {
    he_normal_init(w_.value, in_c_ * k_ * k_, rng);
    b_.value.fill(T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    require(x.shape.size() == 4 && x.shape[1] == in_c_, "model.shape", "conv input shape");
    x_ = x;
    const int n = x.shape[0], h = x.shape[2], w = x.shape[3];
    Tensor<T> y({n, out_c_, h, w});
    const int hw = h * w, kk = in_c_ * k_ * k_;
    CMapRM<T> wm(w_.value.ptr(), out_c_, kk);
    col_.resize(static_cast<std::size_t>(kk) * hw);
    for (int i = 0; i < n; ++i) {
      const T* img = x.ptr() + static_cast<std::size_t>(i) * in_c_ * hw;
      T* out = y.ptr() + static_cast<std::size_t>(i) * out_c_ * hw;
      MapRM<T> ym(out, out_c_, hw);
      if (k_ == 1) {
        CMapRM<T> xm(img, in_c_, hw);
        ym.noalias() = wm * xm;
      } else {
        im2col(img, h, w);
        CMapRM<T> cm(col_.data(), kk, hw);
        ym.noalias() = wm * cm;
      }
      for (int r = 0; r < out_c_; ++r) {
        const T bias = b_.value[r];
        T* row = out + static_cast<std::size_t>(r) * hw;
        for (int e = 0; e < hw; ++e) row[e] += bias;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int n = x_.shape[0], h = x_.shape[2], w = x_.shape[3];
    const int hw = h * w, kk = in_c_ * k_ * k_;
    Tensor<T> dx(x_.shape);
    CMapRM<T> wm(w_.value.ptr(), out_c_, kk);
    MapRM<T> dwm(w_.grad.ptr(), out_c_, kk);
    col_.resize(static_cast<std::size_t>(kk) * hw);
    dcol_.resize(static_cast<std::size_t>(kk) * hw);
    for (int i = 0; i < n; ++i) {
      const T* img = x_.ptr() + static_cast<std::size_t>(i) * in_c_ * hw;
      const T* dyp = dy.ptr() + static_cast<std::size_t>(i) * out_c_ * hw;
      CMapRM<T> dym(dyp, out_c_, hw);
      for (int r = 0; r < out_c_; ++r) {
        T s = 0;
        const T* row = dyp + static_cast<std::size_t>(r) * hw;
        for (int e = 0; e < hw; ++e) s += row[e];
        b_.grad[r] += s;
      }
      if (k_ == 1) {
        CMapRM<T> xm(img, in_c_, hw);
        dwm.noalias() += dym * xm.transpose();
        MapRM<T> dxm(dx.ptr() + static_cast<std::size_t>(i) * in_c_ * hw, in_c_, hw);
        dxm.noalias() = wm.transpose() * dym;
      } else {
        im2col(img, h, w);
        CMapRM<T> cm(col_.data(), kk, hw);
        dwm.noalias() += dym * cm.transpose();
        MapRM<T> dcm(dcol_.data(), kk, hw);
        dcm.noalias() = wm.transpose() * dym;
        col2im(dx.ptr() + static_cast<std::size_t>(i) * in_c_ * hw, h, w);
      }
    }
    return dx;
  }

  void visit(const ParamVisitor<T>& fn) {
    fn(w_);
    fn(b_);
  }

  Param<T> w_, b_;

 private:
  void im2col(const T* img, int h, int w) {
    const int hw = h * w;
    T* out = col_.data();
    for (int c = 0; c < in_c_; ++c) {
      const T* plane = img + static_cast<std::size_t>(c) * hw;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          for (int y = 0; y < h; ++y) {
            int sy = y + ky - pad_;
            T* row = out + static_cast<std::size_t>(y) * w;
            if (sy < 0 || sy >= h) {
              std::fill(row, row + w, T(0));
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(sy) * w;
            for (int x = 0; x < w; ++x) {
              int sx = x + kx - pad_;
              row[x] = (sx < 0 || sx >= w) ? T(0) : src[sx];
            }
          }
          out += hw;
        }
      }
    }
  }

  void col2im(T* img, int h, int w) {
    const int hw = h * w;
    std::fill(img, img + static_cast<std::size_t>(in_c_) * hw, T(0));
    const T* in = dcol_.data();
    for (int c = 0; c < in_c_; ++c) {
      T* plane = img + static_cast<std::size_t>(c) * hw;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          for (int y = 0; y < h; ++y) {
            int sy = y + ky - pad_;
            if (sy < 0 || sy >= h) {
              in += w;
              continue;
            }
            T* dst = plane + static_cast<std::size_t>(sy) * w;
            for (int x = 0; x < w; ++x) {
              int sx = x + kx - pad_;
              if (sx >= 0 && sx < w) dst[sx] += in[x];
            }
            in += w;
          }
        }
      }
    }
  }

  int in_c_, out_c_, k_, pad_;
  Tensor<T> x_;
  AlignedVec<T> col_, dcol_;
};

// ---------------------------------------------------------------------------
// GroupNorm with per-channel affine.
// ---------------------------------------------------------------------------
template <typename T>
class GroupNorm {
 public:
  GroupNorm(std::string name, int channels, int groups) : channels_(channels), groups_(groups) {
    require(groups >= 1 && channels % groups == 0, "model.divisibility",
            "norm_groups (" + std::to_string(groups) + ") must divide channel count (" +
                std::to_string(channels) + ")");
    gamma_.setup(name + ".gamma", {channels});
    beta_.setup(name + ".beta", {channels});
    gamma_.value.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    require(c == channels_, "model.shape", "group norm channel mismatch");
    const int cg = c / groups_;
    const std::size_t group_elems = static_cast<std::size_t>(cg) * h * w;
    xhat_ = Tensor<T>(x.shape);
    inv_std_.assign(static_cast<std::size_t>(n) * groups_, T(0));
    Tensor<T> y(x.shape);
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < groups_; ++g) {
        const std::size_t base =
            (static_cast<std::size_t>(i) * c + static_cast<std::size_t>(g) * cg) * h * w;
        T mean = 0;
        for (std::size_t e = 0; e < group_elems; ++e) mean += x.data[base + e];
        mean /= static_cast<T>(group_elems);
        T var = 0;
        for (std::size_t e = 0; e < group_elems; ++e) {
          T d = x.data[base + e] - mean;
          var += d * d;
        }
        var /= static_cast<T>(group_elems);
        const T inv = T(1) / std::sqrt(var + eps_);
        inv_std_[static_cast<std::size_t>(i) * groups_ + g] = inv;
        for (std::size_t e = 0; e < group_elems; ++e) {
          const std::size_t idx = base + e;
          const int ch = g * cg + static_cast<int>(e / (static_cast<std::size_t>(h) * w));
          T xh = (x.data[idx] - mean) * inv;
          xhat_.data[idx] = xh;
          y.data[idx] = gamma_.value[ch] * xh + beta_.value[ch];
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int n = dy.shape[0], c = dy.shape[1], h = dy.shape[2], w = dy.shape[3];
    const int cg = c / groups_;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const std::size_t group_elems = static_cast<std::size_t>(cg) * hw;
    Tensor<T> dx(dy.shape);
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < groups_; ++g) {
        const std::size_t base =
            (static_cast<std::size_t>(i) * c + static_cast<std::size_t>(g) * cg) * hw;
        const T inv = inv_std_[static_cast<std::size_t>(i) * groups_ + g];
        T s1 = 0, s2 = 0;
        for (std::size_t e = 0; e < group_elems; ++e) {
          const std::size_t idx = base + e;
          const int ch = g * cg + static_cast<int>(e / hw);
          const T dxh = dy.data[idx] * gamma_.value[ch];
          s1 += dxh;
          s2 += dxh * xhat_.data[idx];
        }
        const T inv_m = T(1) / static_cast<T>(group_elems);
        for (std::size_t e = 0; e < group_elems; ++e) {
          const std::size_t idx = base + e;
          const int ch = g * cg + static_cast<int>(e / hw);
          const T dxh = dy.data[idx] * gamma_.value[ch];
          dx.data[idx] = inv * (dxh - s1 * inv_m - xhat_.data[idx] * s2 * inv_m);
          gamma_.grad[ch] += dy.data[idx] * xhat_.data[idx];
          beta_.grad[ch] += dy.data[idx];
        }
      }
    }
    return dx;
  }

  void visit(const ParamVisitor<T>& fn) {
    fn(gamma_);
    fn(beta_);
  }

  Param<T> gamma_, beta_;

 private:
  int channels_, groups_;
  T eps_ = static_cast<T>(1e-5);
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

// ---------------------------------------------------------------------------
// Elementwise / structural layers.
// ---------------------------------------------------------------------------
template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = x;
    for (auto& v : y_.data) v = v > T(0) ? v : T(0);
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = y_[i] > T(0) ? dy[i] : T(0);
    return dx;
  }

 private:
  Tensor<T> y_;
};

template <typename T>
class MaxPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    require(h % 2 == 0 && w % 2 == 0, "model.shape", "max-pool needs even spatial size");
    in_shape_ = x.shape;
    Tensor<T> y({n, c, h / 2, w / 2});
    argmax_.assign(y.numel(), 0);
    std::size_t o = 0;
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const T* plane = x.ptr() + (static_cast<std::size_t>(i) * c + ch) * h * w;
        for (int y0 = 0; y0 < h; y0 += 2)
          for (int x0 = 0; x0 < w; x0 += 2) {
            std::size_t best = static_cast<std::size_t>(y0) * w + x0;
            T bv = plane[best];
            const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
            for (std::size_t cd : cand)
              if (plane[cd] > bv) {
                bv = plane[cd];
                best = cd;
              }
            y[o] = bv;
            argmax_[o] = (static_cast<std::size_t>(i) * c + ch) * h * w + best;
            ++o;
          }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(in_shape_);
    for (std::size_t o = 0; o < dy.numel(); ++o) dx.data[argmax_[o]] += dy[o];
    return dx;
  }

 private:
  std::vector<int> in_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class UpsampleNN2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    in_shape_ = x.shape;
    Tensor<T> y({n, c, 2 * h, 2 * w});
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const T* src = x.ptr() + (static_cast<std::size_t>(i) * c + ch) * h * w;
        T* dst = y.ptr() + (static_cast<std::size_t>(i) * c + ch) * 4 * h * w;
        for (int yy = 0; yy < 2 * h; ++yy)
          for (int xx = 0; xx < 2 * w; ++xx)
            dst[static_cast<std::size_t>(yy) * 2 * w + xx] =
                src[static_cast<std::size_t>(yy / 2) * w + xx / 2];
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    Tensor<T> dx(in_shape_);
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const T* src = dy.ptr() + (static_cast<std::size_t>(i) * c + ch) * 4 * h * w;
        T* dst = dx.ptr() + (static_cast<std::size_t>(i) * c + ch) * h * w;
        for (int yy = 0; yy < 2 * h; ++yy)
          for (int xx = 0; xx < 2 * w; ++xx)
            dst[static_cast<std::size_t>(yy / 2) * w + xx / 2] +=
                src[static_cast<std::size_t>(yy) * 2 * w + xx];
      }
    return dx;
  }

 private:
  std::vector<int> in_shape_;
};

/// Inverted dropout: scales kept units by 1/(1-p) at train time, identity in
/// eval mode. The mask comes from the caller's step stream.
template <typename T>
class Dropout {
 public:
  explicit Dropout(T p) : p_(p) {}

  Tensor<T> forward(const Tensor<T>& x, bool train, RngStream* rng) {
    passthrough_ = !train || p_ <= T(0);
    if (passthrough_) return x;
    mask_ = Tensor<T>(x.shape);
    const T keep_scale = T(1) / (T(1) - p_);
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      mask_[i] = rng->uniform() < static_cast<double>(p_) ? T(0) : keep_scale;
      y[i] = x[i] * mask_[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (passthrough_) return dy;
    Tensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * mask_[i];
    return dx;
  }

 private:
  T p_;
  bool passthrough_ = true;
  Tensor<T> mask_;
};

template <typename T>
class Dense {
 public:
  Dense(std::string name, int in_dim, int out_dim) : in_(in_dim), out_(out_dim) {
    w_.setup(name + ".w", {out_dim, in_dim});
    b_.setup(name + ".b", {out_dim});
  }

  void init(RngStream& rng) {
    he_normal_init(w_.value, in_, rng);
    b_.value.fill(T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    require(x.shape.size() == 2 && x.shape[1] == in_, "model.shape", "dense input shape");
    x_ = x;
    const int n = x.shape[0];
    Tensor<T> y({n, out_});
    CMapRM<T> xm(x.ptr(), n, in_);
    CMapRM<T> wm(w_.value.ptr(), out_, in_);
    MapRM<T> ym(y.ptr(), n, out_);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i) {
      T* row = y.ptr() + static_cast<std::size_t>(i) * out_;
      for (int r = 0; r < out_; ++r) row[r] += b_.value[r];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int n = x_.shape[0];
    CMapRM<T> dym(dy.ptr(), n, out_);
    CMapRM<T> xm(x_.ptr(), n, in_);
    CMapRM<T> wm(w_.value.ptr(), out_, in_);
    MapRM<T> dwm(w_.grad.ptr(), out_, in_);
    dwm.noalias() += dym.transpose() * xm;
    for (int i = 0; i < n; ++i) {
      const T* row = dy.ptr() + static_cast<std::size_t>(i) * out_;
      for (int r = 0; r < out_; ++r) b_.grad[r] += row[r];
    }
    Tensor<T> dx({n, in_});
    MapRM<T> dxm(dx.ptr(), n, in_);
    dxm.noalias() = dym * wm;
    return dx;
  }

  void visit(const ParamVisitor<T>& fn) {
    fn(w_);
    fn(b_);
  }

  Param<T> w_, b_;

 private:
  int in_, out_;
  Tensor<T> x_;
};

template <typename T>
class Sigmoid {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = Tensor<T>(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) y_[i] = T(1) / (T(1) + std::exp(-x[i]));
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * y_[i] * (T(1) - y_[i]);
    return dx;
  }

 private:
  Tensor<T> y_;
};

// ---------------------------------------------------------------------------
// Adam over a fixed parameter walk.
// ---------------------------------------------------------------------------
template <typename T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(std::vector<Param<T>*> params) {
    params_ = std::move(params);
    m_.clear();
    v_.clear();
    for (Param<T>* p : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
    t_ = 0;
  }

  void zero_grad() {
    for (Param<T>* p : params_) p->grad.fill(T(0));
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - static_cast<T>(std::pow(beta1_, t_));
    const T bc2 = T(1) - static_cast<T>(std::pow(beta2_, t_));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T lr = static_cast<T>(lr_), eps = static_cast<T>(eps_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param<T>& p = *params_[k];
      for (std::size_t i = 0; i < p.value.numel(); ++i) {
        const T g = p.grad[i];
        m_[k][i] = b1 * m_[k][i] + (T(1) - b1) * g;
        v_[k][i] = b2 * v_[k][i] + (T(1) - b2) * g * g;
        p.value[i] -= lr * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + eps);
      }
    }
  }

  std::int64_t t() const { return t_; }
  void set_t(std::int64_t t) { t_ = t; }
  std::vector<Tensor<T>>& moments1() { return m_; }
  std::vector<Tensor<T>>& moments2() { return v_; }
  const std::vector<Param<T>*>& params() const { return params_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Param<T>*> params_;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace segcl::nn
