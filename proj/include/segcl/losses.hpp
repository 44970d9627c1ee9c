#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>

#include "segcl/tensor.hpp"
#include "segcl/unet.hpp"

namespace segcl::losses {

enum class ContrastiveKind { clr, siam };
enum class DenominatorMode { as_written, include_positive };

inline const char* to_string(ContrastiveKind k) {
  return k == ContrastiveKind::clr ? "clr" : "siam";
}
inline ContrastiveKind contrastive_kind_from_string(const std::string& name) {
  if (name == "clr") return ContrastiveKind::clr;
  if (name == "siam") return ContrastiveKind::siam;
  throw Error("loss.config", "unknown contrastive_kind: " + name);
}
inline const char* to_string(DenominatorMode m) {
  return m == DenominatorMode::as_written ? "as_written" : "include_positive";
}
inline DenominatorMode denominator_mode_from_string(const std::string& name) {
  if (name == "as_written") return DenominatorMode::as_written;
  if (name == "include_positive") return DenominatorMode::include_positive;
  throw Error("loss.config", "unknown denominator_mode: " + name);
}

struct LossConfig {
  double tau = 0.5;
  double lambda = 20.0;
  double eps = 1e-6;
  ContrastiveKind contrastive_kind = ContrastiveKind::clr;
  DenominatorMode denominator_mode = DenominatorMode::as_written;

  void validate() const {
    require(tau > 0.0, "loss.config", "tau must be > 0");
    require(lambda > 0.0, "loss.config", "lambda must be > 0");
    require(eps > 0.0, "loss.config", "eps must be > 0");
  }
};

namespace detail {

inline void warn_zero_norm() {
  static std::atomic<int> count{0};
  int c = ++count;
  if (c <= 5) {
    std::fprintf(stderr,
                 "segcl: warning: zero-norm projection in cosine similarity, using 0%s\n",
                 c == 5 ? " (suppressing further warnings)" : "");
  }
}

}  // namespace detail

/// d(u,v) = u.v / (|u| |v|). Zero-norm inputs yield 0 with a loud warning.
template <typename T>
T cosine_similarity(const T* u, const T* v, int d) {
  T dot = 0, nu = 0, nv = 0;
  for (int i = 0; i < d; ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == T(0) || nv == T(0)) {
    detail::warn_zero_norm();
    return T(0);
  }
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

template <typename T>
T cosine_similarity(const Tensor<T>& u, const Tensor<T>& v) {
  require(u.numel() == v.numel() && u.numel() > 0, "loss.shape",
          "cosine_similarity operands must match");
  return cosine_similarity(u.ptr(), v.ptr(), static_cast<int>(u.numel()));
}

/// Logarithmic Dice loss, mean over (image, class) cells. The smoothing term
/// also enters the numerator, so empty-prediction-on-empty-truth scores 0
/// instead of diverging.
template <typename T>
T log_dice_loss(const Tensor<T>& p, const Tensor<std::uint8_t>& y, T eps,
                Tensor<T>* dp = nullptr) {
  require(p.shape.size() == 4, "loss.shape", "log_dice expects (N,C,H,W)");
  require(p.shape == y.shape, "loss.shape", "prediction/mask shape mismatch");
  for (std::uint8_t v : y.data) require(v <= 1, "loss.shape", "mask must be binary");
  const int n = p.shape[0], c = p.shape[1];
  const std::size_t hw = static_cast<std::size_t>(p.shape[2]) * p.shape[3];
  const T norm = T(1) / static_cast<T>(static_cast<std::size_t>(n) * c);
  if (dp) *dp = Tensor<T>(p.shape);
  T total = 0;
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * hw;
      T inter = 0, mass = 0;
      for (std::size_t e = 0; e < hw; ++e) {
        const T pv = p.data[base + e];
        require(pv >= T(0) && pv <= T(1), "loss.shape", "probabilities must lie in [0,1]");
        const T yv = static_cast<T>(y.data[base + e]);
        inter += yv * pv;
        mass += yv + pv;
      }
      const T num = T(2) * inter + eps;
      const T den = eps + mass;
      total += -std::log(num / den);
      if (dp) {
        for (std::size_t e = 0; e < hw; ++e) {
          const T yv = static_cast<T>(y.data[base + e]);
          dp->data[base + e] = norm * (-T(2) * yv / num + T(1) / den);
        }
      }
    }
  }
  return total * norm;
}

/// Normalized temperature-scaled cross entropy over positive pairs
/// (z'_i, z''_i), summed over both anchor directions. In as_written mode the
/// denominator runs over the opposite-view batch excluding the positive.
template <typename T>
T ntxent_loss(const Tensor<T>& zp, const Tensor<T>& zpp, T tau, DenominatorMode mode,
              Tensor<T>* dzp = nullptr, Tensor<T>* dzpp = nullptr) {
  require(tau > T(0), "loss.config", "tau must be > 0");
  require(zp.shape.size() == 2 && zp.shape == zpp.shape, "loss.shape",
          "projection batches must share shape (N,d)");
  const int n = zp.shape[0], d = zp.shape[1];
  require(mode == DenominatorMode::include_positive || n >= 2, "loss.batch",
          "as_written denominator needs at least 2 pairs");

  // Row-normalize both batches; zero rows stay zero (warned in cosine path).
  Tensor<T> np({n, d}), npp({n, d});
  std::vector<T> norm_p(n), norm_pp(n);
  for (int i = 0; i < n; ++i) {
    T sp = 0, spp = 0;
    for (int k = 0; k < d; ++k) {
      sp += zp.at2(i, k) * zp.at2(i, k);
      spp += zpp.at2(i, k) * zpp.at2(i, k);
    }
    norm_p[i] = std::sqrt(sp);
    norm_pp[i] = std::sqrt(spp);
    if (norm_p[i] == T(0) || norm_pp[i] == T(0)) detail::warn_zero_norm();
    for (int k = 0; k < d; ++k) {
      np.at2(i, k) = norm_p[i] > T(0) ? zp.at2(i, k) / norm_p[i] : T(0);
      npp.at2(i, k) = norm_pp[i] > T(0) ? zpp.at2(i, k) / norm_pp[i] : T(0);
    }
  }

  // S[i][k] = d(z'_i, z''_k)
  Tensor<T> s({n, n});
  {
    nn::CMapRM<T> a(np.ptr(), n, d), b(npp.ptr(), n, d);
    nn::MapRM<T> sm(s.ptr(), n, n);
    sm.noalias() = a * b.transpose();
  }

  Tensor<T> gs({n, n});  // dL/dS
  T loss = 0;
  // dir = 0: anchors z'_i over row i; dir = 1: anchors z''_i over column i.
  for (int dir = 0; dir < 2; ++dir) {
    for (int i = 0; i < n; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int k = 0; k < n; ++k) {
        if (mode == DenominatorMode::as_written && k == i) continue;
        mx = std::max(mx, dir == 0 ? s.at2(i, k) : s.at2(k, i));
      }
      T sum = 0;
      for (int k = 0; k < n; ++k) {
        if (mode == DenominatorMode::as_written && k == i) continue;
        sum += std::exp(((dir == 0 ? s.at2(i, k) : s.at2(k, i)) - mx) / tau);
      }
      const T lse = mx / tau + std::log(sum);
      loss += -s.at2(i, i) / tau + lse;
      if (dzp) {
        for (int k = 0; k < n; ++k) {
          if (mode == DenominatorMode::as_written && k == i) continue;
          const T soft = std::exp(((dir == 0 ? s.at2(i, k) : s.at2(k, i)) - mx) / tau) / sum;
          if (dir == 0)
            gs.at2(i, k) += soft / tau;
          else
            gs.at2(k, i) += soft / tau;
        }
        gs.at2(i, i) -= T(1) / tau;
      }
    }
  }

  if (dzp) {
    // dnp = G . npp, dnpp = G^T . np, then back through row normalization.
    Tensor<T> dnp({n, d}), dnpp({n, d});
    nn::CMapRM<T> gm(gs.ptr(), n, n), am(np.ptr(), n, d), bm(npp.ptr(), n, d);
    nn::MapRM<T>(dnp.ptr(), n, d).noalias() = gm * bm;
    nn::MapRM<T>(dnpp.ptr(), n, d).noalias() = gm.transpose() * am;
    *dzp = Tensor<T>({n, d});
    *dzpp = Tensor<T>({n, d});
    for (int i = 0; i < n; ++i) {
      T dot_p = 0, dot_pp = 0;
      for (int k = 0; k < d; ++k) {
        dot_p += np.at2(i, k) * dnp.at2(i, k);
        dot_pp += npp.at2(i, k) * dnpp.at2(i, k);
      }
      for (int k = 0; k < d; ++k) {
        if (norm_p[i] > T(0))
          dzp->at2(i, k) = (dnp.at2(i, k) - np.at2(i, k) * dot_p) / norm_p[i];
        if (norm_pp[i] > T(0))
          dzpp->at2(i, k) = (dnpp.at2(i, k) - npp.at2(i, k) * dot_pp) / norm_pp[i];
      }
    }
  }
  return loss;
}

/// SimSiam negative-cosine loss with stop-gradient targets:
///   L = -sum_i d(Q(z'_i), sg(z''_i)) + d(Q(z''_i), sg(z'_i)).
/// The sg branch contributes value but exactly zero gradient; gradients reach
/// the projections only through the predictor branch. When gradients are
/// requested, predictor parameter gradients accumulate (scaled by
/// grad_scale), matching dzp/dzpp.
template <typename T>
T simsiam_loss(const Tensor<T>& zp, const Tensor<T>& zpp, model::Predictor<T>& q,
               Tensor<T>* dzp = nullptr, Tensor<T>* dzpp = nullptr, T grad_scale = T(1)) {
  require(zp.shape.size() == 2 && zp.shape == zpp.shape, "loss.shape",
          "projection batches must share shape (N,d)");
  const int n = zp.shape[0], d = zp.shape[1];
  if (dzp) {
    *dzp = Tensor<T>({n, d});
    *dzpp = Tensor<T>({n, d});
  }

  T loss = 0;
  // One direction at a time so the predictor's forward cache stays valid for
  // its matching backward.
  for (int dir = 0; dir < 2; ++dir) {
    const Tensor<T>& anchor = dir == 0 ? zp : zpp;    // goes through Q
    const Tensor<T>& target = dir == 0 ? zpp : zp;    // stop-gradient side
    Tensor<T> predicted = q.forward(anchor);
    Tensor<T> dpred;
    if (dzp) dpred = Tensor<T>({n, d});
    for (int i = 0; i < n; ++i) {
      const T* a = predicted.ptr() + static_cast<std::size_t>(i) * d;
      const T* t = target.ptr() + static_cast<std::size_t>(i) * d;
      T dot = 0, na2 = 0, nt2 = 0;
      for (int k = 0; k < d; ++k) {
        dot += a[k] * t[k];
        na2 += a[k] * a[k];
        nt2 += t[k] * t[k];
      }
      if (na2 == T(0) || nt2 == T(0)) {
        detail::warn_zero_norm();
        continue;  // similarity 0, no gradient
      }
      const T na = std::sqrt(na2), nt = std::sqrt(nt2);
      const T sim = dot / (na * nt);
      loss += -sim;
      if (dzp) {
        T* g = dpred.ptr() + static_cast<std::size_t>(i) * d;
        for (int k = 0; k < d; ++k)
          g[k] = -grad_scale * (t[k] / (na * nt) - sim * a[k] / na2);
      }
    }
    if (dzp) {
      Tensor<T> danchor = q.backward(dpred);
      Tensor<T>& sink = dir == 0 ? *dzp : *dzpp;
      axpy(T(1), danchor, sink);
    }
  }
  return loss;
}

/// Eq-style joint objective: mean of the two per-domain contrastive losses
/// plus lambda-weighted supervised loss.
template <typename T>
T total_loss(T lcon_source, T lcon_target, T lsup, T lambda) {
  require(std::isfinite(lcon_source) && std::isfinite(lcon_target) && std::isfinite(lsup),
          "loss.nonfinite", "non-finite loss input (training divergence guard)");
  return T(0.5) * (lcon_source + lcon_target) + lambda * lsup;
}

}  // namespace segcl::losses
