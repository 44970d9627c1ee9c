#pragma once

#include <memory>
#include <string>
#include <vector>

#include "segcl/nn.hpp"

namespace segcl::model {

enum class HeadKind { pool, ch };

inline const char* to_string(HeadKind kind) { return kind == HeadKind::pool ? "pool" : "ch"; }

inline HeadKind head_kind_from_string(const std::string& name) {
  if (name == "pool") return HeadKind::pool;
  if (name == "ch") return HeadKind::ch;
  throw Error("model.config", "unknown head_kind: " + name);
}

struct ModelConfig {
  int levels = 4;
  int base_filters = 16;
  int norm_groups = 4;
  double dropout_p = 0.5;
  int num_classes = 4;
  int projection_dim = 128;
  HeadKind head_kind = HeadKind::pool;
  int input_size = 64;       // square inputs; sizes the channel-wise head
  int predictor_hidden = 64;

  int channels_at(int level) const { return base_filters << level; }
  int bottleneck_channels() const { return channels_at(levels - 1); }
  int spatial_divisor() const { return 1 << (levels - 1); }
  int bottleneck_size() const { return input_size / spatial_divisor(); }

  void validate() const {
    require(levels >= 3, "model.config", "levels must be >= 3");
    require(base_filters >= 4, "model.config", "base_filters must be >= 4");
    require(num_classes >= 1, "model.config", "num_classes must be >= 1");
    require(projection_dim >= 2, "model.config", "projection_dim must be >= 2");
    require(dropout_p >= 0.0 && dropout_p < 1.0, "model.config", "dropout_p must be in [0,1)");
    require(predictor_hidden >= 1, "model.config", "predictor_hidden must be >= 1");
    for (int i = 0; i < levels; ++i)
      require(channels_at(i) % norm_groups == 0, "model.divisibility",
              "norm_groups must divide channels at level " + std::to_string(i));
    require(input_size % spatial_divisor() == 0 && bottleneck_size() >= 2, "model.config",
            "input_size must be divisible by " + std::to_string(spatial_divisor()));
  }
};

// ---------------------------------------------------------------------------
// UNet: per level two 3x3 conv + group norm + ReLU; 2x max-pool down,
// nearest-neighbor upsample + 3x3 conv up, skip concatenation. Dropout sits
// before and after the bottleneck block and after the conv blocks of the two
// deepest decoder stages. Final 1x1 conv + per-class sigmoid.
// ---------------------------------------------------------------------------
template <typename T>
class UNet {
 public:
  explicit UNet(const ModelConfig& cfg) : cfg_(cfg), drop_pre_(T(cfg.dropout_p)), drop_post_(T(cfg.dropout_p)) {
    cfg_.validate();
    const int L = cfg_.levels;
    for (int i = 0; i < L; ++i) {
      const int in_c = i == 0 ? 1 : cfg_.channels_at(i - 1);
      const int out_c = cfg_.channels_at(i);
      const std::string p = "enc" + std::to_string(i);
      enc_.push_back(std::make_unique<ConvBlock>(p, in_c, out_c, cfg_.norm_groups));
    }
    pools_.resize(L - 1);
    for (int i = L - 2; i >= 0; --i) {
      const int c = cfg_.channels_at(i);
      const std::string p = "dec" + std::to_string(i);
      auto stage = std::make_unique<DecStage>(
          DecStage{nn::UpsampleNN2<T>{},
                   nn::Conv2d<T>(p + ".upconv", cfg_.channels_at(i + 1), c, 3),
                   nn::GroupNorm<T>(p + ".upgn", c, cfg_.norm_groups),
                   nn::ReLU<T>{},
                   ConvBlock(p, 2 * c, c, cfg_.norm_groups),
                   nn::Dropout<T>(T(cfg_.dropout_p)),
                   /*has_dropout=*/(L - 2 - i) < 2});
      dec_.push_back(std::move(stage));
    }
    out_conv_ = std::make_unique<nn::Conv2d<T>>("out", cfg_.base_filters, cfg_.num_classes, 1);
  }

  const ModelConfig& config() const { return cfg_; }

  void init(std::uint64_t seed) {
    RngStream rng = RngStream::derive(seed, "model.init");
    for (auto& block : enc_) block->init(rng);
    for (auto& stage : dec_) {
      stage->upconv.init(rng);
      stage->block.init(rng);
    }
    out_conv_->init(rng);
  }

  /// Encoder pass; returns bottleneck features h shared by decoder and heads.
  Tensor<T> forward_encode(const Tensor<T>& x, bool train, RngStream* rng) {
    check_input(x);
    Tensor<T> a = x;
    const int L = cfg_.levels;
    skips_.assign(L - 1, Tensor<T>{});
    for (int i = 0; i < L - 1; ++i) {
      a = enc_[i]->forward(a);
      skips_[i] = a;
      a = pools_[i].forward(a);
    }
    a = drop_pre_.forward(a, train, rng);
    a = enc_[L - 1]->forward(a);
    return drop_post_.forward(a, train, rng);
  }

  /// Full segmentation pass; probabilities in (0,1), shape (N,C,H,W).
  Tensor<T> forward_segment(const Tensor<T>& x, bool train, RngStream* rng) {
    Tensor<T> h = forward_encode(x, train, rng);
    return forward_decode(h, train, rng);
  }

  /// Decoder from cached-encoder h (exposed so joint training can reuse h).
  Tensor<T> forward_decode(const Tensor<T>& h, bool train, RngStream* rng) {
    Tensor<T> cur = h;
    const int L = cfg_.levels;
    for (int j = 0; j < L - 1; ++j) {
      DecStage& s = *dec_[j];
      const int level = L - 2 - j;
      cur = s.up.forward(cur);
      cur = s.uprelu.forward(s.upgn.forward(s.upconv.forward(cur)));
      cur = concat_channels(cur, skips_[level]);
      cur = s.block.forward(cur);
      if (s.has_dropout) cur = s.drop.forward(cur, train, rng);
    }
    return sig_.forward(out_conv_->forward(cur));
  }

  /// Backward of forward_segment; accumulates parameter gradients.
  void backward_segment(const Tensor<T>& dp) {
    Tensor<T> dcur = out_conv_->backward(sig_.backward(dp));
    const int L = cfg_.levels;
    std::vector<Tensor<T>> dskips(L - 1);
    for (int j = L - 2; j >= 0; --j) {
      DecStage& s = *dec_[j];
      const int level = L - 2 - j;
      if (s.has_dropout) dcur = s.drop.backward(dcur);
      Tensor<T> dcat = s.block.backward(dcur);
      auto [dup, dskip] = split_channels(dcat, cfg_.channels_at(level));
      dskips[level] = std::move(dskip);
      dcur = s.up.backward(s.upconv.backward(s.upgn.backward(s.uprelu.backward(dup))));
    }
    backward_encoder(dcur, &dskips);
  }

  /// Backward of forward_encode alone (contrastive path).
  void backward_encode(const Tensor<T>& dh) { backward_encoder(dh, nullptr); }

  void visit_params(const nn::ParamVisitor<T>& fn) {
    for (auto& block : enc_) block->visit(fn);
    for (auto& stage : dec_) {
      stage->upconv.visit(fn);
      stage->upgn.visit(fn);
      stage->block.visit(fn);
    }
    out_conv_->visit(fn);
  }

  std::size_t param_count() {
    std::size_t n = 0;
    visit_params([&n](nn::Param<T>& p) { n += p.value.numel(); });
    return n;
  }

 private:
  struct ConvBlock {
    nn::Conv2d<T> conv1, conv2;
    nn::GroupNorm<T> gn1, gn2;
    nn::ReLU<T> relu1, relu2;

    ConvBlock(const std::string& prefix, int in_c, int out_c, int groups)
        : conv1(prefix + ".conv1", in_c, out_c, 3),
          conv2(prefix + ".conv2", out_c, out_c, 3),
          gn1(prefix + ".gn1", out_c, groups),
          gn2(prefix + ".gn2", out_c, groups) {}

    void init(RngStream& rng) {
      conv1.init(rng);
      conv2.init(rng);
    }
    Tensor<T> forward(const Tensor<T>& x) {
      Tensor<T> a = relu1.forward(gn1.forward(conv1.forward(x)));
      return relu2.forward(gn2.forward(conv2.forward(a)));
    }
    Tensor<T> backward(const Tensor<T>& dy) {
      Tensor<T> d = conv2.backward(gn2.backward(relu2.backward(dy)));
      return conv1.backward(gn1.backward(relu1.backward(d)));
    }
    void visit(const nn::ParamVisitor<T>& fn) {
      conv1.visit(fn);
      gn1.visit(fn);
      conv2.visit(fn);
      gn2.visit(fn);
    }
  };

  struct DecStage {
    nn::UpsampleNN2<T> up;
    nn::Conv2d<T> upconv;
    nn::GroupNorm<T> upgn;
    nn::ReLU<T> uprelu;
    ConvBlock block;
    nn::Dropout<T> drop;
    bool has_dropout;
  };

  void check_input(const Tensor<T>& x) const {
    require(x.shape.size() == 4 && x.shape[1] == 1, "model.shape",
            "expected input shape (N,1,H,W)");
    const int div = cfg_.spatial_divisor();
    require(x.shape[2] % div == 0 && x.shape[3] % div == 0, "model.input_size",
            "spatial size must be divisible by " + std::to_string(div));
  }

  void backward_encoder(const Tensor<T>& dh, std::vector<Tensor<T>>* dskips) {
    const int L = cfg_.levels;
    Tensor<T> d = drop_post_.backward(dh);
    d = enc_[L - 1]->backward(d);
    d = drop_pre_.backward(d);
    for (int i = L - 2; i >= 0; --i) {
      Tensor<T> g = pools_[i].backward(d);
      if (dskips && !(*dskips)[i].empty()) axpy(T(1), (*dskips)[i], g);
      d = enc_[i]->backward(g);
    }
  }

  static Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const int n = a.shape[0], ca = a.shape[1], cb = b.shape[1], h = a.shape[2], w = a.shape[3];
    Tensor<T> y({n, ca + cb, h, w});
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
      std::copy(a.ptr() + static_cast<std::size_t>(i) * ca * hw,
                a.ptr() + static_cast<std::size_t>(i + 1) * ca * hw,
                y.ptr() + static_cast<std::size_t>(i) * (ca + cb) * hw);
      std::copy(b.ptr() + static_cast<std::size_t>(i) * cb * hw,
                b.ptr() + static_cast<std::size_t>(i + 1) * cb * hw,
                y.ptr() + static_cast<std::size_t>(i) * (ca + cb) * hw + ca * hw);
    }
    return y;
  }

  static std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& y, int ca) {
    const int n = y.shape[0], c = y.shape[1], h = y.shape[2], w = y.shape[3];
    const int cb = c - ca;
    Tensor<T> a({n, ca, h, w}), b({n, cb, h, w});
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
      std::copy(y.ptr() + static_cast<std::size_t>(i) * c * hw,
                y.ptr() + static_cast<std::size_t>(i) * c * hw + ca * hw,
                a.ptr() + static_cast<std::size_t>(i) * ca * hw);
      std::copy(y.ptr() + static_cast<std::size_t>(i) * c * hw + ca * hw,
                y.ptr() + static_cast<std::size_t>(i + 1) * c * hw,
                b.ptr() + static_cast<std::size_t>(i) * cb * hw);
    }
    return {std::move(a), std::move(b)};
  }

  ModelConfig cfg_;
  std::vector<std::unique_ptr<ConvBlock>> enc_;
  std::vector<nn::MaxPool2<T>> pools_;
  nn::Dropout<T> drop_pre_, drop_post_;
  std::vector<std::unique_ptr<DecStage>> dec_;
  std::unique_ptr<nn::Conv2d<T>> out_conv_;
  nn::Sigmoid<T> sig_;
  std::vector<Tensor<T>> skips_;
};

// ---------------------------------------------------------------------------
// Projection heads C(h): aggregation + two dense layers (first with ReLU).
// ---------------------------------------------------------------------------
template <typename T>
class ProjectionHead {
 public:
  virtual ~ProjectionHead() = default;
  virtual Tensor<T> forward(const Tensor<T>& h) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dz) = 0;
  virtual void visit(const nn::ParamVisitor<T>& fn) = 0;
  virtual void init(RngStream& rng) = 0;
  virtual HeadKind kind() const = 0;

  std::size_t param_count() {
    std::size_t n = 0;
    visit([&n](nn::Param<T>& p) { n += p.value.numel(); });
    return n;
  }
};

/// Spatial global-average aggregation: (N,C,s,s) -> (N,C) -> MLP.
template <typename T>
class PoolHead : public ProjectionHead<T> {
 public:
  explicit PoolHead(const ModelConfig& cfg)
      : fc1_("head_pool.fc1", cfg.bottleneck_channels(), cfg.projection_dim),
        fc2_("head_pool.fc2", cfg.projection_dim, cfg.projection_dim) {}

  Tensor<T> forward(const Tensor<T>& h) override {
    in_shape_ = h.shape;
    const int n = h.shape[0], c = h.shape[1];
    const std::size_t hw = static_cast<std::size_t>(h.shape[2]) * h.shape[3];
    Tensor<T> pooled({n, c});
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const T* p = h.ptr() + (static_cast<std::size_t>(i) * c + ch) * hw;
        T s = 0;
        for (std::size_t e = 0; e < hw; ++e) s += p[e];
        pooled.at2(i, ch) = s / static_cast<T>(hw);
      }
    return fc2_.forward(relu_.forward(fc1_.forward(pooled)));
  }

  Tensor<T> backward(const Tensor<T>& dz) override {
    Tensor<T> dpooled = fc1_.backward(relu_.backward(fc2_.backward(dz)));
    const int n = in_shape_[0], c = in_shape_[1];
    const std::size_t hw = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3];
    Tensor<T> dh(in_shape_);
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const T g = dpooled.at2(i, ch) / static_cast<T>(hw);
        T* p = dh.ptr() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (std::size_t e = 0; e < hw; ++e) p[e] = g;
      }
    return dh;
  }

  void visit(const nn::ParamVisitor<T>& fn) override {
    fc1_.visit(fn);
    fc2_.visit(fn);
  }
  void init(RngStream& rng) override {
    fc1_.init(rng);
    fc2_.init(rng);
  }
  HeadKind kind() const override { return HeadKind::pool; }

  nn::Dense<T> fc1_, fc2_;

 private:
  nn::ReLU<T> relu_;
  std::vector<int> in_shape_;
};

/// Channel aggregation: a learned 1x1 conv mixes C channels into one map, so
/// the spatial layout survives into the MLP.
template <typename T>
class ChHead : public ProjectionHead<T> {
 public:
  explicit ChHead(const ModelConfig& cfg)
      : agg_("head_ch.agg", cfg.bottleneck_channels(), 1, 1),
        fc1_("head_ch.fc1", cfg.bottleneck_size() * cfg.bottleneck_size(), cfg.projection_dim),
        fc2_("head_ch.fc2", cfg.projection_dim, cfg.projection_dim) {}

  Tensor<T> forward(const Tensor<T>& h) override {
    Tensor<T> m = agg_.forward(h);  // (N,1,s,s)
    const int n = m.shape[0];
    m.reshape({n, m.shape[2] * m.shape[3]});
    return fc2_.forward(relu_.forward(fc1_.forward(m)));
  }

  Tensor<T> backward(const Tensor<T>& dz) override {
    Tensor<T> dm = fc1_.backward(relu_.backward(fc2_.backward(dz)));
    const int n = dm.shape[0];
    const int s = static_cast<int>(std::sqrt(static_cast<double>(dm.shape[1])));
    dm.reshape({n, 1, s, s});
    return agg_.backward(dm);
  }

  void visit(const nn::ParamVisitor<T>& fn) override {
    agg_.visit(fn);
    fc1_.visit(fn);
    fc2_.visit(fn);
  }
  void init(RngStream& rng) override {
    agg_.init(rng);
    fc1_.init(rng);
    fc2_.init(rng);
  }
  HeadKind kind() const override { return HeadKind::ch; }

  nn::Conv2d<T> agg_;
  nn::Dense<T> fc1_, fc2_;

 private:
  nn::ReLU<T> relu_;
};

template <typename T>
std::unique_ptr<ProjectionHead<T>> make_head(const ModelConfig& cfg) {
  if (cfg.head_kind == HeadKind::pool) return std::make_unique<PoolHead<T>>(cfg);
  return std::make_unique<ChHead<T>>(cfg);
}

/// SimSiam predictor Q: bottleneck MLP, hidden ReLU layer then linear map
/// back to the projection dimension.
template <typename T>
class Predictor {
 public:
  explicit Predictor(const ModelConfig& cfg)
      : fc1_("predictor.fc1", cfg.projection_dim, cfg.predictor_hidden),
        fc2_("predictor.fc2", cfg.predictor_hidden, cfg.projection_dim) {}

  Tensor<T> forward(const Tensor<T>& z) { return fc2_.forward(relu_.forward(fc1_.forward(z))); }
  Tensor<T> backward(const Tensor<T>& dzhat) {
    return fc1_.backward(relu_.backward(fc2_.backward(dzhat)));
  }

  void visit(const nn::ParamVisitor<T>& fn) {
    fc1_.visit(fn);
    fc2_.visit(fn);
  }
  void init(RngStream& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
  }

  /// Exact identity map (requires hidden == projection_dim and non-negative
  /// inputs, since the hidden ReLU stays transparent only there).
  void set_identity() {
    const int out = fc2_.w_.value.shape[0], hid = fc2_.w_.value.shape[1];
    require(out == hid && fc1_.w_.value.shape[0] == fc1_.w_.value.shape[1], "model.config",
            "identity predictor requires hidden == projection_dim");
    fc1_.w_.value.fill(T(0));
    fc2_.w_.value.fill(T(0));
    for (int i = 0; i < out; ++i) {
      fc1_.w_.value.at2(i, i) = T(1);
      fc2_.w_.value.at2(i, i) = T(1);
    }
    fc1_.b_.value.fill(T(0));
    fc2_.b_.value.fill(T(0));
  }

  std::size_t param_count() {
    std::size_t n = 0;
    visit([&n](nn::Param<T>& p) { n += p.value.numel(); });
    return n;
  }

  nn::Dense<T> fc1_, fc2_;

 private:
  nn::ReLU<T> relu_;
};

template <typename T, typename V>
std::vector<nn::Param<T>*> collect_params(V& visitable) {
  std::vector<nn::Param<T>*> out;
  visitable.visit_params([&out](nn::Param<T>& p) { out.push_back(&p); });
  return out;
}

/// Closed-form parameter counts from config arithmetic alone (no
/// allocation); unit tests pin these against the built networks.
inline std::size_t analytic_unet_param_count(const ModelConfig& cfg) {
  auto conv = [](int in, int out, int k) {
    return static_cast<std::size_t>(out) * in * k * k + out;
  };
  auto gn = [](int c) { return static_cast<std::size_t>(2) * c; };
  std::size_t total = 0;
  for (int i = 0; i < cfg.levels; ++i) {
    const int in = i == 0 ? 1 : cfg.channels_at(i - 1);
    const int out = cfg.channels_at(i);
    total += conv(in, out, 3) + gn(out) + conv(out, out, 3) + gn(out);
  }
  for (int i = cfg.levels - 2; i >= 0; --i) {
    const int c = cfg.channels_at(i);
    total += conv(cfg.channels_at(i + 1), c, 3) + gn(c);
    total += conv(2 * c, c, 3) + gn(c) + conv(c, c, 3) + gn(c);
  }
  total += conv(cfg.base_filters, cfg.num_classes, 1);
  return total;
}

inline std::size_t analytic_head_param_count(const ModelConfig& cfg, HeadKind kind) {
  auto dense = [](int in, int out) { return static_cast<std::size_t>(out) * in + out; };
  const int c = cfg.bottleneck_channels(), p = cfg.projection_dim;
  if (kind == HeadKind::pool) return dense(c, p) + dense(p, p);
  const int wh = cfg.bottleneck_size() * cfg.bottleneck_size();
  return static_cast<std::size_t>(c) + 1 + dense(wh, p) + dense(p, p);
}

}  // namespace segcl::model
