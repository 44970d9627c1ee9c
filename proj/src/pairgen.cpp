#include "segcl/pairgen.hpp"

#include <algorithm>
#include <cmath>

namespace segcl::pairgen {

void AugmConfig::validate() const {
  require(flip_prob >= 0.0f && flip_prob <= 1.0f, "pairgen.config", "flip_prob must be in [0,1]");
  auto frac = [](float v) { return v >= 0.0f && v <= 1.0f; };
  require(frac(max_translate_frac) && frac(max_zoom_in_frac) && frac(max_brightness_delta) &&
              frac(max_jitter),
          "pairgen.config", "all augmentation fractions must be in [0,1]");
}

SliceSigma SliceSigma::from_um(float sigma_um, float inter_slice_spacing_um) {
  require(sigma_um > 0.0f, "pairgen.sigma", "sigma_um must be > 0");
  require(inter_slice_spacing_um > 0.0f, "pairgen.sigma", "inter-slice spacing must be > 0");
  return {sigma_um, sigma_um / inter_slice_spacing_um};
}

SliceSigma SliceSigma::from_index(float sigma_idx) {
  require(sigma_idx > 0.0f, "pairgen.sigma", "sigma_idx must be > 0");
  return {sigma_idx, sigma_idx};
}

SliceSample extract_slice(const phantom::Volume& volume, const phantom::MaskVolume* mask, int b) {
  require(b >= 0 && b < volume.depth(), "pairgen.slice", "slice index out of range");
  const int h = volume.height(), w = volume.width();
  SliceSample out;
  out.image = Tensor<float>({h, w});
  const float* src = volume.voxels.ptr() + static_cast<std::size_t>(b) * h * w;
  std::copy(src, src + static_cast<std::size_t>(h) * w, out.image.ptr());
  if (mask) {
    const int c = mask->num_classes();
    Tensor<std::uint8_t> m({h, w, c});
    const std::uint8_t* ms = mask->labels.ptr() + static_cast<std::size_t>(b) * h * w * c;
    std::copy(ms, ms + static_cast<std::size_t>(h) * w * c, m.ptr());
    out.mask = std::move(m);
  }
  out.volume_id = volume.volume_id;
  out.slice_index = b;
  out.domain = volume.domain;
  return out;
}

namespace {

void flip_horizontal(Tensor<float>& img) {
  const int h = img.shape[0], w = img.shape[1];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w / 2; ++x) std::swap(img.at2(y, x), img.at2(y, w - 1 - x));
}

void flip_horizontal_mask(Tensor<std::uint8_t>& m) {
  const int h = m.shape[0], w = m.shape[1], c = m.shape[2];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w / 2; ++x)
      for (int k = 0; k < c; ++k) std::swap(m.at3(y, x, k), m.at3(y, w - 1 - x, k));
}

template <typename T>
Tensor<T> shift_zero_pad(const Tensor<T>& in, int dy, int dx) {
  Tensor<T> out(in.shape);
  const int h = in.shape[0], w = in.shape[1];
  const int ch = in.shape.size() == 3 ? in.shape[2] : 1;
  for (int y = 0; y < h; ++y) {
    int sy = y - dy;
    if (sy < 0 || sy >= h) continue;
    for (int x = 0; x < w; ++x) {
      int sx = x - dx;
      if (sx < 0 || sx >= w) continue;
      for (int k = 0; k < ch; ++k)
        out.data[(static_cast<std::size_t>(y) * w + x) * ch + k] =
            in.data[(static_cast<std::size_t>(sy) * w + sx) * ch + k];
    }
  }
  return out;
}

// Center zoom-in by factor s >= 1: bilinear for images, nearest for masks.
Tensor<float> zoom_in_image(const Tensor<float>& in, float s) {
  if (s == 1.0f) return in;
  const int h = in.shape[0], w = in.shape[1];
  const float cy = 0.5f * (h - 1), cx = 0.5f * (w - 1);
  Tensor<float> out({h, w});
  for (int y = 0; y < h; ++y) {
    float fy = cy + (y - cy) / s;
    int y0 = static_cast<int>(std::floor(fy));
    int y1 = std::min(y0 + 1, h - 1);
    float wy = fy - y0;
    for (int x = 0; x < w; ++x) {
      float fx = cx + (x - cx) / s;
      int x0 = static_cast<int>(std::floor(fx));
      int x1 = std::min(x0 + 1, w - 1);
      float wx = fx - x0;
      out.at2(y, x) = (1 - wy) * ((1 - wx) * in.at2(y0, x0) + wx * in.at2(y0, x1)) +
                      wy * ((1 - wx) * in.at2(y1, x0) + wx * in.at2(y1, x1));
    }
  }
  return out;
}

Tensor<std::uint8_t> zoom_in_mask(const Tensor<std::uint8_t>& in, float s) {
  if (s == 1.0f) return in;
  const int h = in.shape[0], w = in.shape[1], c = in.shape[2];
  const float cy = 0.5f * (h - 1), cx = 0.5f * (w - 1);
  Tensor<std::uint8_t> out({h, w, c});
  for (int y = 0; y < h; ++y) {
    int sy = std::clamp(static_cast<int>(std::lround(cy + (y - cy) / s)), 0, h - 1);
    for (int x = 0; x < w; ++x) {
      int sx = std::clamp(static_cast<int>(std::lround(cx + (x - cx) / s)), 0, w - 1);
      for (int k = 0; k < c; ++k) out.at3(y, x, k) = in.at3(sy, sx, k);
    }
  }
  return out;
}

}  // namespace

Tensor<float> color_distort_fixed(const Tensor<float>& image,
                                  const std::array<float, 3>& brightness,
                                  const std::array<float, 3>& jitter) {
  static constexpr std::array<float, 3> kLuma = {0.299f, 0.587f, 0.114f};
  Tensor<float> out(image.shape);
  for (std::size_t i = 0; i < image.numel(); ++i) {
    float v = image[i];
    float gray = 0.0f;
    for (int c = 0; c < 3; ++c) gray += kLuma[c] * ((v + brightness[c]) * jitter[c]);
    out[i] = std::clamp(gray, 0.0f, 1.0f);
  }
  return out;
}

Tensor<float> color_distort(const Tensor<float>& image, float max_brightness_delta,
                            float max_jitter, RngStream& rng) {
  std::array<float, 3> brightness{}, jitter{};
  for (int c = 0; c < 3; ++c)
    brightness[c] = static_cast<float>(rng.uniform(-max_brightness_delta, max_brightness_delta));
  for (int c = 0; c < 3; ++c)
    jitter[c] = static_cast<float>(rng.uniform(1.0 - max_jitter, 1.0 + max_jitter));
  if (brightness == std::array<float, 3>{0.f, 0.f, 0.f} &&
      jitter == std::array<float, 3>{1.f, 1.f, 1.f}) {
    return image;  // exact identity, draws already consumed
  }
  return color_distort_fixed(image, brightness, jitter);
}

SliceSample augment(const SliceSample& slice, const AugmConfig& cfg, RngStream& rng) {
  cfg.validate();
  require(slice.image.shape.size() == 2, "pairgen.slice", "image must be 2D");
  const int h = slice.image.shape[0], w = slice.image.shape[1];

  // Fixed draw schedule: the consumed stream is independent of config values
  // and of mask presence, so geometry commutes across label channels.
  const bool flip = rng.bernoulli(cfg.flip_prob);
  const int dx = static_cast<int>(
      std::lround(rng.uniform(-cfg.max_translate_frac, cfg.max_translate_frac) * w));
  const int dy = static_cast<int>(
      std::lround(rng.uniform(-cfg.max_translate_frac, cfg.max_translate_frac) * h));
  const float zoom = 1.0f + static_cast<float>(rng.uniform(0.0, cfg.max_zoom_in_frac));

  SliceSample out = slice;
  if (flip) {
    flip_horizontal(out.image);
    if (out.mask) flip_horizontal_mask(*out.mask);
  }
  if (dx != 0 || dy != 0) {
    out.image = shift_zero_pad(out.image, dy, dx);
    if (out.mask) *out.mask = shift_zero_pad(*out.mask, dy, dx);
  }
  if (zoom != 1.0f) {
    out.image = zoom_in_image(out.image, zoom);
    if (out.mask) *out.mask = zoom_in_mask(*out.mask, zoom);
  }
  out.image = color_distort(out.image, cfg.max_brightness_delta, cfg.max_jitter, rng);
  return out;
}

ContrastivePair pair_augm(const SliceSample& slice, const AugmConfig& cfg, RngStream& rng) {
  SliceSample bare = slice;
  bare.mask.reset();
  ContrastivePair pair{augment(bare, cfg, rng), augment(bare, cfg, rng)};
  return pair;
}

int sample_nearby_index(int b, const SliceSigma& sigma, int depth, RngStream& rng) {
  require(b >= 0 && b < depth, "pairgen.slice", "slice index out of range");
  double g = rng.normal(static_cast<double>(b), static_cast<double>(sigma.sigma_idx));
  auto j = static_cast<int>(std::lround(g));
  return std::clamp(j, 0, depth - 1);
}

ContrastivePair pair_slice(const phantom::Volume& volume, int b, const SliceSigma& sigma,
                           RngStream& rng) {
  int b2 = sample_nearby_index(b, sigma, volume.depth(), rng);
  return {extract_slice(volume, nullptr, b), extract_slice(volume, nullptr, b2)};
}

ContrastivePair pair_comb(const phantom::Volume& volume, int b, const SliceSigma& sigma,
                          const AugmConfig& cfg, RngStream& rng) {
  ContrastivePair pair = pair_slice(volume, b, sigma, rng);
  pair.first = augment(pair.first, cfg, rng);
  pair.second = augment(pair.second, cfg, rng);
  return pair;
}

}  // namespace segcl::pairgen
