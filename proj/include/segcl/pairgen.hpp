#pragma once

#include <array>
#include <optional>
#include <string>

#include "segcl/phantom.hpp"
#include "segcl/rng.hpp"
#include "segcl/tensor.hpp"

namespace segcl::pairgen {

struct AugmConfig {
  float flip_prob = 0.5f;
  float max_translate_frac = 0.25f;
  float max_zoom_in_frac = 0.5f;
  float max_brightness_delta = 0.6f;
  float max_jitter = 0.2f;

  void validate() const;
  static AugmConfig identity() { return {0.f, 0.f, 0.f, 0.f, 0.f}; }
};

/// One 2D slice, optionally with its per-class ground-truth mask (H,W,C).
struct SliceSample {
  Tensor<float> image;  // (H,W) in [0,1]
  std::optional<Tensor<std::uint8_t>> mask;
  std::string volume_id;
  int slice_index = 0;
  phantom::DomainTag domain = phantom::DomainTag::source;
};

struct ContrastivePair {
  SliceSample first;   // x'
  SliceSample second;  // x''
};

/// Nearby-slice sampling width: a physical distance converted to slice
/// index units through the inter-slice spacing.
struct SliceSigma {
  float sigma_um = 250.0f;
  float sigma_idx = 1.0f;

  static SliceSigma from_um(float sigma_um, float inter_slice_spacing_um);
  static SliceSigma from_index(float sigma_idx);
};

SliceSample extract_slice(const phantom::Volume& volume, const phantom::MaskVolume* mask, int b);

/// Stochastic augmentation, applied in order: horizontal flip, integer
/// translation (zero padding), center zoom-in (crop and resize), color
/// distortion. Geometric transforms are mirrored on the mask with
/// nearest-neighbor sampling; color ops skip it. Output clamped to [0,1].
SliceSample augment(const SliceSample& slice, const AugmConfig& cfg, RngStream& rng);

/// Grayscale color distortion through an RGB round trip: replicate to three
/// channels, shift and scale each independently, recombine with luminance
/// weights (0.299, 0.587, 0.114).
Tensor<float> color_distort(const Tensor<float>& image, float max_brightness_delta,
                            float max_jitter, RngStream& rng);

/// Deterministic core of color_distort with explicit per-channel parameters.
Tensor<float> color_distort_fixed(const Tensor<float>& image,
                                  const std::array<float, 3>& brightness,
                                  const std::array<float, 3>& jitter);

/// Two independent augmented views of the same slice; masks are dropped
/// (the contrastive path is label-free).
ContrastivePair pair_augm(const SliceSample& slice, const AugmConfig& cfg, RngStream& rng);

/// Gaussian draw around b, rounded to the nearest slice and clamped to the
/// valid range [0, depth-1].
int sample_nearby_index(int b, const SliceSigma& sigma, int depth, RngStream& rng);

/// x' = slice b unmodified, x'' = a nearby slice of the same volume.
ContrastivePair pair_slice(const phantom::Volume& volume, int b, const SliceSigma& sigma,
                           RngStream& rng);

/// pair_slice first, then independent augmentations on both members.
ContrastivePair pair_comb(const phantom::Volume& volume, int b, const SliceSigma& sigma,
                          const AugmConfig& cfg, RngStream& rng);

}  // namespace segcl::pairgen
