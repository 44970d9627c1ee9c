#include "segcl/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "segcl/rng.hpp"

namespace segcl::phantom {

const char* to_string(DomainTag tag) { return tag == DomainTag::source ? "source" : "target"; }

DomainTag domain_from_string(const std::string& name) {
  if (name == "source") return DomainTag::source;
  if (name == "target") return DomainTag::target;
  throw Error("phantom.domain", "unknown domain tag: " + name);
}

void DomainProfile::validate() const {
  require(noise_sigma >= 0.0f, "phantom.profile", "noise_sigma must be >= 0");
  require(contrast_gamma > 0.0f, "phantom.profile", "contrast_gamma must be > 0");
  require(speckle_grain_px > 0.0f, "phantom.profile", "speckle_grain_px must be > 0");
  require(bias_field_amp >= 0.0f && bias_field_amp < 1.0f, "phantom.profile",
          "bias_field_amp must be in [0,1)");
  for (float s : spacing_um)
    require(s > 0.0f, "phantom.profile", "spacing_um components must be > 0");
}

void Volume::validate() const {
  require(voxels.shape.size() == 3, "phantom.volume", "voxels must be 3D (D,H,W)");
  require(depth() >= 2 && height() >= 16 && width() >= 16, "phantom.volume",
          "volume requires D >= 2, H >= 16, W >= 16");
  for (float s : spacing_um) require(s > 0.0f, "phantom.volume", "spacing_um must be > 0");
  for (float v : voxels.data)
    require(v >= 0.0f && v <= 1.0f, "phantom.volume", "intensities must lie in [0,1]");
}

void MaskVolume::validate(const Volume* paired) const {
  require(labels.shape.size() == 4, "phantom.mask", "labels must be 4D (D,H,W,C)");
  require(static_cast<int>(class_names.size()) == labels.shape[3], "phantom.mask",
          "class_names size must match channel count");
  for (std::uint8_t v : labels.data)
    require(v <= 1, "phantom.mask", "mask channels must be binary");
  if (paired) {
    require(labels.shape[0] == paired->depth() && labels.shape[1] == paired->height() &&
                labels.shape[2] == paired->width(),
            "phantom.mask", "mask shape must match paired volume");
  }
}

void GeometryParams::validate() const {
  require(depth >= 2 && height >= 16 && width >= 16, "phantom.geometry",
          "geometry requires D >= 2, H >= 16, W >= 16");
  require(num_boundaries >= 2 && num_boundaries <= 16, "phantom.geometry",
          "num_boundaries must be in [2,16]");
  require(max_lesions_per_class >= 1, "phantom.geometry", "max_lesions_per_class must be >= 1");
  require(min_radius_frac > 0.0f && max_radius_frac >= min_radius_frac &&
              max_radius_frac <= 0.4f,
          "phantom.geometry", "lesion radius fractions out of range");
  require(boundary_amp_frac >= 0.0f && boundary_amp_frac < 0.2f, "phantom.geometry",
          "boundary_amp_frac out of range");
  require(lesion_warp >= 0.0f && lesion_warp < 1.0f, "phantom.geometry",
          "lesion_warp out of range");
}

namespace {

struct Wave {
  float amp, freq, phase;
  float eval(float t) const { return amp * std::sin(2.0f * float(M_PI) * (freq * t + phase)); }
};

struct Boundary {
  float base;           // fraction of H
  Wave lateral_a, lateral_b;  // along x
  Wave axial;                 // along slice index d
  float row(int d, int x, int depth, int width, int height) const {
    float fx = static_cast<float>(x) / static_cast<float>(width);
    float fd = static_cast<float>(d) / static_cast<float>(std::max(depth - 1, 1));
    return (base + lateral_a.eval(fx) + lateral_b.eval(fx) + axial.eval(fd)) *
           static_cast<float>(height);
  }
};

struct Blob {
  float cz, cy, cx;
  float rz, ry, rx;
  Wave wz, wy, wx;  // boundary warp
  float level;      // lesion intensity

  // Normalized squared distance with a low-frequency warp; lesion iff < 1.
  float field(float z, float y, float x, float warp) const {
    float dz = (z - cz) / rz, dy = (y - cy) / ry, dx = (x - cx) / rx;
    float base = dz * dz + dy * dy + dx * dx;
    float w = wz.eval(z / (2.0f * rz)) + wy.eval(y / (2.0f * ry)) + wx.eval(x / (2.0f * rx));
    return base + warp * w;
  }
};

inline float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// Separable Gaussian blur of a (H,W) slice, truncated at 3 sigma, edge clamp.
void blur_slice(std::vector<float>& img, int h, int w, float sigma, std::vector<float>& scratch) {
  int radius = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  float sum = 0.0f;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5f * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (float& k : kernel) k /= sum;
  scratch.assign(img.size(), 0.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        int xx = std::clamp(x + i, 0, w - 1);
        acc += kernel[i + radius] * img[y * w + xx];
      }
      scratch[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        int yy = std::clamp(y + i, 0, h - 1);
        acc += kernel[i + radius] * scratch[yy * w + x];
      }
      img[y * w + x] = acc;
    }
}

}  // namespace

std::pair<Volume, MaskVolume> generate_phantom(std::uint64_t seed, const GeometryParams& geometry,
                                               const DomainProfile& profile, int num_classes,
                                               DomainTag domain, std::string volume_id) {
  geometry.validate();
  profile.validate();
  require(num_classes >= 1, "phantom.geometry", "num_classes must be >= 1");

  const int D = geometry.depth, H = geometry.height, W = geometry.width, C = num_classes;

  // Geometry stream: shared across profiles so masks match bit-for-bit.
  RngStream geo = RngStream::derive(seed, "phantom.geometry");

  std::vector<Boundary> boundaries(geometry.num_boundaries);
  const float top = 0.18f, bottom = 0.85f;
  for (int k = 0; k < geometry.num_boundaries; ++k) {
    Boundary& b = boundaries[k];
    float frac = top + (bottom - top) * (k + 0.5f) / geometry.num_boundaries;
    b.base = frac + 0.25f * (bottom - top) / geometry.num_boundaries *
                        static_cast<float>(geo.uniform(-1.0, 1.0));
    float amp = geometry.boundary_amp_frac;
    b.lateral_a = {amp * static_cast<float>(geo.uniform(0.4, 1.0)),
                   static_cast<float>(geo.uniform_int(1, 3)), static_cast<float>(geo.uniform())};
    b.lateral_b = {0.4f * amp * static_cast<float>(geo.uniform(0.3, 1.0)),
                   static_cast<float>(geo.uniform_int(3, 6)), static_cast<float>(geo.uniform())};
    b.axial = {0.5f * amp * static_cast<float>(geo.uniform(0.3, 1.0)),
               static_cast<float>(geo.uniform_int(1, 3)), static_cast<float>(geo.uniform())};
  }
  std::sort(boundaries.begin(), boundaries.end(),
            [](const Boundary& a, const Boundary& b) { return a.base < b.base; });

  // Band intensities: dark above the tissue, alternating bright/mid bands,
  // dim backing. Adjacent bands keep a visible contrast step.
  std::vector<float> band(geometry.num_boundaries + 1);
  band[0] = static_cast<float>(geo.uniform(0.04, 0.10));
  for (int k = 1; k < geometry.num_boundaries; ++k)
    band[k] = (k % 2 == 1) ? static_cast<float>(geo.uniform(0.62, 0.85))
                           : static_cast<float>(geo.uniform(0.30, 0.45));
  band[geometry.num_boundaries] = static_cast<float>(geo.uniform(0.12, 0.22));

  // Lesions: per class a band of preferred rows plus a class-flavored shape,
  // so classes stay distinguishable by position and extent, not intensity.
  std::vector<std::vector<Blob>> lesions(C);
  const float rmin = geometry.min_radius_frac * std::min(H, W);
  const float rmax = geometry.max_radius_frac * std::min(H, W);
  for (int c = 0; c < C; ++c) {
    int count = static_cast<int>(geo.uniform_int(0, geometry.max_lesions_per_class + 1));
    for (int n = 0; n < count; ++n) {
      Blob blob;
      float band_center = (0.30f + 0.45f * (C > 1 ? static_cast<float>(c) / (C - 1) : 0.5f)) * H;
      blob.cz = static_cast<float>(geo.uniform(0.12, 0.88)) * D;
      blob.cy = std::clamp(static_cast<float>(geo.normal(band_center, 0.07 * H)), 0.18f * H,
                           0.85f * H);
      blob.cx = static_cast<float>(geo.uniform(0.15, 0.85)) * W;
      float stretch = (c % 2 == 0) ? 1.35f : 0.75f;  // wide vs tall classes
      blob.rz = static_cast<float>(geo.uniform(0.18, 0.40)) * D;
      blob.ry = std::clamp(static_cast<float>(geo.uniform(rmin, rmax)) / stretch, 1.5f, 0.4f * H);
      blob.rx = std::clamp(static_cast<float>(geo.uniform(rmin, rmax)) * stretch, 1.5f, 0.4f * W);
      blob.level = 0.04f + 0.05f * static_cast<float>(c % 4);
      auto warp_wave = [&geo]() {
        return Wave{static_cast<float>(geo.uniform(0.3, 1.0)),
                    static_cast<float>(geo.uniform(1.0, 3.0)), static_cast<float>(geo.uniform())};
      };
      blob.wz = warp_wave();
      blob.wy = warp_wave();
      blob.wx = warp_wave();
      lesions[c].push_back(blob);
    }
  }

  Volume volume;
  volume.voxels = Tensor<float>({D, H, W});
  volume.spacing_um = profile.spacing_um;
  volume.domain = domain;
  volume.volume_id = std::move(volume_id);

  MaskVolume mask;
  mask.labels = Tensor<std::uint8_t>({D, H, W, C});
  mask.class_names.reserve(C);
  for (int c = 0; c < C; ++c) mask.class_names.push_back("lesion_" + std::to_string(c));

  // Base anatomy render + exact lesion masks.
  const float edge = 1.2f;  // sigmoid softness of layer boundaries, px
  for (int d = 0; d < D; ++d) {
    for (int x = 0; x < W; ++x) {
      // Boundary rows vary only with (d, x): hoist out of the y loop.
      float rows[16];
      for (int k = 0; k < geometry.num_boundaries; ++k)
        rows[k] = boundaries[k].row(d, x, D, W, H);
      for (int y = 0; y < H; ++y) {
        float v = band[0];
        for (int k = 0; k < geometry.num_boundaries; ++k)
          v += (band[k + 1] - band[k]) * sigmoidf((y - rows[k]) / edge);
        for (int c = 0; c < C; ++c) {
          for (const Blob& blob : lesions[c]) {
            float f = blob.field(static_cast<float>(d), static_cast<float>(y),
                                 static_cast<float>(x), geometry.lesion_warp);
            if (f < 1.0f) {
              mask.labels.data[((static_cast<std::size_t>(d) * H + y) * W + x) * C + c] = 1;
              float t = std::clamp((1.0f - f) / 0.35f, 0.0f, 1.0f);
              v = v + t * (blob.level - v);
            }
          }
        }
        volume.voxels.at3(d, y, x) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }

  // Appearance stream: derived from the seed only, so both profiles consume
  // the same underlying fields and differ only through the profile knobs.
  RngStream app = RngStream::derive(seed, "phantom.appearance");

  // Gamma contrast.
  if (profile.contrast_gamma != 1.0f) {
    for (float& v : volume.voxels.data) v = std::pow(v, profile.contrast_gamma);
  }

  // Multiplicative speckle: per-slice smoothed white noise at the grain scale.
  {
    std::vector<float> noise(static_cast<std::size_t>(H) * W);
    std::vector<float> scratch;
    for (int d = 0; d < D; ++d) {
      for (float& n : noise) n = static_cast<float>(app.normal());
      blur_slice(noise, H, W, profile.speckle_grain_px, scratch);
      double sq = 0.0;
      for (float n : noise) sq += double(n) * n;
      float inv_std = static_cast<float>(1.0 / std::sqrt(std::max(sq / noise.size(), 1e-12)));
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          float factor = 1.0f + 0.25f * noise[y * W + x] * inv_std;
          volume.voxels.at3(d, y, x) *= std::max(factor, 0.0f);
        }
    }
  }

  // Smooth multiplicative bias field.
  if (profile.bias_field_amp > 0.0f) {
    float fx = static_cast<float>(app.uniform(0.5, 1.0)), px = static_cast<float>(app.uniform());
    float fy = static_cast<float>(app.uniform(0.5, 1.0)), py = static_cast<float>(app.uniform());
    float fd = static_cast<float>(app.uniform(0.3, 0.8)), pd = static_cast<float>(app.uniform());
    for (int d = 0; d < D; ++d) {
      float bd = std::cos(2.0f * float(M_PI) * (fd * d / std::max(D - 1, 1) + pd));
      for (int y = 0; y < H; ++y) {
        float by = std::cos(2.0f * float(M_PI) * (fy * y / (H - 1) + py));
        for (int x = 0; x < W; ++x) {
          float bx = std::cos(2.0f * float(M_PI) * (fx * x / (W - 1) + px));
          float b = 1.0f + profile.bias_field_amp * bx * by * (0.5f + 0.5f * bd);
          volume.voxels.at3(d, y, x) *= b;
        }
      }
    }
  } else {
    // Keep the appearance stream aligned across profiles.
    for (int i = 0; i < 6; ++i) app.uniform();
  }

  // Additive Gaussian noise, then clamp to the valid range.
  for (float& v : volume.voxels.data) {
    v += profile.noise_sigma * static_cast<float>(app.normal());
    v = std::clamp(v, 0.0f, 1.0f);
  }

  return {std::move(volume), std::move(mask)};
}

Tensor<float> resample_slice(const Tensor<float>& slice, std::array<float, 2> in_spacing_um,
                             std::array<int, 2> out_size, std::array<float, 2> out_spacing_um) {
  require(slice.shape.size() == 2 && slice.shape[0] >= 1 && slice.shape[1] >= 1,
          "phantom.resample", "slice must be 2D and non-empty");
  for (float s : in_spacing_um)
    require(s > 0.0f, "phantom.resample", "input spacing must be > 0");
  for (float s : out_spacing_um)
    require(s > 0.0f, "phantom.resample", "output spacing must be > 0");
  require(out_size[0] >= 1 && out_size[1] >= 1, "phantom.resample",
          "output size must be positive");

  const int in_h = slice.shape[0], in_w = slice.shape[1];
  Tensor<float> out({out_size[0], out_size[1]});
  for (int y = 0; y < out_size[0]; ++y) {
    // Pixel centers live at (i + 0.5) * spacing in physical coordinates.
    float fy = (y + 0.5f) * out_spacing_um[0] / in_spacing_um[0] - 0.5f;
    float cy = std::clamp(fy, 0.0f, static_cast<float>(in_h - 1));
    int y0 = static_cast<int>(std::floor(cy));
    int y1 = std::min(y0 + 1, in_h - 1);
    float wy = cy - y0;
    for (int x = 0; x < out_size[1]; ++x) {
      float fx = (x + 0.5f) * out_spacing_um[1] / in_spacing_um[1] - 0.5f;
      float cx = std::clamp(fx, 0.0f, static_cast<float>(in_w - 1));
      int x0 = static_cast<int>(std::floor(cx));
      int x1 = std::min(x0 + 1, in_w - 1);
      float wx = cx - x0;
      float v = (1 - wy) * ((1 - wx) * slice.at2(y0, x0) + wx * slice.at2(y0, x1)) +
                wy * ((1 - wx) * slice.at2(y1, x0) + wx * slice.at2(y1, x1));
      out.at2(y, x) = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

namespace {

std::vector<int> pick_slices(int depth, int count, RngStream& rng) {
  count = std::min(count, depth);
  std::vector<int> all(depth);
  std::iota(all.begin(), all.end(), 0);
  for (int i = depth - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform_int(0, i + 1));
    std::swap(all[i], all[j]);
  }
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

DatasetSplit stratify(const std::vector<VolumeInfo>& volumes, const StratifyConfig& config,
                      std::uint64_t seed) {
  require(config.slices_per_labeled_volume >= 1, "stratify.infeasible",
          "slices_per_labeled_volume must be >= 1");
  require(config.slices_per_test_volume >= 1, "stratify.infeasible",
          "slices_per_test_volume must be >= 1");

  std::vector<int> src_ids, tgt_ids;
  for (int i = 0; i < static_cast<int>(volumes.size()); ++i) {
    (volumes[i].domain == DomainTag::source ? src_ids : tgt_ids).push_back(i);
  }

  const int need_src = config.upper_bound
                           ? config.src_test
                           : config.src_labeled_train + config.src_labeled_val + config.src_test;
  const int need_tgt = config.upper_bound
                           ? config.tgt_labeled_train + config.tgt_labeled_val + config.tgt_test
                           : config.tgt_test;
  require(static_cast<int>(src_ids.size()) >= need_src, "stratify.infeasible",
          "source volumes: required " + std::to_string(need_src) + ", available " +
              std::to_string(src_ids.size()));
  require(static_cast<int>(tgt_ids.size()) >= need_tgt, "stratify.infeasible",
          "target volumes: required " + std::to_string(need_tgt) + ", available " +
              std::to_string(tgt_ids.size()));

  RngStream rng = RngStream::derive(seed, "stratify");
  auto shuffle = [&rng](std::vector<int>& ids) {
    for (int i = static_cast<int>(ids.size()) - 1; i > 0; --i) {
      int j = static_cast<int>(rng.uniform_int(0, i + 1));
      std::swap(ids[i], ids[j]);
    }
  };
  shuffle(src_ids);
  shuffle(tgt_ids);

  auto take = [](std::vector<int>& ids, int count) {
    std::vector<int> out(ids.begin(), ids.begin() + count);
    ids.erase(ids.begin(), ids.begin() + count);
    return out;
  };

  // Test volumes and test slices are drawn first so they are identical for
  // the default and upper-bound variants of the same seed: every regime is
  // evaluated on the same held-out slices.
  DatasetSplit split;
  std::vector<int> src_pool = src_ids, tgt_pool = tgt_ids;
  std::vector<int> test_s = take(src_pool, config.src_test);
  std::vector<int> test_t = take(tgt_pool, config.tgt_test);
  for (int v : test_s)
    for (int s : pick_slices(volumes[v].depth, config.slices_per_test_volume, rng))
      split.test_source.push_back({v, s});
  for (int v : test_t)
    for (int s : pick_slices(volumes[v].depth, config.slices_per_test_volume, rng))
      split.test_target.push_back({v, s});

  std::vector<int> labeled_train_vols, labeled_val_vols;
  if (config.upper_bound) {
    labeled_train_vols = take(tgt_pool, config.tgt_labeled_train);
    labeled_val_vols = take(tgt_pool, config.tgt_labeled_val);
  } else {
    labeled_train_vols = take(src_pool, config.src_labeled_train);
    labeled_val_vols = take(src_pool, config.src_labeled_val);
  }

  for (int v : src_ids)
    if (std::find(test_s.begin(), test_s.end(), v) == test_s.end())
      split.unlabeled_source.push_back(v);
  for (int v : tgt_ids)
    if (std::find(test_t.begin(), test_t.end(), v) == test_t.end())
      split.unlabeled_target.push_back(v);

  for (int v : labeled_train_vols)
    for (int s : pick_slices(volumes[v].depth, config.slices_per_labeled_volume, rng))
      split.labeled_train.push_back({v, s});
  for (int v : labeled_val_vols)
    for (int s : pick_slices(volumes[v].depth, config.slices_per_labeled_volume, rng))
      split.labeled_val.push_back({v, s});

  std::sort(split.unlabeled_source.begin(), split.unlabeled_source.end());
  std::sort(split.unlabeled_target.begin(), split.unlabeled_target.end());
  return split;
}

}  // namespace segcl::phantom
