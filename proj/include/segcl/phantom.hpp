#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "segcl/tensor.hpp"

namespace segcl::phantom {

enum class DomainTag { source, target };

const char* to_string(DomainTag tag);
DomainTag domain_from_string(const std::string& name);

/// Appearance knobs of one synthetic acquisition device. Geometry never
/// depends on these, so one seed renders the same anatomy under any profile.
struct DomainProfile {
  float noise_sigma = 0.02f;      // additive Gaussian noise
  float contrast_gamma = 1.0f;    // intensity gamma
  float speckle_grain_px = 1.5f;  // correlation length of multiplicative speckle
  float bias_field_amp = 0.05f;   // low-frequency multiplicative shading, [0,1)
  std::array<float, 3> spacing_um{111.0f, 4.0f, 10.0f};  // (inter-slice, row, column)

  void validate() const;
};

/// 3D grayscale scan, intensities in [0,1], shape (D,H,W).
struct Volume {
  Tensor<float> voxels;
  std::array<float, 3> spacing_um{111.0f, 4.0f, 10.0f};
  DomainTag domain = DomainTag::source;
  std::string volume_id;

  int depth() const { return voxels.shape.empty() ? 0 : voxels.shape[0]; }
  int height() const { return voxels.shape.size() < 2 ? 0 : voxels.shape[1]; }
  int width() const { return voxels.shape.size() < 3 ? 0 : voxels.shape[2]; }
  void validate() const;
};

/// Per-voxel class sets as C binary channels, shape (D,H,W,C).
struct MaskVolume {
  Tensor<std::uint8_t> labels;
  std::vector<std::string> class_names;

  int num_classes() const { return labels.shape.size() < 4 ? 0 : labels.shape[3]; }
  void validate(const Volume* paired = nullptr) const;
};

struct GeometryParams {
  int depth = 32;
  int height = 64;
  int width = 64;
  int num_boundaries = 5;           // tissue layer boundaries (num_boundaries+1 bands)
  int max_lesions_per_class = 3;    // per-class blob count drawn uniformly in {0..max}
  float min_radius_frac = 0.07f;    // lesion in-plane radii, fraction of min(H,W)
  float max_radius_frac = 0.16f;
  float boundary_amp_frac = 0.05f;  // boundary waviness, fraction of H
  float lesion_warp = 0.25f;        // blob boundary warp strength

  void validate() const;
};

/// Renders one synthetic two-phase volume: smooth stacked tissue layers with
/// per-class dark blob lesions, then the profile's appearance transform
/// (gamma, speckle, bias field, noise). Deterministic in (seed, geometry,
/// profile); the mask depends on (seed, geometry) only.
std::pair<Volume, MaskVolume> generate_phantom(std::uint64_t seed, const GeometryParams& geometry,
                                               const DomainProfile& profile, int num_classes,
                                               DomainTag domain, std::string volume_id);

/// Bilinear resampling between pixel grids with physical spacing; output
/// intensities clamped to [0,1]. Slice shape (H,W); spacings (row, column).
Tensor<float> resample_slice(const Tensor<float>& slice, std::array<float, 2> in_spacing_um,
                             std::array<int, 2> out_size, std::array<float, 2> out_spacing_um);

/// Lightweight volume descriptor used by stratification.
struct VolumeInfo {
  std::string volume_id;
  DomainTag domain = DomainTag::source;
  int depth = 0;
};

struct SliceRef {
  int volume = 0;  // index into the VolumeInfo list
  int slice = 0;
};

struct DatasetSplit {
  std::vector<SliceRef> labeled_train;
  std::vector<SliceRef> labeled_val;
  std::vector<int> unlabeled_source;  // volume indexes, all non-test source volumes
  std::vector<int> unlabeled_target;
  std::vector<SliceRef> test_source;
  std::vector<SliceRef> test_target;
};

struct StratifyConfig {
  int src_labeled_train = 10;
  int src_labeled_val = 2;
  int src_test = 4;
  int tgt_test = 6;
  int tgt_labeled_train = 8;  // consumed only by the upper-bound split
  int tgt_labeled_val = 2;
  int slices_per_labeled_volume = 4;
  int slices_per_test_volume = 4;
  bool upper_bound = false;  // draw labeled train/val from the target domain
};

/// Volume-level disjoint split of {train+val} vs test per domain. Labeled
/// slices are subsampled per volume (sparse annotation); target labels stay
/// out of train/val unless upper_bound is requested.
DatasetSplit stratify(const std::vector<VolumeInfo>& volumes, const StratifyConfig& config,
                      std::uint64_t seed);

/// One-line JSON header (magic SEGCLVOL1) + '\n' + raw f32le voxels (D,H,W)
/// + raw u8 mask (D,H,W,C) when present. Round-trip is bit-exact.
void save_volume(const std::string& path, const Volume& volume,
                 const MaskVolume* mask = nullptr);
std::pair<Volume, std::optional<MaskVolume>> load_volume(const std::string& path);

}  // namespace segcl::phantom
