#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covct/volume.hpp"

namespace covct {

struct TargetSize {
  int nx = 0;
  int ny = 0;
  int nz = 0;
};

// Fixed interpolation targets: both lungs together, and a single lung.
inline constexpr TargetSize kTargetBothLungs{256, 256, 176};
inline constexpr TargetSize kTargetSingleLung{320, 160, 224};

// "both" or "single"; throws DataError otherwise.
TargetSize target_size_from_name(const std::string& name);

// Trilinear resampling with half-voxel center alignment: source coordinate
// s = (d + 0.5) * (src_extent / dst_extent) - 0.5, clamped to
// [0, src_extent - 1]. Matching dims reproduce the input; constants are
// preserved exactly.
Volume resample_trilinear(const Volume& v, const TargetSize& t);

// Mirror through the sagittal plane: x -> nx-1-x. Bit-exact involution.
Volume reflect_sagittal(const Volume& v);

struct JitterParams {
  double contrast = 1.0;    // in [0.8, 1.25]
  double brightness = 0.0;  // in [-0.1, 0.1]
};

// Contrast first, then brightness, from the seeded stream.
JitterParams draw_jitter_params(uint64_t seed);

// out = clamp((in - 0.5) * contrast + 0.5 + brightness, 0, 1), evaluated as
// in * contrast + (0.5 * (1 - contrast) + brightness) so neutral parameters
// reproduce the input exactly.
Volume apply_jitter(const Volume& v, const JitterParams& p);

Volume jitter_brightness_contrast(const Volume& v, uint64_t seed);

// The two training views of each scan: [v, reflect_sagittal(v)].
std::vector<Volume> expand_training_views(const Volume& v);

}  // namespace covct
