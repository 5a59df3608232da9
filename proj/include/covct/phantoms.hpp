#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "covct/volume.hpp"
#include "covct/volume_io.hpp"

namespace covct {

inline constexpr float kBodyIntensity = 0.8f;
inline constexpr float kLungIntensity = 0.1f;
inline constexpr float kLesionIntensity = 0.6f;

struct Ellipsoid {
  double cx = 0, cy = 0, cz = 0;  // center, voxel units
  double rx = 1, ry = 1, rz = 1;  // radii, voxel units
};

struct PhantomSpec {
  uint64_t seed = 0;
  int nx = 0, ny = 0, nz = 0;
  Ellipsoid left_ellipsoid;
  Ellipsoid right_ellipsoid;
  int lesion_count = 0;
  Label label = Label::NonCovid;
  double noise_sigma = 0.0;

  // Throws DataError unless: both lung solids fit strictly inside the
  // volume, their horizontal extents overlap by less than 20% of the
  // smaller extent, label == COVID iff lesion_count >= 1, noise_sigma >= 0.
  void validate() const;
};

struct PhantomTruth {
  Box3D left_box;
  Box3D right_box;
  Label label = Label::NonCovid;
};

// Bright body (0.8) containing two dark lung solids (0.1); positives carry
// bright lesion blobs (0.6) strictly inside a lung. Gaussian noise with the
// given sigma is added and clamped to [0,1]. Fully determined by the spec.
//
// The lung solid is the given ellipsoid with its axial cross-section profile
// floored at 30% of the equatorial area, so every occupied slice stays above
// the 500 px^2 component filter and the truth boxes are recoverable from the
// slices. Truth boxes are the tight bounds of the voxels actually painted.
std::pair<Volume, PhantomTruth> generate_phantom(const PhantomSpec& spec);

// The spec used for scan `index` of a dataset drawn from `seed`.
PhantomSpec default_phantom_spec(uint64_t seed, uint64_t index, int nx, int ny,
                                 int nz, bool positive, double noise_sigma);

struct DatasetOptions {
  int nx = 128;
  int ny = 128;
  int nz = 128;
  double noise_sigma = 0.02;
  int workers = 1;
};

// Writes n RVOL phantoms plus manifest.csv and truth.csv into out_dir.
// round(n * positive_fraction) of them are positive; per-scan randomness is
// a pure function of (seed, index), so output is identical for any worker
// count. Returns the manifest.
ScanManifest generate_dataset(int n, uint64_t seed, double positive_fraction,
                              const std::string& out_dir,
                              const DatasetOptions& opts = {});

// Truth CSV: scan_id,label,lx0,lx1,ly0,ly1,lz0,lz1,rx0,rx1,ry0,ry1,rz0,rz1
void write_truth_csv(const std::vector<std::pair<std::string, PhantomTruth>>& rows,
                     const std::string& path);
std::vector<std::pair<std::string, PhantomTruth>> read_truth_csv(const std::string& path);

}  // namespace covct
