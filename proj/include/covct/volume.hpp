#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "covct/common.hpp"

namespace covct {

// Read-only view of one axial slice (contiguous row-major nx*ny floats).
struct SliceView {
  const float* data = nullptr;
  int nx = 0;
  int ny = 0;

  float at(int x, int y) const { return data[static_cast<size_t>(y) * nx + x]; }
  size_t size() const { return static_cast<size_t>(nx) * ny; }
};

// A CT-like scalar volume, intensities normalized to [0,1].
// Layout is slice-major: index = (z * ny + y) * nx + x.
struct Volume {
  std::string scan_id;
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::vector<float> voxels;

  size_t index(int x, int y, int z) const {
    return (static_cast<size_t>(z) * ny + y) * nx + x;
  }
  float at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
  float& at(int x, int y, int z) { return voxels[index(x, y, z)]; }

  SliceView slice(int z) const {
    return {voxels.data() + static_cast<size_t>(z) * ny * nx, nx, ny};
  }

  size_t voxel_count() const {
    return static_cast<size_t>(nx) * ny * static_cast<size_t>(nz);
  }

  // Throws DataError when dims are non-positive, the voxel count does not
  // match, or any value falls outside [0,1].
  void validate() const;
};

}  // namespace covct
