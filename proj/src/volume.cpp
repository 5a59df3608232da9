#include "covct/volume.hpp"

namespace covct {

Label label_from_string(const std::string& s) {
  if (s == "COVID") return Label::Covid;
  if (s == "NON_COVID") return Label::NonCovid;
  throw DataError("unknown label token '" + s + "' (expected COVID or NON_COVID)");
}

std::optional<Label> label_from_csv_field(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return label_from_string(s);
}

void Volume::validate() const {
  if (nx < 1 || ny < 1 || nz < 1) {
    throw DataError("volume '" + scan_id + "': dimensions must be >= 1");
  }
  if (voxels.size() != voxel_count()) {
    throw DataError("volume '" + scan_id + "': voxel count " +
                    std::to_string(voxels.size()) + " does not match dims " +
                    std::to_string(nx) + "x" + std::to_string(ny) + "x" +
                    std::to_string(nz));
  }
  for (size_t i = 0; i < voxels.size(); ++i) {
    const float v = voxels[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw DataError("volume '" + scan_id + "': voxel " + std::to_string(i) +
                      " out of range [0,1]");
    }
  }
}

}  // namespace covct
