#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

#include "covct/rng.hpp"
#include "covct/volume.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("covct_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }

  std::string str(const std::string& rel = "") const {
    return rel.empty() ? path.string() : (path / rel).string();
  }
};

inline covct::Volume random_volume(uint64_t seed, int nx, int ny, int nz,
                                   bool quantized_8bit = false) {
  covct::Rng rng(seed);
  covct::Volume v;
  v.scan_id = "rand_" + std::to_string(seed);
  v.nx = nx;
  v.ny = ny;
  v.nz = nz;
  v.voxels.resize(v.voxel_count());
  for (auto& f : v.voxels) {
    if (quantized_8bit) {
      f = static_cast<float>(rng.below(256)) / 255.0f;
    } else {
      f = static_cast<float>(rng.uniform());
    }
  }
  return v;
}

inline covct::Volume constant_volume(float value, int nx, int ny, int nz) {
  covct::Volume v;
  v.scan_id = "const";
  v.nx = nx;
  v.ny = ny;
  v.nz = nz;
  v.voxels.assign(static_cast<size_t>(nx) * ny * nz, value);
  return v;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace testutil
