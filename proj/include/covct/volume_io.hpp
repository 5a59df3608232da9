#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "covct/volume.hpp"

namespace covct {

struct ManifestEntry {
  std::string scan_id;
  std::string path;
  std::optional<Label> label;
  // Set when the label came from a pseudo-label rather than an annotation.
  // In-memory only; the manifest CSV schema stays scan_id,path,label.
  bool pseudo_labeled = false;
};

struct ScanManifest {
  std::vector<ManifestEntry> entries;

  const ManifestEntry* find(const std::string& scan_id) const;
  // Throws DataError on a duplicate scan_id.
  void check_unique_ids() const;
};

// Directory of 8-bit grayscale slice images (.png or .pgm). Slices are
// ordered by the first run of decimal digits in each filename, so stacks
// named 0.png .. 12.png come out in numeric order regardless of how the
// filesystem enumerates them. Intensity v maps to v/255.
// The volume's scan_id is the directory basename.
Volume load_slice_stack(const std::string& dir_path);

// RVOL container: <base>.json sidecar + <base>.raw payload of
// nx*ny*nz little-endian float32 in slice-major (z,y,x) order.
// `path` may be the base or either of the two file names.
void write_volume(const Volume& v, const std::string& path);
Volume read_volume(const std::string& path);

// Manifest CSV, header exactly: scan_id,path,label
ScanManifest load_manifest(const std::string& path);
void save_manifest(const ScanManifest& m, const std::string& path);

// 8-bit grayscale image helpers (used by tests and slice exports).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // row-major
};

GrayImage read_gray_image(const std::string& path);
void write_gray_png(const GrayImage& img, const std::string& path);
void write_gray_pgm(const GrayImage& img, const std::string& path);

}  // namespace covct
