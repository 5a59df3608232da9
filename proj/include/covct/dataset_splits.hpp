#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covct/volume_io.hpp"

namespace covct {

enum class SplitScheme { Challenge1, Challenge2 };

const char* split_scheme_to_string(SplitScheme s);
SplitScheme split_scheme_from_string(const std::string& s);

struct FoldEntry {
  std::string scan_id;
  Label label = Label::NonCovid;
  int fold = 0;
};

struct FoldAssignment {
  SplitScheme scheme = SplitScheme::Challenge2;
  uint64_t seed = 0;
  std::vector<FoldEntry> entries;  // input manifest order

  // Throws DataError when the id is not assigned.
  int fold_of(const std::string& scan_id) const;
};

inline constexpr int kFoldCount = 5;

// Training scans are shuffled by the seeded stream and dealt into folds 0-3
// stratified by label; the official validation set is fold 4 in its
// entirety. Every entry must be labeled and the two manifests disjoint.
FoldAssignment split_challenge1(const ScanManifest& train,
                                const ScanManifest& official_val, uint64_t seed);

// The merged labeled pool is dealt into five folds, stratified by label;
// per-fold totals and per-fold class counts each differ by at most one.
FoldAssignment split_challenge2(const ScanManifest& merged, uint64_t seed);

// Fold CSV (scan_id,label,fold) plus a <path>.meta.json sidecar recording
// scheme and seed.
void save_folds(const FoldAssignment& fa, const std::string& csv_path);
FoldAssignment load_folds(const std::string& csv_path);

}  // namespace covct
