#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "covct/volume.hpp"

namespace covct {

// Components smaller than this many filled pixels are discarded.
inline constexpr long long kMinComponentArea = 500;
// A component whose bbox covers at least this fraction of the slice width is
// treated as not lung (body outline, table, full-width artifacts).
inline constexpr double kFullWidthFraction = 0.95;
// A candidate pair is accepted only if the horizontal overlap of the two
// bboxes is under this fraction of the smaller bbox width.
inline constexpr double kMaxPairOverlapFraction = 0.20;

using BoundingBox2D = Box2D;

struct ComponentStat {
  long long area = 0;       // filled pixel count
  BoundingBox2D bbox;
  double centroid_x = 0.0;  // mean x of filled pixels
};

struct SliceDetection {
  int slice_index = 0;
  std::optional<ComponentStat> left;
  std::optional<ComponentStat> right;

  bool empty() const { return !left && !right; }
};

struct LungBoxes3D {
  std::optional<Box3D> left_union;
  std::optional<Box3D> right_union;
  int z_first = 0;  // first slice with any detection
  int z_last = 0;   // last slice with any detection
};

struct CropPlan {
  Box3D both;
  Box3D left;
  Box3D right;
};

// Threshold maximizing between-class variance over 256 uniform bins on
// [0,1]; ties resolve to the lower threshold. Foreground is everything
// strictly below the returned value (lungs are dark). Returns nullopt for a
// degenerate slice whose values occupy a single bin.
std::optional<double> otsu_threshold(SliceView slice);

// 8-connected components of a binary mask, in raster discovery order.
std::vector<ComponentStat> connected_components(const uint8_t* mask, int nx, int ny);

// Otsu -> below-threshold mask -> components -> area and width filters ->
// best qualifying pair (descending combined area), left/right by centroid.
// Falls back to the single largest survivor on its centroid side when no
// pair qualifies; empty when nothing survives.
SliceDetection detect_slice_lungs(SliceView slice, int slice_index);

// Per-side union of slice bboxes plus the slice range that produced them.
// nullopt when no slice detected anything (the segmentation-failure signal;
// callers fall back to the full volume).
std::optional<LungBoxes3D> aggregate_volume(const std::vector<SliceDetection>& detections);

// Crop ranges per the side rule: each single-lung crop runs from its side of
// the volume to the near edge of the opposite lung's union box. y/z ranges
// are shared with the both-lungs crop. With only one union present all three
// crops degrade to the both-lungs crop.
CropPlan plan_crops(const LungBoxes3D& boxes, int nx, int ny, int nz);

// Sub-volume copy; throws DataError when the range leaves the volume.
Volume apply_crop(const Volume& v, const Box3D& range);

struct SegmentationResult {
  CropPlan crops;
  std::optional<LungBoxes3D> boxes;
  int slices_detected = 0;
  bool fallback = false;  // no detections anywhere; crops cover the volume
};

SegmentationResult segment_scan(const Volume& v);

// Per-scan report JSON:
// {"scan_id", "crops": {"both": [x0,x1,y0,y1,z0,z1], "left": [...],
//  "right": [...]}, "slices_detected", "fallback"}
nlohmann::json segmentation_report(const std::string& scan_id,
                                   const SegmentationResult& r);
SegmentationResult parse_segmentation_report(const nlohmann::json& j);

}  // namespace covct
