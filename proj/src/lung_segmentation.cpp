#include "covct/lung_segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>

using nlohmann::json;

namespace covct {

namespace {

constexpr int kBins = 256;

int bin_of(float v) {
  const int k = static_cast<int>(static_cast<double>(v) * kBins);
  return std::clamp(k, 0, kBins - 1);
}

// Comparison of the between-class variance objective. With class pixel
// counts c0,c1 and intensity-bin index sums s0,s1 the objective is
// proportional to (s0*c1 - s1*c0)^2 / (c0*c1). Cross-multiplying in 128-bit
// integers keeps the argmax free of floating-point tie ambiguity; the
// products stay inside __int128 for slices up to ~600x600 pixels, beyond
// which a double comparison takes over.
constexpr long long kExactOtsuPixelLimit = 360000;

struct OtsuScore {
  __int128 num = 0;  // (s0*c1 - s1*c0)^2
  __int128 den = 1;  // c0*c1
  double approx = 0.0;
  bool exact = true;

  bool better_than(const OtsuScore& o) const {
    if (exact && o.exact) return num * o.den > o.num * den;
    return approx > o.approx;
  }
};

OtsuScore score_split(long long c0, long long s0, long long c1, long long s1,
                      bool exact) {
  OtsuScore sc;
  sc.exact = exact;
  if (exact) {
    const __int128 d = static_cast<__int128>(s0) * c1 - static_cast<__int128>(s1) * c0;
    sc.num = d * d;
    sc.den = static_cast<__int128>(c0) * c1;
  } else {
    const double d = static_cast<double>(s0) * static_cast<double>(c1) -
                     static_cast<double>(s1) * static_cast<double>(c0);
    sc.approx = d * d / (static_cast<double>(c0) * static_cast<double>(c1));
  }
  return sc;
}

bool pair_overlap_ok(const BoundingBox2D& a, const BoundingBox2D& b) {
  const long long overlap =
      std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min) + 1;
  if (overlap <= 0) return true;
  const long long smaller = std::min(a.width(), b.width());
  // overlap/smaller < 0.20, kept in integers
  return overlap * 5 < smaller;
}

BoundingBox2D box_of(const ComponentStat& c) { return c.bbox; }

// Lexicographic box order used for deterministic tie-breaking.
std::array<int, 4> box_key(const BoundingBox2D& b) {
  return {b.x_min, b.y_min, b.x_max, b.y_max};
}

Box3D extend_z(const Box2D& b, int z_lo, int z_hi) {
  return {b.x_min, b.x_max, b.y_min, b.y_max, z_lo, z_hi};
}

json box_to_array(const Box3D& b) {
  return json::array({b.x0, b.x1, b.y0, b.y1, b.z0, b.z1});
}

Box3D box_from_array(const json& a) {
  if (!a.is_array() || a.size() != 6) {
    throw DataError("segmentation report crop must be a 6-element array");
  }
  return {a[0].get<int>(), a[1].get<int>(), a[2].get<int>(),
          a[3].get<int>(), a[4].get<int>(), a[5].get<int>()};
}

}  // namespace

std::optional<double> otsu_threshold(SliceView slice) {
  long long hist[kBins] = {0};
  const size_t n = slice.size();
  for (size_t i = 0; i < n; ++i) hist[bin_of(slice.data[i])]++;

  int occupied = 0;
  for (int k = 0; k < kBins; ++k) occupied += hist[k] > 0 ? 1 : 0;
  if (occupied < 2) return std::nullopt;  // degenerate slice, no two classes

  long long total_count = 0;
  long long total_sum = 0;
  for (int k = 0; k < kBins; ++k) {
    total_count += hist[k];
    total_sum += hist[k] * static_cast<long long>(k);
  }

  const bool exact = total_count <= kExactOtsuPixelLimit;
  int best_t = -1;
  OtsuScore best;
  long long c0 = 0;
  long long s0 = 0;
  for (int t = 0; t < kBins - 1; ++t) {
    c0 += hist[t];
    s0 += hist[t] * static_cast<long long>(t);
    const long long c1 = total_count - c0;
    if (c0 == 0 || c1 == 0) continue;
    const OtsuScore sc = score_split(c0, s0, c1, total_sum - s0, exact);
    if (best_t < 0 || sc.better_than(best)) {
      best = sc;
      best_t = t;
    }
  }
  // occupied >= 2 guarantees some split with both classes nonempty
  return (best_t + 1) / static_cast<double>(kBins);
}

namespace {

// Scratch buffers reused across slices of a scan; per-slice allocations of
// this size otherwise hit the allocator's mmap path and serialize threads.
struct SliceScratch {
  std::vector<uint8_t> mask;
  std::vector<uint8_t> visited;
  std::vector<int> stack;
};

std::vector<ComponentStat> connected_components_with(const uint8_t* mask, int nx,
                                                     int ny, SliceScratch& scratch) {
  std::vector<ComponentStat> out;
  scratch.visited.assign(static_cast<size_t>(nx) * ny, 0);
  std::vector<uint8_t>& visited = scratch.visited;
  std::vector<int>& stack = scratch.stack;

  for (int y0 = 0; y0 < ny; ++y0) {
    for (int x0 = 0; x0 < nx; ++x0) {
      const size_t start = static_cast<size_t>(y0) * nx + x0;
      if (!mask[start] || visited[start]) continue;

      ComponentStat c;
      c.bbox = {x0, x0, y0, y0};
      long long sum_x = 0;
      visited[start] = 1;
      stack.clear();
      stack.push_back(static_cast<int>(start));

      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int x = idx % nx;
        const int y = idx / nx;
        c.area++;
        sum_x += x;
        c.bbox.x_min = std::min(c.bbox.x_min, x);
        c.bbox.x_max = std::max(c.bbox.x_max, x);
        c.bbox.y_min = std::min(c.bbox.y_min, y);
        c.bbox.y_max = std::max(c.bbox.y_max, y);

        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= ny) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= nx) continue;
            const size_t nidx = static_cast<size_t>(yy) * nx + xx;
            if (mask[nidx] && !visited[nidx]) {
              visited[nidx] = 1;
              stack.push_back(static_cast<int>(nidx));
            }
          }
        }
      }
      c.centroid_x = static_cast<double>(sum_x) / static_cast<double>(c.area);
      out.push_back(c);
    }
  }
  return out;
}

SliceDetection detect_slice_lungs_with(SliceView slice, int slice_index,
                                       SliceScratch& scratch) {
  SliceDetection det;
  det.slice_index = slice_index;

  const auto threshold = otsu_threshold(slice);
  if (!threshold) return det;

  scratch.mask.resize(slice.size());
  std::vector<uint8_t>& mask = scratch.mask;
  const float t = static_cast<float>(*threshold);
  for (size_t i = 0; i < slice.size(); ++i) {
    mask[i] = slice.data[i] < t ? 1 : 0;
  }

  std::vector<ComponentStat> survivors;
  for (const auto& c :
       connected_components_with(mask.data(), slice.nx, slice.ny, scratch)) {
    if (c.area < kMinComponentArea) continue;
    // bbox width >= 95% of slice width, exact in integers: 20*w >= 19*nx
    if (20LL * c.bbox.width() >= 19LL * slice.nx) continue;
    survivors.push_back(c);
  }
  if (survivors.empty()) return det;

  // Deterministic base order: area descending, then box coordinates.
  std::sort(survivors.begin(), survivors.end(),
            [](const ComponentStat& a, const ComponentStat& b) {
              if (a.area != b.area) return a.area > b.area;
              return box_key(a.bbox) < box_key(b.bbox);
            });

  // All pairs, scanned in descending combined area; ties broken by the
  // leftmost box's x_min, then lexicographic box coordinates.
  struct Pair {
    size_t first;   // smaller centroid_x of the two
    size_t second;
    long long combined_area;
  };
  std::vector<Pair> pairs;
  for (size_t i = 0; i < survivors.size(); ++i) {
    for (size_t j = i + 1; j < survivors.size(); ++j) {
      size_t a = i;
      size_t b = j;
      const auto& ca = survivors[a];
      const auto& cb = survivors[b];
      const bool swap =
          cb.centroid_x < ca.centroid_x ||
          (cb.centroid_x == ca.centroid_x && box_key(cb.bbox) < box_key(ca.bbox));
      if (swap) std::swap(a, b);
      pairs.push_back({a, b, ca.area + cb.area});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [&](const Pair& p, const Pair& q) {
    if (p.combined_area != q.combined_area) return p.combined_area > q.combined_area;
    const auto pk = std::make_pair(box_key(box_of(survivors[p.first])),
                                   box_key(box_of(survivors[p.second])));
    const auto qk = std::make_pair(box_key(box_of(survivors[q.first])),
                                   box_key(box_of(survivors[q.second])));
    return pk < qk;
  });

  for (const auto& p : pairs) {
    if (pair_overlap_ok(survivors[p.first].bbox, survivors[p.second].bbox)) {
      det.left = survivors[p.first];
      det.right = survivors[p.second];
      return det;
    }
  }

  // No qualifying pair: report the largest survivor on its centroid side.
  const ComponentStat& best = survivors.front();
  if (best.centroid_x * 2.0 < static_cast<double>(slice.nx - 1)) {
    det.left = best;
  } else {
    det.right = best;
  }
  return det;
}

}  // namespace

std::vector<ComponentStat> connected_components(const uint8_t* mask, int nx, int ny) {
  SliceScratch scratch;
  return connected_components_with(mask, nx, ny, scratch);
}

SliceDetection detect_slice_lungs(SliceView slice, int slice_index) {
  SliceScratch scratch;
  return detect_slice_lungs_with(slice, slice_index, scratch);
}

std::optional<LungBoxes3D> aggregate_volume(const std::vector<SliceDetection>& detections) {
  std::vector<const SliceDetection*> ordered;
  ordered.reserve(detections.size());
  for (const auto& d : detections) {
    if (!d.empty()) ordered.push_back(&d);
  }
  if (ordered.empty()) return std::nullopt;
  std::sort(ordered.begin(), ordered.end(),
            [](const SliceDetection* a, const SliceDetection* b) {
              return a->slice_index < b->slice_index;
            });

  LungBoxes3D out;
  out.z_first = ordered.front()->slice_index;
  out.z_last = ordered.back()->slice_index;

  for (const SliceDetection* d : ordered) {
    if (d->left) {
      const Box3D b = extend_z(d->left->bbox, d->slice_index, d->slice_index);
      out.left_union = out.left_union ? out.left_union->union_with(b) : b;
    }
    if (d->right) {
      const Box3D b = extend_z(d->right->bbox, d->slice_index, d->slice_index);
      out.right_union = out.right_union ? out.right_union->union_with(b) : b;
    }
  }
  return out;
}

CropPlan plan_crops(const LungBoxes3D& boxes, int nx, int ny, int nz) {
  if (!boxes.left_union && !boxes.right_union) {
    throw DataError("plan_crops requires at least one lung union box");
  }

  Box3D both;
  if (boxes.left_union && boxes.right_union) {
    both = boxes.left_union->union_with(*boxes.right_union);
  } else {
    both = boxes.left_union ? *boxes.left_union : *boxes.right_union;
  }
  both.z0 = boxes.z_first;
  both.z1 = boxes.z_last;

  CropPlan plan;
  plan.both = both;
  if (boxes.left_union && boxes.right_union) {
    plan.left = {0, boxes.right_union->x0, both.y0, both.y1, both.z0, both.z1};
    plan.right = {boxes.left_union->x1, nx - 1, both.y0, both.y1, both.z0, both.z1};
  } else {
    plan.left = both;
    plan.right = both;
  }

  (void)ny;
  (void)nz;
  return plan;
}

Volume apply_crop(const Volume& v, const Box3D& r) {
  if (r.x0 < 0 || r.y0 < 0 || r.z0 < 0 || r.x0 > r.x1 || r.y0 > r.y1 ||
      r.z0 > r.z1 || r.x1 >= v.nx || r.y1 >= v.ny || r.z1 >= v.nz) {
    throw DataError("crop range out of bounds for volume '" + v.scan_id + "'");
  }

  Volume out;
  out.scan_id = v.scan_id;
  out.nx = r.x1 - r.x0 + 1;
  out.ny = r.y1 - r.y0 + 1;
  out.nz = r.z1 - r.z0 + 1;
  out.voxels.resize(out.voxel_count());

  for (int z = 0; z < out.nz; ++z) {
    for (int y = 0; y < out.ny; ++y) {
      const float* src = v.voxels.data() + v.index(r.x0, r.y0 + y, r.z0 + z);
      float* dst = out.voxels.data() + out.index(0, y, z);
      std::copy(src, src + out.nx, dst);
    }
  }
  return out;
}

SegmentationResult segment_scan(const Volume& v) {
  std::vector<SliceDetection> detections;
  detections.reserve(static_cast<size_t>(v.nz));
  int detected = 0;
  SliceScratch scratch;
  for (int z = 0; z < v.nz; ++z) {
    SliceDetection d = detect_slice_lungs_with(v.slice(z), z, scratch);
    if (!d.empty()) detected++;
    detections.push_back(std::move(d));
  }

  SegmentationResult res;
  res.slices_detected = detected;
  res.boxes = aggregate_volume(detections);
  if (!res.boxes) {
    // Segmentation failure: keep the whole volume so batch jobs continue.
    const Box3D full{0, v.nx - 1, 0, v.ny - 1, 0, v.nz - 1};
    res.crops = {full, full, full};
    res.fallback = true;
    return res;
  }
  res.crops = plan_crops(*res.boxes, v.nx, v.ny, v.nz);
  return res;
}

json segmentation_report(const std::string& scan_id, const SegmentationResult& r) {
  return {{"scan_id", scan_id},
          {"crops",
           {{"both", box_to_array(r.crops.both)},
            {"left", box_to_array(r.crops.left)},
            {"right", box_to_array(r.crops.right)}}},
          {"slices_detected", r.slices_detected},
          {"fallback", r.fallback}};
}

SegmentationResult parse_segmentation_report(const json& j) {
  SegmentationResult r;
  try {
    const auto& crops = j.at("crops");
    r.crops.both = box_from_array(crops.at("both"));
    r.crops.left = box_from_array(crops.at("left"));
    r.crops.right = box_from_array(crops.at("right"));
    r.slices_detected = j.at("slices_detected").get<int>();
    r.fallback = j.at("fallback").get<bool>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed segmentation report: ") + e.what());
  }
  return r;
}

}  // namespace covct
