#include "covct/resample_augment.hpp"

#include <algorithm>
#include <cmath>

#include "covct/rng.hpp"

namespace covct {

namespace {

struct AxisMap {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<float> frac;
};

AxisMap build_axis_map(int src, int dst) {
  AxisMap m;
  m.lo.resize(dst);
  m.hi.resize(dst);
  m.frac.resize(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (int d = 0; d < dst; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    m.lo[d] = lo;
    m.hi[d] = std::min(lo + 1, src - 1);
    m.frac[d] = static_cast<float>(s - lo);
  }
  return m;
}

}  // namespace

TargetSize target_size_from_name(const std::string& name) {
  if (name == "both") return kTargetBothLungs;
  if (name == "single") return kTargetSingleLung;
  throw DataError("unknown target size '" + name + "' (want both|single)");
}

Volume resample_trilinear(const Volume& v, const TargetSize& t) {
  v.validate();
  if (t.nx < 1 || t.ny < 1 || t.nz < 1) {
    throw DataError("resample target dims must be >= 1");
  }

  const AxisMap mx = build_axis_map(v.nx, t.nx);
  const AxisMap my = build_axis_map(v.ny, t.ny);
  const AxisMap mz = build_axis_map(v.nz, t.nz);

  Volume out;
  out.scan_id = v.scan_id;
  out.nx = t.nx;
  out.ny = t.ny;
  out.nz = t.nz;
  out.voxels.resize(out.voxel_count());

  float* dst = out.voxels.data();
  for (int z = 0; z < t.nz; ++z) {
    const float* p0 = v.voxels.data() + static_cast<size_t>(mz.lo[z]) * v.ny * v.nx;
    const float* p1 = v.voxels.data() + static_cast<size_t>(mz.hi[z]) * v.ny * v.nx;
    const float fz = mz.frac[z];
    for (int y = 0; y < t.ny; ++y) {
      const size_t r0 = static_cast<size_t>(my.lo[y]) * v.nx;
      const size_t r1 = static_cast<size_t>(my.hi[y]) * v.nx;
      const float fy = my.frac[y];
      for (int x = 0; x < t.nx; ++x) {
        const int x0 = mx.lo[x];
        const int x1 = mx.hi[x];
        const float fx = mx.frac[x];

        const float c00 = std::lerp(p0[r0 + x0], p0[r0 + x1], fx);
        const float c01 = std::lerp(p0[r1 + x0], p0[r1 + x1], fx);
        const float c10 = std::lerp(p1[r0 + x0], p1[r0 + x1], fx);
        const float c11 = std::lerp(p1[r1 + x0], p1[r1 + x1], fx);
        const float c0 = std::lerp(c00, c01, fy);
        const float c1 = std::lerp(c10, c11, fy);
        *dst++ = std::lerp(c0, c1, fz);
      }
    }
  }
  return out;
}

Volume reflect_sagittal(const Volume& v) {
  Volume out;
  out.scan_id = v.scan_id;
  out.nx = v.nx;
  out.ny = v.ny;
  out.nz = v.nz;
  out.voxels.resize(v.voxels.size());
  for (int z = 0; z < v.nz; ++z) {
    for (int y = 0; y < v.ny; ++y) {
      const float* src = v.voxels.data() + v.index(0, y, z);
      float* dst = out.voxels.data() + out.index(0, y, z);
      for (int x = 0; x < v.nx; ++x) {
        dst[x] = src[v.nx - 1 - x];
      }
    }
  }
  return out;
}

JitterParams draw_jitter_params(uint64_t seed) {
  Rng rng(seed);
  JitterParams p;
  p.contrast = rng.uniform(0.8, 1.25);
  p.brightness = rng.uniform(-0.1, 0.1);
  return p;
}

Volume apply_jitter(const Volume& v, const JitterParams& p) {
  const double offset = 0.5 * (1.0 - p.contrast) + p.brightness;
  Volume out;
  out.scan_id = v.scan_id;
  out.nx = v.nx;
  out.ny = v.ny;
  out.nz = v.nz;
  out.voxels.resize(v.voxels.size());
  for (size_t i = 0; i < v.voxels.size(); ++i) {
    const double mapped = static_cast<double>(v.voxels[i]) * p.contrast + offset;
    out.voxels[i] = static_cast<float>(std::clamp(mapped, 0.0, 1.0));
  }
  return out;
}

Volume jitter_brightness_contrast(const Volume& v, uint64_t seed) {
  return apply_jitter(v, draw_jitter_params(seed));
}

std::vector<Volume> expand_training_views(const Volume& v) {
  std::vector<Volume> views;
  views.reserve(2);
  views.push_back(v);
  views.push_back(reflect_sagittal(v));
  return views;
}

}  // namespace covct
