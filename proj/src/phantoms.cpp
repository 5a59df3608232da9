#include "covct/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "covct/csv.hpp"
#include "covct/parallel.hpp"
#include "covct/rng.hpp"

namespace fs = std::filesystem;

namespace covct {

namespace {

// Fraction of the equatorial cross-section kept at the axial extremes of a
// lung solid. Keeps every occupied slice above the component-area filter.
constexpr double kAxialFloor = 0.30;

// Lesions stay within this fraction of the lung's scaled radius so they
// never touch the lung boundary.
constexpr double kLesionCenterFrac = 0.55;

struct PaintedBounds {
  int x0 = 1 << 30, x1 = -(1 << 30);
  int y0 = 1 << 30, y1 = -(1 << 30);
  int z0 = 1 << 30, z1 = -(1 << 30);

  void extend(int x, int y, int z) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
    z0 = std::min(z0, z);
    z1 = std::max(z1, z);
  }
  bool empty() const { return x1 < x0; }
  Box3D box() const { return {x0, x1, y0, y1, z0, z1}; }
};

// Cross-section scale^2 of the lung solid at normalized axial offset u.
double section_scale_sq(double u) {
  return kAxialFloor + (1.0 - kAxialFloor) * (1.0 - u * u);
}

Box3D paint_lung(Volume& v, const Ellipsoid& e) {
  PaintedBounds painted;
  const int z_lo = std::max(0, static_cast<int>(std::ceil(e.cz - e.rz)));
  const int z_hi = std::min(v.nz - 1, static_cast<int>(std::floor(e.cz + e.rz)));
  const int y_lo = std::max(0, static_cast<int>(std::ceil(e.cy - e.ry)));
  const int y_hi = std::min(v.ny - 1, static_cast<int>(std::floor(e.cy + e.ry)));
  const int x_lo = std::max(0, static_cast<int>(std::ceil(e.cx - e.rx)));
  const int x_hi = std::min(v.nx - 1, static_cast<int>(std::floor(e.cx + e.rx)));

  for (int z = z_lo; z <= z_hi; ++z) {
    const double u = (z - e.cz) / e.rz;
    if (u < -1.0 || u > 1.0) continue;
    const double s2 = section_scale_sq(u);
    for (int y = y_lo; y <= y_hi; ++y) {
      const double dy = (y - e.cy) / e.ry;
      for (int x = x_lo; x <= x_hi; ++x) {
        const double dx = (x - e.cx) / e.rx;
        if (dx * dx + dy * dy <= s2) {
          v.at(x, y, z) = kLungIntensity;
          painted.extend(x, y, z);
        }
      }
    }
  }
  if (painted.empty()) {
    throw DataError("phantom lung solid painted no voxels (radii too small)");
  }
  return painted.box();
}

void paint_lesion(Volume& v, double cx, double cy, double cz, double r) {
  const int z_lo = std::max(0, static_cast<int>(std::ceil(cz - r)));
  const int z_hi = std::min(v.nz - 1, static_cast<int>(std::floor(cz + r)));
  const int y_lo = std::max(0, static_cast<int>(std::ceil(cy - r)));
  const int y_hi = std::min(v.ny - 1, static_cast<int>(std::floor(cy + r)));
  const int x_lo = std::max(0, static_cast<int>(std::ceil(cx - r)));
  const int x_hi = std::min(v.nx - 1, static_cast<int>(std::floor(cx + r)));
  const double r2 = r * r;
  for (int z = z_lo; z <= z_hi; ++z) {
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        const double dz = z - cz;
        if (dx * dx + dy * dy + dz * dz <= r2) {
          v.at(x, y, z) = kLesionIntensity;
        }
      }
    }
  }
}

void check_fits(const Ellipsoid& e, int nx, int ny, int nz, const char* side) {
  const bool ok = e.rx > 0 && e.ry > 0 && e.rz > 0 &&
                  e.cx - e.rx > 0.0 && e.cx + e.rx < nx - 1.0 &&
                  e.cy - e.ry > 0.0 && e.cy + e.ry < ny - 1.0 &&
                  e.cz - e.rz > 0.0 && e.cz + e.rz < nz - 1.0;
  if (!ok) {
    throw DataError(std::string("phantom spec: ") + side +
                    " lung does not fit strictly inside the volume");
  }
}

std::string scan_id_for(int index, int n) {
  int width = 3;
  for (int v = n - 1; v >= 1000; v /= 10) ++width;
  std::string digits = std::to_string(index);
  return "phantom_" + std::string(width - std::min<int>(width, digits.size()), '0') + digits;
}

}  // namespace

void PhantomSpec::validate() const {
  if (nx < 1 || ny < 1 || nz < 1) throw DataError("phantom spec: dims must be >= 1");
  check_fits(left_ellipsoid, nx, ny, nz, "left");
  check_fits(right_ellipsoid, nx, ny, nz, "right");

  const double a0 = left_ellipsoid.cx - left_ellipsoid.rx;
  const double a1 = left_ellipsoid.cx + left_ellipsoid.rx;
  const double b0 = right_ellipsoid.cx - right_ellipsoid.rx;
  const double b1 = right_ellipsoid.cx + right_ellipsoid.rx;
  const double overlap = std::min(a1, b1) - std::max(a0, b0);
  const double smaller = std::min(a1 - a0, b1 - b0);
  if (overlap >= 0.2 * smaller) {
    throw DataError("phantom spec: lung horizontal extents overlap by >= 20% of the smaller extent");
  }

  if ((label == Label::Covid) != (lesion_count >= 1)) {
    throw DataError("phantom spec: label must be COVID iff lesion_count >= 1");
  }
  if (lesion_count < 0) throw DataError("phantom spec: negative lesion_count");
  if (!(noise_sigma >= 0.0)) throw DataError("phantom spec: noise_sigma must be >= 0");
}

std::pair<Volume, PhantomTruth> generate_phantom(const PhantomSpec& spec) {
  spec.validate();

  Volume v;
  v.scan_id = "phantom";
  v.nx = spec.nx;
  v.ny = spec.ny;
  v.nz = spec.nz;
  v.voxels.assign(v.voxel_count(), kBodyIntensity);

  PhantomTruth truth;
  truth.label = spec.label;
  truth.left_box = paint_lung(v, spec.left_ellipsoid);
  truth.right_box = paint_lung(v, spec.right_ellipsoid);

  Rng lesion_rng(derive_stream(spec.seed, 0xBEEF));
  for (int k = 0; k < spec.lesion_count; ++k) {
    const Ellipsoid& lung =
        lesion_rng.below(2) == 0 ? spec.left_ellipsoid : spec.right_ellipsoid;
    // Offset drawn uniformly from a ball and scaled so the lesion stays
    // strictly interior to the lung solid (center offset fraction plus
    // radius fraction < 1).
    double px, py, pz;
    do {
      px = lesion_rng.uniform(-1.0, 1.0);
      py = lesion_rng.uniform(-1.0, 1.0);
      pz = lesion_rng.uniform(-1.0, 1.0);
    } while (px * px + py * py + pz * pz > 1.0);
    const double min_r = std::min({lung.rx, lung.ry, lung.rz});
    const double lesion_r = lesion_rng.uniform(0.24, 0.40) * min_r;
    paint_lesion(v, lung.cx + kLesionCenterFrac * px * lung.rx,
                 lung.cy + kLesionCenterFrac * py * lung.ry,
                 lung.cz + kLesionCenterFrac * pz * lung.rz, lesion_r);
  }

  if (spec.noise_sigma > 0.0) {
    Rng noise_rng(derive_stream(spec.seed, 0x11015E));
    for (float& f : v.voxels) {
      const double noisy = f + noise_rng.normal(0.0, spec.noise_sigma);
      f = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
  }
  return {std::move(v), truth};
}

PhantomSpec default_phantom_spec(uint64_t seed, uint64_t index, int nx, int ny,
                                 int nz, bool positive, double noise_sigma) {
  Rng rng(derive_stream(seed, index));
  PhantomSpec spec;
  spec.seed = derive_stream(seed, index ^ 0x5CA9F00DULL);
  spec.nx = nx;
  spec.ny = ny;
  spec.nz = nz;
  spec.noise_sigma = noise_sigma;

  auto jitter = [&rng](double amount) { return rng.uniform(-amount, amount); };

  const double cy = ny * (0.5 + 0.015 * jitter(1.0));
  const double cz = nz * (0.5 + 0.015 * jitter(1.0));

  spec.left_ellipsoid.cx = nx * 0.26 + nx * 0.012 * jitter(1.0);
  spec.left_ellipsoid.cy = cy;
  spec.left_ellipsoid.cz = cz;
  spec.left_ellipsoid.rx = nx * rng.uniform(0.185, 0.21);
  spec.left_ellipsoid.ry = ny * rng.uniform(0.38, 0.42);
  spec.left_ellipsoid.rz = nz * rng.uniform(0.155, 0.18);

  spec.right_ellipsoid.cx = nx * 0.74 + nx * 0.012 * jitter(1.0);
  spec.right_ellipsoid.cy = cy;
  spec.right_ellipsoid.cz = cz;
  spec.right_ellipsoid.rx = nx * rng.uniform(0.185, 0.21);
  spec.right_ellipsoid.ry = ny * rng.uniform(0.38, 0.42);
  spec.right_ellipsoid.rz = nz * rng.uniform(0.155, 0.18);

  if (positive) {
    spec.lesion_count = 4 + static_cast<int>(rng.below(4));
    spec.label = Label::Covid;
  } else {
    spec.lesion_count = 0;
    spec.label = Label::NonCovid;
  }
  return spec;
}

ScanManifest generate_dataset(int n, uint64_t seed, double positive_fraction,
                              const std::string& out_dir, const DatasetOptions& opts) {
  if (n < 1) throw DataError("generate_dataset: n must be >= 1");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw DataError("generate_dataset: positive_fraction must be in [0,1]");
  }
  fs::create_directories(out_dir);

  const int n_positive = static_cast<int>(std::llround(n * positive_fraction));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng label_rng(derive_stream(seed, 0x1ABE15));
  label_rng.shuffle(order);
  std::vector<char> positive(n, 0);
  for (int i = 0; i < n_positive; ++i) positive[order[i]] = 1;

  std::vector<PhantomTruth> truths(n);
  ScanManifest manifest;
  manifest.entries.resize(n);

  const auto errors = run_batch(static_cast<size_t>(n), opts.workers, [&](size_t i) {
    const PhantomSpec spec =
        default_phantom_spec(seed, i, opts.nx, opts.ny, opts.nz,
                             positive[i] != 0, opts.noise_sigma);
    auto [vol, truth] = generate_phantom(spec);
    const std::string id = scan_id_for(static_cast<int>(i), n);
    vol.scan_id = id;
    const std::string base = (fs::path(out_dir) / id).string();
    write_volume(vol, base);
    truths[i] = truth;
    manifest.entries[i] = {id, base, truth.label, false};
  });
  for (size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) {
      throw DataError("phantom " + std::to_string(i) + ": " + errors[i]);
    }
  }

  save_manifest(manifest, (fs::path(out_dir) / "manifest.csv").string());
  std::vector<std::pair<std::string, PhantomTruth>> truth_rows;
  truth_rows.reserve(n);
  for (int i = 0; i < n; ++i) {
    truth_rows.emplace_back(manifest.entries[i].scan_id, truths[i]);
  }
  write_truth_csv(truth_rows, (fs::path(out_dir) / "truth.csv").string());
  return manifest;
}

void write_truth_csv(const std::vector<std::pair<std::string, PhantomTruth>>& rows,
                     const std::string& path) {
  std::string out =
      "scan_id,label,lx0,lx1,ly0,ly1,lz0,lz1,rx0,rx1,ry0,ry1,rz0,rz1\n";
  for (const auto& [id, t] : rows) {
    const Box3D& l = t.left_box;
    const Box3D& r = t.right_box;
    out += id;
    out += ',';
    out += label_to_string(t.label);
    for (const int v : {l.x0, l.x1, l.y0, l.y1, l.z0, l.z1,
                        r.x0, r.x1, r.y0, r.y1, r.z0, r.z1}) {
      out += ',';
      out += std::to_string(v);
    }
    out += '\n';
  }
  csv::write_text_file(path, out);
}

std::vector<std::pair<std::string, PhantomTruth>> read_truth_csv(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty() ||
      lines[0] != "scan_id,label,lx0,lx1,ly0,ly1,lz0,lz1,rx0,rx1,ry0,ry1,rz0,rz1") {
    throw DataError("malformed truth CSV header: " + path);
  }
  std::vector<std::pair<std::string, PhantomTruth>> rows;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv::split_line(lines[i]);
    if (f.size() != 14) {
      throw DataError("truth CSV row " + std::to_string(i + 1) + " malformed: " + path);
    }
    auto iv = [&](int k) {
      return static_cast<int>(csv::parse_int(f[k], "truth CSV " + path));
    };
    PhantomTruth t;
    t.label = label_from_string(f[1]);
    t.left_box = {iv(2), iv(3), iv(4), iv(5), iv(6), iv(7)};
    t.right_box = {iv(8), iv(9), iv(10), iv(11), iv(12), iv(13)};
    rows.emplace_back(f[0], t);
  }
  return rows;
}

}  // namespace covct
