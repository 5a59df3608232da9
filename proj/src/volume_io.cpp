#include "covct/volume_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "covct/csv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace covct {

namespace {

std::string lowercase_ext(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

// First run of decimal digits in the basename, e.g. "slice_042.png" -> 42.
std::optional<uint64_t> slice_index_from_name(const std::string& name) {
  size_t i = 0;
  while (i < name.size() && !std::isdigit(static_cast<unsigned char>(name[i]))) ++i;
  if (i == name.size()) return std::nullopt;
  uint64_t value = 0;
  while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i]))) {
    value = value * 10 + static_cast<uint64_t>(name[i] - '0');
    if (value > (1ULL << 62)) return std::nullopt;
    ++i;
  }
  return value;
}

struct PngReadCtx {
  std::FILE* fp = nullptr;
  ~PngReadCtx() {
    if (fp) std::fclose(fp);
  }
};

GrayImage read_png(const std::string& path) {
  PngReadCtx ctx;
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) throw DataError("cannot open image: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, ctx.fp) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw DataError("not a PNG file: " + path);
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG: " + path);
  }

  png_init_io(png, ctx.fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("slice image is not 8-bit grayscale: " + path);
  }

  GrayImage img;
  img.width = static_cast<int>(width);
  img.height = static_cast<int>(height);
  img.pixels.resize(static_cast<size_t>(width) * height);

  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) {
    rows[y] = img.pixels.data() + static_cast<size_t>(y) * width;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path);

  auto next_token = [&in, &path]() {
    std::string tok;
    while (true) {
      const int c = in.get();
      if (c == EOF) throw DataError("truncated PGM header: " + path);
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
  };

  const std::string magic = next_token();
  if (magic != "P5") throw DataError("unsupported PGM variant (want P5): " + path);
  const int width = static_cast<int>(csv::parse_int(next_token(), "PGM width of " + path));
  const int height = static_cast<int>(csv::parse_int(next_token(), "PGM height of " + path));
  const int maxval = static_cast<int>(csv::parse_int(next_token(), "PGM maxval of " + path));
  if (width < 1 || height < 1) throw DataError("bad PGM dimensions: " + path);
  if (maxval != 255) throw DataError("slice image is not 8-bit grayscale: " + path);

  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<size_t>(width) * height);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw DataError("truncated PGM payload: " + path);
  }
  return img;
}

// Strip a trailing .json/.raw so all three spellings address the same pair.
std::string container_base(const std::string& path) {
  if (path.size() > 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
    return path.substr(0, path.size() - 5);
  }
  if (path.size() > 4 && path.compare(path.size() - 4, 4, ".raw") == 0) {
    return path.substr(0, path.size() - 4);
  }
  return path;
}

void put_le_f32(std::vector<unsigned char>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<unsigned char>(bits & 0xFF));
  out.push_back(static_cast<unsigned char>((bits >> 8) & 0xFF));
  out.push_back(static_cast<unsigned char>((bits >> 16) & 0xFF));
  out.push_back(static_cast<unsigned char>((bits >> 24) & 0xFF));
}

float get_le_f32(const unsigned char* p) {
  const uint32_t bits = static_cast<uint32_t>(p[0]) |
                        (static_cast<uint32_t>(p[1]) << 8) |
                        (static_cast<uint32_t>(p[2]) << 16) |
                        (static_cast<uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

const ManifestEntry* ScanManifest::find(const std::string& scan_id) const {
  for (const auto& e : entries) {
    if (e.scan_id == scan_id) return &e;
  }
  return nullptr;
}

void ScanManifest::check_unique_ids() const {
  std::unordered_set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.scan_id).second) {
      throw DataError("duplicate scan_id '" + e.scan_id + "' in manifest");
    }
  }
}

GrayImage read_gray_image(const std::string& path) {
  const std::string ext = lowercase_ext(fs::path(path));
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm") return read_pgm(path);
  throw DataError("unsupported slice image format '" + ext + "': " + path);
}

void write_gray_png(const GrayImage& img, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot open file for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw DataError("PNG write failed: " + path);
  }

  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(
                           img.pixels.data() + static_cast<size_t>(y) * img.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

void write_gray_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw DataError("write failed: " + path);
}

Volume load_slice_stack(const std::string& dir_path) {
  if (!fs::is_directory(dir_path)) {
    throw DataError("not a directory: " + dir_path);
  }

  struct SliceFile {
    uint64_t index;
    std::string name;
    std::string path;
  };
  std::vector<SliceFile> files;
  for (const auto& entry : fs::directory_iterator(dir_path)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lowercase_ext(entry.path());
    if (ext != ".png" && ext != ".pgm") continue;
    const std::string name = entry.path().filename().string();
    const auto idx = slice_index_from_name(name);
    if (!idx) {
      throw DataError("slice filename has no decimal index: " +
                      entry.path().string());
    }
    files.push_back({*idx, name, entry.path().string()});
  }
  if (files.empty()) {
    throw DataError("no slice images (.png/.pgm) in directory: " + dir_path);
  }

  std::sort(files.begin(), files.end(), [](const SliceFile& a, const SliceFile& b) {
    return a.index != b.index ? a.index < b.index : a.name < b.name;
  });
  for (size_t i = 1; i < files.size(); ++i) {
    if (files[i].index == files[i - 1].index) {
      throw DataError("ambiguous slice order: '" + files[i - 1].path + "' and '" +
                      files[i].path + "' share slice index " +
                      std::to_string(files[i].index));
    }
  }

  Volume v;
  v.scan_id = fs::path(dir_path).filename().string();
  if (v.scan_id.empty()) {
    v.scan_id = fs::path(dir_path).parent_path().filename().string();
  }
  v.nz = static_cast<int>(files.size());

  for (size_t z = 0; z < files.size(); ++z) {
    const GrayImage img = read_gray_image(files[z].path);
    if (z == 0) {
      v.nx = img.width;
      v.ny = img.height;
      v.voxels.resize(v.voxel_count());
    } else if (img.width != v.nx || img.height != v.ny) {
      throw DataError("slice dimensions " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " of '" + files[z].path +
                      "' do not match " + std::to_string(v.nx) + "x" +
                      std::to_string(v.ny) + " of the first slice");
    }
    float* dst = v.voxels.data() + z * static_cast<size_t>(v.nx) * v.ny;
    for (size_t i = 0; i < img.pixels.size(); ++i) {
      dst[i] = static_cast<float>(img.pixels[i]) / 255.0f;
    }
  }
  return v;
}

void write_volume(const Volume& v, const std::string& path) {
  v.validate();
  const std::string base = container_base(path);

  json sidecar = {{"scan_id", v.scan_id}, {"nx", v.nx},          {"ny", v.ny},
                  {"nz", v.nz},           {"dtype", "f32le"},    {"layout", "zyx"}};
  csv::write_text_file(base + ".json", sidecar.dump(2) + "\n");

  std::vector<unsigned char> payload;
  payload.reserve(v.voxels.size() * 4);
  for (const float f : v.voxels) put_le_f32(payload, f);

  std::ofstream out(base + ".raw", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + base + ".raw");
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("write failed: " + base + ".raw");
}

Volume read_volume(const std::string& path) {
  const std::string base = container_base(path);
  const std::string json_path = base + ".json";
  const std::string raw_path = base + ".raw";

  std::ifstream jin(json_path, std::ios::binary);
  if (!jin) throw DataError("cannot open RVOL sidecar: " + json_path);
  json sidecar;
  try {
    jin >> sidecar;
  } catch (const json::exception& e) {
    throw DataError("malformed RVOL sidecar " + json_path + ": " + e.what());
  }

  Volume v;
  try {
    v.scan_id = sidecar.at("scan_id").get<std::string>();
    v.nx = sidecar.at("nx").get<int>();
    v.ny = sidecar.at("ny").get<int>();
    v.nz = sidecar.at("nz").get<int>();
    if (sidecar.at("dtype").get<std::string>() != "f32le") {
      throw DataError("unsupported dtype in " + json_path);
    }
    if (sidecar.at("layout").get<std::string>() != "zyx") {
      throw DataError("unsupported layout in " + json_path);
    }
  } catch (const json::exception& e) {
    throw DataError("malformed RVOL sidecar " + json_path + ": " + e.what());
  }
  if (v.nx < 1 || v.ny < 1 || v.nz < 1) {
    throw DataError("malformed RVOL sidecar " + json_path + ": dims must be >= 1");
  }

  std::ifstream rin(raw_path, std::ios::binary);
  if (!rin) throw DataError("cannot open RVOL payload: " + raw_path);
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(rin)),
                                     std::istreambuf_iterator<char>());

  const uint64_t expected =
      static_cast<uint64_t>(v.nx) * static_cast<uint64_t>(v.ny) * static_cast<uint64_t>(v.nz);
  if (payload.size() != expected * 4) {
    throw DataError("RVOL payload length mismatch in " + raw_path + ": got " +
                    std::to_string(payload.size()) + " bytes, header implies " +
                    std::to_string(expected * 4));
  }

  v.voxels.resize(expected);
  for (uint64_t i = 0; i < expected; ++i) {
    const float f = get_le_f32(payload.data() + i * 4);
    if (!(f >= 0.0f && f <= 1.0f)) {
      throw DataError("RVOL voxel " + std::to_string(i) + " out of range [0,1] in " +
                      raw_path);
    }
    v.voxels[i] = f;
  }
  return v;
}

ScanManifest load_manifest(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw DataError("empty manifest: " + path);
  if (lines[0] != "scan_id,path,label") {
    throw DataError("manifest header must be 'scan_id,path,label': " + path);
  }

  ScanManifest m;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = csv::split_line(lines[i]);
    if (fields.size() != 3) {
      throw DataError("manifest row " + std::to_string(i + 1) + " has " +
                      std::to_string(fields.size()) + " fields (want 3): " + path);
    }
    ManifestEntry e;
    e.scan_id = fields[0];
    e.path = fields[1];
    e.label = label_from_csv_field(fields[2]);
    if (e.scan_id.empty()) {
      throw DataError("manifest row " + std::to_string(i + 1) + " has empty scan_id: " + path);
    }
    m.entries.push_back(std::move(e));
  }
  m.check_unique_ids();
  return m;
}

void save_manifest(const ScanManifest& m, const std::string& path) {
  std::string out = "scan_id,path,label\n";
  for (const auto& e : m.entries) {
    out += e.scan_id;
    out += ',';
    out += e.path;
    out += ',';
    if (e.label) out += label_to_string(*e.label);
    out += '\n';
  }
  csv::write_text_file(path, out);
}

}  // namespace covct
