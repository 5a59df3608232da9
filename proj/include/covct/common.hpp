#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace covct {

// Malformed input data or a violated data contract. The CLI maps this to
// exit code 2; batch runners record it per scan and keep going.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Label { Covid, NonCovid };

inline const char* label_to_string(Label l) {
  return l == Label::Covid ? "COVID" : "NON_COVID";
}

// Throws on anything other than the two canonical tokens.
Label label_from_string(const std::string& s);

// Empty string means "unannotated".
std::optional<Label> label_from_csv_field(const std::string& s);

// Inclusive voxel index ranges.
struct Box2D {
  int x_min = 0;
  int x_max = 0;
  int y_min = 0;
  int y_max = 0;

  int width() const { return x_max - x_min + 1; }
  int height() const { return y_max - y_min + 1; }

  Box2D union_with(const Box2D& o) const {
    return {std::min(x_min, o.x_min), std::max(x_max, o.x_max),
            std::min(y_min, o.y_min), std::max(y_max, o.y_max)};
  }

  bool operator==(const Box2D&) const = default;
};

struct Box3D {
  int x0 = 0;
  int x1 = 0;
  int y0 = 0;
  int y1 = 0;
  int z0 = 0;
  int z1 = 0;

  long long volume() const {
    return 1LL * (x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1);
  }

  Box3D union_with(const Box3D& o) const {
    return {std::min(x0, o.x0), std::max(x1, o.x1), std::min(y0, o.y0),
            std::max(y1, o.y1), std::min(z0, o.z0), std::max(z1, o.z1)};
  }

  bool contains(const Box3D& o) const {
    return x0 <= o.x0 && o.x1 <= x1 && y0 <= o.y0 && o.y1 <= y1 &&
           z0 <= o.z0 && o.z1 <= z1;
  }

  bool operator==(const Box3D&) const = default;
};

}  // namespace covct
