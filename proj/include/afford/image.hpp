#pragma once

#include <cstdint>
#include <vector>

namespace afford {

/// Row-major depth in meters. A pixel is valid iff its depth is > 0.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 0.0f) : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

  float at(int col, int row) const { return values[static_cast<size_t>(row) * width + col]; }
  float& at(int col, int row) { return values[static_cast<size_t>(row) * width + col]; }
  bool valid(int col, int row) const { return at(col, row) > 0.0f; }

  /// Throws InvalidArgument when the grid size is wrong or a valid depth leaves (0, 100) m.
  void validate() const;

  static constexpr float kMaxDepth = 100.0f;
};

/// Binary object mask, 1 = target object.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> values;

  Mask() = default;
  Mask(int w, int h, uint8_t fill = 0) : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

  bool at(int col, int row) const { return values[static_cast<size_t>(row) * width + col] != 0; }
  void set(int col, int row, bool on) { values[static_cast<size_t>(row) * width + col] = on ? 1 : 0; }
  bool contains(int col, int row) const { return col >= 0 && row >= 0 && col < width && row < height && at(col, row); }
  size_t count() const;
  double area_fraction() const { return values.empty() ? 0.0 : static_cast<double>(count()) / values.size(); }
};

/// RGB is stored quantized to 8 bits so that the on-disk encoding round-trips exactly;
/// `rgb_unit` exposes the [0,1] view the encoder consumes.
struct RgbdFrame {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // width*height*3, row-major, interleaved
  DepthMap depth;

  RgbdFrame() = default;
  RgbdFrame(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0), depth(w, h) {}

  float rgb_unit(int col, int row, int channel) const {
    return rgb[(static_cast<size_t>(row) * width + col) * 3 + channel] / 255.0f;
  }

  void validate() const;
};

}  // namespace afford
