#pragma once

#include <cstddef>
#include <vector>

#include "palm/raster.hpp"

namespace palm {

/// How confidence-map cells relate to scene pixels.
struct MapGeometry {
  int window_side = 40;
  int stride = 4;
  int scene_width = 0;
  int scene_height = 0;

  /// floor((scene - window) / stride) + 1 along each axis.
  int cols() const { return (scene_width - window_side) / stride + 1; }
  int rows() const { return (scene_height - window_side) / stride + 1; }

  friend bool operator==(const MapGeometry&, const MapGeometry&) = default;
};

/// Grid of palm probabilities; cell (col, row) scored the window whose
/// top-left pixel is (col * stride, row * stride).
struct ConfidenceMap {
  MapGeometry geometry;
  int cols = 0;
  int rows = 0;
  std::vector<float> values; // row-major

  float at(int col, int row) const {
    return values[static_cast<std::size_t>(row) * cols + col];
  }
  float& at(int col, int row) { return values[static_cast<std::size_t>(row) * cols + col]; }
};

/// Empty map over `geometry`, all cells set to `fill`.
ConfidenceMap make_map(const MapGeometry& geometry, float fill = 0.0f);

/// Center pixel of the window scored by cell (col, row): (col * stride +
/// window/2, row * stride + window/2), window/2 rounded down.
PixelPoint cell_to_pixel(int col, int row, const MapGeometry& geometry);

struct Peak {
  int x = 0; // scene pixel column
  int y = 0; // scene pixel row
  float confidence = 0.0f;

  friend bool operator==(const Peak&, const Peak&) = default;
};

struct PeakList {
  std::vector<Peak> peaks;
  int scene_width = 0;
  int scene_height = 0;
};

} // namespace palm
