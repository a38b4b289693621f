#include "palm/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "palm/errors.hpp"

namespace palm {

namespace {

void paint(Raster& out, int x, int y, const std::array<float, 3>& color) {
  if (!out.contains({x, y})) return;
  for (int c = 0; c < 3; ++c) out.at(x, y, c) = color[static_cast<std::size_t>(c)];
}

// Nearest cell index along one axis, or -1 when the pixel is outside the
// band covered by cell centers.
int nearest_cell(int pixel, int window_side, int stride, int cells) {
  const double t = static_cast<double>(pixel - window_side / 2) / stride;
  const int cell = static_cast<int>(std::lround(t));
  if (cell < 0) return std::abs(t) <= 0.5 ? 0 : -1;
  if (cell >= cells) return (t - (cells - 1)) <= 0.5 ? cells - 1 : -1;
  return cell;
}

} // namespace

Raster render_overlay(const Raster& scene, const ConfidenceMap& map, const HeatmapStyle& style) {
  const MapGeometry& g = map.geometry;
  if (g.scene_width != scene.width() || g.scene_height != scene.height()) {
    throw InvalidArgument("confidence map geometry (" + std::to_string(g.scene_width) + "x" +
                          std::to_string(g.scene_height) + ") does not match the scene");
  }
  Raster out = to_rgb(scene);
  for (int y = 0; y < out.height(); ++y) {
    const int row = nearest_cell(y, g.window_side, g.stride, map.rows);
    if (row < 0) continue;
    for (int x = 0; x < out.width(); ++x) {
      const int col = nearest_cell(x, g.window_side, g.stride, map.cols);
      if (col < 0) continue;
      const float w = style.opacity * std::clamp(map.at(col, row), 0.0f, 1.0f);
      if (w == 0.0f) continue;
      for (int c = 0; c < 3; ++c) {
        float& v = out.at(x, y, c);
        v = std::clamp((1.0f - w) * v + w * style.color[static_cast<std::size_t>(c)], 0.0f, 1.0f);
      }
    }
  }
  return out;
}

Raster render_overlay(const Raster& scene, const PeakList& peaks, const MarkerStyle& style) {
  if (peaks.scene_width != scene.width() || peaks.scene_height != scene.height()) {
    throw InvalidArgument("peak list refers to a " + std::to_string(peaks.scene_width) + "x" +
                          std::to_string(peaks.scene_height) + " scene, got " +
                          std::to_string(scene.width()) + "x" + std::to_string(scene.height()));
  }
  Raster out = to_rgb(scene);
  const int r = std::max(style.radius, 1);
  for (const Peak& p : peaks.peaks) {
    for (int dy = -r - 1; dy <= r + 1; ++dy) {
      for (int dx = -r - 1; dx <= r + 1; ++dx) {
        const double d = std::hypot(dx, dy);
        if (std::abs(d - r) < 0.5 || (dx == 0 && dy == 0)) paint(out, p.x + dx, p.y + dy, style.color);
      }
    }
  }
  return out;
}

} // namespace palm
