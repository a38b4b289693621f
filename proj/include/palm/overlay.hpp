#pragma once

#include <array>

#include "palm/confidence_map.hpp"
#include "palm/raster.hpp"

namespace palm {

struct HeatmapStyle {
  float opacity = 0.6f;                  // blend weight at confidence 1
  std::array<float, 3> color{1.0f, 0.0f, 0.0f};
};

struct MarkerStyle {
  int radius = 5;
  std::array<float, 3> color{1.0f, 0.15f, 0.0f};
};

/// Blends `map` over the scene: each pixel takes the confidence p of the
/// nearest cell center and becomes (1 - opacity * p) * pixel + opacity * p *
/// color. Pixels farther than half a stride from every cell center are left
/// untouched. Output is always RGB.
Raster render_overlay(const Raster& scene, const ConfidenceMap& map,
                      const HeatmapStyle& style = {});

/// Draws a ring of `style.radius` plus a center dot at every peak.
Raster render_overlay(const Raster& scene, const PeakList& peaks,
                      const MarkerStyle& style = {});

} // namespace palm
