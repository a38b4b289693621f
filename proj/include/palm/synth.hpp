#pragma once

#include <cstdint>
#include <filesystem>

#include "palm/dataset.hpp"
#include "palm/eval.hpp"
#include "palm/raster.hpp"

namespace palm {

/// Every generated crown center keeps this distance from the scene border so
/// its 40 x 40 window is always in bounds.
inline constexpr int kBorderMargin = 20;

struct SynthConfig {
  int width = 800;
  int height = 800;
  double radius_min = 16.0; // crown radius range, px
  double radius_max = 22.0;
  int trees_min = 80;
  int trees_max = 150;
  int spacing = 36;         // grid pitch = minimum nominal center distance, px
  int jitter = 4;           // max per-axis offset from the grid point, px
  double overlap = 0.25;    // centers may come within spacing * (1 - overlap)
  double crown_contrast = 0.45;   // brightness drop from crown center to rim
  double crown_noise = 0.12;      // multiplicative speckle amplitude on crowns
  double background_noise = 0.06; // value-noise amplitude on the ground
  int channels = 1;

  /// Throws InvalidArgument on out-of-range fields, including a jitter too
  /// large for the overlap allowance (2 * jitter > overlap * spacing).
  void validate() const;

  /// Grid positions available for centers at this spacing.
  int capacity() const;

  /// Minimum distance from a negative crop's center to any crown center:
  /// half the largest crown radius.
  double negative_exclusion() const { return 0.5 * radius_max; }
};

struct SyntheticScene {
  Raster image;
  GroundTruth truth; // centers sorted by (y, x)
};

/// Jittered-grid plantation: the tree count is drawn from the configured
/// range, that many grid cells are occupied at random, each center is
/// jittered, and crowns are rendered as radially shaded speckled disks over
/// value-noise ground. Throws InfeasibleError when trees_max exceeds the
/// grid capacity. Output bytes depend only on (cfg, seed).
SyntheticScene generate_scene(const SynthConfig& cfg, std::uint64_t seed);

/// Labeled 40 x 40 crops drawn from freshly generated scenes: palm crops
/// centered on crown centers, no_palm crops (half between neighboring
/// crowns, half anywhere in the scene) at least negative_exclusion() from
/// every center.
Dataset generate_crops(const SynthConfig& cfg, std::uint64_t seed, std::size_t n_palm,
                       std::size_t n_nopalm);

/// Scene id used as crop provenance for scene `index` of a crop set.
std::string synth_scene_id(std::uint64_t seed, std::size_t index);

/// Truth file: header `x_px,y_px`, one center per line, sorted by (y, x).
void write_truth_csv(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth read_truth_csv(const std::filesystem::path& path);

} // namespace palm
