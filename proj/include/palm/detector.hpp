#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "palm/confidence_map.hpp"
#include "palm/model.hpp"
#include "palm/raster.hpp"

namespace palm {

struct DetectorParams {
  int window_side = 40;
  int stride = 4;
  std::optional<int> kernel_side; // default: largest odd <= window_side / (3 * stride)
  std::optional<int> nms_radius;  // default: window_side / (2 * stride)
  double threshold = 0.3;         // applied to the smoothed map
  int batch_size = 256;           // windows per forward call
  int workers = 0;                // 0 = hardware concurrency

  int resolved_kernel_side() const;
  int resolved_nms_radius() const;

  /// Throws InvalidArgument when any field is out of range.
  void validate() const;
};

/// Scores every in-bounds window: cell (col, row) holds the palm
/// probability of the window with top-left (col * stride, row * stride).
/// Windows are evaluated in batches across worker threads; the result is
/// identical to evaluating each window on its own.
ConfidenceMap slide(const nn::Model& m, const Raster& scene, const DetectorParams& p);

/// Mean over the kernel_side^2 neighborhood of each cell, with reflect
/// padding (edge cell repeated: d c b a | a b c d | d c b a).
ConfidenceMap box_filter(const ConfidenceMap& map, int kernel_side);

/// Cells >= threshold that are >= every cell within Chebyshev distance
/// `radius`; among equal maxima within the radius only the lexicographically
/// smallest (row, col) survives. Peaks are returned in pixel space sorted by
/// (y, x).
PeakList nms(const ConfidenceMap& map, int radius, double threshold);

struct Detection {
  ConfidenceMap raw;
  ConfidenceMap smoothed;
  PeakList peaks;
};

/// slide -> box_filter -> nms with the parameters in `p`.
Detection detect(const nn::Model& m, const Raster& scene, const DetectorParams& p);

/// 16-bit binary PGM, sample = round(p * 65535).
void write_confidence_pgm16(const ConfidenceMap& map, const std::filesystem::path& path);

/// One row per line, space-separated decimal probabilities.
void write_confidence_text(const ConfidenceMap& map, const std::filesystem::path& path);

/// Header `x_px,y_px,confidence`, one peak per line, sorted by (y, x).
void write_peaks_csv(const PeakList& peaks, const std::filesystem::path& path);
std::vector<Peak> read_peaks_csv(const std::filesystem::path& path);

} // namespace palm
