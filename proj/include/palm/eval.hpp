#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "palm/confidence_map.hpp"
#include "palm/raster.hpp"

namespace palm {

/// Known tree centers for one scene.
struct GroundTruth {
  std::vector<PixelPoint> centers;
  int scene_width = 0;
  int scene_height = 0;
};

struct CountReport {
  std::size_t detected = 0; // D
  std::size_t actual = 0;   // N
  double margin = 0.0;      // |D - N| / N
};

struct Match {
  std::size_t peak = 0;
  std::size_t truth = 0;
  double distance = 0.0;
};

struct MatchReport {
  std::vector<Match> matches;
  double precision = 1.0;
  double recall = 1.0;
  double tolerance = 20.0;
};

/// |D - N| / N. Throws InvalidArgument when N == 0.
double margin_of_error(std::size_t detected, std::size_t actual);

/// Greedy one-to-one matching, closest pairs first; ties broken by
/// (peak index, truth index). Only pairs within `tolerance` px are matched.
MatchReport match_detections(const PeakList& peaks, const GroundTruth& truth, double tolerance);

struct SceneEvaluation {
  CountReport count;
  MatchReport match;
};

/// Count and localization scores for one scene. Throws when N == 0.
SceneEvaluation evaluate_scene(const PeakList& peaks, const GroundTruth& truth, double tolerance);

struct SceneScore {
  std::string scene;
  SceneEvaluation eval;
};

struct BatchReport {
  std::vector<SceneScore> scenes;
  double tolerance = 20.0;
  double mean_margin = 0.0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
};

BatchReport summarize(std::vector<SceneScore> scenes, double tolerance);

/// Structured text (JSON) listing per-scene D, N, margin, precision, recall
/// and the batch means.
std::string to_json(const BatchReport& report);

} // namespace palm
