#include "palm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <tuple>

#include "palm/errors.hpp"

namespace palm {

double margin_of_error(std::size_t detected, std::size_t actual) {
  if (actual == 0) {
    throw InvalidArgument("margin of error is undefined for a scene with no trees (N = 0)");
  }
  const std::size_t diff = detected > actual ? detected - actual : actual - detected;
  return static_cast<double>(diff) / static_cast<double>(actual);
}

MatchReport match_detections(const PeakList& peaks, const GroundTruth& truth, double tolerance) {
  if (!(tolerance > 0.0)) throw InvalidArgument("matching tolerance must be positive");
  std::vector<Match> candidates;
  for (std::size_t p = 0; p < peaks.peaks.size(); ++p) {
    for (std::size_t t = 0; t < truth.centers.size(); ++t) {
      const double d = std::hypot(peaks.peaks[p].x - truth.centers[t].x,
                                  peaks.peaks[p].y - truth.centers[t].y);
      if (d <= tolerance) candidates.push_back({p, t, d});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Match& a, const Match& b) {
    return std::tie(a.distance, a.peak, a.truth) < std::tie(b.distance, b.peak, b.truth);
  });
  std::vector<bool> peak_used(peaks.peaks.size()), truth_used(truth.centers.size());
  MatchReport report;
  report.tolerance = tolerance;
  for (const Match& m : candidates) {
    if (peak_used[m.peak] || truth_used[m.truth]) continue;
    peak_used[m.peak] = truth_used[m.truth] = true;
    report.matches.push_back(m);
  }
  const double matched = static_cast<double>(report.matches.size());
  report.precision = peaks.peaks.empty() ? 1.0 : matched / static_cast<double>(peaks.peaks.size());
  report.recall = truth.centers.empty() ? 1.0 : matched / static_cast<double>(truth.centers.size());
  return report;
}

SceneEvaluation evaluate_scene(const PeakList& peaks, const GroundTruth& truth, double tolerance) {
  SceneEvaluation e;
  e.count.detected = peaks.peaks.size();
  e.count.actual = truth.centers.size();
  e.count.margin = margin_of_error(e.count.detected, e.count.actual);
  e.match = match_detections(peaks, truth, tolerance);
  return e;
}

BatchReport summarize(std::vector<SceneScore> scenes, double tolerance) {
  BatchReport r;
  r.tolerance = tolerance;
  r.scenes = std::move(scenes);
  if (r.scenes.empty()) return r;
  for (const auto& s : r.scenes) {
    r.mean_margin += s.eval.count.margin;
    r.mean_precision += s.eval.match.precision;
    r.mean_recall += s.eval.match.recall;
  }
  const auto n = static_cast<double>(r.scenes.size());
  r.mean_margin /= n;
  r.mean_precision /= n;
  r.mean_recall /= n;
  return r;
}

std::string to_json(const BatchReport& report) {
  nlohmann::ordered_json scenes = nlohmann::ordered_json::array();
  for (const auto& s : report.scenes) {
    scenes.push_back({{"scene", s.scene},
                      {"detected", s.eval.count.detected},
                      {"actual", s.eval.count.actual},
                      {"margin_of_error", s.eval.count.margin},
                      {"matched", s.eval.match.matches.size()},
                      {"precision", s.eval.match.precision},
                      {"recall", s.eval.match.recall}});
  }
  const nlohmann::ordered_json doc{{"tolerance_px", report.tolerance},
                                   {"scene_count", report.scenes.size()},
                                   {"scenes", scenes},
                                   {"mean_margin_of_error", report.mean_margin},
                                   {"mean_precision", report.mean_precision},
                                   {"mean_recall", report.mean_recall}};
  return doc.dump(2) + "\n";
}

} // namespace palm
