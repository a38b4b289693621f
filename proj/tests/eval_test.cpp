#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "palm/errors.hpp"
#include "palm/eval.hpp"
#include "palm/random.hpp"

namespace palm {
namespace {

PeakList peaks_at(const std::vector<PixelPoint>& pts) {
  PeakList out{{}, 1000, 1000};
  for (PixelPoint p : pts) out.peaks.push_back({p.x, p.y, 1.0f});
  return out;
}

GroundTruth truth_at(std::vector<PixelPoint> pts) { return {std::move(pts), 1000, 1000}; }

// Largest one-to-one matching within tolerance, by trying every assignment.
std::size_t optimal_matches(const PeakList& peaks, const GroundTruth& truth, double tol) {
  const std::size_t n = peaks.peaks.size();
  const std::size_t m = truth.centers.size();
  std::vector<bool> used(m, false);
  std::size_t best = 0;
  auto close = [&](std::size_t i, std::size_t j) {
    return std::hypot(peaks.peaks[i].x - truth.centers[j].x, peaks.peaks[i].y - truth.centers[j].y) <= tol;
  };
  auto go = [&](auto&& self, std::size_t i, std::size_t count) -> void {
    if (i == n) {
      best = std::max(best, count);
      return;
    }
    self(self, i + 1, count); // peak i unmatched
    for (std::size_t j = 0; j < m; ++j) {
      if (used[j] || !close(i, j)) continue;
      used[j] = true;
      self(self, i + 1, count + 1);
      used[j] = false;
    }
  };
  go(go, 0, 0);
  return best;
}

TEST(MarginOfError, Examples) {
  EXPECT_EQ(margin_of_error(100, 100), 0.0);
  EXPECT_EQ(margin_of_error(99, 100), 0.01);
  EXPECT_EQ(margin_of_error(101, 100), 0.01);
  EXPECT_EQ(margin_of_error(0, 10), 1.0);
}

TEST(MarginOfError, ZeroTreesIsAnError) {
  EXPECT_THROW(margin_of_error(3, 0), InvalidArgument);
  EXPECT_THROW(margin_of_error(0, 0), InvalidArgument);
}

TEST(MarginOfError, PropertiesOverSmallRanges) {
  for (std::size_t n = 1; n <= 50; ++n) {
    for (std::size_t d = 0; d <= 100; ++d) {
      const double m = margin_of_error(d, n);
      ASSERT_GE(m, 0.0);
      ASSERT_EQ(m == 0.0, d == n);
      ASSERT_EQ(m, static_cast<double>(d > n ? d - n : n - d) / static_cast<double>(n));
      if (d <= n) ASSERT_EQ(margin_of_error(n - d, n), margin_of_error(n + d, n));
      for (std::size_t k = 2; k * n <= 50 && k * d <= 100; ++k) ASSERT_EQ(margin_of_error(k * d, k * n), m);
    }
  }
}

TEST(Match, ExactPositionsArePerfect) {
  const std::vector<PixelPoint> pts{{10, 10}, {50, 60}, {300, 40}};
  const MatchReport r = match_detections(peaks_at(pts), truth_at(pts), 20);
  EXPECT_EQ(r.matches.size(), 3u);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
}

TEST(Match, EmptyPeaksHaveVacuousPrecision) {
  const MatchReport r = match_detections(peaks_at({}), truth_at({{1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}}), 20);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 0.0);
}

TEST(Match, EmptyTruthHasVacuousRecall) {
  const MatchReport r = match_detections(peaks_at({{5, 5}}), truth_at({}), 20);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.precision, 0.0);
}

TEST(Match, ToleranceIsInclusive) {
  EXPECT_EQ(match_detections(peaks_at({{0, 0}}), truth_at({{12, 16}}), 20).matches.size(), 1u);
  EXPECT_EQ(match_detections(peaks_at({{0, 0}}), truth_at({{12, 17}}), 20).matches.size(), 0u);
}

TEST(Match, ClosestPairsGoFirst) {
  // Peak 0 is nearer to truth 1 than peak 1 is, so it takes truth 1.
  const MatchReport r = match_detections(peaks_at({{10, 0}, {20, 0}}), truth_at({{0, 0}, {12, 0}}), 20);
  ASSERT_EQ(r.matches.size(), 2u);
  EXPECT_EQ(r.matches[0].peak, 0u);
  EXPECT_EQ(r.matches[0].truth, 1u);
  EXPECT_EQ(r.matches[1].peak, 1u);
  EXPECT_EQ(r.matches[1].truth, 0u);
  EXPECT_DOUBLE_EQ(r.matches[1].distance, 20.0);
}

TEST(Match, GreedyGapAgainstExhaustiveAssignment) {
  // Greedy pairs peak 10 with truth 12 first, stranding truth 0 and peak 25.
  const PeakList peaks = peaks_at({{10, 0}, {25, 0}});
  const GroundTruth truth = truth_at({{0, 0}, {12, 0}});
  EXPECT_EQ(optimal_matches(peaks, truth, 13), 2u);
  EXPECT_EQ(match_detections(peaks, truth, 13).matches.size(), 1u);
}

TEST(Match, AgreesWithExhaustiveOracleOrStaysWithinTheGreedyBound) {
  Rng rng(7);
  std::size_t differ = 0;
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<PixelPoint> p, t;
    const int np = static_cast<int>(rng.integer(0, 6)), nt = static_cast<int>(rng.integer(0, 6));
    for (int i = 0; i < np; ++i) p.push_back({static_cast<int>(rng.integer(0, 80)), static_cast<int>(rng.integer(0, 80))});
    for (int i = 0; i < nt; ++i) t.push_back({static_cast<int>(rng.integer(0, 80)), static_cast<int>(rng.integer(0, 80))});
    const double tol = 20;
    const MatchReport r = match_detections(peaks_at(p), truth_at(t), tol);
    const std::size_t opt = optimal_matches(peaks_at(p), truth_at(t), tol);
    // Greedy is a maximal matching, hence at least half the maximum.
    ASSERT_LE(r.matches.size(), opt);
    ASSERT_GE(2 * r.matches.size(), opt);
    differ += r.matches.size() != opt;
    // One-to-one, within tolerance.
    std::vector<int> peak_used(p.size()), truth_used(t.size());
    for (const Match& m : r.matches) {
      ASSERT_LE(m.distance, tol);
      ASSERT_EQ(peak_used[m.peak]++, 0);
      ASSERT_EQ(truth_used[m.truth]++, 0);
    }
    ASSERT_LE(r.matches.size(), std::min(p.size(), t.size()));
    ASSERT_TRUE(r.precision >= 0 && r.precision <= 1 && r.recall >= 0 && r.recall <= 1);
  }
  // Dense random clutter is the worst case; the gap stays rare.
  EXPECT_LT(differ, 40u);
}

TEST(Match, SeparatedTruthsMatchOptimally) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PixelPoint> t, p;
    for (int i = 0; i < 6; ++i) t.push_back({i * 45 + 10, static_cast<int>(rng.integer(0, 30))});
    for (int i = 0; i < 6; ++i) p.push_back({static_cast<int>(rng.integer(0, 280)), static_cast<int>(rng.integer(0, 40))});
    EXPECT_EQ(match_detections(peaks_at(p), truth_at(t), 20).matches.size(),
              optimal_matches(peaks_at(p), truth_at(t), 20));
  }
}

TEST(EvaluateScene, Examples) {
  std::vector<PixelPoint> pts;
  for (int i = 0; i < 100; ++i) pts.push_back({(i % 10) * 50 + 20, (i / 10) * 50 + 20});
  const SceneEvaluation all = evaluate_scene(peaks_at(pts), truth_at(pts), 20);
  EXPECT_EQ(all.count.margin, 0.0);
  EXPECT_EQ(all.match.recall, 1.0);
  const SceneEvaluation none = evaluate_scene(peaks_at({}), truth_at(std::vector<PixelPoint>(pts.begin(), pts.begin() + 10)), 20);
  EXPECT_EQ(none.count.margin, 1.0);
  EXPECT_EQ(none.count.detected, 0u);
  EXPECT_EQ(none.count.actual, 10u);
  EXPECT_THROW(evaluate_scene(peaks_at({{1, 1}}), truth_at({}), 20), InvalidArgument);
}

TEST(BatchReport, MeansAndStructuredText) {
  const SceneEvaluation a = evaluate_scene(peaks_at({{0, 0}, {100, 0}}), truth_at({{0, 0}, {100, 0}}), 20);
  const SceneEvaluation b = evaluate_scene(peaks_at({{0, 0}}), truth_at({{0, 0}, {100, 0}}), 20);
  const BatchReport r = summarize({{"a", a}, {"b", b}}, 20);
  EXPECT_DOUBLE_EQ(r.mean_margin, 0.25);
  EXPECT_DOUBLE_EQ(r.mean_recall, 0.75);
  EXPECT_DOUBLE_EQ(r.mean_precision, 1.0);
  const auto j = nlohmann::json::parse(to_json(r));
  ASSERT_EQ(j.at("scenes").size(), 2u);
  EXPECT_EQ(j["scenes"][1]["scene"], "b");
  EXPECT_EQ(j["scenes"][1]["detected"], 1);
  EXPECT_EQ(j["scenes"][1]["actual"], 2);
  EXPECT_DOUBLE_EQ(j["scenes"][1]["margin_of_error"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j["mean_margin_of_error"].get<double>(), 0.25);
  EXPECT_DOUBLE_EQ(j["mean_recall"].get<double>(), 0.75);
}

} // namespace
} // namespace palm
