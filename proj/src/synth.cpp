#include "palm/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "palm/errors.hpp"
#include "palm/random.hpp"

namespace palm {

namespace {

constexpr double kGroundLevel = 0.30;
constexpr double kCrownLow = 0.62;
constexpr double kCrownHigh = 0.82;
constexpr std::array<double, 3> kGroundTint{0.85, 0.80, 0.65};
constexpr std::array<double, 3> kCrownTint{0.55, 1.00, 0.45};

struct Axis {
  int count = 0;
  int first = 0;
};

Axis grid_axis(int extent, int spacing, int jitter) {
  const int span = extent - 2 * kBorderMargin - 2 * jitter;
  if (span < 0) return {};
  const int count = span / spacing + 1;
  return {count, kBorderMargin + jitter + (span - (count - 1) * spacing) / 2};
}

// Uniform in [-1, 1] from a hash of (seed, x, y); independent of draw order.
double hash_noise(std::uint64_t seed, int x, int y) {
  const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) |
                            static_cast<std::uint32_t>(y);
  return static_cast<double>(derive_seed(seed, key) >> 11) * 0x1.0p-52 - 1.0;
}

// Smoothly interpolated lattice noise in [-1, 1].
class ValueNoise {
public:
  ValueNoise(std::uint64_t seed, int cell) : seed_(seed), cell_(cell) {}

  double at(int x, int y) const {
    const double fx = static_cast<double>(x) / cell_;
    const double fy = static_cast<double>(y) / cell_;
    const int ix = static_cast<int>(fx);
    const int iy = static_cast<int>(fy);
    const double tx = smooth(fx - ix);
    const double ty = smooth(fy - iy);
    const double top = lerp(hash_noise(seed_, ix, iy), hash_noise(seed_, ix + 1, iy), tx);
    const double bottom = lerp(hash_noise(seed_, ix, iy + 1), hash_noise(seed_, ix + 1, iy + 1), tx);
    return lerp(top, bottom, ty);
  }

private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  static double lerp(double a, double b, double t) { return a + (b - a) * t; }

  std::uint64_t seed_;
  int cell_;
};

struct Crown {
  PixelPoint center;
  double radius;
  double brightness;
};

} // namespace

void SynthConfig::validate() const {
  if (width < 1 || height < 1) throw InvalidArgument("scene dimensions must be positive");
  if (channels != 1 && channels != 3) throw InvalidArgument("channels must be 1 or 3");
  if (!(radius_min > 0.0 && radius_min <= radius_max &&
        radius_max < std::min(width, height) / 2.0)) {
    throw InvalidArgument("crown radius range must satisfy 0 < min <= max < min(width,height)/2");
  }
  if (trees_min < 0 || trees_min > trees_max) throw InvalidArgument("invalid tree count range");
  if (spacing < 1) throw InvalidArgument("spacing must be positive");
  if (jitter < 0) throw InvalidArgument("jitter must not be negative");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidArgument("overlap must lie in [0, 1)");
  if (2.0 * jitter > overlap * spacing) {
    throw InvalidArgument("jitter " + std::to_string(jitter) + " lets centers come closer than " +
                          "spacing * (1 - overlap); raise overlap or lower jitter");
  }
  if (crown_contrast < 0.0 || crown_contrast > 1.0) {
    throw InvalidArgument("crown contrast must lie in [0, 1]");
  }
  if (crown_noise < 0.0 || background_noise < 0.0) {
    throw InvalidArgument("noise amplitudes must not be negative");
  }
}

int SynthConfig::capacity() const {
  return grid_axis(width, spacing, jitter).count * grid_axis(height, spacing, jitter).count;
}

SyntheticScene generate_scene(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Axis ax = grid_axis(cfg.width, cfg.spacing, cfg.jitter);
  const Axis ay = grid_axis(cfg.height, cfg.spacing, cfg.jitter);
  const int capacity = ax.count * ay.count;
  if (cfg.trees_max > capacity) {
    throw InfeasibleError("up to " + std::to_string(cfg.trees_max) + " trees requested but a " +
                          std::to_string(cfg.width) + "x" + std::to_string(cfg.height) +
                          " scene fits only " + std::to_string(capacity) + " at spacing " +
                          std::to_string(cfg.spacing));
  }

  Rng rng(derive_seed(seed, 0));
  const int count = static_cast<int>(rng.integer(cfg.trees_min, cfg.trees_max));
  std::vector<int> cells(static_cast<std::size_t>(capacity));
  for (int i = 0; i < capacity; ++i) cells[static_cast<std::size_t>(i)] = i;
  rng.shuffle(cells.begin(), cells.end());
  cells.resize(static_cast<std::size_t>(count));
  std::sort(cells.begin(), cells.end());

  std::vector<Crown> crowns;
  for (int cell : cells) {
    const int gx = ax.first + (cell % ax.count) * cfg.spacing;
    const int gy = ay.first + (cell / ax.count) * cfg.spacing;
    const PixelPoint c{gx + static_cast<int>(rng.integer(-cfg.jitter, cfg.jitter)),
                       gy + static_cast<int>(rng.integer(-cfg.jitter, cfg.jitter))};
    crowns.push_back({c, rng.uniform(cfg.radius_min, cfg.radius_max),
                      rng.uniform(kCrownLow, kCrownHigh)});
  }

  // Ground.
  const std::uint64_t texture_seed = derive_seed(seed, 1);
  const ValueNoise coarse(derive_seed(seed, 2), 32);
  const ValueNoise fine(derive_seed(seed, 3), 8);
  std::vector<double> ground(static_cast<std::size_t>(cfg.width) * cfg.height);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      ground[static_cast<std::size_t>(y) * cfg.width + x] =
          kGroundLevel + cfg.background_noise * (0.7 * coarse.at(x, y) + 0.3 * fine.at(x, y));
    }
  }

  // Crowns, composited by maximum so overlapping canopies stay order-free.
  std::vector<double> lum = ground;
  std::vector<double> crown_weight(ground.size(), 0.0);
  for (const Crown& crown : crowns) {
    const int r = static_cast<int>(std::ceil(crown.radius)) + 1;
    for (int y = std::max(0, crown.center.y - r); y <= std::min(cfg.height - 1, crown.center.y + r); ++y) {
      for (int x = std::max(0, crown.center.x - r); x <= std::min(cfg.width - 1, crown.center.x + r); ++x) {
        const double d = std::hypot(x - crown.center.x, y - crown.center.y);
        const double alpha = std::clamp(crown.radius + 0.5 - d, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        const double t = d / crown.radius;
        const double shade = crown.brightness * (1.0 - cfg.crown_contrast * t * t) *
                             (1.0 + cfg.crown_noise * hash_noise(texture_seed, x, y));
        const std::size_t i = static_cast<std::size_t>(y) * cfg.width + x;
        const double v = alpha * shade + (1.0 - alpha) * ground[i];
        if (v > lum[i]) {
          lum[i] = v;
          crown_weight[i] = alpha;
        }
      }
    }
  }

  std::vector<float> pixels(ground.size() * static_cast<std::size_t>(cfg.channels));
  for (std::size_t i = 0; i < ground.size(); ++i) {
    for (int c = 0; c < cfg.channels; ++c) {
      double v = lum[i];
      if (cfg.channels == 3) {
        const auto ci = static_cast<std::size_t>(c);
        const double tint = crown_weight[i] * kCrownTint[ci] + (1.0 - crown_weight[i]) * kGroundTint[ci];
        v *= tint;
      }
      pixels[i * static_cast<std::size_t>(cfg.channels) + static_cast<std::size_t>(c)] =
          static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }

  SyntheticScene scene{Raster(cfg.width, cfg.height, cfg.channels, std::move(pixels)),
                       {{}, cfg.width, cfg.height}};
  for (const Crown& crown : crowns) scene.truth.centers.push_back(crown.center);
  std::sort(scene.truth.centers.begin(), scene.truth.centers.end(),
            [](PixelPoint a, PixelPoint b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
  return scene;
}

std::string synth_scene_id(std::uint64_t seed, std::size_t index) {
  return "synth_" + std::to_string(seed) + "_" + std::to_string(index);
}

namespace {

bool clear_of(PixelPoint c, const GroundTruth& truth, double min_dist) {
  const double min_sq = min_dist * min_dist;
  return std::all_of(truth.centers.begin(), truth.centers.end(), [&](PixelPoint t) {
    const double dx = c.x - t.x;
    const double dy = c.y - t.y;
    return dx * dx + dy * dy >= min_sq;
  });
}

} // namespace

Dataset generate_crops(const SynthConfig& cfg, std::uint64_t seed, std::size_t n_palm,
                       std::size_t n_nopalm) {
  cfg.validate();
  constexpr int kSide = 40;
  constexpr std::size_t kPalmPerScene = 60;
  constexpr std::size_t kNegativePerScene = 100;
  constexpr std::size_t kMaxScenes = 1000;

  Dataset d{kSide, cfg.channels, {}, 1};
  if (n_palm > 0 && cfg.trees_max == 0) {
    throw InfeasibleError("palm crops requested but the config generates no trees");
  }
  const double exclusion = cfg.negative_exclusion();
  std::size_t palms = 0, negatives = 0;
  for (std::size_t s = 0; palms < n_palm || negatives < n_nopalm; ++s) {
    if (s >= kMaxScenes) {
      throw InfeasibleError("could not collect the requested crops from " +
                            std::to_string(kMaxScenes) + " scenes");
    }
    const std::uint64_t scene_seed = derive_seed(seed, 2 * s);
    const SyntheticScene scene = generate_scene(cfg, scene_seed);
    const std::string scene_id = synth_scene_id(seed, s);
    Rng rng(derive_seed(seed, 2 * s + 1));

    std::vector<PixelPoint> trees = scene.truth.centers;
    rng.shuffle(trees.begin(), trees.end());
    for (std::size_t i = 0; i < trees.size() && i < kPalmPerScene && palms < n_palm; ++i, ++palms) {
      add_crop(d, scene.image, trees[i], Label::Palm, scene_id);
    }

    const std::size_t want = std::min(kNegativePerScene, n_nopalm - negatives);
    // Between-tree windows: offsets from a random crown, outside every exclusion disk.
    const std::size_t between = trees.empty() ? 0 : want / 2;
    std::size_t placed = 0;
    for (std::size_t attempt = 0; placed < between && attempt < 1000 * between; ++attempt) {
      const PixelPoint t = trees[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(trees.size()) - 1))];
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double dist = rng.uniform(cfg.radius_min, static_cast<double>(cfg.spacing));
      const PixelPoint c{t.x + static_cast<int>(std::lround(dist * std::cos(angle))),
                         t.y + static_cast<int>(std::lround(dist * std::sin(angle)))};
      if (!window_fits(c, kSide, cfg.width, cfg.height) || !clear_of(c, scene.truth, exclusion)) continue;
      add_crop(d, scene.image, c, Label::NoPalm, scene_id);
      ++placed;
    }
    // Anywhere else in the scene, background included.
    for (auto& crop : sample_negatives(scene.image, scene.truth, want - placed, exclusion,
                                       rng.next(), kSide, scene_id)) {
      append_crop(d, std::move(crop));
    }
    negatives += want;
  }
  return d;
}

void write_truth_csv(const GroundTruth& truth, const std::filesystem::path& path) {
  std::vector<PixelPoint> sorted = truth.centers;
  std::sort(sorted.begin(), sorted.end(),
            [](PixelPoint a, PixelPoint b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "x_px,y_px\n";
  for (PixelPoint p : sorted) out << p.x << ',' << p.y << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

GroundTruth read_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open truth file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("x_px,y_px", 0) != 0) {
    throw FormatError("truth file lacks the x_px,y_px header: " + path.string());
  }
  GroundTruth truth;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    PixelPoint p;
    char comma = 0;
    std::istringstream fields(line);
    if (!(fields >> p.x >> comma >> p.y) || comma != ',') {
      throw FormatError("malformed truth record at " + path.string() + ":" + std::to_string(line_no));
    }
    truth.centers.push_back(p);
  }
  return truth;
}

} // namespace palm
