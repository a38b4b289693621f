#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace palm {

/// Pixel column/row in some raster.
struct PixelPoint {
  int x = 0;
  int y = 0;

  friend auto operator<=>(const PixelPoint&, const PixelPoint&) = default;
};

/// Row-major, channel-interleaved image with samples normalized to [0, 1].
///
/// Channels are 1 (panchromatic) or 3 (RGB). Sample (x, y, c) lives at
/// index (y * width + x) * channels + c.
class Raster {
public:
  Raster(int width, int height, int channels, float fill = 0.0f);
  Raster(int width, int height, int channels, std::vector<float> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }

  float at(int x, int y, int c = 0) const { return pixels_[index(x, y, c)]; }
  float& at(int x, int y, int c = 0) { return pixels_[index(x, y, c)]; }

  bool contains(PixelPoint p) const {
    return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_;
  }

  std::span<const float> pixels() const { return pixels_; }
  std::span<float> pixels() { return pixels_; }

  friend bool operator==(const Raster&, const Raster&) = default;

private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_;
  int height_;
  int channels_;
  std::vector<float> pixels_;
};

/// Copy of the w x h rectangle starting at top_left. Throws OutOfBoundsError
/// unless the rectangle lies fully inside r.
Raster crop(const Raster& r, PixelPoint top_left, int w, int h);

/// Replicates a single-channel raster into RGB; RGB input is returned as is.
Raster to_rgb(const Raster& r);

/// Reads PNG (8-bit gray or RGB), binary PGM (P5) or PPM (P6), chosen by
/// extension. 8-bit sample v maps to v / 255.
Raster load_raster(const std::filesystem::path& path);

/// Writes 8-bit samples (round(v * 255)) in the format implied by the
/// extension. PGM requires one channel and PPM three.
void save_raster(const Raster& r, const std::filesystem::path& path);

} // namespace palm
