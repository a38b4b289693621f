#include "palm/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "palm/errors.hpp"

namespace palm {

namespace {

void check_dimensions(int width, int height, int channels) {
  if (width < 1 || height < 1) {
    throw InvalidArgument("raster dimensions must be positive, got " + std::to_string(width) +
                          "x" + std::to_string(height));
  }
  if (channels != 1 && channels != 3) {
    throw InvalidArgument("raster channels must be 1 or 3, got " + std::to_string(channels));
  }
}

} // namespace

Raster::Raster(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  check_dimensions(width, height, channels);
  if (!(fill >= 0.0f && fill <= 1.0f)) throw InvalidArgument("fill value outside [0,1]");
  pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Raster::Raster(int width, int height, int channels, std::vector<float> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
  check_dimensions(width, height, channels);
  if (pixels_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw InvalidArgument("pixel buffer length does not match raster dimensions");
  }
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("pixel value outside [0,1]");
  }
}

Raster crop(const Raster& r, PixelPoint top_left, int w, int h) {
  if (w < 1 || h < 1 || top_left.x < 0 || top_left.y < 0 || top_left.x + w > r.width() ||
      top_left.y + h > r.height()) {
    throw OutOfBoundsError("crop " + std::to_string(w) + "x" + std::to_string(h) + " at (" +
                           std::to_string(top_left.x) + "," + std::to_string(top_left.y) +
                           ") leaves the " + std::to_string(r.width()) + "x" +
                           std::to_string(r.height()) + " raster");
  }
  const int c = r.channels();
  std::vector<float> out(static_cast<std::size_t>(w) * h * c);
  const auto src = r.pixels();
  for (int j = 0; j < h; ++j) {
    const auto row = src.begin() +
                     (static_cast<std::ptrdiff_t>(top_left.y + j) * r.width() + top_left.x) * c;
    std::copy(row, row + static_cast<std::ptrdiff_t>(w) * c,
              out.begin() + static_cast<std::ptrdiff_t>(j) * w * c);
  }
  return Raster(w, h, c, std::move(out));
}

Raster to_rgb(const Raster& r) {
  if (r.channels() == 3) return r;
  std::vector<float> out;
  out.reserve(r.pixels().size() * 3);
  for (float v : r.pixels()) out.insert(out.end(), {v, v, v});
  return Raster(r.width(), r.height(), 3, std::move(out));
}

} // namespace palm
