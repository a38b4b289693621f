#include "palm/detector.hpp"

#include <algorithm>
#include <deque>
#include <string>
#include <thread>

#include "palm/errors.hpp"
#include "palm/train.hpp"

namespace palm {

ConfidenceMap make_map(const MapGeometry& geometry, float fill) {
  if (geometry.window_side < 1 || geometry.stride < 1) {
    throw InvalidArgument("window side and stride must be positive");
  }
  if (geometry.scene_width < geometry.window_side || geometry.scene_height < geometry.window_side) {
    throw InvalidArgument("scene " + std::to_string(geometry.scene_width) + "x" +
                          std::to_string(geometry.scene_height) + " is smaller than the " +
                          std::to_string(geometry.window_side) + "px window");
  }
  ConfidenceMap map{geometry, geometry.cols(), geometry.rows(), {}};
  map.values.assign(static_cast<std::size_t>(map.cols) * map.rows, fill);
  return map;
}

PixelPoint cell_to_pixel(int col, int row, const MapGeometry& g) {
  if (col < 0 || row < 0 || col >= g.cols() || row >= g.rows()) {
    throw OutOfBoundsError("cell (" + std::to_string(col) + "," + std::to_string(row) +
                           ") is outside the " + std::to_string(g.cols()) + "x" +
                           std::to_string(g.rows()) + " map");
  }
  return {col * g.stride + g.window_side / 2, row * g.stride + g.window_side / 2};
}

int DetectorParams::resolved_kernel_side() const {
  if (kernel_side) return *kernel_side;
  int k = window_side / (3 * stride);
  if (k % 2 == 0) --k;
  return std::max(k, 1);
}

int DetectorParams::resolved_nms_radius() const {
  if (nms_radius) return *nms_radius;
  return std::max(window_side / (2 * stride), 1);
}

void DetectorParams::validate() const {
  if (window_side < 1) throw InvalidArgument("window side must be at least 1");
  if (stride < 1) throw InvalidArgument("stride must be at least 1");
  const int k = resolved_kernel_side();
  if (k < 1 || k % 2 == 0) throw InvalidArgument("smoothing kernel side must be odd and >= 1");
  if (resolved_nms_radius() < 1) throw InvalidArgument("nms radius must be at least 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidArgument("threshold must lie in [0,1]");
  if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
  if (workers < 0) throw InvalidArgument("worker count must not be negative");
}

ConfidenceMap slide(const nn::Model& m, const Raster& scene, const DetectorParams& p) {
  p.validate();
  if (m.config.input_side != p.window_side) {
    throw InvalidArgument("model input side " + std::to_string(m.config.input_side) +
                          " differs from window side " + std::to_string(p.window_side));
  }
  if (scene.channels() != m.config.input_channels) {
    throw InvalidArgument("scene has " + std::to_string(scene.channels()) +
                          " channel(s), model expects " + std::to_string(m.config.input_channels));
  }
  ConfidenceMap map = make_map({p.window_side, p.stride, scene.width(), scene.height()});

  const auto side = static_cast<std::size_t>(p.window_side);
  const auto channels = static_cast<std::size_t>(scene.channels());
  const std::size_t per = channels * side * side;
  const std::size_t total = map.values.size();
  const std::size_t batch = static_cast<std::size_t>(p.batch_size);
  const std::size_t chunks = (total + batch - 1) / batch;

  // Each worker takes every n-th chunk and writes only its own cells.
  auto work = [&](std::size_t first, std::size_t step) {
    std::vector<float> buffer;
    for (std::size_t chunk = first; chunk < chunks; chunk += step) {
      const std::size_t begin = chunk * batch;
      const std::size_t count = std::min(batch, total - begin);
      buffer.resize(count * per);
      for (std::size_t i = 0; i < count; ++i) {
        const int col = static_cast<int>((begin + i) % static_cast<std::size_t>(map.cols));
        const int row = static_cast<int>((begin + i) / static_cast<std::size_t>(map.cols));
        const Raster window = crop(scene, {col * p.stride, row * p.stride}, p.window_side, p.window_side);
        nn::to_planar(window, buffer.data() + i * per);
      }
      const nn::Tensor probs = nn::forward(m, nn::Tensor({count, channels, side, side}, buffer));
      for (std::size_t i = 0; i < count; ++i) {
        map.values[begin + i] = std::clamp(probs[i * nn::kClassCount + nn::kPalmClass], 0.0f, 1.0f);
      }
    }
  };

  std::size_t workers = p.workers > 0 ? static_cast<std::size_t>(p.workers)
                                      : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(chunks, 1));
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  return map;
}

namespace {

// Reflect index into [0, n): -1 -> 0, -2 -> 1, n -> n-1, periodic beyond.
int reflect(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

} // namespace

ConfidenceMap box_filter(const ConfidenceMap& map, int kernel_side) {
  if (kernel_side < 1 || kernel_side % 2 == 0) {
    throw InvalidArgument("box filter kernel side must be odd and >= 1, got " +
                          std::to_string(kernel_side));
  }
  if (kernel_side == 1) return map;
  const int h = kernel_side / 2;
  const int pw = map.cols + 2 * h;
  const int ph = map.rows + 2 * h;
  // Summed-area table over the reflect-padded map, with a zero row/column.
  std::vector<double> sat(static_cast<std::size_t>(pw + 1) * (ph + 1), 0.0);
  auto at = [&](int x, int y) -> double& { return sat[static_cast<std::size_t>(y) * (pw + 1) + x]; };
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect(y - h, map.rows);
    double row_sum = 0.0;
    for (int x = 0; x < pw; ++x) {
      row_sum += map.at(reflect(x - h, map.cols), sy);
      at(x + 1, y + 1) = at(x + 1, y) + row_sum;
    }
  }
  ConfidenceMap out = map;
  const double area = static_cast<double>(kernel_side) * kernel_side;
  for (int y = 0; y < map.rows; ++y) {
    for (int x = 0; x < map.cols; ++x) {
      const int x1 = x + kernel_side;
      const int y1 = y + kernel_side;
      const double sum = at(x1, y1) - at(x, y1) - at(x1, y) + at(x, y);
      out.at(x, y) = static_cast<float>(std::clamp(sum / area, 0.0, 1.0));
    }
  }
  return out;
}

namespace {

// Sliding-window maximum over [i - r, i + r] along a line, via a monotone deque.
void running_max(const float* in, float* out, int n, int r, int in_stride, int out_stride) {
  std::deque<int> dq;
  int next = 0;
  for (int i = 0; i < n; ++i) {
    const int hi = std::min(n - 1, i + r);
    for (; next <= hi; ++next) {
      while (!dq.empty() && in[dq.back() * in_stride] <= in[next * in_stride]) dq.pop_back();
      dq.push_back(next);
    }
    while (dq.front() < i - r) dq.pop_front();
    out[i * out_stride] = in[dq.front() * in_stride];
  }
}

} // namespace

PeakList nms(const ConfidenceMap& map, int radius, double threshold) {
  if (radius < 1) throw InvalidArgument("nms radius must be at least 1");
  const int cols = map.cols;
  const int rows = map.rows;
  // Separable neighborhood maximum: along rows, then along columns.
  std::vector<float> row_max(map.values.size()), nbr_max(map.values.size());
  for (int y = 0; y < rows; ++y) {
    const std::size_t off = static_cast<std::size_t>(y) * cols;
    running_max(map.values.data() + off, row_max.data() + off, cols, radius, 1, 1);
  }
  for (int x = 0; x < cols; ++x) {
    running_max(row_max.data() + x, nbr_max.data() + x, rows, radius, cols, cols);
  }

  PeakList out{{}, map.geometry.scene_width, map.geometry.scene_height};
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const float v = map.at(x, y);
      if (static_cast<double>(v) < threshold || v < nbr_max[static_cast<std::size_t>(y) * cols + x]) continue;
      // Plateau: an equal cell earlier in (row, col) order within the radius wins.
      bool earlier_tie = false;
      for (int yy = std::max(0, y - radius); yy <= y && !earlier_tie; ++yy) {
        const int x_end = yy < y ? std::min(cols - 1, x + radius) : x - 1;
        for (int xx = std::max(0, x - radius); xx <= x_end; ++xx) {
          if (map.at(xx, yy) == v) {
            earlier_tie = true;
            break;
          }
        }
      }
      if (earlier_tie) continue;
      const PixelPoint px = cell_to_pixel(x, y, map.geometry);
      out.peaks.push_back({px.x, px.y, v});
    }
  }
  // Row-major scan already yields (y, x) order because cell_to_pixel is monotone.
  return out;
}

Detection detect(const nn::Model& m, const Raster& scene, const DetectorParams& p) {
  p.validate();
  Detection d{slide(m, scene, p), {}, {}};
  d.smoothed = box_filter(d.raw, p.resolved_kernel_side());
  d.peaks = nms(d.smoothed, p.resolved_nms_radius(), p.threshold);
  return d;
}

} // namespace palm
