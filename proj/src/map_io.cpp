#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "palm/detector.hpp"
#include "palm/errors.hpp"

namespace palm {

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

} // namespace

void write_confidence_pgm16(const ConfidenceMap& map, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "P5\n" << map.cols << ' ' << map.rows << "\n65535\n";
  std::string bytes;
  bytes.reserve(map.values.size() * 2);
  for (float v : map.values) {
    const auto s = static_cast<std::uint16_t>(
        std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 65535.0));
    bytes.push_back(static_cast<char>(s >> 8)); // PGM samples are big-endian
    bytes.push_back(static_cast<char>(s & 0xFF));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_confidence_text(const ConfidenceMap& map, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  char buf[32];
  for (int y = 0; y < map.rows; ++y) {
    for (int x = 0; x < map.cols; ++x) {
      std::snprintf(buf, sizeof buf, "%s%.6f", x ? " " : "", static_cast<double>(map.at(x, y)));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_peaks_csv(const PeakList& peaks, const std::filesystem::path& path) {
  std::vector<Peak> sorted = peaks.peaks;
  std::stable_sort(sorted.begin(), sorted.end(), [](const Peak& a, const Peak& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  auto out = open_for_write(path);
  out << "x_px,y_px,confidence\n";
  char buf[64];
  for (const Peak& p : sorted) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f\n", p.x, p.y, static_cast<double>(p.confidence));
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Peak> read_peaks_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open peak file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("x_px,y_px,confidence", 0) != 0) {
    throw FormatError("peak file lacks the x_px,y_px,confidence header: " + path.string());
  }
  std::vector<Peak> peaks;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    Peak p;
    char c1 = 0, c2 = 0;
    std::istringstream fields(line);
    if (!(fields >> p.x >> c1 >> p.y >> c2 >> p.confidence) || c1 != ',' || c2 != ',') {
      throw FormatError("malformed peak record at " + path.string() + ":" + std::to_string(line_no));
    }
    peaks.push_back(p);
  }
  return peaks;
}

} // namespace palm
