#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "palm/errors.hpp"
#include "palm/raster.hpp"

namespace palm {

namespace {

enum class ImageFormat { Png, Pgm, Ppm };

ImageFormat format_for(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (ext == ".png") return ImageFormat::Png;
  if (ext == ".pgm") return ImageFormat::Pgm;
  if (ext == ".ppm") return ImageFormat::Ppm;
  throw FormatError("unsupported image extension '" + ext + "' for " + path.string());
}

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

Raster from_bytes(int width, int height, int channels, const std::vector<std::uint8_t>& bytes) {
  std::vector<float> pixels(bytes.size());
  std::transform(bytes.begin(), bytes.end(), pixels.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return Raster(width, height, channels, std::move(pixels));
}

std::vector<std::uint8_t> to_bytes(const Raster& r) {
  std::vector<std::uint8_t> bytes(r.pixels().size());
  std::transform(r.pixels().begin(), r.pixels().end(), bytes.begin(), quantize);
  return bytes;
}

// ---- PNG -------------------------------------------------------------------

Raster load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string msg = image.message;
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw FormatError("16-bit PNG is not supported: " + path.string());
  }
  const int channels = (image.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw FormatError("zero-dimension image: " + path.string());
  }
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return from_bytes(static_cast<int>(image.width), static_cast<int>(image.height), channels,
                    bytes);
}

void save_png(const Raster& r, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(r.width());
  image.height = static_cast<png_uint_32>(r.height());
  image.format = r.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto bytes = to_bytes(r);
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

// ---- PNM -------------------------------------------------------------------

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  // Skips whitespace and '#' comments between header fields.
  for (;;) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  long value = -1;
  if (!(in >> value) || value < 0 || value > 1'000'000) {
    throw FormatError("malformed PNM header in " + path.string());
  }
  return static_cast<int>(value);
}

Raster load_pnm(const std::filesystem::path& path, ImageFormat expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw FormatError("not a binary PGM/PPM file: " + path.string());
  }
  const int channels = magic[1] == '6' ? 3 : 1;
  if ((expected == ImageFormat::Pgm) != (channels == 1)) {
    throw FormatError("PNM magic does not match extension: " + path.string());
  }
  const int width = read_header_int(in, path);
  const int height = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (width == 0 || height == 0) throw FormatError("zero-dimension image: " + path.string());
  if (maxval != 255) {
    throw FormatError("only 8-bit (maxval 255) PNM is supported: " + path.string());
  }
  in.get(); // single whitespace byte before the raster
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw CorruptFileError("truncated PNM raster: " + path.string());
  }
  return from_bytes(width, height, channels, bytes);
}

void save_pnm(const Raster& r, const std::filesystem::path& path, ImageFormat format) {
  const int channels = format == ImageFormat::Ppm ? 3 : 1;
  if (r.channels() != channels) {
    throw InvalidArgument(std::string(format == ImageFormat::Ppm ? "PPM" : "PGM") + " needs " +
                          std::to_string(channels) + " channel(s), raster has " +
                          std::to_string(r.channels()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (channels == 3 ? "P6" : "P5") << '\n' << r.width() << ' ' << r.height() << "\n255\n";
  const auto bytes = to_bytes(r);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

} // namespace

Raster load_raster(const std::filesystem::path& path) {
  const ImageFormat format = format_for(path);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw IoError("cannot read image " + path.string());
  }
  return format == ImageFormat::Png ? load_png(path) : load_pnm(path, format);
}

void save_raster(const Raster& r, const std::filesystem::path& path) {
  const ImageFormat format = format_for(path);
  if (format == ImageFormat::Png) {
    save_png(r, path);
  } else {
    save_pnm(r, path, format);
  }
}

} // namespace palm
