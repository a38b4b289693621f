#include "palm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "palm/errors.hpp"
#include "palm/eval.hpp"
#include "palm/random.hpp"

namespace palm {

namespace {

using nlohmann::ordered_json;

constexpr const char* kManifestName = "manifest.jsonl";
constexpr const char* kCropDir = "crops";
constexpr int kManifestVersion = 1;

std::string make_id(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "crop_%06llu", static_cast<unsigned long long>(n));
  return buf;
}

std::filesystem::path crop_path(const std::filesystem::path& dir, std::string_view id) {
  return dir / kCropDir / (std::string(id) + ".png");
}

} // namespace

std::string_view to_string(Label label) { return label == Label::Palm ? "palm" : "no_palm"; }

Label parse_label(std::string_view text) {
  if (text == "palm") return Label::Palm;
  if (text == "no_palm") return Label::NoPalm;
  throw InvalidArgument("unknown label '" + std::string(text) + "' (expected palm or no_palm)");
}

std::size_t Dataset::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(
      items.begin(), items.end(), [label](const LabeledCrop& c) { return c.label == label; }));
}

const LabeledCrop* Dataset::find(std::string_view id) const {
  const auto it = std::find_if(items.begin(), items.end(),
                               [id](const LabeledCrop& c) { return c.id == id; });
  return it == items.end() ? nullptr : &*it;
}

PixelPoint window_origin(PixelPoint center, int side) {
  return {center.x - side / 2, center.y - side / 2};
}

bool window_fits(PixelPoint center, int side, int width, int height) {
  const PixelPoint o = window_origin(center, side);
  return o.x >= 0 && o.y >= 0 && o.x + side <= width && o.y + side <= height;
}

const LabeledCrop& append_crop(Dataset& d, LabeledCrop crop) {
  if (crop.crop.width() != d.side || crop.crop.height() != d.side) {
    throw InvalidArgument("crop is " + std::to_string(crop.crop.width()) + "x" +
                          std::to_string(crop.crop.height()) + ", dataset side is " +
                          std::to_string(d.side));
  }
  if (crop.crop.channels() != d.channels) {
    throw InvalidArgument("crop has " + std::to_string(crop.crop.channels()) +
                          " channel(s), dataset has " + std::to_string(d.channels));
  }
  crop.id = make_id(d.next_id++);
  d.items.push_back(std::move(crop));
  return d.items.back();
}

const LabeledCrop& add_crop(Dataset& d, const Raster& scene, PixelPoint center, Label label,
                            std::string source_scene) {
  if (!window_fits(center, d.side, scene.width(), scene.height())) {
    throw OutOfBoundsError("a " + std::to_string(d.side) + "px window centered at (" +
                           std::to_string(center.x) + "," + std::to_string(center.y) +
                           ") leaves the " + std::to_string(scene.width()) + "x" +
                           std::to_string(scene.height()) + " scene");
  }
  LabeledCrop item{{}, crop(scene, window_origin(center, d.side), d.side, d.side), label,
                   std::move(source_scene), center};
  return append_crop(d, std::move(item));
}

bool remove_crop(Dataset& d, std::string_view id) {
  const auto it = std::find_if(d.items.begin(), d.items.end(),
                               [id](const LabeledCrop& c) { return c.id == id; });
  if (it == d.items.end()) return false;
  d.items.erase(it);
  return true;
}

std::vector<LabeledCrop> sample_negatives(const Raster& scene, const GroundTruth& truth,
                                          std::size_t count, double min_dist, std::uint64_t seed,
                                          int side, std::string source_scene) {
  if (!(min_dist > 0.0)) throw InvalidArgument("min_dist must be positive");
  if (side > scene.width() || side > scene.height()) {
    throw InfeasibleError("scene is smaller than one window");
  }
  std::vector<LabeledCrop> out;
  if (count == 0) return out;
  Rng rng(seed);
  const int half = side / 2;
  const std::size_t cap = 1000 * count;
  const double min_sq = min_dist * min_dist;
  for (std::size_t proposals = 0; out.size() < count; ++proposals) {
    if (proposals >= cap) {
      throw InfeasibleError("found only " + std::to_string(out.size()) + " of " +
                            std::to_string(count) + " negative windows after " +
                            std::to_string(cap) + " proposals (min_dist " +
                            std::to_string(min_dist) + ")");
    }
    const PixelPoint c{static_cast<int>(rng.integer(half, scene.width() - side + half)),
                       static_cast<int>(rng.integer(half, scene.height() - side + half))};
    const bool clear = std::all_of(truth.centers.begin(), truth.centers.end(), [&](PixelPoint t) {
      const double dx = c.x - t.x;
      const double dy = c.y - t.y;
      return dx * dx + dy * dy >= min_sq;
    });
    if (!clear) continue;
    out.push_back({{}, crop(scene, window_origin(c, side), side, side), Label::NoPalm, source_scene, c});
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec) {
  if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0)) {
    throw InvalidArgument("validation fraction must lie strictly between 0 and 1");
  }
  const std::size_t palm = d.count(Label::Palm);
  const std::size_t no_palm = d.count(Label::NoPalm);
  if (palm < 2 || no_palm < 2) {
    throw InvalidArgument("split needs at least 2 items per class (palm " + std::to_string(palm) +
                          ", no_palm " + std::to_string(no_palm) + ")");
  }
  std::vector<std::size_t> order(d.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order.begin(), order.end());

  auto quota = [&](std::size_t n) {
    return static_cast<std::size_t>(std::lround(spec.validation_fraction * static_cast<double>(n)));
  };
  std::size_t want[2] = {quota(no_palm), quota(palm)};
  Dataset train{d.side, d.channels, {}, d.next_id};
  Dataset validation{d.side, d.channels, {}, d.next_id};
  for (std::size_t i : order) {
    const LabeledCrop& item = d.items[i];
    std::size_t& left = want[class_index(item.label)];
    if (left > 0) {
      --left;
      validation.items.push_back(item);
    } else {
      train.items.push_back(item);
    }
  }
  return {std::move(train), std::move(validation)};
}

void save_manifest(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / kManifestName;
  const auto tmp = dir / (std::string(kManifestName) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << ordered_json{{"format", "palmcount-dataset"},
                        {"version", kManifestVersion},
                        {"side", d.side},
                        {"channels", d.channels},
                        {"next_id", d.next_id}}
               .dump()
        << '\n';
    for (const auto& item : d.items) {
      out << ordered_json{{"id", item.id},
                          {"label", to_string(item.label)},
                          {"source_scene", item.source_scene},
                          {"center_x", item.center.x},
                          {"center_y", item.center.y}}
                 .dump()
          << '\n';
    }
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_crop_image(const LabeledCrop& item, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / kCropDir);
  save_raster(item.crop, crop_path(dir, item.id));
}

void remove_crop_image(std::string_view id, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::remove(crop_path(dir, id), ec);
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / kCropDir);
  for (const auto& item : d.items) save_crop_image(item, dir);
  save_manifest(d, dir);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw IoError("missing dataset manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CorruptFileError("empty dataset manifest " + path.string());
  Dataset d;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format").get<std::string>() != "palmcount-dataset") {
      throw FormatError("not a dataset manifest: " + path.string());
    }
    if (header.at("version").get<int>() != kManifestVersion) {
      throw VersionMismatchError("unsupported dataset manifest version");
    }
    d.side = header.at("side").get<int>();
    d.channels = header.at("channels").get<int>();
    d.next_id = header.at("next_id").get<std::uint64_t>();
    if (d.side < 1 || (d.channels != 1 && d.channels != 3)) {
      throw CorruptFileError("dataset header has invalid side/channels");
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      LabeledCrop item{rec.at("id").get<std::string>(),
                       Raster(1, 1, 1),
                       parse_label(rec.at("label").get<std::string>()),
                       rec.at("source_scene").get<std::string>(),
                       {rec.at("center_x").get<int>(), rec.at("center_y").get<int>()}};
      if (d.find(item.id)) throw CorruptFileError("duplicate crop id " + item.id);
      const auto image = crop_path(dir, item.id);
      if (!std::filesystem::is_regular_file(image)) {
        throw IoError("crop " + item.id + " is listed in the manifest but " + image.string() +
                      " is missing");
      }
      try {
        item.crop = load_raster(image);
      } catch (const Error& e) {
        throw CorruptFileError("crop " + item.id + " is unreadable: " + e.what());
      }
      if (item.crop.width() != d.side || item.crop.height() != d.side ||
          item.crop.channels() != d.channels) {
        throw CorruptFileError("crop " + item.id + " does not match the dataset side/channels");
      }
      d.items.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("malformed dataset manifest " + path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw CorruptFileError("malformed dataset manifest " + path.string() + ": " + e.what());
  }
  return d;
}

} // namespace palm
