#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "palm/raster.hpp"

namespace palm {

struct GroundTruth;

enum class Label { NoPalm = 0, Palm = 1 };

std::string_view to_string(Label label);
/// Accepts "palm" and "no_palm"; throws InvalidArgument otherwise.
Label parse_label(std::string_view text);

/// Class index used by the classifier (no_palm = 0, palm = 1).
inline int class_index(Label label) { return static_cast<int>(label); }

struct LabeledCrop {
  std::string id;
  Raster crop;
  Label label = Label::NoPalm;
  std::string source_scene;
  PixelPoint center; // in source scene pixels
};

/// Labeled square crops sharing one side length and channel count.
struct Dataset {
  int side = 40;
  int channels = 1;
  std::vector<LabeledCrop> items;
  std::uint64_t next_id = 1; // ids are never reused, even after removal

  std::size_t count(Label label) const;
  const LabeledCrop* find(std::string_view id) const;
};

/// Top-left of the side x side window centered on `center`: center - side/2.
PixelPoint window_origin(PixelPoint center, int side);

/// True when the window centered on `center` lies inside a width x height scene.
bool window_fits(PixelPoint center, int side, int width, int height);

/// Extracts the window centered on `center`, assigns an id, and appends it.
/// Throws OutOfBoundsError when the window would leave the scene and
/// InvalidArgument on a channel mismatch.
const LabeledCrop& add_crop(Dataset& d, const Raster& scene, PixelPoint center, Label label,
                            std::string source_scene = {});

/// Appends an already-extracted crop, replacing its id with a fresh one.
const LabeledCrop& append_crop(Dataset& d, LabeledCrop crop);

/// Removes the crop with `id`; returns false when no such crop exists.
bool remove_crop(Dataset& d, std::string_view id);

/// Rejection-samples `count` no_palm windows whose centers are at least
/// `min_dist` px from every truth center. At most 1000 * count proposals are
/// drawn before giving up with InfeasibleError. Returned crops have no id yet.
std::vector<LabeledCrop> sample_negatives(const Raster& scene, const GroundTruth& truth,
                                          std::size_t count, double min_dist, std::uint64_t seed,
                                          int side = 40, std::string source_scene = {});

struct SplitSpec {
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
};

/// Seeded shuffle, then per class the first round(fraction * class_count)
/// items in shuffled order go to validation. Both halves keep shuffled order.
std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec);

/// Directory layout: manifest.jsonl (header line, then one record per crop)
/// and crops/<id>.png.
void save_dataset(const Dataset& d, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Incremental persistence used by the annotation service.
void save_manifest(const Dataset& d, const std::filesystem::path& dir);
void save_crop_image(const LabeledCrop& item, const std::filesystem::path& dir);
void remove_crop_image(std::string_view id, const std::filesystem::path& dir);

} // namespace palm
