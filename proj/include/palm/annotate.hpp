#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <string_view>

#include "palm/dataset.hpp"
#include "palm/raster.hpp"

namespace httplib {
class Server;
}

namespace palm {

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Backend of the crop-labeling tool. Serves the scenes under
/// `<workspace>/scenes` and persists crops to `<workspace>/dataset` after
/// every mutation. All mutations are serialized by one mutex.
class AnnotationService {
public:
  AnnotationService(std::filesystem::path workspace, std::uint64_t seed, int side = 40);

  ApiResponse list_scenes();                          // GET /api/scenes
  ApiResponse scene_image(std::string_view id);       // GET /api/scenes/{id}/image
  ApiResponse add_crop(std::string_view body);        // POST /api/crops
  ApiResponse delete_crop(std::string_view id);       // DELETE /api/crops/{id}
  ApiResponse sample_negatives(std::string_view body); // POST /api/negatives/sample
  ApiResponse stats();                                // GET /api/stats

  std::filesystem::path dataset_dir() const { return workspace_ / "dataset"; }

  /// Copy of the current dataset.
  Dataset snapshot();

private:
  struct SceneEntry {
    std::filesystem::path path;
    int width = 0;
    int height = 0;
    int channels = 0;
  };

  const Raster& scene_raster(const std::string& id); // caller holds mutex_
  void scan_scenes();

  std::filesystem::path workspace_;
  std::uint64_t seed_;
  std::uint64_t sample_calls_ = 0;
  std::map<std::string, SceneEntry> scenes_;
  std::map<std::string, Raster> cache_;
  Dataset dataset_;
  std::mutex mutex_;
};

/// Registers the /api routes and the static UI on `server`. `static_dir`
/// is served at "/" when it exists.
void register_routes(httplib::Server& server, AnnotationService& service,
                     const std::filesystem::path& static_dir);

/// Directory holding the bundled UI assets.
std::filesystem::path default_web_dir();

} // namespace palm
