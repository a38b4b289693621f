#include "palm/annotate.hpp"

#include <algorithm>
#include <fstream>
#include <httplib.h>
#include <iterator>
#include <json.hpp>

#include "palm/errors.hpp"
#include "palm/eval.hpp"
#include "palm/random.hpp"

namespace palm {

namespace {

using nlohmann::json;

ApiResponse json_response(int status, const json& body) { return {status, body.dump(), "application/json"}; }

ApiResponse error_response(int status, const std::string& reason) {
  return json_response(status, json{{"error", reason}});
}

bool is_image(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

std::string mime_for(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".pgm") return "image/x-portable-graymap";
  return "image/x-portable-pixmap";
}

} // namespace

AnnotationService::AnnotationService(std::filesystem::path workspace, std::uint64_t seed, int side)
    : workspace_(std::move(workspace)), seed_(seed) {
  if (!std::filesystem::is_directory(workspace_ / "scenes")) {
    throw IoError("workspace " + workspace_.string() + " has no scenes/ directory");
  }
  scan_scenes();
  if (std::filesystem::exists(dataset_dir() / "manifest.jsonl")) {
    dataset_ = load_dataset(dataset_dir());
    if (dataset_.side != side) {
      throw InvalidArgument("existing dataset uses " + std::to_string(dataset_.side) +
                            "px crops, not " + std::to_string(side));
    }
  } else {
    dataset_.side = side;
    dataset_.channels = scenes_.empty() ? 1 : scenes_.begin()->second.channels;
    save_dataset(dataset_, dataset_dir());
  }
}

void AnnotationService::scan_scenes() {
  for (const auto& entry : std::filesystem::directory_iterator(workspace_ / "scenes")) {
    if (!entry.is_regular_file() || !is_image(entry.path())) continue;
    const Raster r = load_raster(entry.path());
    scenes_[entry.path().stem().string()] = {entry.path(), r.width(), r.height(), r.channels()};
  }
}

const Raster& AnnotationService::scene_raster(const std::string& id) {
  auto it = cache_.find(id);
  if (it == cache_.end()) it = cache_.emplace(id, load_raster(scenes_.at(id).path)).first;
  return it->second;
}

Dataset AnnotationService::snapshot() {
  std::lock_guard lock(mutex_);
  return dataset_;
}

ApiResponse AnnotationService::list_scenes() {
  json list = json::array();
  for (const auto& [id, s] : scenes_) {
    list.push_back({{"scene_id", id}, {"width", s.width}, {"height", s.height}});
  }
  return json_response(200, list);
}

ApiResponse AnnotationService::scene_image(std::string_view id) {
  const auto it = scenes_.find(std::string(id));
  if (it == scenes_.end()) return error_response(404, "unknown scene '" + std::string(id) + "'");
  std::ifstream in(it->second.path, std::ios::binary);
  if (!in) return error_response(500, "cannot read scene file");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return {200, std::move(bytes), mime_for(it->second.path)};
}

ApiResponse AnnotationService::add_crop(std::string_view body) {
  std::string scene_id;
  PixelPoint center;
  Label label;
  try {
    const json req = json::parse(body);
    scene_id = req.at("scene_id").get<std::string>();
    center = {req.at("cx").get<int>(), req.at("cy").get<int>()};
    label = parse_label(req.at("label").get<std::string>());
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed request: ") + e.what());
  } catch (const InvalidArgument& e) {
    return error_response(400, e.what());
  }
  std::lock_guard lock(mutex_);
  if (!scenes_.contains(scene_id)) return error_response(404, "unknown scene '" + scene_id + "'");
  try {
    const LabeledCrop& item = palm::add_crop(dataset_, scene_raster(scene_id), center, label, scene_id);
    save_crop_image(item, dataset_dir());
    save_manifest(dataset_, dataset_dir());
    return json_response(201, json{{"crop_id", item.id}});
  } catch (const OutOfBoundsError& e) {
    return error_response(400, std::string("center out of bounds: ") + e.what());
  } catch (const InvalidArgument& e) {
    return error_response(400, e.what());
  }
}

ApiResponse AnnotationService::delete_crop(std::string_view id) {
  std::lock_guard lock(mutex_);
  if (!remove_crop(dataset_, id)) return error_response(404, "unknown crop '" + std::string(id) + "'");
  save_manifest(dataset_, dataset_dir());
  remove_crop_image(id, dataset_dir());
  return json_response(200, json{{"deleted", id}});
}

ApiResponse AnnotationService::sample_negatives(std::string_view body) {
  std::string scene_id;
  std::size_t count = 0;
  double min_dist = 0.0;
  try {
    const json req = json::parse(body);
    scene_id = req.at("scene_id").get<std::string>();
    const auto requested = req.at("count").get<long long>();
    if (requested < 0) return error_response(400, "count must not be negative");
    count = static_cast<std::size_t>(requested);
    min_dist = req.contains("min_dist") ? req.at("min_dist").get<double>() : dataset_.side / 2.0;
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed request: ") + e.what());
  }
  std::lock_guard lock(mutex_);
  if (!scenes_.contains(scene_id)) return error_response(404, "unknown scene '" + scene_id + "'");
  const Raster& scene = scene_raster(scene_id);
  // Crowns labeled so far on this scene stand in for its ground truth.
  GroundTruth truth{{}, scene.width(), scene.height()};
  for (const auto& item : dataset_.items) {
    if (item.label == Label::Palm && item.source_scene == scene_id) truth.centers.push_back(item.center);
  }
  try {
    auto crops = palm::sample_negatives(scene, truth, count, min_dist,
                                        derive_seed(seed_, sample_calls_++), dataset_.side, scene_id);
    json ids = json::array();
    for (auto& c : crops) {
      const LabeledCrop& item = append_crop(dataset_, std::move(c));
      save_crop_image(item, dataset_dir());
      ids.push_back(item.id);
    }
    save_manifest(dataset_, dataset_dir());
    return json_response(201, json{{"crop_ids", ids}});
  } catch (const InfeasibleError& e) {
    return error_response(422, e.what());
  } catch (const InvalidArgument& e) {
    return error_response(400, e.what());
  }
}

ApiResponse AnnotationService::stats() {
  std::lock_guard lock(mutex_);
  return json_response(200, json{{"palm_count", dataset_.count(Label::Palm)},
                                 {"no_palm_count", dataset_.count(Label::NoPalm)}});
}

std::filesystem::path default_web_dir() { return PALM_WEB_DIR; }

void register_routes(httplib::Server& server, AnnotationService& service,
                     const std::filesystem::path& static_dir) {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get("/api/scenes", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.list_scenes());
  });
  server.Get(R"(/api/scenes/([^/]+)/image)",
             [&service, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, service.scene_image(req.matches[1].str()));
             });
  server.Post("/api/crops", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.add_crop(req.body));
  });
  server.Delete(R"(/api/crops/([^/]+))",
                [&service, reply](const httplib::Request& req, httplib::Response& res) {
                  reply(res, service.delete_crop(req.matches[1].str()));
                });
  server.Post("/api/negatives/sample",
              [&service, reply](const httplib::Request& req, httplib::Response& res) {
                reply(res, service.sample_negatives(req.body));
              });
  server.Get("/api/stats", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.stats());
  });
  if (std::filesystem::is_directory(static_dir)) server.set_mount_point("/", static_dir.string());
}

} // namespace palm
