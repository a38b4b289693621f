#include "support.hpp"

#include <atomic>
#include <fstream>
#include <iterator>
#include <unistd.h>

namespace palm::test {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("palm_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Raster random_raster(int w, int h, int channels, std::uint64_t seed) {
  Rng rng(seed);
  Raster r(w, h, channels);
  for (float& v : r.pixels()) v = static_cast<float>(rng.uniform());
  return r;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

} // namespace palm::test

#include "palm/synth.hpp"
#include "palm/train.hpp"

namespace palm::test {

const nn::Model& trained_model() {
  static const nn::Model model = [] {
    const Dataset d = generate_crops(SynthConfig{}, 1, 300, 500);
    nn::TrainConfig cfg;
    cfg.epochs = 12;
    cfg.seed = 1;
    return nn::train(nn::ModelConfig::lenet(), d, cfg).model;
  }();
  return model;
}

} // namespace palm::test
