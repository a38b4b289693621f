// Model file: one line of JSON metadata, then the weights blob.
//
//   {"format":"palmcount-model","format_version":1,"config":{...},
//    "layers":[{"type":...,"weight_shape":[...],"bias_shape":[...]}, ...],
//    "blob_bytes":N,"crc32":C}\n
//   <N bytes: little-endian float32, per layer weight then bias, row-major>

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <string>

#include "palm/errors.hpp"
#include "palm/model.hpp"

namespace palm::nn {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "palmcount-model";

json layer_to_json(const LayerSpec& layer) {
  json j{{"type", layer_name(layer)}};
  if (const auto* c = std::get_if<ConvLayer>(&layer)) {
    j["out_channels"] = c->out_channels;
    j["kernel"] = c->kernel;
  } else if (const auto* p = std::get_if<MaxPoolLayer>(&layer)) {
    j["size"] = p->size;
  } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
    j["units"] = d->units;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv") return ConvLayer{j.at("out_channels").get<int>(), j.at("kernel").get<int>()};
  if (type == "maxpool") return MaxPoolLayer{j.at("size").get<int>()};
  if (type == "dense") return DenseLayer{j.at("units").get<int>()};
  if (type == "relu") return ReluLayer{};
  if (type == "softmax") return SoftmaxLayer{};
  throw CorruptFileError("unknown layer type '" + type + "'");
}

void append_le(std::string& blob, const Tensor& t) {
  for (float v : t.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
  }
}

Tensor read_le(const std::string& blob, std::size_t& offset, const Shape& shape) {
  std::vector<float> data(element_count(shape));
  for (float& v : data) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + b])) << (8 * b);
    }
    v = std::bit_cast<float>(bits);
    offset += 4;
  }
  return Tensor(shape, std::move(data));
}

std::uint32_t checksum(const std::string& blob) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(blob.data()), static_cast<uInt>(blob.size())));
}

std::string config_to_json(const ModelConfig& cfg) {
  json layers = json::array();
  for (const auto& l : cfg.layers) layers.push_back(layer_to_json(l));
  return json{{"input_side", cfg.input_side},
              {"input_channels", cfg.input_channels},
              {"class_count", kClassCount},
              {"layers", layers}}
      .dump();
}

} // namespace

void save_model(const Model& m, const std::filesystem::path& path) {
  layer_shapes(m.config);
  if (m.params.size() != m.config.layers.size()) throw ShapeError("parameter/layer count mismatch");
  std::string blob;
  json layers = json::array();
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& p = m.params[i];
    if (!p.weight.all_finite() || !p.bias.all_finite()) {
      throw InvalidArgument("refusing to save non-finite parameters");
    }
    layers.push_back({{"type", layer_name(m.config.layers[i])},
                      {"weight_shape", p.weight.shape()},
                      {"bias_shape", p.bias.shape()}});
    append_le(blob, p.weight);
    append_le(blob, p.bias);
  }
  const json meta{{"format", kFormatName},
                  {"format_version", kFormatVersion},
                  {"config", json::parse(config_to_json(m.config))},
                  {"layers", layers},
                  {"blob_bytes", blob.size()},
                  {"crc32", checksum(blob)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << meta.dump() << '\n';
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw CorruptFileError("empty model file " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  json meta;
  try {
    meta = json::parse(header);
  } catch (const json::exception&) {
    throw CorruptFileError("model metadata is not valid JSON: " + path.string());
  }
  try {
    if (meta.at("format").get<std::string>() != kFormatName) {
      throw FormatError("not a model file: " + path.string());
    }
    const int version = meta.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw VersionMismatchError("model format version " + std::to_string(version) +
                                 " is not supported (expected " + std::to_string(kFormatVersion) +
                                 ")");
    }
    const auto expected = meta.at("blob_bytes").get<std::size_t>();
    if (blob.size() != expected) {
      throw CorruptFileError("model weights are " + std::to_string(blob.size()) +
                             " bytes, metadata declares " + std::to_string(expected) +
                             " (truncated file?)");
    }
    if (checksum(blob) != meta.at("crc32").get<std::uint32_t>()) {
      throw CorruptFileError("model weights fail their checksum: " + path.string());
    }

    const json& cj = meta.at("config");
    ModelConfig cfg;
    cfg.input_side = cj.at("input_side").get<int>();
    cfg.input_channels = cj.at("input_channels").get<int>();
    for (const auto& lj : cj.at("layers")) cfg.layers.push_back(layer_from_json(lj));
    layer_shapes(cfg);

    // Declared shapes must agree with what the config implies.
    const Model reference = build_model(cfg, 0);
    const json& lmeta = meta.at("layers");
    if (lmeta.size() != cfg.layers.size()) throw CorruptFileError("layer table length mismatch");
    Model m{cfg, {}};
    std::size_t offset = 0;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
      const auto wshape = lmeta[i].at("weight_shape").get<Shape>();
      const auto bshape = lmeta[i].at("bias_shape").get<Shape>();
      if (wshape != reference.params[i].weight.shape() ||
          bshape != reference.params[i].bias.shape()) {
        throw CorruptFileError("layer " + std::to_string(i) + " shape disagrees with config");
      }
      if (offset + 4 * (element_count(wshape) + element_count(bshape)) > blob.size()) {
        throw CorruptFileError("model weights end before layer " + std::to_string(i));
      }
      LayerParams<float> p;
      p.weight = read_le(blob, offset, wshape);
      p.bias = read_le(blob, offset, bshape);
      m.params.push_back(std::move(p));
    }
    if (offset != blob.size()) throw CorruptFileError("trailing bytes after model weights");
    return m;
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("malformed model metadata: ") + e.what());
  } catch (const ShapeError& e) {
    throw CorruptFileError(std::string("model config is inconsistent: ") + e.what());
  }
}

} // namespace palm::nn
