#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdt/errors.hpp"
#include "sdt/model.hpp"

namespace sdt {

// SDTD container, version 1:
//   bytes 0..3   magic "SDTD"
//   bytes 4..7   format version, uint32 little-endian
//   bytes 8..11  JSON header length, uint32 little-endian
//   header       UTF-8 JSON: {"config": {...}, "tensors": [{name, shape}...]}
//   payload      raw float32 little-endian blobs, in tensor-manifest order
//
// Kernel blobs are ordered [out_channel][in_channel][row][col]; manifest
// shapes are [kh, kw, cin, cout] for kernels and [cout] for vectors.
inline constexpr char kModelMagic[4] = {'S', 'D', 'T', 'D'};
inline constexpr std::uint32_t kModelVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "SDTD serialisation assumes a little-endian host");

namespace model_io_detail {

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["scale"] = cfg.scale;
  j["feature_layers"] = cfg.feature_layers;
  j["first_filters"] = cfg.first_filters;
  j["last_filters"] = cfg.last_filters;
  j["filter_decay_gamma"] = cfg.filter_decay_gamma;
  j["activator"] = to_string(cfg.activator);
  j["recon_a1"] = cfg.recon_a1;
  j["recon_b1"] = cfg.recon_b1;
  j["recon_b2"] = cfg.recon_b2;
  j["dropout_keep"] = cfg.dropout_keep;
  if (cfg.feature_filters.empty())
    j["feature_filters"] = nullptr;
  else
    j["feature_filters"] = cfg.feature_filters;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg;
    cfg.scale = j.at("scale").get<int>();
    cfg.feature_layers = j.at("feature_layers").get<int>();
    cfg.first_filters = j.at("first_filters").get<int>();
    cfg.last_filters = j.at("last_filters").get<int>();
    cfg.filter_decay_gamma = j.at("filter_decay_gamma").get<double>();
    cfg.activator = activator_from_string(j.at("activator").get<std::string>());
    cfg.recon_a1 = j.at("recon_a1").get<int>();
    cfg.recon_b1 = j.at("recon_b1").get<int>();
    cfg.recon_b2 = j.at("recon_b2").get<int>();
    cfg.dropout_keep = j.at("dropout_keep").get<double>();
    if (!j.at("feature_filters").is_null())
      cfg.feature_filters = j.at("feature_filters").get<std::vector<int>>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model header is malformed: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model header is malformed: ") + e.what());
  }
}

struct TensorEntry {
  std::string name;
  std::vector<int> shape;
  const float* data = nullptr;  // save path
  float* dst = nullptr;         // load path
  Eigen::Index count = 0;
};

// Canonical tensor manifest for a weight set: every layer contributes
// kernel, bias and (when present) prelu, in layer order.
inline std::vector<TensorEntry> tensor_manifest(ModelWeights<float>& w) {
  std::vector<TensorEntry> entries;
  w.for_each_layer([&](const std::string& name, ConvLayer<float>& l) {
    TensorEntry k{name + ".kernel",
                  {l.kh, l.kw, l.in_channels, l.out_channels},
                  l.kernel.data(),
                  l.kernel.data(),
                  l.kernel.size()};
    entries.push_back(std::move(k));
    TensorEntry b{name + ".bias", {l.out_channels}, l.bias.data(),
                  l.bias.data(), l.bias.size()};
    entries.push_back(std::move(b));
    if (l.prelu.size()) {
      TensorEntry p{name + ".prelu", {l.out_channels}, l.prelu.data(),
                    l.prelu.data(), l.prelu.size()};
      entries.push_back(std::move(p));
    }
  });
  return entries;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace model_io_detail

// Serialises weights + config to an SDTD file. The write is atomic (temp
// file, flush, fsync, rename) and byte-deterministic for identical inputs.
inline void save_model(const std::string& path, const ModelWeights<float>& w,
                       const ModelConfig& cfg) {
  cfg.validate();
  // tensor_manifest is the single source of the name/shape/order scheme for
  // both directions; the save path only ever reads through the entries.
  auto& mutable_w = const_cast<ModelWeights<float>&>(w);
  const std::vector<model_io_detail::TensorEntry> entries =
      model_io_detail::tensor_manifest(mutable_w);

  nlohmann::json header;
  header["config"] = model_io_detail::config_to_json(cfg);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : entries)
    tensors.push_back({{"name", e.name}, {"shape", e.shape}});
  header["tensors"] = std::move(tensors);
  const std::string header_text = header.dump();

  const std::string tmp = path + ".tmp";
  std::unique_ptr<std::FILE, model_io_detail::FileCloser> file(
      std::fopen(tmp.c_str(), "wb"));
  if (!file) throw IoError("cannot open '" + tmp + "' for writing");

  const auto put = [&](const void* data, std::size_t size) {
    if (std::fwrite(data, 1, size, file.get()) != size) {
      std::remove(tmp.c_str());
      throw IoError("short write to '" + tmp + "'");
    }
  };
  put(kModelMagic, 4);
  const std::uint32_t version = kModelVersion;
  put(&version, 4);
  const std::uint32_t header_len =
      static_cast<std::uint32_t>(header_text.size());
  put(&header_len, 4);
  put(header_text.data(), header_text.size());
  for (const auto& e : entries)
    put(e.data, static_cast<std::size_t>(e.count) * sizeof(float));

  if (std::fflush(file.get()) != 0 || fsync(fileno(file.get())) != 0) {
    std::remove(tmp.c_str());
    throw IoError("failed to flush '" + tmp + "'");
  }
  file.reset();
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("failed to move '" + tmp + "' into place");
  }
}

// Loads an SDTD file, validating magic, version, header schema, tensor
// manifest (against the config) and payload size. Nothing escapes on error.
inline std::pair<ModelWeights<float>, ModelConfig> load_model(
    const std::string& path) {
  std::unique_ptr<std::FILE, model_io_detail::FileCloser> file(
      std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open '" + path + "' for reading");
  std::string bytes;
  char buf[65536];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, file.get())) > 0)
    bytes.append(buf, got);
  if (std::ferror(file.get()))
    throw IoError("failed to read '" + path + "'");

  if (bytes.size() < 12 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw FormatError("'" + path +
                      "' is not an SDTD model file (expected magic \"SDTD\")");
  std::uint32_t version = 0, header_len = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&header_len, bytes.data() + 8, 4);
  if (version != kModelVersion)
    throw VersionError("unsupported SDTD version " + std::to_string(version) +
                       " (supported: " + std::to_string(kModelVersion) + ")");
  if (12 + static_cast<std::size_t>(header_len) > bytes.size())
    throw CorruptionError("SDTD header extends past end of file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("SDTD header is not valid JSON: ") +
                      e.what());
  }
  if (!header.contains("config") || !header.contains("tensors"))
    throw FormatError("SDTD header is missing required keys");

  const ModelConfig cfg =
      model_io_detail::config_from_json(header.at("config"));
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CorruptionError(std::string("SDTD config is invalid: ") + e.what());
  }

  ModelWeights<float> w = zero_model<float>(cfg);
  std::vector<model_io_detail::TensorEntry> expected =
      model_io_detail::tensor_manifest(w);

  const nlohmann::json& tensors = header.at("tensors");
  if (!tensors.is_array() || tensors.size() != expected.size())
    throw CorruptionError(
        "SDTD tensor manifest does not match the config (expected " +
        std::to_string(expected.size()) + " tensors)");
  std::size_t payload = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const nlohmann::json& t = tensors.at(i);
    std::string name;
    std::vector<int> shape;
    try {
      name = t.at("name").get<std::string>();
      shape = t.at("shape").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("SDTD tensor entry is malformed: ") +
                        e.what());
    }
    if (name != expected[i].name || shape != expected[i].shape)
      throw CorruptionError("SDTD tensor '" + name +
                            "' does not match the config (expected '" +
                            expected[i].name + "')");
    payload += static_cast<std::size_t>(expected[i].count) * sizeof(float);
  }
  if (bytes.size() != 12 + header_len + payload)
    throw CorruptionError(
        "SDTD payload size mismatch: expected " +
        std::to_string(12 + header_len + payload) + " bytes, file has " +
        std::to_string(bytes.size()));

  std::size_t off = 12 + header_len;
  for (auto& e : expected) {
    std::memcpy(e.dst, bytes.data() + off,
                static_cast<std::size_t>(e.count) * sizeof(float));
    off += static_cast<std::size_t>(e.count) * sizeof(float);
  }
  return {std::move(w), cfg};
}

}  // namespace sdt
