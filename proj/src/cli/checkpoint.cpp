// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tsm/errors.hpp"

namespace tsm {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

namespace {

void put_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

json model_to_json(const ModelSpec& s) {
  return {{"data_dim", s.data_dim}, {"hidden", s.hidden},
          {"depth", s.depth},       {"time_dim", s.time_dim},
          {"num_classes", s.num_classes}, {"adapt_io", s.adapt_io}};
}

ModelSpec model_from_json(const json& j) {
  ModelSpec s;
  s.data_dim = j.at("data_dim").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::size_t>();
  s.depth = j.at("depth").get<std::size_t>();
  s.time_dim = j.at("time_dim").get<std::size_t>();
  s.num_classes = j.at("num_classes").get<std::size_t>();
  s.adapt_io = j.at("adapt_io").get<bool>();
  return s;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string checkpoint_stage(const DenoiserModel& model) {
  if (model.has_routers()) return "assembled";
  if (model.has_adapters()) return "fostering";
  return "base";
}

json rng_state_to_json(const Rng::State& s) {
  return {{"seed", s.seed}, {"stream", s.stream}, {"counter", s.counter},
          {"lane", s.lane}};
}

Rng::State rng_state_from_json(const json& j) {
  Rng::State s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.stream = j.at("stream").get<std::uint64_t>();
  s.counter = j.at("counter").get<std::uint64_t>();
  s.lane = j.at("lane").get<std::uint32_t>();
  return s;
}

void save_checkpoint(const fs::path& dir, const DenoiserModel& model,
                     const json& config, const Rng::State& rng_state) {
  fs::create_directories(dir);
  const ParamStore& p = model.params();

  std::string blob;
  json tensors = json::array();
  for (const auto& name : p.names()) {
    const Matrix& m = p.value(name);
    const std::size_t offset = blob.size();
    for (double v : m.data()) put_le(blob, v);
    tensors.push_back({{"name", name},
                       {"shape", {m.rows(), m.cols()}},
                       {"offset", offset},
                       {"nbytes", blob.size() - offset},
                       {"trainable", p.trainable(name)}});
  }

  json manifest;
  manifest["schema_version"] = kCheckpointSchema;
  manifest["stage"] = checkpoint_stage(model);
  manifest["T"] = model.T();
  manifest["model"] = model_to_json(model.spec());
  if (const auto& a = model.adapter_spec()) {
    manifest["adapters"] = {{"scales", a->scales.values()},
                            {"rank", a->rank},
                            {"alpha", a->alpha}};
  } else {
    manifest["adapters"] = nullptr;
  }
  manifest["routers"] = model.has_routers();
  manifest["config"] = config;
  manifest["rng_state"] = rng_state_to_json(rng_state);
  manifest["blob"] = {{"file", kBlobFile}, {"nbytes", blob.size()}, {"dtype", "f64le"}};
  manifest["tensors"] = tensors;

  write_file(dir / kBlobFile, blob);
  write_file(dir / kManifestFile, manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw ConfigError("checkpoint directory '" + dir.string() + "' not found");
  json manifest;
  try {
    manifest = json::parse(read_file(dir / kManifestFile));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  const std::string blob = read_file(dir / kBlobFile);

  try {
    if (manifest.at("schema_version").get<int>() != kCheckpointSchema)
      throw ConfigError("unsupported checkpoint schema version");
    const auto& blob_meta = manifest.at("blob");
    if (blob_meta.at("nbytes").get<std::size_t>() != blob.size())
      throw ShapeError("tensors.bin holds " + std::to_string(blob.size()) +
                       " bytes, manifest says " +
                       std::to_string(blob_meta.at("nbytes").get<std::size_t>()));

    ParamStore params;
    std::size_t expected_offset = 0;
    for (const auto& t : manifest.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const auto& shape = t.at("shape");
      if (!shape.is_array() || shape.size() != 2)
        throw ShapeError("tensor '" + name + "' shape must have two entries");
      const std::size_t rows = shape[0].get<std::size_t>();
      const std::size_t cols = shape[1].get<std::size_t>();
      const std::size_t offset = t.at("offset").get<std::size_t>();
      const std::size_t nbytes = t.at("nbytes").get<std::size_t>();
      if (nbytes != rows * cols * 8)
        throw ShapeError("tensor '" + name + "' is " + std::to_string(nbytes) +
                         " bytes, shape needs " + std::to_string(rows * cols * 8));
      if (offset != expected_offset || offset + nbytes > blob.size())
        throw ShapeError("tensor '" + name + "' lies outside the blob layout");
      std::vector<double> data(rows * cols);
      for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = get_le(blob.data() + offset + 8 * i);
      params.add(name, Matrix(rows, cols, std::move(data)),
                 t.at("trainable").get<bool>());
      expected_offset = offset + nbytes;
    }
    if (expected_offset != blob.size())
      throw ShapeError("tensors.bin has trailing bytes");

    std::optional<AdapterSpec> adapters;
    if (const auto& a = manifest.at("adapters"); !a.is_null())
      adapters = AdapterSpec{ScaleSet(a.at("scales").get<std::vector<int>>()),
                             a.at("rank").get<std::size_t>(),
                             a.at("alpha").get<double>()};

    Checkpoint ck{DenoiserModel(model_from_json(manifest.at("model")),
                                manifest.at("T").get<int>(), std::move(adapters),
                                manifest.at("routers").get<bool>(),
                                std::move(params)),
                  manifest.at("stage").get<std::string>(),
                  manifest.at("config"),
                  rng_state_from_json(manifest.at("rng_state"))};
    if (ck.stage != checkpoint_stage(ck.model))
      throw ConfigError("manifest stage '" + ck.stage +
                        "' does not match the stored tensors");
    return ck;
  } catch (const json::exception& e) {
    throw ConfigError("malformed checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace tsm
