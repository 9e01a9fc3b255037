// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "quantlaw/digest.hpp"
#include "quantlaw/errors.hpp"
#include "quantlaw/model.hpp"

// Multi-byte fields are little-endian on disk; written via native stores.
static_assert(std::endian::native == std::endian::little);

namespace quantlaw {

namespace {

constexpr char kMagic[4] = {'C', 'L', 'M', 'Q'};
constexpr uint32_t kVersion = 1;

nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  return nlohmann::ordered_json{
      {"vocab_size", c.vocab_size},   {"model_dim", c.model_dim},
      {"ffn_dim", c.ffn_dim},         {"n_layers", c.n_layers},
      {"n_heads", c.n_heads},         {"n_kv_heads", c.n_kv_heads},
      {"max_seq_len", c.max_seq_len}, {"rope_theta", c.rope_theta},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.vocab_size = j.at("vocab_size").get<int64_t>();
    c.model_dim = j.at("model_dim").get<int64_t>();
    c.ffn_dim = j.at("ffn_dim").get<int64_t>();
    c.n_layers = j.at("n_layers").get<int64_t>();
    c.n_heads = j.at("n_heads").get<int64_t>();
    c.n_kv_heads = j.at("n_kv_heads").get<int64_t>();
    c.max_seq_len = j.at("max_seq_len").get<int64_t>();
    c.rope_theta = j.at("rope_theta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.config.validate();
  nlohmann::ordered_json meta;
  meta["config"] = config_to_json(ckpt.config);
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (const TensorInfo& ti : ckpt.infos) {
    table.push_back(nlohmann::ordered_json{
        {"name", ti.name}, {"shape", ti.shape}, {"offset", offset}});
    offset += static_cast<uint64_t>(ti.numel()) * sizeof(float);
  }
  meta["tensors"] = std::move(table);
  const std::string meta_str = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  write_raw(out, kVersion);
  write_raw(out, static_cast<uint64_t>(meta_str.size()));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  Fnv1a64 digest;
  for (const std::vector<float>& t : ckpt.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
    digest.update(t.data(), t.size() * sizeof(float));
  }
  write_raw(out, digest.value());
  if (!out) throw IoError("short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open '" + path + "'");
  const uint64_t file_size = static_cast<uint64_t>(in.tellg());
  in.seekg(0);

  constexpr uint64_t kHeaderSize = 4 + sizeof(uint32_t) + sizeof(uint64_t);
  if (file_size < kHeaderSize)
    throw CorruptCheckpoint("'" + path + "': file shorter than header");
  char magic[4];
  uint32_t version = 0;
  uint64_t meta_len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len));
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw CorruptCheckpoint("'" + path + "': bad magic");
  if (version != kVersion)
    throw CorruptCheckpoint("'" + path + "': unsupported version " +
                            std::to_string(version));
  if (kHeaderSize + meta_len + sizeof(uint64_t) > file_size)
    throw CorruptCheckpoint("'" + path + "': truncated metadata");

  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint("'" + path + "': unparsable metadata: " +
                            e.what());
  }
  if (!meta.contains("config") || !meta.contains("tensors"))
    throw SchemaError("'" + path + "': metadata missing config or tensors");

  Checkpoint ckpt;
  ckpt.config = config_from_json(meta["config"]);
  const std::vector<TensorInfo> expected = tensor_inventory(ckpt.config);
  const nlohmann::json& table = meta["tensors"];
  if (!table.is_array() || table.size() != expected.size())
    throw SchemaError("'" + path + "': tensor table does not match config");
  uint64_t offset = 0;
  for (size_t i = 0; i < expected.size(); ++i) {
    const nlohmann::json& row = table[i];
    std::string name;
    std::vector<int64_t> shape;
    uint64_t row_offset = 0;
    try {
      name = row.at("name").get<std::string>();
      shape = row.at("shape").get<std::vector<int64_t>>();
      row_offset = row.at("offset").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("'" + path + "': bad tensor row: " + e.what());
    }
    if (name != expected[i].name || shape != expected[i].shape ||
        row_offset != offset)
      throw SchemaError("'" + path + "': tensor '" + name +
                        "' does not match the shape table for this config");
    offset += static_cast<uint64_t>(expected[i].numel()) * sizeof(float);
  }
  if (kHeaderSize + meta_len + offset + sizeof(uint64_t) != file_size)
    throw CorruptCheckpoint("'" + path + "': payload size mismatch");

  ckpt.infos = expected;
  ckpt.tensors.resize(expected.size());
  Fnv1a64 digest;
  for (size_t i = 0; i < expected.size(); ++i) {
    std::vector<float>& t = ckpt.tensors[i];
    t.resize(expected[i].numel());
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    digest.update(t.data(), t.size() * sizeof(float));
  }
  uint64_t stored_digest = 0;
  in.read(reinterpret_cast<char*>(&stored_digest), sizeof(stored_digest));
  if (!in) throw CorruptCheckpoint("'" + path + "': short read");
  if (stored_digest != digest.value())
    throw CorruptCheckpoint("'" + path + "': payload digest mismatch");
  for (const std::vector<float>& t : ckpt.tensors)
    for (float v : t)
      if (!std::isfinite(v))
        throw CorruptCheckpoint("'" + path + "': non-finite tensor value");
  return ckpt;
}

ModelConfig parse_model_config(const std::string& name_or_path) {
  if (name_or_path == "clm-micro") return ModelConfig::clm_micro();
  std::ifstream in(name_or_path);
  if (!in)
    throw InvalidInput("model config '" + name_or_path +
                       "' is neither a built-in name nor a readable file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("'" + name_or_path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace quantlaw
