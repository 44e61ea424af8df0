#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsc/common.hpp"
#include "dsc/model.hpp"

// Model checkpoint: a single binary archive with a versioned JSON header
// followed by every parameter tensor as (name, shape, row-major f32 LE
// values). Centroids ride along as one extra tensor since they are trained
// jointly with the network. Reload is bit-exact.

namespace dsc {

namespace detail {

inline constexpr char kCkptMagic[8] = {'D', 'S', 'C', 'K', 'P', 'T', '0', '1'};

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_tensor(std::ostream& os, const std::string& name,
                         const Tensor<float>& t) {
  write_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) write_u32(os, static_cast<std::uint32_t>(e));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(float)));
}

inline std::pair<std::string, Tensor<float>> read_tensor(std::istream& is) {
  const std::uint32_t name_len = read_u32(is);
  if (!is || name_len > 4096) throw FormatError("checkpoint: bad tensor name length");
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  const std::uint32_t rank = read_u32(is);
  if (!is || rank == 0 || rank > 8) throw FormatError("checkpoint: bad tensor rank");
  std::vector<std::size_t> shape(rank);
  for (auto& e : shape) e = read_u32(is);
  Tensor<float> t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!is) throw FormatError("checkpoint: truncated tensor data");
  return {std::move(name), std::move(t)};
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, Model<float>& model,
                            const Tensor<float>* centroids = nullptr) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(detail::kCkptMagic, sizeof(detail::kCkptMagic));
  std::size_t tensor_count = 0;
  model.for_each_param([&tensor_count](const std::string&, Tensor<float>&) { ++tensor_count; });
  if (centroids) ++tensor_count;
  nlohmann::json meta = {
      {"version", 1},
      {"variant", variant_name(model.variant)},
      {"rows", model.dims.rows},
      {"cols", model.dims.cols},
      {"vars", model.dims.vars},
      {"padded", model.padded},
      {"latent", model.latent},
      {"channels", model.channels},
      {"tensor_count", tensor_count},
  };
  const std::string header = meta.dump();
  detail::write_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  model.for_each_param([&os](const std::string& name, Tensor<float>& t) {
    detail::write_tensor(os, name, t);
  });
  if (centroids) detail::write_tensor(os, "cluster.centroids", *centroids);
  if (!os) throw DataError("short write to checkpoint " + path.string());
}

struct Checkpoint {
  Model<float> model;
  std::optional<Tensor<float>> centroids;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof(detail::kCkptMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, detail::kCkptMagic, sizeof(magic)) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const std::uint32_t header_len = detail::read_u32(is);
  if (!is || header_len > (1u << 20)) throw FormatError("checkpoint: bad header length");
  std::string header(header_len, '\0');
  is.read(header.data(), header_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: invalid header json: " + std::string(e.what()));
  }
  if (meta.value("version", 0) != 1) {
    throw FormatError("checkpoint: unsupported version");
  }
  Checkpoint ck;
  // Rebuild the skeleton with seed 0, then overwrite every tensor from disk.
  ck.model = build_model<float>(parse_variant(meta.at("variant").get<std::string>()),
                                ModelDims{meta.at("rows").get<std::size_t>(),
                                          meta.at("cols").get<std::size_t>(),
                                          meta.at("vars").get<std::size_t>()},
                                0, meta.at("latent").get<std::size_t>(),
                                meta.at("channels").get<std::vector<std::size_t>>());
  if (ck.model.padded != meta.at("padded").get<std::size_t>()) {
    throw FormatError("checkpoint: padded grid inconsistent with dims");
  }
  validate_model(ck.model);
  const auto tensor_count = meta.at("tensor_count").get<std::size_t>();
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  for (std::size_t i = 0; i < tensor_count; ++i) {
    tensors.push_back(detail::read_tensor(is));
  }
  std::size_t cursor = 0;
  ck.model.for_each_param([&](const std::string& name, Tensor<float>& t) {
    if (cursor >= tensors.size() || tensors[cursor].first != name) {
      throw FormatError("checkpoint: expected tensor '" + name + "'");
    }
    if (tensors[cursor].second.shape() != t.shape()) {
      throw FormatError("checkpoint: shape mismatch for '" + name + "'");
    }
    t = std::move(tensors[cursor].second);
    ++cursor;
  });
  if (cursor < tensors.size()) {
    if (tensors[cursor].first != "cluster.centroids") {
      throw FormatError("checkpoint: unexpected trailing tensor '" + tensors[cursor].first +
                        "'");
    }
    ck.centroids = std::move(tensors[cursor].second);
  }
  return ck;
}

}  // namespace dsc
