#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsc/common.hpp"
#include "dsc/tensor.hpp"

// Dataset ingestion and preprocessing. The on-disk format is a directory with
//   header.json : {"T", "L", "W", "n", "variables", "dtype": "f32",
//                  "layout": "T,L,W,n", "byte_order": "little"}
//   data.bin    : exactly 4*T*L*W*n bytes of little-endian 32-bit floats,
//                 row-major in the declared layout. Quiet-NaN entries mark
//                 missing values.
// Plus a labeled synthetic generator used for end-to-end verification.

namespace dsc {

struct DatasetCube {
  Tensor<float> values;  // (T, L, W, n)
  std::vector<std::string> variables;
  std::vector<float> var_min, var_max;  // recorded by minmax_normalize
  std::vector<std::uint8_t> missing;    // 1 where the on-disk value was NaN
  bool imputed = false;
  bool normalized = false;

  std::size_t timesteps() const { return values.extent(0); }
  std::size_t rows() const { return values.extent(1); }
  std::size_t cols() const { return values.extent(2); }
  std::size_t vars() const { return values.extent(3); }

  /// One observation (L, W, n), a contiguous slice of the cube.
  Tensor<float> timestep(std::size_t t) const {
    const std::size_t n = rows() * cols() * vars();
    Tensor<float> out({rows(), cols(), vars()});
    const float* src = values.data() + t * n;
    std::copy(src, src + n, out.data());
    return out;
  }
};

struct SyntheticSpec {
  std::size_t regimes = 3;
  std::size_t timesteps = 120;
  std::size_t rows = 16;
  std::size_t cols = 16;
  std::size_t vars = 3;
  double separation = 4.0;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
};

inline DatasetCube load_dataset(const std::filesystem::path& dir) {
  const auto header_path = dir / "header.json";
  const auto data_path = dir / "data.bin";
  std::ifstream hf(header_path);
  if (!hf) throw DataError("cannot open " + header_path.string());
  nlohmann::json header;
  try {
    hf >> header;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid header.json: " + std::string(e.what()));
  }
  for (const char* key : {"T", "L", "W", "n", "variables", "dtype", "layout", "byte_order"}) {
    if (!header.contains(key)) {
      throw FormatError(std::string("header.json missing key: ") + key);
    }
  }
  if (header["dtype"] != "f32") {
    throw FormatError("unsupported dtype: " + header["dtype"].dump());
  }
  if (header["layout"] != "T,L,W,n") {
    throw FormatError("unsupported layout: " + header["layout"].dump());
  }
  if (header["byte_order"] != "little") {
    throw FormatError("unsupported byte order: " + header["byte_order"].dump());
  }
  const auto t = header["T"].get<std::size_t>();
  const auto l = header["L"].get<std::size_t>();
  const auto w = header["W"].get<std::size_t>();
  const auto n = header["n"].get<std::size_t>();
  if (t < 2 || l < 1 || w < 1 || n < 1) {
    throw FormatError("header declares degenerate dimensions (need T >= 2)");
  }
  DatasetCube cube;
  cube.variables = header["variables"].get<std::vector<std::string>>();
  if (cube.variables.size() != n) {
    throw FormatError("variable name count does not match n");
  }
  const std::size_t count = t * l * w * n;
  std::ifstream df(data_path, std::ios::binary);
  if (!df) throw DataError("cannot open " + data_path.string());
  df.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(df.tellg());
  if (bytes != count * sizeof(float)) {
    throw FormatError("data.bin holds " + std::to_string(bytes) + " bytes, header implies " +
                      std::to_string(count * sizeof(float)));
  }
  df.seekg(0);
  cube.values = Tensor<float>({t, l, w, n});
  df.read(reinterpret_cast<char*>(cube.values.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!df) throw DataError("short read from " + data_path.string());
  cube.missing.assign(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    if (std::isnan(cube.values[i])) cube.missing[i] = 1;
  }
  return cube;
}

inline void save_dataset(const std::filesystem::path& dir, const DatasetCube& cube) {
  std::filesystem::create_directories(dir);
  nlohmann::json header = {
      {"T", cube.timesteps()},       {"L", cube.rows()},
      {"W", cube.cols()},            {"n", cube.vars()},
      {"variables", cube.variables}, {"dtype", "f32"},
      {"layout", "T,L,W,n"},         {"byte_order", "little"},
  };
  std::ofstream hf(dir / "header.json");
  if (!hf) throw DataError("cannot write header.json in " + dir.string());
  hf << header.dump(2) << '\n';
  std::ofstream df(dir / "data.bin", std::ios::binary);
  if (!df) throw DataError("cannot write data.bin in " + dir.string());
  df.write(reinterpret_cast<const char*>(cube.values.data()),
           static_cast<std::streamsize>(cube.values.size() * sizeof(float)));
  if (!df) throw DataError("short write to data.bin");
}

enum class ImputeMode { per_variable, global };

/// Replaces each missing entry with the mean of the non-missing values of its
/// variable (default), or with one global mean over all variables. The global
/// reading exists because mixed physical units make it questionable; it is
/// selectable rather than silently chosen.
inline DatasetCube impute_missing(DatasetCube cube, ImputeMode mode = ImputeMode::per_variable) {
  const std::size_t n = cube.vars();
  const std::size_t cells = cube.values.size() / n;
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t i = c * n + v;
      if (!cube.missing[i]) {
        sum[v] += static_cast<double>(cube.values[i]);
        ++count[v];
      }
    }
  }
  std::vector<float> fill(n, 0.0f);
  if (mode == ImputeMode::global) {
    double total = 0.0;
    std::size_t totaln = 0;
    for (std::size_t v = 0; v < n; ++v) {
      total += sum[v];
      totaln += count[v];
    }
    if (totaln == 0) throw DataError("impute_missing: dataset is entirely missing");
    std::fill(fill.begin(), fill.end(), static_cast<float>(total / static_cast<double>(totaln)));
  } else {
    for (std::size_t v = 0; v < n; ++v) {
      if (count[v] == 0) {
        throw DataError("impute_missing: variable '" + cube.variables[v] +
                        "' has no observed values");
      }
      fill[v] = static_cast<float>(sum[v] / static_cast<double>(count[v]));
    }
  }
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t i = c * n + v;
      if (cube.missing[i]) cube.values[i] = fill[v];
    }
  }
  cube.imputed = true;
  return cube;
}

/// Min-max rescale of each variable to [0, 1] over all of its T*L*W entries.
/// A constant variable maps to all zeros with a warning. The recorded
/// min/max allow de-normalization.
inline DatasetCube minmax_normalize(DatasetCube cube) {
  const std::size_t n = cube.vars();
  const std::size_t cells = cube.values.size() / n;
  cube.var_min.assign(n, 0.0f);
  cube.var_max.assign(n, 0.0f);
  for (std::size_t v = 0; v < n; ++v) {
    float lo = cube.values[v], hi = cube.values[v];
    for (std::size_t c = 0; c < cells; ++c) {
      const float val = cube.values[c * n + v];
      if (std::isnan(val)) {
        throw DataError("minmax_normalize: missing values present; impute first");
      }
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
    cube.var_min[v] = lo;
    cube.var_max[v] = hi;
    if (hi == lo) {
      warn("minmax_normalize: variable '" + cube.variables[v] +
           "' is constant; mapping to zeros");
      for (std::size_t c = 0; c < cells; ++c) cube.values[c * n + v] = 0.0f;
      continue;
    }
    const float span = hi - lo;
    for (std::size_t c = 0; c < cells; ++c) {
      cube.values[c * n + v] = (cube.values[c * n + v] - lo) / span;
    }
  }
  cube.normalized = true;
  return cube;
}

/// Labeled synthetic spatiotemporal data: timesteps fall into contiguous
/// regime blocks; each (regime, variable) pair owns a smooth field built from
/// two Gaussian bumps whose amplitude scales with `separation`; white noise
/// of sd `noise_sigma` is added per entry.
inline std::pair<DatasetCube, std::vector<int>> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.regimes < 1 || spec.timesteps < 2 || spec.regimes >= spec.timesteps) {
    throw ConfigError("generate_synthetic: need 1 <= regimes < timesteps (T >= 2)");
  }
  if (spec.rows < 1 || spec.cols < 1 || spec.vars < 1) {
    throw ConfigError("generate_synthetic: grid dims must be positive");
  }
  if (!(spec.separation > 0.0) || !(spec.noise_sigma >= 0.0)) {
    throw ConfigError("generate_synthetic: separation > 0 and noise_sigma >= 0 required");
  }
  Rng rng(spec.seed);
  const std::size_t t = spec.timesteps, l = spec.rows, w = spec.cols, n = spec.vars;
  // base level per variable, then per-(regime, variable) bump parameters
  std::vector<double> base(n);
  for (std::size_t v = 0; v < n; ++v) base[v] = rng.uniform(0.1, 0.3);
  struct Bump {
    double cy, cx, sigma, amp;
  };
  std::vector<Bump> bumps(spec.regimes * n * 2);
  const double scale = static_cast<double>(std::min(l, w));
  for (auto& b : bumps) {
    b.cy = rng.uniform(0.15, 0.85) * static_cast<double>(l);
    b.cx = rng.uniform(0.15, 0.85) * static_cast<double>(w);
    b.sigma = rng.uniform(0.12, 0.25) * scale;
    b.amp = spec.separation * rng.uniform(0.5, 1.0);
  }
  std::vector<Tensor<double>> pattern(spec.regimes, Tensor<double>({l, w, n}));
  for (std::size_t r = 0; r < spec.regimes; ++r) {
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t y = 0; y < l; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          double val = base[v];
          for (std::size_t bi = 0; bi < 2; ++bi) {
            const Bump& b = bumps[(r * n + v) * 2 + bi];
            const double dy = static_cast<double>(y) - b.cy;
            const double dx = static_cast<double>(x) - b.cx;
            val += b.amp * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
          }
          pattern[r](y, x, v) = val;
        }
      }
    }
  }
  const std::size_t block = (t + spec.regimes - 1) / spec.regimes;
  DatasetCube cube;
  cube.values = Tensor<float>({t, l, w, n});
  cube.variables.reserve(n);
  for (std::size_t v = 0; v < n; ++v) cube.variables.push_back("var" + std::to_string(v));
  cube.missing.assign(cube.values.size(), 0);
  std::vector<int> labels(t);
  for (std::size_t ts = 0; ts < t; ++ts) {
    const std::size_t r = std::min(ts / block, spec.regimes - 1);
    labels[ts] = static_cast<int>(r);
    float* dst = cube.values.data() + ts * l * w * n;
    const double* src = pattern[r].data();
    for (std::size_t i = 0; i < l * w * n; ++i) {
      dst[i] = static_cast<float>(src[i] + spec.noise_sigma * rng.normal());
    }
  }
  return {std::move(cube), std::move(labels)};
}

/// One row per timestep, row-major flattening of (L, W, n); D = L*W*n.
inline Tensor<double> flatten(const DatasetCube& cube) {
  const std::size_t t = cube.timesteps();
  const std::size_t d = cube.rows() * cube.cols() * cube.vars();
  Tensor<double> out({t, d});
  for (std::size_t i = 0; i < cube.values.size(); ++i) {
    out[i] = static_cast<double>(cube.values[i]);
  }
  return out;
}

}  // namespace dsc
