#pragma once

// Shared on-disk container: one UTF-8 JSON header line terminated by '\n',
// followed by raw little-endian float32 tensor payloads in header-declared
// order. Episodes and checkpoints both use this layout.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtnet/common.hpp"

namespace mtnet {

using json = nlohmann::json;

struct TensorSpec {
  std::string name;
  std::vector<int64_t> shape;

  int64_t count() const {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

inline void to_json(json& j, const TensorSpec& t) {
  j = json{{"name", t.name}, {"dtype", "f32"}, {"shape", t.shape}};
}

inline void from_json(const json& j, TensorSpec& t) {
  j.at("name").get_to(t.name);
  if (j.at("dtype").get<std::string>() != "f32")
    throw SchemaError("unsupported dtype: " + j.at("dtype").get<std::string>());
  j.at("shape").get_to(t.shape);
}

namespace detail {

inline void write_f32_le(std::ostream& os, const float* data, size_t n) {
  static_assert(sizeof(float) == 4);
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), std::streamsize(n * 4));
  } else {
    for (size_t i = 0; i < n; ++i) {
      uint32_t bits;
      std::memcpy(&bits, &data[i], 4);
      char b[4] = {char(bits), char(bits >> 8), char(bits >> 16), char(bits >> 24)};
      os.write(b, 4);
    }
  }
}

inline void read_f32_le(std::istream& is, float* data, size_t n, const std::string& what) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(data), std::streamsize(n * 4));
  } else {
    for (size_t i = 0; i < n; ++i) {
      unsigned char b[4];
      is.read(reinterpret_cast<char*>(b), 4);
      uint32_t bits = uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
                      uint32_t(b[3]) << 24;
      std::memcpy(&data[i], &bits, 4);
    }
  }
  if (!is)
    throw FormatError("truncated tensor payload while reading " + what);
}

}  // namespace detail

/// Write header + payloads. `payloads[i]` must hold exactly specs[i].count() floats.
inline void write_tensor_file(const std::filesystem::path& path, const json& header,
                              const std::vector<TensorSpec>& specs,
                              const std::vector<const float*>& payloads) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open for writing: " + path.string());
  json h = header;
  h["tensors"] = specs;
  os << h.dump() << '\n';
  for (size_t i = 0; i < specs.size(); ++i)
    detail::write_f32_le(os, payloads[i], size_t(specs[i].count()));
  if (!os) throw FormatError("write failed: " + path.string());
}

struct TensorFile {
  json header;
  std::vector<TensorSpec> specs;
  std::vector<std::vector<float>> payloads;

  const std::vector<float>& tensor(const std::string& name) const {
    for (size_t i = 0; i < specs.size(); ++i)
      if (specs[i].name == name) return payloads[i];
    throw SchemaError("tensor not found: " + name);
  }
  const TensorSpec& spec(const std::string& name) const {
    for (const auto& s : specs)
      if (s.name == name) return s;
    throw SchemaError("tensor not found: " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& s : specs)
      if (s.name == name) return true;
    return false;
  }
  /// Copy a payload into a row-major matrix of the requested footprint.
  Mat<float> as_matrix(const std::string& name, int64_t rows, int64_t cols) const {
    const std::vector<float>& buf = tensor(name);
    if (int64_t(buf.size()) != rows * cols)
      throw SchemaError("tensor " + name + " holds " + std::to_string(buf.size()) +
                        " values, expected " + std::to_string(rows * cols));
    Mat<float> m(rows, cols);
    std::memcpy(m.data(), buf.data(), buf.size() * sizeof(float));
    return m;
  }
};

inline TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(is, line))
    throw FormatError("missing header line at offset 0 in " + path.string());
  TensorFile tf;
  try {
    tf.header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError("corrupt header at offset " + std::to_string(e.byte) + " in " +
                      path.string());
  }
  if (!tf.header.contains("tensors"))
    throw SchemaError("header lacks tensor index in " + path.string());
  tf.specs = tf.header.at("tensors").get<std::vector<TensorSpec>>();
  for (const auto& spec : tf.specs) {
    for (auto d : spec.shape)
      if (d < 0) throw SchemaError("negative dimension in " + spec.name);
    std::vector<float> buf(size_t(spec.count()));
    detail::read_f32_le(is, buf.data(), buf.size(), spec.name + " in " + path.string());
    tf.payloads.push_back(std::move(buf));
  }
  return tf;
}

}  // namespace mtnet
