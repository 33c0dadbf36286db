#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mtnet/layout.hpp"
#include "mtnet/tensorfile.hpp"

namespace mtnet {

inline constexpr double kContactThresholdN = 0.05;
inline constexpr double kForceMaxN = 5.0;

/// One recorded interaction. Tensors are row-major with one frame per row:
/// tactile [T, N*3] (N taxels, xyz force in newtons), visual [T, H*W*3]
/// (RGB in [0,1]), contact [T, S] (one 0/1 flag per sensor).
struct Episode {
  std::string domain = "robot";  // "robot" | "human"
  double fps = 30.0;
  int height = 64;
  int width = 64;
  LayoutConfig layout;
  json meta;  // scenario provenance: seed, object, targets, ...
  Mat<float> tactile;
  Mat<float> visual;
  Mat<float> contact;

  int frames() const { return int(tactile.rows()); }
  int taxels() const { return int(tactile.cols()) / 3; }
  int sensor_count() const { return int(contact.cols()); }
};

/// A sensor is in contact when any of its taxels reports |force| strictly
/// above the threshold.
inline Eigen::RowVectorXf derive_contact_row(const Eigen::Ref<const Eigen::RowVectorXf>& forces,
                                             const TaxelLayout& lay,
                                             double threshold = kContactThresholdN) {
  Eigen::RowVectorXf out = Eigen::RowVectorXf::Zero(lay.sensor_count());
  const double thr2 = threshold * threshold;
  for (int s = 0; s < lay.sensor_count(); ++s) {
    for (int t = lay.sensor_start[size_t(s)]; t < lay.sensor_start[size_t(s) + 1]; ++t) {
      const double fx = forces[3 * t], fy = forces[3 * t + 1], fz = forces[3 * t + 2];
      if (fx * fx + fy * fy + fz * fz > thr2) {
        out[s] = 1.0f;
        break;
      }
    }
  }
  return out;
}

inline Mat<float> derive_contact_labels(const Mat<float>& tactile, const TaxelLayout& lay,
                                        double threshold = kContactThresholdN) {
  Mat<float> out(tactile.rows(), lay.sensor_count());
  for (int f = 0; f < tactile.rows(); ++f)
    out.row(f) = derive_contact_row(tactile.row(f), lay, threshold);
  return out;
}

inline void write_episode(const std::filesystem::path& path, const Episode& ep) {
  if (ep.visual.rows() != ep.tactile.rows() || ep.contact.rows() != ep.tactile.rows())
    throw SchemaError("episode: tensor frame counts disagree");
  json header;
  header["schema"] = "mtnet.episode";
  header["version"] = 1;
  header["domain"] = ep.domain;
  header["fps"] = ep.fps;
  header["height"] = ep.height;
  header["width"] = ep.width;
  header["frames"] = ep.frames();
  header["layout"] = ep.layout;
  header["meta"] = ep.meta;
  const long T = ep.tactile.rows();
  std::vector<TensorSpec> specs = {
      {"tactile", {T, ep.tactile.cols() / 3, 3}},
      {"visual", {T, ep.height, ep.width, 3}},
      {"contact", {T, ep.contact.cols()}},
  };
  write_tensor_file(path, header, specs,
                    {ep.tactile.data(), ep.visual.data(), ep.contact.data()});
}

inline Episode read_episode(const std::filesystem::path& path) {
  TensorFile tf = read_tensor_file(path);
  if (tf.header.value("schema", "") != "mtnet.episode")
    throw SchemaError("episode: unexpected schema '" + tf.header.value("schema", "") + "' in " +
                      path.string());
  if (tf.header.value("version", 0) != 1)
    throw SchemaError("episode: unsupported version in " + path.string());
  Episode ep;
  ep.domain = tf.header.at("domain").get<std::string>();
  ep.fps = tf.header.at("fps").get<double>();
  ep.height = tf.header.at("height").get<int>();
  ep.width = tf.header.at("width").get<int>();
  ep.layout = tf.header.at("layout").get<LayoutConfig>();
  ep.meta = tf.header.value("meta", json::object());

  const TaxelLayout lay = build_taxel_layout(ep.layout);
  auto expect = [&](const char* name, std::vector<long> shape) {
    const TensorSpec& s = tf.spec(name);
    if (s.shape != shape) {
      std::string got;
      for (long d : s.shape) got += std::to_string(d) + " ";
      throw SchemaError(std::string("episode: tensor '") + name + "' has shape [" + got +
                        "], inconsistent with header in " + path.string());
    }
  };
  const long T = tf.header.at("frames").get<long>();
  expect("tactile", {T, lay.total_taxels, 3});
  expect("visual", {T, ep.height, ep.width, 3});
  const TensorSpec& cs = tf.spec("contact");
  if (cs.shape.size() != 2 || cs.shape[0] != T || cs.shape[1] != lay.sensor_count())
    throw SchemaError("episode: contact tensor shape mismatch in " + path.string());

  ep.tactile = tf.as_matrix("tactile", T, lay.total_taxels * 3);
  ep.visual = tf.as_matrix("visual", T, long(ep.height) * ep.width * 3);
  ep.contact = tf.as_matrix("contact", T, lay.sensor_count());
  if (!ep.tactile.allFinite() || !ep.visual.allFinite())
    throw FormatError("episode: non-finite values in " + path.string());
  return ep;
}

struct DatasetManifest {
  struct Entry {
    std::string file;
    std::string domain;
    int frames = 0;
  };
  int version = 1;
  double fps = 30.0;
  int height = 64;
  int width = 64;
  LayoutConfig layout;
  json generator;  // config used to produce the data
  std::vector<Entry> episodes;
};

inline void to_json(json& j, const DatasetManifest::Entry& e) {
  j = json{{"file", e.file}, {"domain", e.domain}, {"frames", e.frames}};
}
inline void from_json(const json& j, DatasetManifest::Entry& e) {
  j.at("file").get_to(e.file);
  j.at("domain").get_to(e.domain);
  j.at("frames").get_to(e.frames);
}

inline void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  json j{{"schema", "mtnet.dataset"}, {"version", m.version},   {"fps", m.fps},
         {"height", m.height},        {"width", m.width},       {"layout", m.layout},
         {"generator", m.generator},  {"episodes", m.episodes}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("cannot write manifest in " + dir.string());
  out << j.dump(2) << "\n";
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("no manifest.json in " + dir.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError("manifest.json parse failure in " + dir.string() + ": " + e.what());
  }
  if (j.value("schema", "") != "mtnet.dataset")
    throw SchemaError("not a dataset manifest: " + (dir / "manifest.json").string());
  DatasetManifest m;
  m.version = j.value("version", 1);
  j.at("fps").get_to(m.fps);
  j.at("height").get_to(m.height);
  j.at("width").get_to(m.width);
  j.at("layout").get_to(m.layout);
  m.generator = j.value("generator", json::object());
  j.at("episodes").get_to(m.episodes);
  for (const auto& e : m.episodes)
    if (!std::filesystem::exists(dir / e.file))
      throw FormatError("manifest references missing episode file " + (dir / e.file).string());
  return m;
}

}  // namespace mtnet
