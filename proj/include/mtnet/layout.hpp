#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtnet/common.hpp"

namespace mtnet {

using json = nlohmann::json;

/// One contiguous grid of taxels. `origin` is the 3D position (mm) of taxel
/// (0,0); rows advance along `row_dir`, columns along `col_dir`.
struct SensorPatch {
  std::string name;
  int rows = 0;
  int cols = 0;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d row_dir = Eigen::Vector3d::UnitY();
  Eigen::Vector3d col_dir = Eigen::Vector3d::UnitX();
  int finger = 0;  // 0..3 fingers, 4 palm

  int taxel_count() const { return rows * cols; }
};

struct LayoutConfig {
  double pitch_mm = 1.0;
  std::vector<SensorPatch> sensors;
  // When nonzero, building rejects sensor grids that do not sum to this.
  int expected_total = 0;
};

/// Immutable after construction; shared freely across threads.
struct TaxelLayout {
  std::vector<SensorPatch> sensors;
  double pitch = 1.0;
  int total_taxels = 0;
  // [total_taxels x 3], mm, concatenated in sensor order, row-major per grid.
  Eigen::Matrix<double, Eigen::Dynamic, 3> coords;
  std::vector<int> sensor_start;  // size sensors+1, taxel offset per sensor
  std::vector<int> finger_of_sensor;

  int sensor_count() const { return int(sensors.size()); }
  int sensor_of_taxel(int t) const {
    int s = 0;
    while (t >= sensor_start[size_t(s) + 1]) ++s;
    return s;
  }
  std::vector<int> sensors_of_finger(int f) const {
    std::vector<int> out;
    for (int s = 0; s < sensor_count(); ++s)
      if (finger_of_sensor[size_t(s)] == f) out.push_back(s);
    return out;
  }
};

inline constexpr int kPalmGroup = 4;
inline constexpr int kFingerCount = 4;

inline TaxelLayout build_taxel_layout(const LayoutConfig& cfg) {
  if (cfg.sensors.empty()) throw ConfigError("layout: no sensors");
  if (!(cfg.pitch_mm > 0.0)) throw ConfigError("layout: pitch must be positive");
  int total = 0;
  for (const auto& s : cfg.sensors) {
    if (s.rows < 1 || s.cols < 1)
      throw ConfigError("layout: non-positive grid dims for sensor " + s.name);
    if (s.finger < 0 || s.finger > kPalmGroup)
      throw ConfigError("layout: finger group out of range for sensor " + s.name);
    if (std::abs(s.row_dir.norm() - 1.0) > 1e-9 || std::abs(s.col_dir.norm() - 1.0) > 1e-9 ||
        std::abs(s.row_dir.dot(s.col_dir)) > 1e-9)
      throw ConfigError("layout: row/col directions must be orthonormal for " + s.name);
    total += s.rows * s.cols;
  }
  if (cfg.expected_total != 0 && total != cfg.expected_total)
    throw ConfigError("layout: grids sum to " + std::to_string(total) + ", expected " +
                      std::to_string(cfg.expected_total));

  TaxelLayout lay;
  lay.sensors = cfg.sensors;
  lay.pitch = cfg.pitch_mm;
  lay.total_taxels = total;
  lay.coords.resize(total, 3);
  lay.sensor_start.assign(1, 0);
  int t = 0;
  for (const auto& s : cfg.sensors) {
    for (int r = 0; r < s.rows; ++r)
      for (int c = 0; c < s.cols; ++c) {
        lay.coords.row(t++) =
            (s.origin + cfg.pitch_mm * (double(r) * s.row_dir + double(c) * s.col_dir))
                .transpose();
      }
    lay.sensor_start.push_back(t);
    lay.finger_of_sensor.push_back(s.finger);
  }
  if (!lay.coords.allFinite()) throw ConfigError("layout: non-finite taxel coordinates");

  // Patches must not interpenetrate: taxels of different sensors may not come
  // closer than half a pitch.
  for (int a = 0; a < lay.sensor_count(); ++a)
    for (int b = a + 1; b < lay.sensor_count(); ++b) {
      for (int i = lay.sensor_start[size_t(a)]; i < lay.sensor_start[size_t(a) + 1]; ++i)
        for (int j = lay.sensor_start[size_t(b)]; j < lay.sensor_start[size_t(b) + 1]; ++j)
          if ((lay.coords.row(i) - lay.coords.row(j)).norm() < 0.5 * cfg.pitch_mm)
            throw ConfigError("layout: sensors " + lay.sensors[size_t(a)].name + " and " +
                              lay.sensors[size_t(b)].name + " overlap");
    }
  return lay;
}

/// The default hand: 4 fingertip 12x10 grids, 4 middle 12x8 grids and 3 palm
/// 4x23 strips at 1 mm pitch, 1,140 taxels total, laid out in the z=0 plane
/// with clear approach corridors between patches. Coordinates are in mm and
/// map one-to-one onto a 64x64 px scene.
inline LayoutConfig default_layout_config() {
  LayoutConfig cfg;
  cfg.pitch_mm = 1.0;
  cfg.expected_total = 1140;
  const double tip_x[4] = {0.5, 18.5, 36.5, 54.5};
  const double mid_x[4] = {1.5, 19.5, 37.5, 55.5};
  for (int f = 0; f < 4; ++f) {
    SensorPatch tip;
    tip.name = "tip" + std::to_string(f);
    tip.rows = 12;
    tip.cols = 10;
    tip.origin = {tip_x[f], 7.0, 0.0};
    tip.finger = f;
    cfg.sensors.push_back(tip);
  }
  for (int f = 0; f < 4; ++f) {
    SensorPatch mid;
    mid.name = "mid" + std::to_string(f);
    mid.rows = 12;
    mid.cols = 8;
    mid.origin = {mid_x[f], 28.0, 0.0};
    mid.finger = f;
    cfg.sensors.push_back(mid);
  }
  for (int p = 0; p < 3; ++p) {
    SensorPatch strip;
    strip.name = "palm" + std::to_string(p);
    strip.rows = 4;
    strip.cols = 23;
    strip.origin = {21.0, 47.9 + 6.3 * p, 0.0};
    strip.finger = kPalmGroup;
    cfg.sensors.push_back(strip);
  }
  return cfg;
}

inline void to_json(json& j, const SensorPatch& s) {
  j = json{{"name", s.name},
           {"rows", s.rows},
           {"cols", s.cols},
           {"origin", {s.origin.x(), s.origin.y(), s.origin.z()}},
           {"row_dir", {s.row_dir.x(), s.row_dir.y(), s.row_dir.z()}},
           {"col_dir", {s.col_dir.x(), s.col_dir.y(), s.col_dir.z()}},
           {"finger", s.finger}};
}

inline void from_json(const json& j, SensorPatch& s) {
  j.at("name").get_to(s.name);
  j.at("rows").get_to(s.rows);
  j.at("cols").get_to(s.cols);
  auto vec3 = [](const json& a) {
    return Eigen::Vector3d(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
  };
  s.origin = vec3(j.at("origin"));
  if (j.contains("row_dir")) s.row_dir = vec3(j.at("row_dir"));
  if (j.contains("col_dir")) s.col_dir = vec3(j.at("col_dir"));
  j.at("finger").get_to(s.finger);
}

inline void to_json(json& j, const LayoutConfig& c) {
  j = json{{"pitch_mm", c.pitch_mm}, {"sensors", c.sensors}, {"expected_total", c.expected_total}};
}

inline void from_json(const json& j, LayoutConfig& c) {
  j.at("pitch_mm").get_to(c.pitch_mm);
  j.at("sensors").get_to(c.sensors);
  c.expected_total = j.value("expected_total", 0);
}

}  // namespace mtnet
