#include <catch2/catch_amalgamated.hpp>
#include <limits>

#include "mtnet/layout.hpp"

using namespace mtnet;

TEST_CASE("default layout has the full taxel complement") {
  const TaxelLayout lay = build_taxel_layout(default_layout_config());
  CHECK(lay.total_taxels == 1140);
  CHECK(lay.sensor_count() == 11);
  CHECK(lay.coords.rows() == 1140);
  CHECK(lay.coords.allFinite());

  int tips = 0, mids = 0, strips = 0;
  for (const auto& s : lay.sensors) {
    if (s.rows == 12 && s.cols == 10) ++tips;
    if (s.rows == 12 && s.cols == 8) ++mids;
    if (s.rows == 4 && s.cols == 23) ++strips;
  }
  CHECK(tips == 4);
  CHECK(mids == 4);
  CHECK(strips == 3);
}

TEST_CASE("default layout covers every finger and the palm") {
  const TaxelLayout lay = build_taxel_layout(default_layout_config());
  for (int f = 0; f < kFingerCount; ++f) {
    CAPTURE(f);
    CHECK(lay.sensors_of_finger(f).size() == 2);
  }
  CHECK(lay.sensors_of_finger(kPalmGroup).size() == 3);
}

TEST_CASE("taxel coordinates honour grid pitch") {
  const TaxelLayout lay = build_taxel_layout(default_layout_config());
  // Within a sensor, column neighbours sit one pitch apart.
  for (int s = 0; s < lay.sensor_count(); ++s) {
    const int start = lay.sensor_start[size_t(s)];
    const int cols = lay.sensors[size_t(s)].cols;
    CHECK_THAT((lay.coords.row(start) - lay.coords.row(start + 1)).norm(),
               Catch::Matchers::WithinAbs(lay.pitch, 1e-12));
    if (lay.sensors[size_t(s)].rows > 1)
      CHECK_THAT((lay.coords.row(start) - lay.coords.row(start + cols)).norm(),
                 Catch::Matchers::WithinAbs(lay.pitch, 1e-12));
  }
}

TEST_CASE("patches keep physical clearance from each other") {
  const TaxelLayout lay = build_taxel_layout(default_layout_config());
  double min_gap = 1e9;
  for (int a = 0; a < lay.sensor_count(); ++a)
    for (int b = a + 1; b < lay.sensor_count(); ++b)
      for (int i = lay.sensor_start[size_t(a)]; i < lay.sensor_start[size_t(a) + 1]; ++i)
        for (int j = lay.sensor_start[size_t(b)]; j < lay.sensor_start[size_t(b) + 1]; ++j)
          min_gap = std::min(min_gap, (lay.coords.row(i) - lay.coords.row(j)).norm());
  CHECK(min_gap >= 2.0);  // narrowest corridor in the default hand
}

TEST_CASE("sensor_of_taxel is consistent with sensor ranges") {
  const TaxelLayout lay = build_taxel_layout(default_layout_config());
  for (int s = 0; s < lay.sensor_count(); ++s) {
    CHECK(lay.sensor_of_taxel(lay.sensor_start[size_t(s)]) == s);
    CHECK(lay.sensor_of_taxel(lay.sensor_start[size_t(s) + 1] - 1) == s);
  }
}

TEST_CASE("layout validation rejects malformed configs") {
  SECTION("empty") {
    LayoutConfig cfg;
    CHECK_THROWS_AS(build_taxel_layout(cfg), ConfigError);
  }
  SECTION("non-positive dims") {
    LayoutConfig cfg = default_layout_config();
    cfg.sensors[0].rows = 0;
    CHECK_THROWS_AS(build_taxel_layout(cfg), ConfigError);
  }
  SECTION("total mismatch") {
    LayoutConfig cfg = default_layout_config();
    cfg.expected_total = 999;
    CHECK_THROWS_AS(build_taxel_layout(cfg), ConfigError);
  }
  SECTION("skewed axes") {
    LayoutConfig cfg = default_layout_config();
    cfg.sensors[2].col_dir = Eigen::Vector3d(1, 1, 0).normalized();
    cfg.sensors[2].row_dir = Eigen::Vector3d::UnitY();
    CHECK_THROWS_AS(build_taxel_layout(cfg), ConfigError);
  }
  SECTION("overlapping sensors") {
    LayoutConfig cfg = default_layout_config();
    cfg.sensors[1].origin = cfg.sensors[0].origin + Eigen::Vector3d(0.2, 0.1, 0.0);
    cfg.expected_total = 0;
    CHECK_THROWS_AS(build_taxel_layout(cfg), ConfigError);
  }
  SECTION("bad finger group") {
    LayoutConfig cfg = default_layout_config();
    cfg.sensors[0].finger = 7;
    CHECK_THROWS_AS(build_taxel_layout(cfg), ConfigError);
  }
  SECTION("non-finite origin") {
    LayoutConfig cfg = default_layout_config();
    cfg.sensors[0].origin.x() = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(build_taxel_layout(cfg), ConfigError);
  }
}

TEST_CASE("degenerate single-taxel sensor is allowed") {
  LayoutConfig cfg;
  cfg.pitch_mm = 2.0;
  SensorPatch p;
  p.name = "dot";
  p.rows = 1;
  p.cols = 1;
  p.origin = {5, 5, 0};
  p.finger = 0;
  cfg.sensors.push_back(p);
  const TaxelLayout lay = build_taxel_layout(cfg);
  CHECK(lay.total_taxels == 1);
  CHECK(lay.coords.row(0).isApprox(Eigen::RowVector3d(5, 5, 0)));
}

TEST_CASE("layout config json round trip") {
  const LayoutConfig cfg = default_layout_config();
  json j = cfg;
  const auto back = j.get<LayoutConfig>();
  REQUIRE(back.sensors.size() == cfg.sensors.size());
  CHECK(back.pitch_mm == cfg.pitch_mm);
  CHECK(back.expected_total == cfg.expected_total);
  for (size_t i = 0; i < cfg.sensors.size(); ++i) {
    CHECK(back.sensors[i].name == cfg.sensors[i].name);
    CHECK(back.sensors[i].rows == cfg.sensors[i].rows);
    CHECK(back.sensors[i].cols == cfg.sensors[i].cols);
    CHECK(back.sensors[i].finger == cfg.sensors[i].finger);
    CHECK(back.sensors[i].origin.isApprox(cfg.sensors[i].origin));
  }
  const TaxelLayout a = build_taxel_layout(cfg);
  const TaxelLayout b = build_taxel_layout(back);
  CHECK(a.coords.isApprox(b.coords));
}
