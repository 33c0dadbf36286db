#include <unistd.h>

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <limits>

#include "mtnet/episode.hpp"

using namespace mtnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path d = fs::temp_directory_path() / ("mtnet_epio_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter++));
  fs::create_directories(d);
  return d;
}

Episode random_episode(uint64_t seed, int frames, int hw = 16) {
  Rng rng(seed);
  Episode ep;
  LayoutConfig cfg;
  cfg.pitch_mm = 1.0;
  for (int s = 0; s < 3; ++s) {
    SensorPatch p;
    p.name = "s" + std::to_string(s);
    p.rows = 2;
    p.cols = 3;
    p.origin = {double(8 * s), 0.0, 0.0};
    p.finger = s;
    cfg.sensors.push_back(p);
  }
  ep.layout = cfg;
  ep.height = ep.width = hw;
  ep.domain = (seed % 2) ? "human" : "robot";
  ep.meta = json{{"seed", seed}, {"object", "disk"}};
  const TaxelLayout lay = build_taxel_layout(cfg);
  ep.tactile.resize(frames, lay.total_taxels * 3);
  ep.visual.resize(frames, hw * hw * 3);
  rng.fill_normal(ep.tactile, 0.3);
  for (Eigen::Index i = 0; i < ep.visual.rows(); ++i)
    for (Eigen::Index j = 0; j < ep.visual.cols(); ++j)
      ep.visual(i, j) = float(rng.uniform());
  ep.contact = derive_contact_labels(ep.tactile, lay);
  return ep;
}

}  // namespace

TEST_CASE("episode round trips bit-exactly") {
  const fs::path dir = temp_dir();
  for (uint64_t seed : {1ULL, 7ULL, 42ULL}) {
    const Episode ep = random_episode(seed, 5 + int(seed % 4));
    const fs::path f = dir / ("ep" + std::to_string(seed) + ".bin");
    write_episode(f, ep);
    const Episode back = read_episode(f);
    CHECK(back.domain == ep.domain);
    CHECK(back.fps == ep.fps);
    CHECK(back.height == ep.height);
    CHECK(back.width == ep.width);
    CHECK(back.meta == ep.meta);
    REQUIRE(back.tactile.rows() == ep.tactile.rows());
    CHECK((back.tactile.array() == ep.tactile.array()).all());
    CHECK((back.visual.array() == ep.visual.array()).all());
    CHECK((back.contact.array() == ep.contact.array()).all());
  }
  fs::remove_all(dir);
}

TEST_CASE("contact labels use a strict L2 threshold") {
  LayoutConfig cfg;
  SensorPatch a{.name = "a", .rows = 1, .cols = 2, .origin = {0, 0, 0}, .finger = 0};
  SensorPatch b{.name = "b", .rows = 1, .cols = 2, .origin = {10, 0, 0}, .finger = 1};
  cfg.sensors = {a, b};
  const TaxelLayout lay = build_taxel_layout(cfg);

  Mat<float> tac = Mat<float>::Zero(3, 4 * 3);
  // frame 0: sensor a taxel 0 has |F| exactly 0.05 (3-4-5 triangle) -> no contact
  tac(0, 0) = 0.03f;
  tac(0, 1) = 0.04f;
  // frame 1: nudge one component -> contact on a only
  tac(1, 0) = 0.03f;
  tac(1, 1) = 0.0401f;
  // frame 2: contact on b via its second taxel, z component only
  tac(2, 3 * 3 + 2) = 0.0501f;

  const Mat<float> lab = derive_contact_labels(tac, lay);
  CHECK(lab(0, 0) == 0.0f);
  CHECK(lab(0, 1) == 0.0f);
  CHECK(lab(1, 0) == 1.0f);
  CHECK(lab(1, 1) == 0.0f);
  CHECK(lab(2, 0) == 0.0f);
  CHECK(lab(2, 1) == 1.0f);
}

TEST_CASE("truncated payload is reported") {
  const fs::path dir = temp_dir();
  const Episode ep = random_episode(3, 6);
  const fs::path f = dir / "ep.bin";
  write_episode(f, ep);
  const auto full = fs::file_size(f);
  fs::resize_file(f, full - 64);
  CHECK_THROWS_WITH(read_episode(f), Catch::Matchers::ContainsSubstring("truncated"));
  fs::remove_all(dir);
}

TEST_CASE("corrupt header is reported with an offset") {
  const fs::path dir = temp_dir();
  const fs::path f = dir / "bad.bin";
  {
    std::ofstream out(f, std::ios::binary);
    out << "{\"schema\": \"mtnet.episode\", \"oops\n";
  }
  CHECK_THROWS_WITH(read_episode(f), Catch::Matchers::ContainsSubstring("corrupt header"));
  fs::remove_all(dir);
}

TEST_CASE("wrong schema and shape mismatches are rejected") {
  const fs::path dir = temp_dir();
  SECTION("foreign schema") {
    const fs::path f = dir / "foreign.bin";
    std::vector<float> buf(4, 0.0f);
    write_tensor_file(f, json{{"schema", "other.thing"}}, {{"x", {2, 2}}}, {buf.data()});
    CHECK_THROWS_AS(read_episode(f), SchemaError);
  }
  SECTION("header/tensor disagreement") {
    Episode ep = random_episode(11, 4);
    json header{{"schema", "mtnet.episode"}, {"version", 1},        {"domain", ep.domain},
                {"fps", ep.fps},             {"height", ep.height}, {"width", ep.width},
                {"frames", 9},               {"layout", ep.layout}, {"meta", ep.meta}};
    const fs::path f = dir / "short.bin";
    std::vector<TensorSpec> specs = {{"tactile", {4, ep.taxels(), 3}},
                                     {"visual", {4, ep.height, ep.width, 3}},
                                     {"contact", {4, ep.sensor_count()}}};
    write_tensor_file(f, header, specs,
                      {ep.tactile.data(), ep.visual.data(), ep.contact.data()});
    CHECK_THROWS_AS(read_episode(f), SchemaError);
  }
  SECTION("missing file") { CHECK_THROWS_AS(read_episode(dir / "nope.bin"), FormatError); }
  fs::remove_all(dir);
}

TEST_CASE("non-finite episodes are refused on read") {
  const fs::path dir = temp_dir();
  Episode ep = random_episode(5, 4);
  ep.tactile(2, 7) = std::numeric_limits<float>::infinity();
  const fs::path f = dir / "inf.bin";
  write_episode(f, ep);
  CHECK_THROWS_AS(read_episode(f), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("dataset manifest round trip and missing-file detection") {
  const fs::path dir = temp_dir();
  const Episode e0 = random_episode(21, 5);
  const Episode e1 = random_episode(22, 7);
  write_episode(dir / "ep_000.bin", e0);
  write_episode(dir / "ep_001.bin", e1);

  DatasetManifest m;
  m.layout = e0.layout;
  m.height = e0.height;
  m.width = e0.width;
  m.generator = json{{"seed", 21}};
  m.episodes = {{"ep_000.bin", e0.domain, e0.frames()}, {"ep_001.bin", e1.domain, e1.frames()}};
  write_manifest(dir, m);

  const DatasetManifest back = read_manifest(dir);
  REQUIRE(back.episodes.size() == 2);
  CHECK(back.episodes[1].frames == 7);
  CHECK(back.generator.at("seed") == 21);

  fs::remove(dir / "ep_001.bin");
  CHECK_THROWS_WITH(read_manifest(dir), Catch::Matchers::ContainsSubstring("missing episode"));
  fs::remove_all(dir);
}
