#pragma once
// One JSON document drives everything: data generation, model shape, both
// training stages, and the reflex layer. Every field falls back to the
// library default, so partial configs stay valid across minor versions.

#include <filesystem>
#include <fstream>

#include "mtnet/nets.hpp"
#include "mtnet/reflex.hpp"
#include "mtnet/synth.hpp"
#include "mtnet/train.hpp"

namespace mtnet {

inline constexpr const char* kConfigSchema = "mtnet.config";
inline constexpr int kConfigVersion = 1;

struct RunConfig {
  GenConfig gen;
  int robot_episodes = 60;
  int pair_episodes = 20;  // scenario twins rendered in both domains
  NetConfig net;
  TrainConfig train;  // stage 1
  TrainConfig adapt;  // stage 2
  ReflexConfig reflex;

  void validate() const {
    if (robot_episodes < 1) throw ConfigError("config: robot_episodes must be positive");
    if (pair_episodes < 0) throw ConfigError("config: pair_episodes must be non-negative");
    net.validate();
    reflex.validate();
  }
};

inline void to_json(json& j, const RunConfig& c) {
  j = json{{"schema", kConfigSchema}, {"version", kConfigVersion},
           {"gen", c.gen},            {"robot_episodes", c.robot_episodes},
           {"pair_episodes", c.pair_episodes}, {"net", c.net},
           {"train", c.train},        {"adapt", c.adapt},
           {"reflex", c.reflex}};
}

inline void from_json(const json& j, RunConfig& c) {
  if (j.contains("schema") && j.at("schema") != kConfigSchema)
    throw SchemaError("not a run config: schema is '" + j.at("schema").get<std::string>() + "'");
  const int v = j.value("version", kConfigVersion);
  if (v > kConfigVersion)
    throw SchemaError("config version " + std::to_string(v) + " is newer than this build");
  const RunConfig d;
  c.gen = j.value("gen", d.gen);
  c.robot_episodes = j.value("robot_episodes", d.robot_episodes);
  c.pair_episodes = j.value("pair_episodes", d.pair_episodes);
  c.net = j.value("net", d.net);
  c.train = j.value("train", d.train);
  c.adapt = j.value("adapt", d.adapt);
  c.reflex = j.value("reflex", d.reflex);
}

/// Small-model preset sized so a full pipeline (generate, two training
/// stages, evaluation, diagnostics) finishes on a laptop CPU in minutes.
inline RunConfig desk_config() {
  RunConfig c;
  c.net.frames_k = 3;
  c.net.latent = 16;
  c.net.feat = 64;
  c.net.conv1 = 6;
  c.net.conv2 = 12;
  c.net.conv3 = 16;
  c.net.tac_h1 = 32;
  c.net.tac_h2 = 48;
  c.net.dec_h = 32;

  c.train.epochs = 8;
  c.train.steps_per_epoch = 150;
  c.train.batch = 8;
  c.train.weights.kl_warmup = 200;
  c.train.val_cap = 2;
  c.train.val_every = 2;

  c.adapt.epochs = 6;
  c.adapt.steps_per_epoch = 100;
  c.adapt.batch = 8;
  c.adapt.lr = 1e-3;
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  RunConfig c = j.get<RunConfig>();
  c.validate();
  return c;
}

inline void save_run_config(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write config " + path.string());
  out << json(c).dump(2) << "\n";
}

}  // namespace mtnet
