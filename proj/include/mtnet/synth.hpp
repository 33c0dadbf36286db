#pragma once

// Scripted top-down scenes of an object pressing the sensorised hand. The
// scene is 64x64 mm; images map it square-on, so geometry is exact: an object
// pixel can only appear inside a patch rectangle while the oracle reports
// force there, and the first press frame penetrates 2 mm, deep enough that
// the overlap region always contains a pixel centre. Approach routes run
// through corridors with >= 0.5 mm clearance at the largest object scale, so
// non-press frames never overlap any patch.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "mtnet/episode.hpp"

namespace mtnet {

enum class ObjectKind { Disk, Bar, Blob };

inline const char* object_name(ObjectKind k) {
  switch (k) {
    case ObjectKind::Disk: return "disk";
    case ObjectKind::Bar: return "bar";
    default: return "blob";
  }
}

inline ObjectKind parse_object(const std::string& s) {
  if (s == "disk") return ObjectKind::Disk;
  if (s == "bar") return ObjectKind::Bar;
  if (s == "blob") return ObjectKind::Blob;
  throw ConfigError("unknown object kind: " + s);
}

struct GenConfig {
  LayoutConfig layout = default_layout_config();
  int frames = 50;
  double fps = 30.0;
  int image = 64;  // square
  std::vector<std::string> objects = {"disk", "bar"};
  int min_targets = 1;
  int max_targets = 3;
  double scale_lo = 0.9, scale_hi = 1.1;
  double gain = 0.8;      // N per mm of penetration
  double sigma_mm = 3.0;  // force bump width
  double force_noise = 0.002;
  double pixel_noise = 0.015;
  double speed = 3.5;  // travel, mm per frame
  int press_lo = 2, press_hi = 3;
  int hold_lo = 3, hold_hi = 6;
  double depth_lo = 2.2, depth_hi = 3.4;
};

inline void to_json(json& j, const GenConfig& c) {
  j = json{{"layout", c.layout},
           {"frames", c.frames},
           {"fps", c.fps},
           {"image", c.image},
           {"objects", c.objects},
           {"min_targets", c.min_targets},
           {"max_targets", c.max_targets},
           {"scale_lo", c.scale_lo},
           {"scale_hi", c.scale_hi},
           {"gain", c.gain},
           {"sigma_mm", c.sigma_mm},
           {"force_noise", c.force_noise},
           {"pixel_noise", c.pixel_noise},
           {"speed", c.speed},
           {"press_lo", c.press_lo},
           {"press_hi", c.press_hi},
           {"hold_lo", c.hold_lo},
           {"hold_hi", c.hold_hi},
           {"depth_lo", c.depth_lo},
           {"depth_hi", c.depth_hi}};
}

inline void from_json(const json& j, GenConfig& c) {
  GenConfig d;
  c.layout = j.contains("layout") ? j.at("layout").get<LayoutConfig>() : d.layout;
  c.frames = j.value("frames", d.frames);
  c.fps = j.value("fps", d.fps);
  c.image = j.value("image", d.image);
  c.objects = j.value("objects", d.objects);
  c.min_targets = j.value("min_targets", d.min_targets);
  c.max_targets = j.value("max_targets", d.max_targets);
  c.scale_lo = j.value("scale_lo", d.scale_lo);
  c.scale_hi = j.value("scale_hi", d.scale_hi);
  c.gain = j.value("gain", d.gain);
  c.sigma_mm = j.value("sigma_mm", d.sigma_mm);
  c.force_noise = j.value("force_noise", d.force_noise);
  c.pixel_noise = j.value("pixel_noise", d.pixel_noise);
  c.speed = j.value("speed", d.speed);
  c.press_lo = j.value("press_lo", d.press_lo);
  c.press_hi = j.value("press_hi", d.press_hi);
  c.hold_lo = j.value("hold_lo", d.hold_lo);
  c.hold_hi = j.value("hold_hi", d.hold_hi);
  c.depth_lo = j.value("depth_lo", d.depth_lo);
  c.depth_hi = j.value("depth_hi", d.depth_hi);
}

struct TouchTarget {
  int sensor = 0;
  double offset = 0.0;  // lateral shift along the patch edge, mm
  double depth = 2.5;   // peak penetration, mm
  int press = 2;        // frames ramping 2mm -> depth
  int hold = 4;
  int onset = -1;  // first contact frame, filled in by the scripter
};

struct ObjectPose {
  double x = 0.0, y = 0.0;  // object centre, mm
  int target = -1;          // index into Scenario::targets while pressing
  double depth = 0.0;       // current penetration, mm
};

struct Scenario {
  uint64_t seed = 0;
  std::string domain = "robot";
  ObjectKind object = ObjectKind::Disk;
  double scale = 1.0;
  float obj_color[3] = {0.16f, 0.27f, 0.86f};
  float bg_color[3] = {0.10f, 0.11f, 0.13f};
  float skin_color[3] = {0.82f, 0.60f, 0.48f};
  std::vector<float> patch_gray;  // per sensor, robot look
  std::vector<TouchTarget> targets;
  std::vector<ObjectPose> path;  // one pose per frame
};

namespace synth_detail {

struct Rect {
  double x0, y0, x1, y1;
  bool contains(double x, double y) const { return x > x0 && x < x1 && y > y0 && y < y1; }
  double dist(double x, double y) const {  // distance outside, 0 inside
    const double dx = std::max({x0 - x, 0.0, x - x1});
    const double dy = std::max({y0 - y, 0.0, y - y1});
    return std::sqrt(dx * dx + dy * dy);
  }
};

inline Rect patch_rect(const TaxelLayout& lay, int s) {
  const int a = lay.sensor_start[size_t(s)], b = lay.sensor_start[size_t(s) + 1];
  const auto block = lay.coords.block(a, 0, b - a, 2);
  const double h = 0.5 * lay.pitch;
  return {block.col(0).minCoeff() - h, block.col(1).minCoeff() - h,
          block.col(0).maxCoeff() + h, block.col(1).maxCoeff() + h};
}

enum class Side { Top, MidRow, Palm };

// Lanes through the default hand that stay clear of every patch at the
// largest object scale.
inline constexpr double kTopBand = 2.0;
inline constexpr double kMidBand = 23.0;
inline constexpr double kPalmLane = 50.0;
inline constexpr double kHighways[3] = {14.0, 32.0, 50.0};

struct Approach {
  Side side;
  double dir_x, dir_y;     // pressing direction
  double edge;             // patch boundary coordinate along the press axis
  double lat_center;       // centre of the contact edge on the lateral axis
  double lat_max;          // admissible |offset|
  Rect grid;               // taxel hull (not inflated)
};

inline Approach classify(const TaxelLayout& lay, int s) {
  const Rect r = patch_rect(lay, s);
  const double h = 0.5 * lay.pitch;
  Approach a;
  a.grid = {r.x0 + h, r.y0 + h, r.x1 - h, r.y1 - h};
  if (r.y1 < 20.0) {
    a.side = Side::Top;
    a.dir_x = 0, a.dir_y = 1;
    a.edge = r.y0;
    a.lat_center = 0.5 * (r.x0 + r.x1);
    a.lat_max = 2.5;
  } else if (r.y0 < 45.0) {
    a.side = Side::MidRow;
    a.dir_x = 0, a.dir_y = 1;
    a.edge = r.y0;
    a.lat_center = 0.5 * (r.x0 + r.x1);
    a.lat_max = 2.0;
  } else {
    a.side = Side::Palm;
    a.dir_x = -1, a.dir_y = 0;
    a.edge = r.x1;
    a.lat_center = 0.5 * (r.y0 + r.y1);
    a.lat_max = 0.5;
  }
  return a;
}

inline double ext_along(ObjectKind k, double scale, bool x_axis) {
  switch (k) {
    case ObjectKind::Disk: return 3.0 * scale;
    case ObjectKind::Bar: return (x_axis ? 3.0 : 2.0) * scale;
    default: return (x_axis ? 2.8 : 2.6) * scale;  // blob: main disc + two x lobes
  }
}

inline bool inside_object(ObjectKind k, double scale, double cx, double cy, double px,
                          double py) {
  const double qx = px - cx, qy = py - cy;
  switch (k) {
    case ObjectKind::Disk: {
      const double r = 3.0 * scale;
      return qx * qx + qy * qy < r * r;
    }
    case ObjectKind::Bar:
      return std::abs(qx) < 3.0 * scale && std::abs(qy) < 2.0 * scale;
    default: {
      const double rm = 2.6 * scale, rb = 1.6 * scale, o = 1.2 * scale;
      if (qx * qx + qy * qy < rm * rm) return true;
      for (int sx = -1; sx <= 1; sx += 2) {
        const double bx = qx - sx * o;
        if (bx * bx + qy * qy < rb * rb) return true;
      }
      return false;
    }
  }
}

struct P2 {
  double x, y;
};

inline double seg_len(P2 a, P2 b) { return std::hypot(b.x - a.x, b.y - a.y); }

// Hover point for a target: on the lane serving its patch row.
inline P2 hover_of(const Approach& a, double offset) {
  switch (a.side) {
    case Side::Top: return {a.lat_center + offset, kTopBand};
    case Side::MidRow: return {a.lat_center + offset, kMidBand};
    default: return {kPalmLane, a.lat_center + offset};
  }
}

inline P2 contact_center(const Approach& a, double offset, double ext) {
  if (a.side == Side::Palm) return {a.edge + ext, a.lat_center + offset};
  return {a.lat_center + offset, a.edge - ext};
}

inline P2 staging_of(const Approach& a, double offset, double ext) {
  const P2 c = contact_center(a, offset, ext);
  return {c.x - a.dir_x, c.y - a.dir_y};  // 1 mm shy of first touch
}

inline void route_between(const Approach& from, P2 hf, const Approach& to, P2 ht,
                          std::vector<P2>& wps) {
  auto best_highway = [&](double xa, double xb) {
    double best = kHighways[0], cost = 1e18;
    for (double hx : kHighways) {
      const double c = std::abs(xa - hx) + std::abs(xb - hx);
      if (c < cost) cost = c, best = hx;
    }
    return best;
  };
  const bool fp = from.side == Side::Palm, tp = to.side == Side::Palm;
  if (fp && tp) return;                       // both on the palm lane
  if (fp) {                                   // palm -> finger rows
    const double band = (to.side == Side::Top) ? kTopBand : kMidBand;
    wps.push_back({kPalmLane, band});
    return;
  }
  if (tp) {  // finger rows -> palm
    const double band = (from.side == Side::Top) ? kTopBand : kMidBand;
    wps.push_back({kPalmLane, band});
    return;
  }
  if (from.side == to.side) return;  // same band, straight run
  const double hx = best_highway(hf.x, ht.x);
  wps.push_back({hx, hf.y});
  wps.push_back({hx, ht.y});
}

}  // namespace synth_detail

/// (Re)build scenario.path and target onsets from scenario.targets. Exposed
/// so callers can script bespoke touch sequences (e.g. per-sensor probes).
inline void script_path(const GenConfig& cfg, const TaxelLayout& lay, Scenario& sc,
                        int idle_frames = 1) {
  using namespace synth_detail;
  if (sc.targets.empty()) throw ConfigError("scenario has no touch targets");
  sc.path.clear();
  auto emit = [&](double x, double y, int tgt, double d) {
    if (int(sc.path.size()) < cfg.frames) sc.path.push_back({x, y, tgt, d});
  };

  std::vector<Approach> app(size_t(lay.sensor_count()));
  for (int s = 0; s < lay.sensor_count(); ++s) app[size_t(s)] = classify(lay, s);

  for (auto& tg : sc.targets) {
    tg.onset = -1;
    if (tg.sensor < 0 || tg.sensor >= lay.sensor_count())
      throw ConfigError("touch target sensor out of range");
    const Approach& a = app[size_t(tg.sensor)];
    if (std::abs(tg.offset) > a.lat_max + 1e-9)
      throw ConfigError("touch offset exceeds safe range for sensor " +
                        lay.sensors[size_t(tg.sensor)].name);
    if (tg.depth < 2.0 || tg.depth > 3.5) throw ConfigError("press depth outside [2, 3.5] mm");
  }

  auto ext_for = [&](const Approach& a) {
    return ext_along(sc.object, sc.scale, a.side == Side::Palm);
  };

  int prev = -1;
  P2 pos = hover_of(app[size_t(sc.targets[0].sensor)], sc.targets[0].offset);
  for (int k = 0; k < idle_frames; ++k) emit(pos.x, pos.y, -1, 0.0);

  for (size_t ti = 0; ti < sc.targets.size(); ++ti) {
    TouchTarget& tg = sc.targets[ti];
    const Approach& a = app[size_t(tg.sensor)];
    const double ext = ext_for(a);
    const P2 hov = hover_of(a, tg.offset);
    const P2 stage = staging_of(a, tg.offset, ext);
    const P2 cc = contact_center(a, tg.offset, ext);

    std::vector<P2> wps{pos};
    if (prev >= 0) {
      const Approach& pa = app[size_t(prev)];
      wps.push_back(hover_of(pa, 0.0));
      route_between(pa, wps.back(), a, hov, wps);
    }
    wps.push_back(hov);
    wps.push_back(stage);

    double total = 0.0;
    for (size_t i = 1; i < wps.size(); ++i) total += seg_len(wps[i - 1], wps[i]);
    const int steps = std::max(1, int(std::ceil(total / cfg.speed)));
    for (int k = 1; k <= steps; ++k) {
      double want = std::min(double(k) * cfg.speed, total);
      P2 p = wps.back();
      double acc = 0.0;
      for (size_t i = 1; i < wps.size(); ++i) {
        const double l = seg_len(wps[i - 1], wps[i]);
        if (acc + l >= want - 1e-12 && l > 0.0) {
          const double t = (want - acc) / l;
          p = {wps[i - 1].x + t * (wps[i].x - wps[i - 1].x),
               wps[i - 1].y + t * (wps[i].y - wps[i - 1].y)};
          break;
        }
        acc += l;
      }
      emit(p.x, p.y, -1, 0.0);
    }

    for (int k = 0; k < tg.press; ++k) {
      const double d =
          2.0 + (tg.depth - 2.0) * (tg.press == 1 ? 1.0 : double(k) / double(tg.press - 1));
      if (k == 0 && int(sc.path.size()) < cfg.frames) tg.onset = int(sc.path.size());
      emit(cc.x + d * a.dir_x, cc.y + d * a.dir_y, int(ti), d);
    }
    for (int k = 0; k < tg.hold; ++k)
      emit(cc.x + tg.depth * a.dir_x, cc.y + tg.depth * a.dir_y, int(ti), tg.depth);
    emit(stage.x, stage.y, -1, 0.0);  // quick release
    pos = stage;
    prev = tg.sensor;
  }
  while (int(sc.path.size()) < cfg.frames) {
    const P2 h = hover_of(app[size_t(prev)], 0.0);
    // retreat to the hover lane and rest there
    if (std::abs(pos.x - h.x) + std::abs(pos.y - h.y) > 1e-9) pos = h;
    emit(pos.x, pos.y, -1, 0.0);
  }
}

inline void validate_gen_config(const GenConfig& cfg, const TaxelLayout& lay) {
  if (cfg.image < 48) throw ConfigError("generator needs images of at least 48 px");
  if (cfg.frames < 12) throw ConfigError("generator needs at least 12 frames");
  if (cfg.objects.empty()) throw ConfigError("generator object pool is empty");
  if (cfg.min_targets < 1 || cfg.max_targets < cfg.min_targets)
    throw ConfigError("bad target count range");
  for (const auto& o : cfg.objects) parse_object(o);
  if (cfg.scale_lo < 0.9 - 1e-9 || cfg.scale_hi > 1.1 + 1e-9 || cfg.scale_lo > cfg.scale_hi)
    throw ConfigError("object scale must stay within [0.9, 1.1]");
  if (cfg.depth_lo < 2.0 || cfg.depth_hi > 3.5 || cfg.depth_lo > cfg.depth_hi)
    throw ConfigError("press depth range must stay within [2, 3.5] mm");
  // Corridor clearances are proven for the default hand only.
  const TaxelLayout ref = build_taxel_layout(default_layout_config());
  if (lay.total_taxels != ref.total_taxels || !lay.coords.isApprox(ref.coords, 1e-9))
    throw ConfigError("generator supports the default hand layout only");
}

inline Scenario sample_scenario(const GenConfig& cfg, uint64_t seed, const std::string& domain) {
  const TaxelLayout lay = build_taxel_layout(cfg.layout);
  validate_gen_config(cfg, lay);
  if (domain != "robot" && domain != "human")
    throw ConfigError("domain must be robot or human");

  Scenario sc;
  sc.seed = seed;
  sc.domain = domain;

  Rng motion(derive_seed(seed, "motion"));
  sc.object = parse_object(cfg.objects[motion.below(cfg.objects.size())]);
  sc.scale = motion.uniform(cfg.scale_lo, cfg.scale_hi);
  const int n = cfg.min_targets + int(motion.below(uint64_t(cfg.max_targets - cfg.min_targets + 1)));
  int prev = -1;
  for (int i = 0; i < n; ++i) {
    TouchTarget tg;
    do {
      tg.sensor = int(motion.below(uint64_t(lay.sensor_count())));
    } while (tg.sensor == prev);
    prev = tg.sensor;
    const auto a = synth_detail::classify(lay, tg.sensor);
    tg.offset = motion.uniform(-a.lat_max, a.lat_max);
    tg.depth = motion.uniform(cfg.depth_lo, cfg.depth_hi);
    tg.press = cfg.press_lo + int(motion.below(uint64_t(cfg.press_hi - cfg.press_lo + 1)));
    tg.hold = cfg.hold_lo + int(motion.below(uint64_t(cfg.hold_hi - cfg.hold_lo + 1)));
    sc.targets.push_back(tg);
  }

  Rng look(derive_seed(seed, "look/" + domain));
  const float base[3][3] = {{0.16f, 0.27f, 0.86f}, {0.10f, 0.42f, 0.90f}, {0.22f, 0.30f, 0.78f}};
  const int oi = int(sc.object);
  for (int c = 0; c < 3; ++c)
    sc.obj_color[c] = base[oi][c] + float(look.uniform(-0.03, 0.03));
  if (domain == "robot") {
    const float b = float(look.uniform(-0.02, 0.02));
    sc.bg_color[0] = 0.10f + b;
    sc.bg_color[1] = 0.11f + b;
    sc.bg_color[2] = 0.13f + b;
  } else {
    const float b = float(look.uniform(-0.03, 0.03));
    sc.bg_color[0] = 0.46f + b;
    sc.bg_color[1] = 0.41f + b;
    sc.bg_color[2] = 0.36f + b;
    const float s = float(look.uniform(-0.03, 0.03));
    sc.skin_color[0] = 0.82f + s;
    sc.skin_color[1] = 0.60f + s;
    sc.skin_color[2] = 0.48f + s;
  }
  sc.patch_gray.resize(size_t(lay.sensor_count()));
  for (auto& g : sc.patch_gray) g = 0.52f + float(look.uniform(-0.04, 0.04));

  script_path(cfg, lay, sc, 1 + int(motion.below(2)));
  return sc;
}

/// Noise-free forces for one pose: a Gaussian bump (height gain*depth,
/// width sigma) centred on the deepest penetrated point, applied to the
/// pressed sensor's taxels along the pressing direction.
inline Eigen::RowVectorXf contact_oracle(const TaxelLayout& lay, const GenConfig& cfg,
                                         const Scenario& sc, const ObjectPose& pose) {
  Eigen::RowVectorXf f = Eigen::RowVectorXf::Zero(lay.total_taxels * 3);
  if (pose.target < 0 || pose.depth <= 0.0) return f;
  const TouchTarget& tg = sc.targets[size_t(pose.target)];
  const auto a = synth_detail::classify(lay, tg.sensor);
  const double ext = synth_detail::ext_along(sc.object, sc.scale, a.side == synth_detail::Side::Palm);
  double bx = pose.x + ext * a.dir_x, by = pose.y + ext * a.dir_y;
  bx = std::clamp(bx, a.grid.x0, a.grid.x1);
  by = std::clamp(by, a.grid.y0, a.grid.y1);
  const double inv2s2 = 1.0 / (2.0 * cfg.sigma_mm * cfg.sigma_mm);
  for (int t = lay.sensor_start[size_t(tg.sensor)]; t < lay.sensor_start[size_t(tg.sensor) + 1];
       ++t) {
    const double dx = lay.coords(t, 0) - bx, dy = lay.coords(t, 1) - by;
    const double mag = cfg.gain * pose.depth * std::exp(-(dx * dx + dy * dy) * inv2s2);
    f[3 * t] = float(mag * a.dir_x);
    f[3 * t + 1] = float(mag * a.dir_y);
  }
  return f;
}

inline Eigen::RowVectorXf render_frame(const GenConfig& cfg, const TaxelLayout& lay,
                                       const Scenario& sc, const ObjectPose& pose, Rng& noise) {
  using namespace synth_detail;
  const int W = cfg.image;
  const double mm = 64.0 / double(W);
  Eigen::RowVectorXf img(W * W * 3);

  std::vector<Rect> rects(size_t(lay.sensor_count()));
  std::vector<Approach> app(size_t(lay.sensor_count()));
  for (int s = 0; s < lay.sensor_count(); ++s) {
    rects[size_t(s)] = patch_rect(lay, s);
    app[size_t(s)] = classify(lay, s);
  }
  const bool human = sc.domain == "human";
  // Finger stems and palm web for the human silhouette.
  std::vector<Rect> skin_extra;
  if (human) {
    for (int s = 0; s < lay.sensor_count(); ++s) {
      if (app[size_t(s)].side != Side::MidRow) continue;
      const Rect& m = rects[size_t(s)];
      for (int t = 0; t < lay.sensor_count(); ++t) {
        if (app[size_t(t)].side != Side::Top) continue;
        const Rect& tip = rects[size_t(t)];
        if (std::abs(0.5 * (tip.x0 + tip.x1) - 0.5 * (m.x0 + m.x1)) < 3.0)
          skin_extra.push_back({m.x0 + 1.5, tip.y1, m.x1 - 1.5, m.y0});
      }
      skin_extra.push_back({m.x0 + 1.5, m.y1, m.x1 - 1.5, 45.5});
    }
    skin_extra.push_back({18.5, 44.5, 45.5, 64.0});  // palm web
  }

  const double obj_r = 3.0 * sc.scale;
  for (int r = 0; r < W; ++r) {
    for (int c = 0; c < W; ++c) {
      const double px = (c + 0.5) * mm, py = (r + 0.5) * mm;
      float col[3];
      const float grad = float(0.03 * py / 64.0);
      for (int ch = 0; ch < 3; ++ch) col[ch] = sc.bg_color[ch] + grad;

      if (human) {
        for (const Rect& e : skin_extra)
          if (e.contains(px, py)) {
            for (int ch = 0; ch < 3; ++ch) col[ch] = sc.skin_color[ch] * 0.94f;
            break;
          }
        for (int s = 0; s < lay.sensor_count(); ++s) {
          if (rects[size_t(s)].dist(px, py) < 0.8) {  // rounded pad
            const float lift = 1.02f + 0.04f * float(s % 3);
            for (int ch = 0; ch < 3; ++ch) col[ch] = sc.skin_color[ch] * lift;
            break;
          }
        }
      } else {
        for (int s = 0; s < lay.sensor_count(); ++s) {
          const Rect& rc = rects[size_t(s)];
          if (!rc.contains(px, py)) continue;
          const double edge = std::min(std::min(px - rc.x0, rc.x1 - px),
                                       std::min(py - rc.y0, rc.y1 - py));
          if (edge < 0.45) {
            col[0] = col[1] = col[2] = 0.33f;
          } else {
            const float g = sc.patch_gray[size_t(s)] +
                            0.018f * float((int(std::floor(px)) + int(std::floor(py))) & 1);
            col[0] = col[1] = col[2] = g;
          }
          break;
        }
      }

      if (inside_object(sc.object, sc.scale, pose.x, pose.y, px, py)) {
        const double d2 = (px - pose.x) * (px - pose.x) + (py - pose.y) * (py - pose.y);
        const float shade = 1.0f - 0.08f * float(d2 / (obj_r * obj_r));
        for (int ch = 0; ch < 3; ++ch) col[ch] = sc.obj_color[ch] * shade;
      }

      const int at = (r * W + c) * 3;
      for (int ch = 0; ch < 3; ++ch) {
        const float v = col[ch] + float(noise.uniform(-cfg.pixel_noise, cfg.pixel_noise));
        img[at + ch] = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return img;
}

inline Episode synthesize_episode(const GenConfig& cfg, const Scenario& sc) {
  const TaxelLayout lay = build_taxel_layout(cfg.layout);
  validate_gen_config(cfg, lay);
  if (int(sc.path.size()) != cfg.frames)
    throw ConfigError("scenario path length disagrees with configured frame count");

  Episode ep;
  ep.domain = sc.domain;
  ep.fps = cfg.fps;
  ep.height = ep.width = cfg.image;
  ep.layout = cfg.layout;
  ep.tactile.resize(cfg.frames, lay.total_taxels * 3);
  ep.visual.resize(cfg.frames, cfg.image * cfg.image * 3);

  Rng fnoise(derive_seed(sc.seed, "force_noise"));
  Rng vnoise(derive_seed(sc.seed, "pixel_noise/" + sc.domain));
  for (int f = 0; f < cfg.frames; ++f) {
    Eigen::RowVectorXf forces = contact_oracle(lay, cfg, sc, sc.path[size_t(f)]);
    for (int i = 0; i < forces.size(); ++i)
      forces[i] += float(fnoise.normal() * cfg.force_noise);
    ep.tactile.row(f) = forces;
    ep.visual.row(f) = render_frame(cfg, lay, sc, sc.path[size_t(f)], vnoise);
  }
  ep.contact = derive_contact_labels(ep.tactile, lay);

  json targets = json::array();
  for (const auto& tg : sc.targets)
    targets.push_back(json{{"sensor", tg.sensor},
                           {"offset", tg.offset},
                           {"depth", tg.depth},
                           {"press", tg.press},
                           {"hold", tg.hold},
                           {"onset", tg.onset}});
  ep.meta = json{{"seed", sc.seed},
                 {"object", object_name(sc.object)},
                 {"scale", sc.scale},
                 {"targets", targets}};
  return ep;
}

inline Episode generate_episode(const GenConfig& cfg, uint64_t seed, const std::string& domain) {
  return synthesize_episode(cfg, sample_scenario(cfg, seed, domain));
}

/// Emit n_robot robot episodes plus n_pairs scenario-matched human/robot
/// twins (identical script and tactile stream, domain-specific rendering).
inline DatasetManifest generate_dataset(const GenConfig& cfg, const std::filesystem::path& dir,
                                        int n_robot, int n_pairs, uint64_t master_seed) {
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.fps = cfg.fps;
  m.height = m.width = cfg.image;
  m.layout = cfg.layout;
  m.generator = json{{"config", cfg}, {"master_seed", master_seed}, {"n_robot", n_robot},
                     {"n_pairs", n_pairs}};
  char name[64];
  for (int i = 0; i < n_robot; ++i) {
    const uint64_t seed = derive_seed(master_seed, "robot/" + std::to_string(i));
    Episode ep = generate_episode(cfg, seed, "robot");
    std::snprintf(name, sizeof name, "ep_robot_%04d.bin", i);
    write_episode(dir / name, ep);
    m.episodes.push_back({name, "robot", ep.frames()});
  }
  for (int i = 0; i < n_pairs; ++i) {
    const uint64_t seed = derive_seed(master_seed, "pair/" + std::to_string(i));
    for (const char* domain : {"human", "robot"}) {
      Episode ep = generate_episode(cfg, seed, domain);
      ep.meta["pair"] = i;
      std::snprintf(name, sizeof name, "ep_pair%s_%04d.bin",
                    std::string(domain) == "human" ? "h" : "r", i);
      write_episode(dir / name, ep);
      m.episodes.push_back({name, domain, ep.frames()});
    }
  }
  write_manifest(dir, m);
  return m;
}

/// First frame each sensor reports contact, -1 if never.
inline std::vector<int> tactile_onsets(const Episode& ep) {
  std::vector<int> out(size_t(ep.sensor_count()), -1);
  for (int s = 0; s < ep.sensor_count(); ++s)
    for (int f = 0; f < ep.frames(); ++f)
      if (ep.contact(f, s) > 0.5f) {
        out[size_t(s)] = f;
        break;
      }
  return out;
}

inline bool pixel_is_object(float r, float g, float b) {
  return b > r + 0.15f && b > g + 0.10f && b > 0.35f;
}

/// First frame an object-coloured pixel appears inside each patch rectangle,
/// -1 if never. With the scripted corridors this matches tactile_onsets
/// frame-exactly.
inline std::vector<int> visual_onsets(const Episode& ep) {
  const TaxelLayout lay = build_taxel_layout(ep.layout);
  std::vector<synth_detail::Rect> rects(size_t(lay.sensor_count()));
  for (int s = 0; s < lay.sensor_count(); ++s) rects[size_t(s)] = synth_detail::patch_rect(lay, s);
  const double mm = 64.0 / double(ep.width);
  std::vector<int> out(size_t(lay.sensor_count()), -1);
  for (int f = 0; f < ep.frames(); ++f) {
    for (int s = 0; s < lay.sensor_count(); ++s) {
      if (out[size_t(s)] >= 0) continue;
      const auto& rc = rects[size_t(s)];
      const int c0 = std::max(0, int(rc.x0 / mm) - 1), c1 = std::min(ep.width, int(rc.x1 / mm) + 2);
      const int r0 = std::max(0, int(rc.y0 / mm) - 1), r1 = std::min(ep.height, int(rc.y1 / mm) + 2);
      bool hit = false;
      for (int r = r0; r < r1 && !hit; ++r)
        for (int c = c0; c < c1 && !hit; ++c) {
          const double px = (c + 0.5) * mm, py = (r + 0.5) * mm;
          if (!rc.contains(px, py)) continue;
          const int at = (r * ep.width + c) * 3;
          if (pixel_is_object(ep.visual(f, at), ep.visual(f, at + 1), ep.visual(f, at + 2)))
            hit = true;
        }
      if (hit) out[size_t(s)] = f;
    }
  }
  return out;
}

}  // namespace mtnet
