#pragma once

// Mirror-touch behavior layer: a per-finger threshold trigger with a
// sub-threshold re-arming window, plus the frame-difference motion curve
// used to line flick responses up against observed hand motion.

#include <array>
#include <cmath>
#include <vector>

#include "mtnet/episode.hpp"
#include "mtnet/layout.hpp"
#include "mtnet/nets.hpp"

namespace mtnet {

struct ReflexConfig {
  double threshold_n = 0.2;
  double reset_after_s = 0.5;
  int fps = 30;

  int rearm_frames() const { return int(std::lround(reset_after_s * fps)); }
  void validate() const {
    if (!(threshold_n > 0)) throw ConfigError("reflex: threshold must be positive");
    if (!(reset_after_s > 0)) throw ConfigError("reflex: reset_after must be positive");
    if (fps <= 0) throw ConfigError("reflex: fps must be positive");
  }
};

inline void to_json(json& j, const ReflexConfig& c) {
  j = json{{"threshold_n", c.threshold_n}, {"reset_after_s", c.reset_after_s}, {"fps", c.fps}};
}
inline void from_json(const json& j, ReflexConfig& c) {
  c.threshold_n = j.value("threshold_n", c.threshold_n);
  c.reset_after_s = j.value("reset_after_s", c.reset_after_s);
  c.fps = j.value("fps", c.fps);
}

struct ReflexState {
  std::array<bool, kFingerCount> armed;
  std::array<int, kFingerCount> quiet;  // consecutive sub-threshold frames
  ReflexState() {
    armed.fill(true);
    quiet.fill(0);
  }
};

struct FlickEvent {
  int finger = 0;
  int frame = 0;
};

inline void to_json(json& j, const FlickEvent& e) {
  j = json{{"finger", e.finger}, {"frame", e.frame}};
}

/// Max taxel force magnitude per finger. Palm sensors do not participate.
inline Eigen::Vector4f finger_forces(const Eigen::Ref<const Eigen::RowVectorXf>& taxels,
                                     const TaxelLayout& lay) {
  Eigen::Vector4f F = Eigen::Vector4f::Zero();
  for (int s = 0; s < lay.sensor_count(); ++s) {
    const int f = lay.finger_of_sensor[size_t(s)];
    if (f < 0 || f >= kFingerCount) continue;
    for (int i = lay.sensor_start[size_t(s)]; i < lay.sensor_start[size_t(s) + 1]; ++i) {
      const float m = std::sqrt(taxels(3 * i) * taxels(3 * i) +
                                taxels(3 * i + 1) * taxels(3 * i + 1) +
                                taxels(3 * i + 2) * taxels(3 * i + 2));
      F(f) = std::max(F(f), m);
    }
  }
  return F;
}

/// One controller tick over a predicted taxel frame [1, N*3]. A finger fires
/// at most once per armed period; sustained contact keeps the counter pinned
/// at zero so re-arming requires rearm_frames() consecutive quiet frames.
inline void reflex_step(ReflexState& st, const Eigen::Ref<const Eigen::RowVectorXf>& taxels,
                        const TaxelLayout& lay, const ReflexConfig& cfg, int frame,
                        std::vector<FlickEvent>& events) {
  const Eigen::Vector4f F = finger_forces(taxels, lay);
  const int rearm = cfg.rearm_frames();
  for (int f = 0; f < kFingerCount; ++f) {
    if (F(f) > cfg.threshold_n) {
      st.quiet[size_t(f)] = 0;
      if (st.armed[size_t(f)]) {
        events.push_back({f, frame});
        st.armed[size_t(f)] = false;
      }
    } else {
      ++st.quiet[size_t(f)];
      if (st.quiet[size_t(f)] >= rearm) st.armed[size_t(f)] = true;
    }
  }
}

/// Mean absolute per-pixel difference between consecutive frames; entry 0 is 0.
inline std::vector<double> motion_curve(const MatF& visual) {
  std::vector<double> out(size_t(visual.rows()), 0.0);
  for (Eigen::Index t = 1; t < visual.rows(); ++t)
    out[size_t(t)] =
        (visual.row(t).cast<double>() - visual.row(t - 1).cast<double>()).cwiseAbs().mean();
  return out;
}

struct MirrorRun {
  std::vector<FlickEvent> events;
  MatF traces;                 // [T, 4] per-finger max predicted force
  std::vector<double> motion;  // frame-difference curve of the input clip
  double gate_prob = 0;
};

/// Stream a (typically human-domain) episode through the gated predictor and
/// drive the reflex controller off the predicted forces.
inline MirrorRun run_mirror_touch(AMTNetP<float>& net, const NetConfig& nc,
                                  const TaxelLayout& lay, const Episode& ep,
                                  const ReflexConfig& cfg) {
  cfg.validate();
  MirrorRun run;
  const Prediction pred = amtnet_predict(net, nc, lay, ep, &run.gate_prob);
  run.traces.resize(ep.frames(), kFingerCount);
  run.motion = motion_curve(ep.visual);
  ReflexState st;
  for (int t = 0; t < ep.frames(); ++t) {
    run.traces.row(t) = finger_forces(pred.forces.row(t), lay).transpose();
    reflex_step(st, pred.forces.row(t), lay, cfg, t, run.events);
  }
  return run;
}

}  // namespace mtnet
