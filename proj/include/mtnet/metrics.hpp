#pragma once

// Evaluation scores for predicted force maps against ground truth. All of
// them work on [T, N*3] force matrices plus [T, S] contact tracks and are
// pure functions of their inputs.

#include <vector>

#include "mtnet/episode.hpp"

namespace mtnet {

struct MetricReport {
  double nrmse = 0;
  double s_cossim = 0;
  double s_ccc = 0;
  double t_iou = 0;
  double w_f1 = 0;
};

inline void to_json(json& j, const MetricReport& r) {
  j = json{{"nrmse", r.nrmse},
           {"s_cossim", r.s_cossim},
           {"s_ccc", r.s_ccc},
           {"t_iou", r.t_iou},
           {"w_f1", r.w_f1}};
}

inline void from_json(const json& j, MetricReport& r) {
  r.nrmse = j.value("nrmse", 0.0);
  r.s_cossim = j.value("s_cossim", 0.0);
  r.s_ccc = j.value("s_ccc", 0.0);
  r.t_iou = j.value("t_iou", 0.0);
  r.w_f1 = j.value("w_f1", 0.0);
}

/// RMSE normalized by the ground-truth dynamic range; a flat target falls
/// back to the sensor ceiling so the score stays scale-aware.
inline double nrmse(const MatF& pred, const MatF& gt, double fmax = kForceMaxN) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw SchemaError("nrmse: prediction and target shapes differ");
  const double mse = (pred - gt).cast<double>().array().square().mean();
  double range = double(gt.maxCoeff()) - double(gt.minCoeff());
  if (!(range > 1e-9)) range = fmax;
  return std::sqrt(mse) / range;
}

/// Cosine similarity restricted to taxels of touched sensors, averaged over
/// frames that have any contact. Matching null vectors count as agreement.
inline double s_cossim(const MatF& pred, const MatF& gt, const MatF& contact,
                       const TaxelLayout& lay) {
  const int T = int(gt.rows());
  double acc = 0;
  int frames = 0;
  for (int t = 0; t < T; ++t) {
    if (contact.row(t).maxCoeff() < 0.5f) continue;
    double pg = 0, pp = 0, gg = 0;
    for (int i = 0; i < lay.total_taxels; ++i) {
      if (contact(t, lay.sensor_of_taxel(i)) < 0.5f) continue;
      for (int k = 0; k < 3; ++k) {
        const double p = pred(t, 3 * i + k), g = gt(t, 3 * i + k);
        pg += p * g;
        pp += p * p;
        gg += g * g;
      }
    }
    ++frames;
    if (pp == 0.0 && gg == 0.0)
      acc += 1.0;
    else if (pp == 0.0 || gg == 0.0)
      acc += 0.0;
    else
      acc += pg / (std::sqrt(pp) * std::sqrt(gg));
  }
  return frames == 0 ? 1.0 : acc / frames;
}

/// Concordance correlation with population moments. Degenerate (flat) pairs
/// score 1 when identical and 0 otherwise.
inline double ccc(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) throw SchemaError("ccc: mismatched traces");
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cov = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cov += (x[i] - mx) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  cov /= n;
  const double denom = vx + vy + (mx - my) * (mx - my);
  if (denom < 1e-18) return 1.0;  // identical constants
  if (vx < 1e-18 && vy < 1e-18) return 0.0;
  return 2.0 * cov / denom;
}

/// Centered moving average with clamped partial windows at the edges.
inline std::vector<double> smooth(const std::vector<double>& x, int window = 5) {
  const int T = int(x.size()), half = window / 2;
  std::vector<double> out(x.size());
  for (int t = 0; t < T; ++t) {
    const int lo = std::max(0, t - half), hi = std::min(T - 1, t + half);
    double s = 0;
    for (int k = lo; k <= hi; ++k) s += x[size_t(k)];
    out[size_t(t)] = s / (hi - lo + 1);
  }
  return out;
}

/// Mean force magnitude per sensor and frame.
inline std::vector<std::vector<double>> sensor_traces(const MatF& forces, const TaxelLayout& lay) {
  const int T = int(forces.rows()), S = lay.sensor_count();
  std::vector<std::vector<double>> tr(size_t(S), std::vector<double>(size_t(T), 0.0));
  for (int s = 0; s < S; ++s) {
    const int a = lay.sensor_start[size_t(s)], b = lay.sensor_start[size_t(s) + 1];
    for (int t = 0; t < T; ++t) {
      double acc = 0;
      for (int i = a; i < b; ++i) {
        const double fx = forces(t, 3 * i), fy = forces(t, 3 * i + 1), fz = forces(t, 3 * i + 2);
        acc += std::sqrt(fx * fx + fy * fy + fz * fz);
      }
      tr[size_t(s)][size_t(t)] = acc / (b - a);
    }
  }
  return tr;
}

/// Mean concordance of window-smoothed per-sensor magnitude traces.
inline double s_ccc(const MatF& pred, const MatF& gt, const TaxelLayout& lay, int window = 5) {
  const auto tp = sensor_traces(pred, lay), tg = sensor_traces(gt, lay);
  double acc = 0;
  for (size_t s = 0; s < tp.size(); ++s) acc += ccc(smooth(tp[s], window), smooth(tg[s], window));
  return acc / double(tp.size());
}

/// Mean per-frame IoU of thresholded activation maps; frames where neither
/// map activates anything count as perfect agreement.
inline double t_iou(const MatF& pred, const MatF& gt, double threshold = kContactThresholdN) {
  const int T = int(gt.rows());
  const int N = int(gt.cols()) / 3;
  const double thr2 = threshold * threshold;
  auto active = [&](const MatF& m, int t, int i) {
    const double fx = m(t, 3 * i), fy = m(t, 3 * i + 1), fz = m(t, 3 * i + 2);
    return fx * fx + fy * fy + fz * fz > thr2;
  };
  double acc = 0;
  for (int t = 0; t < T; ++t) {
    int inter = 0, uni = 0;
    for (int i = 0; i < N; ++i) {
      const bool p = active(pred, t, i), g = active(gt, t, i);
      inter += p && g;
      uni += p || g;
    }
    acc += uni == 0 ? 1.0 : double(inter) / double(uni);
  }
  return acc / T;
}

/// Frames where a binary track switches on.
inline std::vector<int> rising_edges(const std::vector<char>& b) {
  std::vector<int> out;
  for (size_t t = 0; t < b.size(); ++t)
    if (b[t] && (t == 0 || !b[t - 1])) out.push_back(int(t));
  return out;
}

/// Greedy earliest-first matching of two sorted event lists within +-w frames.
inline int match_events(const std::vector<int>& a, const std::vector<int>& b, int w) {
  size_t i = 0, j = 0;
  int matches = 0;
  while (i < a.size() && j < b.size()) {
    if (std::abs(a[i] - b[j]) <= w) {
      ++matches;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return matches;
}

/// Event-level F1 over touch onsets pooled across sensors. Onsets match when
/// they land within `window` frames of each other.
inline double w_f1(const MatF& pred_contact, const MatF& gt_contact, int window = 5,
                   float threshold = 0.5f) {
  if (pred_contact.rows() != gt_contact.rows() || pred_contact.cols() != gt_contact.cols())
    throw SchemaError("w_f1: contact shapes differ");
  const int T = int(gt_contact.rows()), S = int(gt_contact.cols());
  int matched = 0, n_pred = 0, n_gt = 0;
  for (int s = 0; s < S; ++s) {
    std::vector<char> bp(static_cast<size_t>(T)), bg(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      bp[size_t(t)] = pred_contact(t, s) > threshold;
      bg[size_t(t)] = gt_contact(t, s) > threshold;
    }
    const std::vector<int> ep = rising_edges(bp), eg = rising_edges(bg);
    matched += match_events(ep, eg, window);
    n_pred += int(ep.size());
    n_gt += int(eg.size());
  }
  if (n_pred + n_gt == 0) return 1.0;
  return 2.0 * matched / double(n_pred + n_gt);
}

/// All scores of a forces/contact prediction against an episode.
inline MetricReport evaluate_episode(const MatF& pred_forces, const MatF& pred_contact,
                                     const Episode& ep, const TaxelLayout& lay) {
  MetricReport r;
  r.nrmse = nrmse(pred_forces, ep.tactile);
  r.s_cossim = s_cossim(pred_forces, ep.tactile, ep.contact, lay);
  r.s_ccc = s_ccc(pred_forces, ep.tactile, lay);
  r.t_iou = t_iou(pred_forces, ep.tactile);
  r.w_f1 = w_f1(pred_contact, ep.contact);
  return r;
}

/// Field-wise mean of several reports.
inline MetricReport mean_report(const std::vector<MetricReport>& rs) {
  MetricReport m;
  if (rs.empty()) return m;
  for (const MetricReport& r : rs) {
    m.nrmse += r.nrmse;
    m.s_cossim += r.s_cossim;
    m.s_ccc += r.s_ccc;
    m.t_iou += r.t_iou;
    m.w_f1 += r.w_f1;
  }
  const double n = double(rs.size());
  m.nrmse /= n;
  m.s_cossim /= n;
  m.s_ccc /= n;
  m.t_iou /= n;
  m.w_f1 /= n;
  return m;
}

}  // namespace mtnet
