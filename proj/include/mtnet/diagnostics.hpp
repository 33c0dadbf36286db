#pragma once

// Representation-space instrumentation: similarity of latent spaces,
// cluster structure of per-sensor probes, and histogram separation of
// domain statistics.

#include <algorithm>
#include <limits>
#include <map>
#include <vector>

#include "mtnet/nets.hpp"
#include "mtnet/synth.hpp"

namespace mtnet {

/// Linear centered kernel alignment between two row-paired feature sets.
/// Degenerate (constant) inputs score zero.
inline double linear_cka(const MatF& X, const MatF& Y) {
  if (X.rows() != Y.rows()) throw SchemaError("cka: row counts differ");
  if (X.rows() < 2) throw SchemaError("cka: need at least two rows");
  MatD Xc = X.cast<double>(), Yc = Y.cast<double>();
  Xc.rowwise() -= Xc.colwise().mean();
  Yc.rowwise() -= Yc.colwise().mean();
  const double num = (Yc.transpose() * Xc).squaredNorm();
  const double dx = (Xc.transpose() * Xc).norm();
  const double dy = (Yc.transpose() * Yc).norm();
  if (dx < 1e-12 || dy < 1e-12) return 0.0;
  return num / (dx * dy);
}

/// Mean euclidean silhouette score; singleton clusters contribute zero.
inline double silhouette(const MatF& X, const std::vector<int>& labels) {
  const int n = int(X.rows());
  if (int(labels.size()) != n) throw SchemaError("silhouette: label count mismatch");
  if (n < 2) throw SchemaError("silhouette: need at least two points");
  MatD D(n, n);
  const MatD Xd = X.cast<double>();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) D(i, j) = (Xd.row(i) - Xd.row(j)).norm();
  std::map<int, int> count;
  for (int l : labels) ++count[l];
  if (count.size() < 2) throw SchemaError("silhouette: need at least two clusters");
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    if (count.at(labels[size_t(i)]) <= 1) continue;  // singleton: s = 0
    std::map<int, double> sum;
    for (int j = 0; j < n; ++j)
      if (j != i) sum[labels[size_t(j)]] += D(i, j);
    const int own = labels[size_t(i)];
    const double a = sum[own] / (count.at(own) - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : sum)
      if (l != own) b = std::min(b, s / count.at(l));
    const double m = std::max(a, b);
    acc += m > 0 ? (b - a) / m : 0.0;
  }
  return acc / n;
}

/// Pairwise cosine similarities of rows, clamped into [-1, 1].
inline MatD unit_rows(const MatF& X) {
  MatD U = X.cast<double>();
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    const double nr = U.row(i).norm();
    if (nr > 1e-12)
      U.row(i) /= nr;
    else
      U.row(i).setZero();  // zero rows stay zero -> cosine 0
  }
  return U;
}

inline MatF cosine_matrix(const MatF& A, const MatF& B) {
  if (A.cols() != B.cols()) throw SchemaError("cosine_matrix: feature widths differ");
  MatD M = unit_rows(A) * unit_rows(B).transpose();
  return M.cwiseMax(-1.0).cwiseMin(1.0).cast<float>();
}

inline MatF cosine_matrix(const MatF& X) { return cosine_matrix(X, X); }

/// Bhattacharyya distance between two samples of values in [0,1], via
/// epsilon-floored normalized histograms.
inline double bhattacharyya(const std::vector<double>& a, const std::vector<double>& b,
                            int bins = 50, double eps = 1e-6) {
  if (a.empty() || b.empty()) throw SchemaError("bhattacharyya: empty sample");
  auto hist = [&](const std::vector<double>& v) {
    std::vector<double> h(size_t(bins), 0.0);
    for (double x : v) {
      const double c = std::clamp(x, 0.0, 1.0);
      int k = int(c * bins);
      if (k == bins) k = bins - 1;
      h[size_t(k)] += 1.0;
    }
    double total = 0;
    for (double& x : h) {
      x = std::max(x / double(v.size()), eps);
      total += x;
    }
    for (double& x : h) x /= total;
    return h;
  };
  const std::vector<double> p = hist(a), q = hist(b);
  double bc = 0;
  for (int k = 0; k < bins; ++k) bc += std::sqrt(p[size_t(k)] * q[size_t(k)]);
  return -std::log(std::min(1.0, bc));
}

// ---- per-sensor probes --------------------------------------------------------

struct ProbeSet {
  MatF h_v, z_v;  // visual features / prior means, one row per probed frame
  MatF h_t, z_t;  // tactile features / posterior means
  std::vector<int> sensor;
};

/// Isolated-touch episode for one sensor: a single centered press held long
/// enough to yield a comfortable run of contact frames.
inline Episode probe_episode(const GenConfig& cfg, int sensor, uint64_t seed) {
  GenConfig pc = cfg;
  pc.frames = std::max(cfg.frames, 45);
  Scenario sc = sample_scenario(pc, seed, "robot");
  sc.targets = {TouchTarget{.sensor = sensor, .offset = 0.0, .depth = 3.0, .press = 2,
                            .hold = 30, .onset = -1}};
  script_path(pc, build_taxel_layout(pc.layout), sc, 1);
  return synthesize_episode(pc, sc);
}

/// Run the core towers over every contact frame of per-sensor probe
/// episodes. Rows are labeled by the touched sensor.
inline ProbeSet probe_features(MTNetP<float>& net, const NetConfig& nc, const GenConfig& gc,
                               uint64_t seed) {
  const TaxelLayout lay = build_taxel_layout(gc.layout);
  ProbeSet out;
  std::vector<MatF> hv_rows, zv_rows, ht_rows, zt_rows;
  for (int s = 0; s < lay.sensor_count(); ++s) {
    const Episode ep = probe_episode(gc, s, derive_seed(seed, "probe/" + std::to_string(s)));
    // contact frames of the probed sensor form one contiguous run
    int first = -1, last = -1;
    for (int t = 0; t < ep.frames(); ++t)
      if (ep.contact(t, s) > 0.5f) {
        if (first < 0) first = t;
        last = t;
      }
    if (first < 0) throw SchemaError("probe episode never touched sensor " + std::to_string(s));
    for (int t0 = first; t0 <= last; t0 += 16) {
      const int B = std::min(16, last - t0 + 1);
      TapeF tape;
      ParamBind<float> pb(tape, false);
      const VisualN vn = bind_visual(pb, net.vis);
      const TactileN tn = bind_tactile(pb, net.tac);
      const int pixels = tape.constant(window_pixels(ep, nc.frames_k, t0, B));
      const VisualOut vo = visual_encode(tape, nc, vn, pixels, B);
      MatF points(Eigen::Index(B) * lay.total_taxels, 6);
      for (int b = 0; b < B; ++b)
        for (int i = 0; i < lay.total_taxels; ++i) {
          const Eigen::Index r = Eigen::Index(b) * lay.total_taxels + i;
          for (int k = 0; k < 3; ++k) {
            points(r, k) = ep.tactile(t0 + b, 3 * i + k);
            points(r, 3 + k) = float(lay.coords(i, k) / 32.0 - 1.0);
          }
        }
      const TactileOut to = tactile_encode(tape, nc, tn, tape.constant(std::move(points)), B,
                                           lay.total_taxels);
      hv_rows.push_back(tape.val(vo.h));
      zv_rows.push_back(tape.val(vo.prior.mu));
      ht_rows.push_back(tape.val(to.h));
      zt_rows.push_back(tape.val(to.post.mu));
      for (int b = 0; b < B; ++b) out.sensor.push_back(s);
    }
  }
  auto stack = [](const std::vector<MatF>& rows) {
    Eigen::Index n = 0;
    for (const MatF& m : rows) n += m.rows();
    MatF out(n, rows.front().cols());
    Eigen::Index at = 0;
    for (const MatF& m : rows) {
      out.middleRows(at, m.rows()) = m;
      at += m.rows();
    }
    return out;
  };
  out.h_v = stack(hv_rows);
  out.z_v = stack(zv_rows);
  out.h_t = stack(ht_rows);
  out.z_t = stack(zt_rows);
  return out;
}

struct ManifoldReport {
  double cka_align = 0;  // CKA between visual and tactile features
  double sil_tac = 0;    // sensor clustering of the tactile features
  double sil_vis = 0;
  int rows = 0;
  MatF cos_vv, cos_tt, cos_vt;  // per-probe similarity matrices, row order = probe order
};

inline json matrix_json(const MatF& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void to_json(json& j, const ManifoldReport& r) {
  j = json{{"cka_align", r.cka_align},
           {"sil_tac", r.sil_tac},
           {"sil_vis", r.sil_vis},
           {"rows", r.rows},
           {"cos_vv", matrix_json(r.cos_vv)},
           {"cos_tt", matrix_json(r.cos_tt)},
           {"cos_vt", matrix_json(r.cos_vt)}};
}

/// Scores live on the encoder features (the D_f-wide representation both
/// latent heads read from); the zero-initialized heads make raw latents
/// useless for comparing an untrained model.
inline ManifoldReport manifold_report(const ProbeSet& p) {
  ManifoldReport r;
  r.rows = int(p.h_v.rows());
  r.cka_align = linear_cka(p.h_v, p.h_t);
  r.sil_tac = silhouette(p.h_t, p.sensor);
  r.sil_vis = silhouette(p.h_v, p.sensor);
  r.cos_vv = cosine_matrix(p.h_v, p.h_v);
  r.cos_tt = cosine_matrix(p.h_t, p.h_t);
  r.cos_vt = cosine_matrix(p.h_v, p.h_t);
  return r;
}

}  // namespace mtnet
