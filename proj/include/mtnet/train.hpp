#pragma once

// Two-stage optimization: the core model on robot episodes, then the human
// tower + gate on scenario-paired clips against the frozen core. Everything
// is seeded; identical (seed, config, data) must reproduce identical logs
// and parameter bytes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mtnet/episode.hpp"
#include "mtnet/losses.hpp"
#include "mtnet/metrics.hpp"
#include "mtnet/nets.hpp"

namespace mtnet {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  uint64_t seed = 1;
  int epochs = 10;
  int batch = 8;
  int steps_per_epoch = 0;  // 0: one pass worth of batches over training frames
  double lr = 3e-4;
  double lr_decay = 1.0;  // per-epoch multiplier
  LossWeights weights;
  AdaptWeights adapt;
  double ema_momentum = 0.99;
  std::vector<std::string> ablation;  // constraint groups or single terms
  double val_fraction = 0.2;
  int val_cap = 0;    // 0: evaluate every held-out episode
  int val_every = 1;  // epochs between validations; 0 disables
};

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"seed", c.seed},
           {"epochs", c.epochs},
           {"batch", c.batch},
           {"steps_per_epoch", c.steps_per_epoch},
           {"lr", c.lr},
           {"lr_decay", c.lr_decay},
           {"weights", c.weights},
           {"adapt", c.adapt},
           {"ema_momentum", c.ema_momentum},
           {"ablation", c.ablation},
           {"val_fraction", c.val_fraction},
           {"val_cap", c.val_cap},
           {"val_every", c.val_every}};
}

inline void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.seed = j.value("seed", d.seed);
  c.epochs = j.value("epochs", d.epochs);
  c.batch = j.value("batch", d.batch);
  c.steps_per_epoch = j.value("steps_per_epoch", d.steps_per_epoch);
  c.lr = j.value("lr", d.lr);
  c.lr_decay = j.value("lr_decay", d.lr_decay);
  c.weights = j.value("weights", d.weights);
  c.adapt = j.value("adapt", d.adapt);
  c.ema_momentum = j.value("ema_momentum", d.ema_momentum);
  c.ablation = j.value("ablation", d.ablation);
  c.val_fraction = j.value("val_fraction", d.val_fraction);
  c.val_cap = j.value("val_cap", d.val_cap);
  c.val_every = j.value("val_every", d.val_every);
}

/// Zero out disabled objective terms. Accepts the three constraint-group
/// names and individual weight names.
inline LossWeights apply_ablation(LossWeights w, const std::vector<std::string>& off) {
  for (const std::string& name : off) {
    if (name == "distribution")
      w.kl_cross_prior = w.kl_cross_post = 0.0;
    else if (name == "representational")
      w.nce = 0.0;
    else if (name == "relational")
      w.geo = 0.0;
    else if (name == "recon")
      w.recon = 0.0;
    else if (name == "bce")
      w.bce = 0.0;
    else if (name == "kl_vis")
      w.kl_vis = 0.0;
    else if (name == "kl_tac")
      w.kl_tac = 0.0;
    else if (name == "kl_cross_prior")
      w.kl_cross_prior = 0.0;
    else if (name == "kl_cross_post")
      w.kl_cross_post = 0.0;
    else if (name == "nce")
      w.nce = 0.0;
    else if (name == "geo")
      w.geo = 0.0;
    else
      throw ConfigError("unknown ablation target '" + name + "'");
  }
  return w;
}

// ---- optimizer ---------------------------------------------------------------

template <typename S>
struct Adam {
  double lr = 3e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<Mat<S>> m, v;

  void step(const Tape<S>& tape, const std::vector<typename ParamBind<S>::Slot>& slots) {
    if (m.empty()) {
      for (const auto& s : slots) {
        m.push_back(Mat<S>::Zero(s.value->rows(), s.value->cols()));
        v.push_back(Mat<S>::Zero(s.value->rows(), s.value->cols()));
      }
    }
    if (m.size() != slots.size()) throw TrainError("optimizer slot count changed mid-run");
    ++t;
    const S c1 = S(1.0 - std::pow(beta1, double(t)));
    const S c2 = S(1.0 - std::pow(beta2, double(t)));
    for (size_t i = 0; i < slots.size(); ++i) {
      const Mat<S>& g = tape.grad(slots[i].node);
      m[i] = S(beta1) * m[i] + S(1 - beta1) * g;
      v[i] = S(beta2) * v[i] + (S(1 - beta2) * g.array() * g.array()).matrix();
      slots[i].value->array() -=
          S(lr) * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + S(eps));
    }
  }
};

// ---- data plumbing -----------------------------------------------------------

struct SplitIdx {
  std::vector<int> train, val;
};

/// Deterministic episode-level split: Fisher-Yates keyed on the seed, the
/// tail fraction becomes validation.
inline SplitIdx split_episodes(int n, double val_fraction, uint64_t seed) {
  if (n <= 0) throw SchemaError("no episodes to split");
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  for (int i = n - 1; i > 0; --i) std::swap(idx[size_t(i)], idx[size_t(rng.below(uint64_t(i) + 1))]);
  int n_val = int(std::lround(n * val_fraction));
  n_val = std::clamp(n_val, 0, n - 1);
  SplitIdx out;
  out.train.assign(idx.begin(), idx.end() - n_val);
  out.val.assign(idx.end() - n_val, idx.end());
  return out;
}

/// Tactile rows as point sets: [count*N, 6] force + normalized coordinates.
template <typename S>
Mat<S> tactile_points(const Episode& ep, const TaxelLayout& lay, int t0, int count) {
  const int N = lay.total_taxels;
  Mat<S> pts(Eigen::Index(count) * N, 6);
  for (int b = 0; b < count; ++b)
    for (int i = 0; i < N; ++i) {
      const Eigen::Index r = Eigen::Index(b) * N + i;
      for (int k = 0; k < 3; ++k) {
        pts(r, k) = S(ep.tactile(t0 + b, 3 * i + k));
        pts(r, 3 + k) = S(lay.coords(i, k) / 32.0 - 1.0);
      }
    }
  return pts;
}

template <typename S>
Mat<S> tile_coords(const Mat<S>& embed, int B) {
  Mat<S> tiled(Eigen::Index(B) * embed.rows(), embed.cols());
  for (int b = 0; b < B; ++b) tiled.middleRows(Eigen::Index(b) * embed.rows(), embed.rows()) = embed;
  return tiled;
}

template <typename S>
struct TrainBatch {
  Mat<S> pixels;  // [B*K*H*W, 3]
  Mat<S> points;  // [B*N, 6]
  LossBatch<S> gt;
  Mat<S> eps1, eps2;  // reparameterization noise [B, latent]
};

/// Uniform (episode, frame) sampling with K-window clip assembly.
template <typename S>
TrainBatch<S> sample_batch(const std::vector<Episode>& eps, const std::vector<int>& pool,
                           const TaxelLayout& lay, const NetConfig& nc, int B, Rng& rng) {
  const int px = eps.front().height * eps.front().width;
  TrainBatch<S> tb;
  tb.pixels.resize(Eigen::Index(B) * nc.frames_k * px, 3);
  tb.points.resize(Eigen::Index(B) * lay.total_taxels, 6);
  tb.gt.gt_forces.resize(B, Eigen::Index(lay.total_taxels) * 3);
  tb.gt.contact.resize(B, lay.sensor_count());
  tb.eps1.resize(B, nc.latent);
  tb.eps2.resize(B, nc.latent);
  for (int b = 0; b < B; ++b) {
    const Episode& ep = eps[size_t(pool[size_t(rng.below(pool.size()))])];
    const int t = int(rng.below(uint64_t(ep.frames())));
    tb.pixels.middleRows(Eigen::Index(b) * nc.frames_k * px, Eigen::Index(nc.frames_k) * px) =
        window_pixels(ep, nc.frames_k, t, 1).template cast<S>();
    tb.points.middleRows(Eigen::Index(b) * lay.total_taxels, lay.total_taxels) =
        tactile_points<S>(ep, lay, t, 1);
    tb.gt.gt_forces.row(b) = ep.tactile.row(t).template cast<S>();
    tb.gt.contact.row(b) = ep.contact.row(t).template cast<S>();
  }
  rng.fill_normal(tb.eps1, 1.0);
  rng.fill_normal(tb.eps2, 1.0);
  return tb;
}

// ---- logs ----------------------------------------------------------------------

struct TrainLog {
  std::vector<LossReport> steps;
  std::vector<AdaptReport> adapt_steps;
  std::vector<std::pair<int, MetricReport>> val;  // (epoch, mean over held-out)
  double wall_seconds = 0;
};

inline std::string losses_csv(const std::vector<LossReport>& rows) {
  std::string out =
      "step,mse,mae,wmse,wmae,bce,kl_vis,kl_tac,kl_cross_prior,kl_cross_post,nce,geo,total,"
      "kl_scale\n";
  char line[512];
  for (size_t i = 0; i < rows.size(); ++i) {
    const LossReport& r = rows[i];
    std::snprintf(line, sizeof line,
                  "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", i,
                  r.mse, r.mae, r.wmse, r.wmae, r.bce, r.kl_vis, r.kl_tac, r.kl_cross_prior,
                  r.kl_cross_post, r.nce, r.geo, r.total, r.kl_scale);
    out += line;
  }
  return out;
}

inline std::string adapt_csv(const std::vector<AdaptReport>& rows) {
  std::string out = "step,feat,prior,contact,recon,gate,total\n";
  char line[256];
  for (size_t i = 0; i < rows.size(); ++i) {
    const AdaptReport& r = rows[i];
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", i, r.feat, r.prior,
                  r.contact, r.recon, r.gate, r.total);
    out += line;
  }
  return out;
}

inline std::string metrics_csv(const std::vector<std::pair<int, MetricReport>>& rows) {
  std::string out = "epoch,nrmse,s_cossim,s_ccc,t_iou,w_f1\n";
  char line[256];
  for (const auto& [epoch, r] : rows) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", epoch, r.nrmse, r.s_cossim,
                  r.s_ccc, r.t_iou, r.w_f1);
    out += line;
  }
  return out;
}

inline void check_finite(const LossReport& r, long step) {
  const std::pair<const char*, double> comps[] = {
      {"mse", r.mse},     {"mae", r.mae},
      {"wmse", r.wmse},   {"wmae", r.wmae},
      {"bce", r.bce},     {"kl_vis", r.kl_vis},
      {"kl_tac", r.kl_tac}, {"kl_cross_prior", r.kl_cross_prior},
      {"kl_cross_post", r.kl_cross_post}, {"nce", r.nce},
      {"geo", r.geo},     {"total", r.total}};
  for (const auto& [name, val] : comps)
    if (!std::isfinite(val))
      throw TrainError("non-finite loss component '" + std::string(name) + "' at step " +
                       std::to_string(step));
}

inline void check_finite(const AdaptReport& r, long step) {
  const std::pair<const char*, double> comps[] = {{"feat", r.feat},       {"prior", r.prior},
                                                  {"contact", r.contact}, {"recon", r.recon},
                                                  {"gate", r.gate},       {"total", r.total}};
  for (const auto& [name, val] : comps)
    if (!std::isfinite(val))
      throw TrainError("non-finite adaptation component '" + std::string(name) + "' at step " +
                       std::to_string(step));
}

// ---- evaluation ---------------------------------------------------------------

/// Mean metric report over episodes under an arbitrary per-episode predictor.
template <typename PredFn>
MetricReport evaluate_with(PredFn&& predict, const std::vector<Episode>& eps,
                           const std::vector<int>& pool, const TaxelLayout& lay, int cap = 0) {
  std::vector<MetricReport> rs;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (cap > 0 && int(i) >= cap) break;
    const Episode& ep = eps[size_t(pool[i])];
    const Prediction p = predict(ep);
    rs.push_back(evaluate_episode(p.forces, p.contact, ep, lay));
  }
  if (rs.empty()) throw SchemaError("evaluation pool is empty");
  return mean_report(rs);
}

inline MetricReport evaluate_mtnet(MTNetP<float>& net, const NetConfig& nc,
                                   const TaxelLayout& lay, const std::vector<Episode>& eps,
                                   const std::vector<int>& pool, int cap = 0) {
  return evaluate_with([&](const Episode& ep) { return mtnet_predict(net, nc, lay, ep); }, eps,
                       pool, lay, cap);
}

inline std::vector<int> all_indices(const std::vector<Episode>& eps) {
  std::vector<int> idx(eps.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// ---- stage 1: core training -----------------------------------------------------

inline void validate_train(const TrainConfig& tc, const LossWeights& w) {
  if (tc.batch < 1) throw ConfigError("batch size must be positive");
  if ((w.nce != 0.0 || w.geo != 0.0) && tc.batch < 2)
    throw ConfigError("contrastive and relational terms need batch size >= 2");
  if (tc.epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (!(tc.lr > 0)) throw ConfigError("learning rate must be positive");
  if (tc.val_fraction < 0 || tc.val_fraction >= 1)
    throw ConfigError("validation fraction must lie in [0, 1)");
}

/// Stage-1 training over robot episodes. Initializes the net from the seed,
/// so a (seed, config, data) triple fully determines the outcome.
inline TrainLog train_mtnet(MTNetP<float>& net, const NetConfig& nc, const TrainConfig& tc,
                            const std::vector<Episode>& episodes) {
  const auto t_start = std::chrono::steady_clock::now();
  if (episodes.empty()) throw SchemaError("training set is empty");
  const LossWeights w = apply_ablation(tc.weights, tc.ablation);
  validate_train(tc, w);
  const TaxelLayout lay = build_taxel_layout(episodes.front().layout);
  for (const Episode& ep : episodes) {
    if (ep.domain != "robot") throw SchemaError("stage-1 training expects robot episodes");
    if (ep.height != nc.image || ep.width != nc.image)
      throw SchemaError("episode resolution disagrees with the net config");
  }

  const SplitIdx split = split_episodes(int(episodes.size()), tc.val_fraction, tc.seed);
  long train_frames = 0;
  for (int i : split.train) train_frames += episodes[size_t(i)].frames();
  const int spe = tc.steps_per_epoch > 0
                      ? tc.steps_per_epoch
                      : int(std::max<long>(1, (train_frames + tc.batch - 1) / tc.batch));

  init_mtnet(net, nc, derive_seed(tc.seed, "init"));
  const MatF embed = coord_embedding<float>(lay);
  Rng rng(derive_seed(tc.seed, "order"));
  Adam<float> opt;
  TrainLog log;
  long gstep = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    opt.lr = tc.lr * std::pow(tc.lr_decay, double(epoch));
    for (int s = 0; s < spe; ++s, ++gstep) {
      try {
        TrainBatch<float> tb = sample_batch<float>(episodes, split.train, lay, nc, tc.batch, rng);
        TapeF tape;
        ParamBind<float> tr(tape, true), fz(tape, false);
        MTNetNodes nodes = bind_mtnet(tr, fz, net);
        const int coords = tape.constant(tile_coords(embed, tc.batch));
        const ForwardMTNet f = mtnet_forward_train(
            tape, nc, nodes, lay, tape.constant(std::move(tb.pixels)),
            tape.constant(std::move(tb.points)), tape.constant(std::move(tb.eps1)),
            tape.constant(std::move(tb.eps2)), coords, tc.batch);
        const MTNetLosses ls = mtnet_losses(tape, f, lay, tb.gt, w, gstep);
        const LossReport report = read_losses(tape, ls);
        check_finite(report, gstep);
        tape.backward(ls.total);
        opt.step(tape, tr.slots());
        ema_update(net, tc.ema_momentum);
        log.steps.push_back(report);
      } catch (const TrainError&) {
        throw;
      } catch (const std::runtime_error& e) {
        throw TrainError(std::string(e.what()) + " at step " + std::to_string(gstep));
      }
    }
    if (tc.val_every > 0 && !split.val.empty() &&
        ((epoch + 1) % tc.val_every == 0 || epoch + 1 == tc.epochs))
      log.val.push_back({epoch, evaluate_mtnet(net, nc, lay, episodes, split.val, tc.val_cap)});
  }
  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return log;
}

// ---- stage 2: adaptation ---------------------------------------------------------

struct PairedSet {
  std::vector<int> human, robot;  // aligned: human[i] twins robot[i]
};

/// Match scenario twins by their pair id. Every human episode must have a
/// robot counterpart.
inline PairedSet match_pairs(const std::vector<Episode>& eps) {
  std::map<int, std::pair<int, int>> by_id;  // pair -> (human idx, robot idx)
  for (int i = 0; i < int(eps.size()); ++i) {
    const Episode& ep = eps[size_t(i)];
    if (!ep.meta.contains("pair")) continue;
    const int id = ep.meta["pair"].get<int>();
    auto& slot = by_id.try_emplace(id, std::pair<int, int>{-1, -1}).first->second;
    (ep.domain == "human" ? slot.first : slot.second) = i;
  }
  PairedSet out;
  for (const auto& [id, hr] : by_id) {
    if (hr.first < 0 || hr.second < 0)
      throw SchemaError("pair " + std::to_string(id) + " lacks a " +
                        (hr.first < 0 ? std::string("human") : std::string("robot")) + " twin");
    out.human.push_back(hr.first);
    out.robot.push_back(hr.second);
  }
  if (out.human.empty()) throw SchemaError("no scenario pairs in dataset");
  return out;
}

/// Stage-2 adaptation: human tower and gate train against the frozen core on
/// scenario-paired clips. Core parameter bytes are never touched.
inline TrainLog train_amtnet(AMTNetP<float>& net, const NetConfig& nc, const TrainConfig& tc,
                             const std::vector<Episode>& episodes) {
  const auto t_start = std::chrono::steady_clock::now();
  if (tc.batch < 1) throw ConfigError("batch size must be positive");
  if (!(tc.lr > 0)) throw ConfigError("learning rate must be positive");
  const PairedSet pairs = match_pairs(episodes);
  const TaxelLayout lay = build_taxel_layout(episodes.front().layout);
  const SplitIdx split = split_episodes(int(pairs.human.size()), tc.val_fraction, tc.seed);

  init_amtnet(net, nc, derive_seed(tc.seed, "init/adapt"));
  const MatF embed = coord_embedding<float>(lay);
  Rng rng(derive_seed(tc.seed, "order/adapt"));
  Adam<float> opt;
  TrainLog log;
  const int px = episodes[size_t(pairs.human[0])].height * episodes[size_t(pairs.human[0])].width;
  long frames = 0;
  for (int i : split.train) frames += episodes[size_t(pairs.human[size_t(i)])].frames();
  const int spe = tc.steps_per_epoch > 0
                      ? tc.steps_per_epoch
                      : int(std::max<long>(1, (frames + tc.batch - 1) / tc.batch));
  const int B = tc.batch;
  long gstep = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    opt.lr = tc.lr * std::pow(tc.lr_decay, double(epoch));
    for (int s = 0; s < spe; ++s, ++gstep) {
      try {
        // assemble paired clips plus a mixed-domain gate batch
        MatF hpix(Eigen::Index(B) * nc.frames_k * px, 3), rpix(hpix.rows(), 3);
        MatF gpix(Eigen::Index(2 * B) * px, 3);
        MatF gt(B, Eigen::Index(lay.total_taxels) * 3), labels(2 * B, 1);
        for (int b = 0; b < B; ++b) {
          const int pi = split.train[size_t(rng.below(split.train.size()))];
          const Episode& hep = episodes[size_t(pairs.human[size_t(pi)])];
          const Episode& rep = episodes[size_t(pairs.robot[size_t(pi)])];
          const int t = int(rng.below(uint64_t(hep.frames())));
          hpix.middleRows(Eigen::Index(b) * nc.frames_k * px, Eigen::Index(nc.frames_k) * px) =
              window_pixels(hep, nc.frames_k, t, 1);
          rpix.middleRows(Eigen::Index(b) * nc.frames_k * px, Eigen::Index(nc.frames_k) * px) =
              window_pixels(rep, nc.frames_k, t, 1);
          for (int p = 0; p < px; ++p)
            for (int ch = 0; ch < 3; ++ch) {
              gpix(Eigen::Index(b) * px + p, ch) = hep.visual(t, 3 * p + ch);
              gpix(Eigen::Index(B + b) * px + p, ch) = rep.visual(t, 3 * p + ch);
            }
          gt.row(b) = rep.tactile.row(t);
          labels(b, 0) = 1.0f;      // human
          labels(B + b, 0) = 0.0f;  // robot
        }
        TapeF tape;
        ParamBind<float> tr(tape, true), fz(tape, false);
        const VisualN hn = bind_visual(tr, net.hum);
        const GateN gn = bind_gate(tr, net.gate);
        const VisualN rn = bind_visual(fz, net.core.vis);
        const DecoderN dn = bind_decoder(fz, net.core.dec);
        const VisualOut ho = visual_encode(tape, nc, hn, tape.constant(std::move(hpix)), B);
        const VisualOut ro = visual_encode(tape, nc, rn, tape.constant(std::move(rpix)), B);
        const int coords = tape.constant(tile_coords(embed, B));
        const DecodeOut dh = decode(tape, nc, dn, ho.prior.mu, B, lay, coords);
        const DecodeOut dr = decode(tape, nc, dn, ro.prior.mu, B, lay, coords);
        const int glog = gate_forward(tape, nc, gn, tape.constant(std::move(gpix)), 2 * B);
        const AMTNetLosses ls = amtnet_losses(tape, ho.h, ho.prior, ro.h, ro.prior, dh, dr,
                                              glog, gt, labels, tc.adapt);
        const AdaptReport report = read_adapt(tape, ls);
        check_finite(report, gstep);
        tape.backward(ls.total);
        opt.step(tape, tr.slots());
        log.adapt_steps.push_back(report);
      } catch (const TrainError&) {
        throw;
      } catch (const std::runtime_error& e) {
        throw TrainError(std::string(e.what()) + " at step " + std::to_string(gstep));
      }
    }
  }
  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return log;
}

}  // namespace mtnet
