#pragma once

// Dual-stream CVAE over visual clips and taxel force maps, the cross-domain
// adapter around it, and checkpoint I/O. Parameters live in plain matrices;
// every forward pass binds them onto a Tape, so the same code serves float
// training, double gradient checks and frozen inference.

#include <string>
#include <vector>

#include "mtnet/autodiff.hpp"
#include "mtnet/episode.hpp"
#include "mtnet/layout.hpp"
#include "mtnet/tensorfile.hpp"

namespace mtnet {

struct NetConfig {
  int image = 64;
  int frames_k = 5;   // visual window length
  int latent = 32;    // D
  int feat = 128;     // shared feature width
  int conv1 = 8, conv2 = 16, conv3 = 32;
  int tac_h1 = 64, tac_h2 = 96;
  int dec_h = 64;
  int gate_c = 6;
  double logvar_clamp = 8.0;

  void validate() const {
    if (image < 16 || image % 16 != 0) throw ConfigError("net: image must be a multiple of 16");
    if (frames_k < 1 || frames_k > 16) throw ConfigError("net: bad frame window");
    if (latent < 2 || feat < 8) throw ConfigError("net: latent/feature width too small");
  }
};

inline void to_json(json& j, const NetConfig& c) {
  j = json{{"image", c.image},   {"frames_k", c.frames_k}, {"latent", c.latent},
           {"feat", c.feat},     {"conv1", c.conv1},       {"conv2", c.conv2},
           {"conv3", c.conv3},   {"tac_h1", c.tac_h1},     {"tac_h2", c.tac_h2},
           {"dec_h", c.dec_h},   {"gate_c", c.gate_c},     {"logvar_clamp", c.logvar_clamp}};
}

inline void from_json(const json& j, NetConfig& c) {
  NetConfig d;
  c.image = j.value("image", d.image);
  c.frames_k = j.value("frames_k", d.frames_k);
  c.latent = j.value("latent", d.latent);
  c.feat = j.value("feat", d.feat);
  c.conv1 = j.value("conv1", d.conv1);
  c.conv2 = j.value("conv2", d.conv2);
  c.conv3 = j.value("conv3", d.conv3);
  c.tac_h1 = j.value("tac_h1", d.tac_h1);
  c.tac_h2 = j.value("tac_h2", d.tac_h2);
  c.dec_h = j.value("dec_h", d.dec_h);
  c.gate_c = j.value("gate_c", d.gate_c);
  c.logvar_clamp = j.value("logvar_clamp", d.logvar_clamp);
}

template <typename S>
struct Dense {
  Mat<S> W, b;

  void init(Rng& rng, int in, int out, double w_std) {
    W.resize(in, out);
    rng.fill_normal(W, w_std);
    b = Mat<S>::Zero(1, out);
  }
  void init_zero(int in, int out) {
    W = Mat<S>::Zero(in, out);
    b = Mat<S>::Zero(1, out);
  }
};

template <typename S>
struct VisualEncoderP {
  Dense<S> c1, c2, c3;  // conv kernels flattened to [k*k*cin, cout]
  Dense<S> fc_feat, fc_temp, mu, lv;
};

template <typename S>
struct TactileEncoderP {
  Dense<S> l1, l2, fc, mu, lv;
};

template <typename S>
struct FusionP {
  Dense<S> fuse, mu, lv;
};

template <typename S>
struct DecoderP {
  Dense<S> d1, d2, out, contact;
};

template <typename S>
struct GateP {
  Dense<S> c1, fc;
};

template <typename S>
struct MTNetP {
  VisualEncoderP<S> vis;
  TactileEncoderP<S> tac;
  TactileEncoderP<S> ema;  // momentum copy of tac, never trained directly
  FusionP<S> fuse;
  DecoderP<S> dec;
};

template <typename S>
struct AMTNetP {
  MTNetP<S> core;
  VisualEncoderP<S> hum;
  GateP<S> gate;
};

// ---- init -----------------------------------------------------------------

inline constexpr int kCoordEmbed = 21;  // 3 raw + 3 dims * 3 freqs * (sin,cos)

template <typename S>
void init_visual(VisualEncoderP<S>& p, const NetConfig& c, Rng& rng) {
  p.c1.init(rng, 5 * 5 * 3, c.conv1, std::sqrt(1.0 / (5 * 5 * 3)));
  p.c2.init(rng, 3 * 3 * c.conv1, c.conv2, std::sqrt(1.0 / (9 * c.conv1)));
  p.c3.init(rng, 3 * 3 * c.conv2, c.conv3, std::sqrt(1.0 / (9 * c.conv2)));
  const int side = c.image / 16;
  const int flat = side * side * c.conv3;
  p.fc_feat.init(rng, flat, c.feat, std::sqrt(1.0 / flat));
  p.fc_temp.init(rng, c.frames_k * c.feat, c.feat, std::sqrt(1.0 / (c.frames_k * c.feat)));
  p.mu.init_zero(c.feat, c.latent);  // heads start at N(0, I)
  p.lv.init_zero(c.feat, c.latent);
}

template <typename S>
void init_tactile(TactileEncoderP<S>& p, const NetConfig& c, Rng& rng) {
  p.l1.init(rng, 6, c.tac_h1, std::sqrt(1.0 / 6.0));
  p.l2.init(rng, c.tac_h1, c.tac_h2, std::sqrt(1.0 / c.tac_h1));
  p.fc.init(rng, c.tac_h2, c.feat, std::sqrt(1.0 / c.tac_h2));
  p.mu.init_zero(c.feat, c.latent);
  p.lv.init_zero(c.feat, c.latent);
}

template <typename S>
void init_mtnet(MTNetP<S>& p, const NetConfig& c, uint64_t seed) {
  c.validate();
  Rng rv(derive_seed(seed, "init/vis")), rt(derive_seed(seed, "init/tac")),
      rf(derive_seed(seed, "init/fuse")), rd(derive_seed(seed, "init/dec"));
  init_visual(p.vis, c, rv);
  init_tactile(p.tac, c, rt);
  p.ema = p.tac;
  p.fuse.fuse.init(rf, 2 * c.feat, c.feat, std::sqrt(1.0 / (2 * c.feat)));
  p.fuse.mu.init_zero(c.feat, c.latent);
  p.fuse.lv.init_zero(c.feat, c.latent);
  p.dec.d1.init(rd, c.latent + kCoordEmbed, c.dec_h, std::sqrt(1.0 / (c.latent + kCoordEmbed)));
  p.dec.d2.init(rd, c.dec_h, c.dec_h, std::sqrt(1.0 / c.dec_h));
  // zero force output at init: an untrained net stays silent instead of
  // hallucinating constant contact
  p.dec.out.init_zero(c.dec_h, 3);
  p.dec.contact.init(rd, c.dec_h, 1, 0.05);
}

template <typename S>
void init_amtnet(AMTNetP<S>& p, const NetConfig& c, uint64_t seed) {
  Rng rh(derive_seed(seed, "init/hum")), rg(derive_seed(seed, "init/gate"));
  init_visual(p.hum, c, rh);
  p.gate.c1.init(rg, 5 * 5 * 3, c.gate_c, std::sqrt(1.0 / 75.0));
  p.gate.fc.init(rg, c.gate_c, 1, std::sqrt(1.0 / c.gate_c));
}

/// Momentum update of the target tactile encoder: ema <- m*ema + (1-m)*tac.
template <typename S>
void ema_update(MTNetP<S>& p, double momentum = 0.99) {
  // delta form: exact no-op while the towers agree
  const S n = S(1) - S(momentum);
  auto blend = [&](Dense<S>& e, const Dense<S>& t) {
    e.W += n * (t.W - e.W);
    e.b += n * (t.b - e.b);
  };
  blend(p.ema.l1, p.tac.l1);
  blend(p.ema.l2, p.tac.l2);
  blend(p.ema.fc, p.tac.fc);
  blend(p.ema.mu, p.tac.mu);
  blend(p.ema.lv, p.tac.lv);
}

template <typename S, typename F>
void visit_mtnet(MTNetP<S>& p, F&& f) {
  f("vis.c1", p.vis.c1), f("vis.c2", p.vis.c2), f("vis.c3", p.vis.c3);
  f("vis.fc_feat", p.vis.fc_feat), f("vis.fc_temp", p.vis.fc_temp);
  f("vis.mu", p.vis.mu), f("vis.lv", p.vis.lv);
  f("tac.l1", p.tac.l1), f("tac.l2", p.tac.l2), f("tac.fc", p.tac.fc);
  f("tac.mu", p.tac.mu), f("tac.lv", p.tac.lv);
  f("ema.l1", p.ema.l1), f("ema.l2", p.ema.l2), f("ema.fc", p.ema.fc);
  f("ema.mu", p.ema.mu), f("ema.lv", p.ema.lv);
  f("fuse.fc", p.fuse.fuse), f("fuse.mu", p.fuse.mu), f("fuse.lv", p.fuse.lv);
  f("dec.d1", p.dec.d1), f("dec.d2", p.dec.d2), f("dec.out", p.dec.out);
  f("dec.contact", p.dec.contact);
}

template <typename S, typename F>
void visit_amtnet(AMTNetP<S>& p, F&& f) {
  visit_mtnet(p.core, f);
  f("hum.c1", p.hum.c1), f("hum.c2", p.hum.c2), f("hum.c3", p.hum.c3);
  f("hum.fc_feat", p.hum.fc_feat), f("hum.fc_temp", p.hum.fc_temp);
  f("hum.mu", p.hum.mu), f("hum.lv", p.hum.lv);
  f("gate.c1", p.gate.c1), f("gate.fc", p.gate.fc);
}

template <typename S>
long param_count(MTNetP<S>& p) {
  long n = 0;
  visit_mtnet(p, [&](const char*, Dense<S>& d) { n += long(d.W.size()) + long(d.b.size()); });
  return n;
}

// ---- tape binding -----------------------------------------------------------

/// Declares parameter matrices on a tape, remembering matrix<->node pairs so
/// an optimizer can read the gradients back out.
template <typename S>
class ParamBind {
 public:
  ParamBind(Tape<S>& tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  int operator()(Mat<S>& m) {
    const int id = trainable_ ? tape_.param(m) : tape_.constant(m);
    slots_.push_back({&m, id});
    return id;
  }

  struct Slot {
    Mat<S>* value;
    int node;
  };
  const std::vector<Slot>& slots() const { return slots_; }
  Tape<S>& tape() const { return tape_; }
  bool trainable() const { return trainable_; }

 private:
  Tape<S>& tape_;
  bool trainable_;
  std::vector<Slot> slots_;
};

struct DenseN {
  int W = -1, b = -1;
};

template <typename S>
DenseN bind(ParamBind<S>& pb, Dense<S>& d) {
  return {pb(d.W), pb(d.b)};
}

template <typename S>
int dense(Tape<S>& t, const DenseN& n, int x) {
  return t.add_rowvec(t.matmul(x, n.W), n.b);
}

template <typename S>
int dense_tanh(Tape<S>& t, const DenseN& n, int x) {
  return t.tanh_(dense(t, n, x));
}

// ---- conv -------------------------------------------------------------------

/// im2col convolution over row-major pixel matrices. x holds B images of
/// H*W rows by Cin cols; returns B*H'*W' rows by Cout.
template <typename S>
int conv2d(Tape<S>& t, int x, int B, int H, int W, int k, int stride, int pad, int cin,
           const DenseN& w) {
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  const int zero_row = B * H * W;
  const int xz = t.concat_rows(x, t.constant(Mat<S>::Zero(1, cin)));
  std::vector<int> idx;
  idx.reserve(size_t(B) * Ho * Wo * k * k);
  for (int b = 0; b < B; ++b)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
            idx.push_back(iy < 0 || iy >= H || ix < 0 || ix >= W ? zero_row
                                                                 : b * H * W + iy * W + ix);
          }
  const int patches = t.group_rows(t.gather_rows(xz, std::move(idx)), k * k);
  return t.add_rowvec(t.matmul(patches, w.W), w.b);
}

// ---- module forwards ---------------------------------------------------------

struct GaussianN {
  int mu = -1, lv = -1;
};

struct VisualN {
  DenseN c1, c2, c3, fc_feat, fc_temp, mu, lv;
};

template <typename S>
VisualN bind_visual(ParamBind<S>& pb, VisualEncoderP<S>& p) {
  return {bind(pb, p.c1), bind(pb, p.c2), bind(pb, p.c3), bind(pb, p.fc_feat),
          bind(pb, p.fc_temp), bind(pb, p.mu), bind(pb, p.lv)};
}

struct VisualOut {
  int h = -1;  // [B, feat]
  GaussianN prior;
};

/// pixels: [B*K*H*W, 3] constant node. Shared conv trunk per frame, then
/// temporal concat + linear.
template <typename S>
VisualOut visual_encode(Tape<S>& t, const NetConfig& c, const VisualN& n, int pixels, int B) {
  const int BK = B * c.frames_k;
  const int s1 = c.image / 4, s2 = c.image / 8, s3 = c.image / 16;
  int x = t.tanh_(conv2d(t, pixels, BK, c.image, c.image, 5, 4, 2, 3, n.c1));
  x = t.tanh_(conv2d(t, x, BK, s1, s1, 3, 2, 1, c.conv1, n.c2));
  x = t.tanh_(conv2d(t, x, BK, s2, s2, 3, 2, 1, c.conv2, n.c3));
  x = t.group_rows(x, s3 * s3);  // [BK, flat]
  x = dense_tanh(t, n.fc_feat, x);
  x = t.group_rows(x, c.frames_k);  // [B, K*feat]
  const int h = dense_tanh(t, n.fc_temp, x);
  VisualOut out;
  out.h = h;
  out.prior.mu = dense(t, n.mu, h);
  out.prior.lv = t.clamp_(dense(t, n.lv, h), S(-c.logvar_clamp), S(c.logvar_clamp));
  return out;
}

struct TactileN {
  DenseN l1, l2, fc, mu, lv;
};

template <typename S>
TactileN bind_tactile(ParamBind<S>& pb, TactileEncoderP<S>& p) {
  return {bind(pb, p.l1), bind(pb, p.l2), bind(pb, p.fc), bind(pb, p.mu), bind(pb, p.lv)};
}

struct TactileOut {
  int h = -1;
  GaussianN post;
};

/// points: [B*N, 6] constant node of concat(force_xyz, normalized coords).
/// Per-point MLP, order-invariant max pool per sample, projection head.
template <typename S>
TactileOut tactile_encode(Tape<S>& t, const NetConfig& c, const TactileN& n, int points, int B,
                          int taxels) {
  int x = dense_tanh(t, n.l1, points);
  x = dense_tanh(t, n.l2, x);
  std::vector<int> off(size_t(B) + 1);
  for (int b = 0; b <= B; ++b) off[size_t(b)] = b * taxels;
  x = t.segment_max(x, std::move(off));  // [B, h2]
  const int h = dense_tanh(t, n.fc, x);
  TactileOut out;
  out.h = h;
  out.post.mu = dense(t, n.mu, h);
  out.post.lv = t.clamp_(dense(t, n.lv, h), S(-c.logvar_clamp), S(c.logvar_clamp));
  return out;
}

struct FusionN {
  DenseN fuse, mu, lv;
};

template <typename S>
FusionN bind_fusion(ParamBind<S>& pb, FusionP<S>& p) {
  return {bind(pb, p.fuse), bind(pb, p.mu), bind(pb, p.lv)};
}

template <typename S>
GaussianN fuse_posterior(Tape<S>& t, const NetConfig& c, const FusionN& n, int h_v, int h_t) {
  const int h = dense_tanh(t, n.fuse, t.concat_cols(h_v, h_t));
  GaussianN g;
  g.mu = dense(t, n.mu, h);
  g.lv = t.clamp_(dense(t, n.lv, h), S(-c.logvar_clamp), S(c.logvar_clamp));
  return g;
}

/// z = mu + exp(lv/2) * eps with externally supplied noise.
template <typename S>
int reparameterize(Tape<S>& t, const GaussianN& g, int eps) {
  return t.add(g.mu, t.cmul(t.exp_(t.scale(g.lv, S(0.5))), eps));
}

struct DecoderN {
  DenseN d1, d2, out, contact;
};

template <typename S>
DecoderN bind_decoder(ParamBind<S>& pb, DecoderP<S>& p) {
  return {bind(pb, p.d1), bind(pb, p.d2), bind(pb, p.out), bind(pb, p.contact)};
}

struct DecodeOut {
  int forces = -1;  // [B, N*3]
  int logits = -1;  // [B, S] per-sensor contact logits
};

/// Sinusoidal embedding of taxel positions, [N, kCoordEmbed].
template <typename S>
Mat<S> coord_embedding(const TaxelLayout& lay) {
  const int N = lay.total_taxels;
  Mat<S> e(N, kCoordEmbed);
  for (int i = 0; i < N; ++i) {
    int at = 0;
    for (int d = 0; d < 3; ++d) {
      const double u = lay.coords(i, d) / 32.0 - 1.0;
      e(i, at++) = S(u);
      for (double f : {1.0, 2.0, 4.0}) {
        e(i, at++) = S(std::sin(std::numbers::pi * f * u));
        e(i, at++) = S(std::cos(std::numbers::pi * f * u));
      }
    }
  }
  return e;
}

/// Decode forces at every taxel from a latent, conditioning on taxel
/// coordinates; pooled per-sensor features yield contact logits.
template <typename S>
DecodeOut decode(Tape<S>& t, const NetConfig&, const DecoderN& n, int z, int B,
                 const TaxelLayout& lay, int coords_tiled) {
  const int N = lay.total_taxels, Snum = lay.sensor_count();
  std::vector<int> tile(size_t(B) * size_t(N));
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < N; ++i) tile[size_t(b) * size_t(N) + size_t(i)] = b;
  const int zt = t.gather_rows(z, std::move(tile));  // [B*N, latent]
  const int x = t.concat_cols(zt, coords_tiled);
  const int h1 = dense_tanh(t, n.d1, x);
  const int h2 = dense_tanh(t, n.d2, h1);
  DecodeOut out;
  out.forces = t.group_rows(dense(t, n.out, h2), N);  // [B, N*3]
  std::vector<int> soff;
  soff.reserve(size_t(B) * size_t(Snum) + 1);
  soff.push_back(0);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < Snum; ++s)
      soff.push_back(b * N + lay.sensor_start[size_t(s) + 1]);
  const int pooled = t.segment_mean(h2, std::move(soff));      // [B*S, dec_h]
  out.logits = t.group_rows(dense(t, n.contact, pooled), Snum);  // [B, S]
  return out;
}

struct GateN {
  DenseN c1, fc;
};

template <typename S>
GateN bind_gate(ParamBind<S>& pb, GateP<S>& p) {
  return {bind(pb, p.c1), bind(pb, p.fc)};
}

/// Domain logit from the last frame: one strided conv, global average pool.
template <typename S>
int gate_forward(Tape<S>& t, const NetConfig& c, const GateN& n, int pixels, int B) {
  const int s1 = c.image / 4;
  int x = t.tanh_(conv2d(t, pixels, B, c.image, c.image, 5, 4, 2, 3, n.c1));
  std::vector<int> off(size_t(B) + 1);
  for (int b = 0; b <= B; ++b) off[size_t(b)] = b * s1 * s1;
  x = t.segment_mean(x, std::move(off));  // [B, gate_c]
  return dense(t, n.fc, x);               // [B, 1]
}

// ---- full training forward -----------------------------------------------

struct MTNetNodes {
  VisualN vis;
  TactileN tac, ema;
  FusionN fuse;
  DecoderN dec;
};

/// Bind trainable modules; the EMA tower always binds frozen.
template <typename S>
MTNetNodes bind_mtnet(ParamBind<S>& pb, ParamBind<S>& frozen, MTNetP<S>& p) {
  MTNetNodes n;
  n.vis = bind_visual(pb, p.vis);
  n.tac = bind_tactile(pb, p.tac);
  n.ema = bind_tactile(frozen, p.ema);
  n.fuse = bind_fusion(pb, p.fuse);
  n.dec = bind_decoder(pb, p.dec);
  return n;
}

struct ForwardMTNet {
  int h_v = -1, h_t = -1, h_ema = -1;
  GaussianN p_v;     // visual prior
  GaussianN q_t;     // tactile posterior
  GaussianN q_vt;    // fused posterior
  GaussianN q_ema;   // momentum tactile anchor (gradient-free)
  int z_vt = -1, z_t = -1;
  DecodeOut dec_v;   // decoded from z_vt
  DecodeOut dec_t;   // decoded from z_t
};

template <typename S>
ForwardMTNet mtnet_forward_train(Tape<S>& t, const NetConfig& c, const MTNetNodes& n,
                                 const TaxelLayout& lay, int pixels, int points, int eps_vt,
                                 int eps_t, int coords_tiled, int B) {
  ForwardMTNet f;
  const VisualOut v = visual_encode(t, c, n.vis, pixels, B);
  f.h_v = v.h;
  f.p_v = v.prior;
  const TactileOut q = tactile_encode(t, c, n.tac, points, B, lay.total_taxels);
  f.h_t = q.h;
  f.q_t = q.post;
  const TactileOut e = tactile_encode(t, c, n.ema, points, B, lay.total_taxels);
  f.h_ema = e.h;
  f.q_ema.mu = t.detach(e.post.mu);
  f.q_ema.lv = t.detach(e.post.lv);
  f.q_vt = fuse_posterior(t, c, n.fuse, f.h_v, f.h_t);
  f.z_vt = reparameterize(t, f.q_vt, eps_vt);
  f.z_t = reparameterize(t, f.q_t, eps_t);
  f.dec_v = decode(t, c, n.dec, f.z_vt, B, lay, coords_tiled);
  f.dec_t = decode(t, c, n.dec, f.z_t, B, lay, coords_tiled);
  return f;
}

// ---- inference -------------------------------------------------------------

struct Prediction {
  MatF forces;   // [T, N*3]
  MatF contact;  // [T, S] probabilities
  MatF z;        // [T, latent] prior means
};

/// Build the [T*K*H*W, 3] pixel matrix of sliding windows ending at each
/// frame (clamped at the clip start).
inline MatF window_pixels(const Episode& ep, int K, int t0, int count) {
  const int px = ep.height * ep.width;
  MatF m(count * K * px, 3);
  for (int i = 0; i < count; ++i)
    for (int k = 0; k < K; ++k) {
      const int src = std::max(0, t0 + i - (K - 1) + k);
      for (int p = 0; p < px; ++p)
        for (int ch = 0; ch < 3; ++ch)
          m((Eigen::Index(i) * K + k) * px + p, ch) = ep.visual(src, 3 * p + ch);
    }
  return m;
}

/// Visual-only rollout: encode each K-frame window, decode from the prior
/// mean. `encoder` selects which visual tower reads the clip.
template <typename S>
Prediction predict_core(MTNetP<S>& net, VisualEncoderP<S>& encoder, const NetConfig& c,
                        const TaxelLayout& lay, const Episode& ep) {
  const int T = ep.frames(), N = lay.total_taxels;
  Prediction out;
  out.forces.resize(T, N * 3);
  out.contact.resize(T, lay.sensor_count());
  out.z.resize(T, c.latent);
  const Mat<S> embed = coord_embedding<S>(lay);
  const int chunk = 16;
  for (int t0 = 0; t0 < T; t0 += chunk) {
    const int B = std::min(chunk, T - t0);
    Tape<S> tape;
    ParamBind<S> pb(tape, false);
    const VisualN vn = bind_visual(pb, encoder);
    const DecoderN dn = bind_decoder(pb, net.dec);
    const int pixels = tape.constant(window_pixels(ep, c.frames_k, t0, B).template cast<S>());
    const VisualOut v = visual_encode(tape, c, vn, pixels, B);
    Mat<S> tiled(Eigen::Index(B) * N, kCoordEmbed);
    for (int b = 0; b < B; ++b) tiled.middleRows(Eigen::Index(b) * N, N) = embed;
    const DecodeOut d = decode(tape, c, dn, v.prior.mu, B, lay, tape.constant(std::move(tiled)));
    out.forces.middleRows(t0, B) = tape.val(d.forces).template cast<float>();
    out.z.middleRows(t0, B) = tape.val(v.prior.mu).template cast<float>();
    out.contact.middleRows(t0, B) =
        (S(1) / (S(1) + (-tape.val(d.logits).array()).exp())).matrix().template cast<float>();
  }
  return out;
}

template <typename S>
Prediction mtnet_predict(MTNetP<S>& net, const NetConfig& c, const TaxelLayout& lay,
                         const Episode& ep) {
  return predict_core(net, net.vis, c, lay, ep);
}

/// Adapted rollout: the gate picks the encoder tower per clip.
template <typename S>
Prediction amtnet_predict(AMTNetP<S>& net, const NetConfig& c, const TaxelLayout& lay,
                          const Episode& ep, double* gate_prob = nullptr) {
  // gate on the clip's middle frame
  Tape<S> tape;
  ParamBind<S> pb(tape, false);
  const GateN gn = bind_gate(pb, net.gate);
  const int px = ep.height * ep.width;
  MatF frame(px, 3);
  const int mid = ep.frames() / 2;
  for (int p = 0; p < px; ++p)
    for (int ch = 0; ch < 3; ++ch) frame(p, ch) = ep.visual(mid, 3 * p + ch);
  const int logit = gate_forward(tape, c, gn, tape.constant(frame.template cast<S>()), 1);
  const double prob = 1.0 / (1.0 + std::exp(-double(tape.val(logit)(0, 0))));
  if (gate_prob) *gate_prob = prob;
  // gate outputs P(human domain)
  return predict_core(net.core, prob > 0.5 ? net.hum : net.core.vis, c, lay, ep);
}

// ---- checkpoints -----------------------------------------------------------

template <typename S>
void save_checkpoint(const std::filesystem::path& path, MTNetP<S>* core, AMTNetP<S>* adapter,
                     const NetConfig& cfg, const json& extra = json::object()) {
  std::vector<TensorSpec> specs;
  std::vector<Mat<float>> store;
  auto put = [&](const std::string& name, Dense<S>& d) {
    store.push_back(d.W.template cast<float>());
    specs.push_back({name + ".W", {d.W.rows(), d.W.cols()}});
    store.push_back(d.b.template cast<float>());
    specs.push_back({name + ".b", {d.b.rows(), d.b.cols()}});
  };
  json header{{"schema", "mtnet.checkpoint"},
              {"version", 1},
              {"kind", adapter ? "amtnet" : "mtnet"},
              {"net", cfg},
              {"extra", extra}};
  if (adapter)
    visit_amtnet(*adapter, put);
  else
    visit_mtnet(*core, put);
  std::vector<const float*> ptrs;
  for (const auto& m : store) ptrs.push_back(m.data());
  write_tensor_file(path, header, specs, ptrs);
}

template <typename S>
NetConfig load_checkpoint(const std::filesystem::path& path, MTNetP<S>* core,
                          AMTNetP<S>* adapter, json* extra = nullptr) {
  const TensorFile tf = read_tensor_file(path);
  if (tf.header.value("schema", "") != "mtnet.checkpoint")
    throw SchemaError("not a checkpoint: " + path.string());
  const std::string kind = tf.header.value("kind", "");
  if (adapter && kind != "amtnet")
    throw SchemaError("checkpoint " + path.string() + " lacks adapter weights");
  if (!adapter && kind != "mtnet" && kind != "amtnet")
    throw SchemaError("unknown checkpoint kind '" + kind + "' in " + path.string());
  const NetConfig cfg = tf.header.at("net").get<NetConfig>();
  if (extra) *extra = tf.header.value("extra", json::object());
  auto get = [&](const std::string& name, Dense<S>& d) {
    const TensorSpec& sw = tf.spec(name + ".W");
    d.W = tf.as_matrix(name + ".W", sw.shape.at(0), sw.shape.at(1)).template cast<S>();
    const TensorSpec& sb = tf.spec(name + ".b");
    d.b = tf.as_matrix(name + ".b", sb.shape.at(0), sb.shape.at(1)).template cast<S>();
  };
  if (adapter)
    visit_amtnet(*adapter, get);
  else
    visit_mtnet(*core, get);
  return cfg;
}

}  // namespace mtnet
