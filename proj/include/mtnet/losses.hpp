#pragma once

// Training objectives. Reconstruction terms average the fused-posterior and
// tactile-posterior decoder branches; contact-bearing sensors get extra
// weight; the contrastive term drops negatives whose ground-truth force maps
// nearly coincide.

#include <map>
#include <string>

#include "mtnet/nets.hpp"

namespace mtnet {

struct LossWeights {
  double recon = 1.0;
  double bce = 1.0;
  double kl_vis = 0.01;
  double kl_tac = 0.01;
  double kl_cross_prior = 0.01;
  double kl_cross_post = 0.01;
  long kl_warmup = 1000;
  double nce = 0.1;
  double geo = 0.1;
  double lambda_contact = 10.0;  // recon weight on taxels of touched sensors
  double tau = 0.1;              // contrastive temperature
  double delta_pos = 0.05;       // normalized force distance below which a pair is not a negative
};

inline void to_json(json& j, const LossWeights& w) {
  j = json{{"recon", w.recon},
           {"bce", w.bce},
           {"kl_vis", w.kl_vis},
           {"kl_tac", w.kl_tac},
           {"kl_cross_prior", w.kl_cross_prior},
           {"kl_cross_post", w.kl_cross_post},
           {"kl_warmup", w.kl_warmup},
           {"nce", w.nce},
           {"geo", w.geo},
           {"lambda_contact", w.lambda_contact},
           {"tau", w.tau},
           {"delta_pos", w.delta_pos}};
}

inline void from_json(const json& j, LossWeights& w) {
  LossWeights d;
  w.recon = j.value("recon", d.recon);
  w.bce = j.value("bce", d.bce);
  w.kl_vis = j.value("kl_vis", d.kl_vis);
  w.kl_tac = j.value("kl_tac", d.kl_tac);
  w.kl_cross_prior = j.value("kl_cross_prior", d.kl_cross_prior);
  w.kl_cross_post = j.value("kl_cross_post", d.kl_cross_post);
  w.kl_warmup = j.value("kl_warmup", d.kl_warmup);
  w.nce = j.value("nce", d.nce);
  w.geo = j.value("geo", d.geo);
  w.lambda_contact = j.value("lambda_contact", d.lambda_contact);
  w.tau = j.value("tau", d.tau);
  w.delta_pos = j.value("delta_pos", d.delta_pos);
}

/// Named loss subsets for the ablation study. Unknown names throw.
inline LossWeights loss_variant(LossWeights w, const std::string& name) {
  if (name == "full") return w;
  if (name == "no_distribution") {
    w.kl_cross_prior = w.kl_cross_post = 0.0;
    return w;
  }
  if (name == "no_representational") {
    w.nce = 0.0;
    return w;
  }
  if (name == "no_relational") {
    w.geo = 0.0;
    return w;
  }
  if (name == "recon_only") {
    w.kl_vis = w.kl_tac = w.kl_cross_prior = w.kl_cross_post = 0.0;
    w.nce = w.geo = 0.0;
    return w;
  }
  throw ConfigError("unknown loss variant '" + name + "'");
}

inline const std::vector<std::string>& loss_variant_names() {
  static const std::vector<std::string> names = {"full", "no_distribution", "no_representational",
                                                 "no_relational", "recon_only"};
  return names;
}

// ---- primitives -------------------------------------------------------------

/// KL(q || p) between diagonal gaussians, summed over dims, mean over batch.
template <typename S>
int kl_gauss(Tape<S>& t, const GaussianN& q, const GaussianN& p) {
  const int dlv = t.sub(q.lv, p.lv);
  const int ratio = t.exp_(dlv);  // sigma_q^2 / sigma_p^2
  const int md = t.cmul(t.square_(t.sub(q.mu, p.mu)), t.exp_(t.scale(p.lv, S(-1))));
  const int inner = t.sub(t.add(ratio, md), t.add_scalar(dlv, S(1)));
  const Eigen::Index B = t.val(q.mu).rows();
  return t.scale(t.sum(inner), S(0.5) / S(B));
}

/// KL(q || N(0, I)).
template <typename S>
int kl_std(Tape<S>& t, const GaussianN& q) {
  const int inner = t.sub(t.add(t.exp_(q.lv), t.square_(q.mu)), t.add_scalar(q.lv, S(1)));
  const Eigen::Index B = t.val(q.mu).rows();
  return t.scale(t.sum(inner), S(0.5) / S(B));
}

/// Mean binary cross entropy from logits; targets may be soft.
template <typename S>
int bce_logits(Tape<S>& t, int logits, int targets) {
  return t.mean(t.sub(t.softplus_(logits), t.cmul(logits, targets)));
}

/// Rows scaled to unit norm.
template <typename S>
int normalize_rows(Tape<S>& t, int h) {
  const Eigen::Index B = t.val(h).rows();
  const int n2 = t.add_scalar(t.rowwise_sum(t.square_(h)), S(1e-12));
  const int inv = t.cdiv(t.constant(Mat<S>::Ones(B, 1)), t.sqrt_(n2));
  return t.mul_colvec(h, inv);
}

/// Pairwise euclidean distance matrix with a zeroed diagonal.
template <typename S>
int pairwise_dist(Tape<S>& t, int h) {
  const Eigen::Index B = t.val(h).rows();
  const int r = t.rowwise_sum(t.square_(h));  // [B,1]
  const int rr = t.matmul(r, t.constant(Mat<S>::Ones(1, B)));
  const int g = t.matmul(h, t.transpose(h));
  const int d2 = t.sub(t.add(rr, t.transpose(rr)), t.scale(g, S(2)));
  Mat<S> off = Mat<S>::Ones(B, B);
  off.diagonal().setZero();
  // mask after sqrt so the eps-guarded diagonal contributes nothing
  return t.cmul(t.sqrt_(t.add_scalar(t.clamp_(d2, S(0), S(1e30)), S(1e-12))), t.constant(off));
}

/// MSE between Frobenius-normalized pairwise distance matrices.
template <typename S>
int geo_loss(Tape<S>& t, int h_a, int h_b) {
  auto normed = [&](int h) {
    const int d = pairwise_dist(t, h);
    const int n = t.sqrt_(t.add_scalar(t.sum(t.square_(d)), S(1e-12)));
    return t.bcast_mul(d, t.cdiv(t.constant(Mat<S>::Ones(1, 1)), n));
  };
  return t.mean(t.square_(t.sub(normed(h_a), normed(h_b))));
}

/// Additive mask for contrastive logits: 0 keeps an entry, -1e4 drops it.
/// Negatives are dropped wherever ground-truth force maps are closer than
/// delta_pos times the widest pair in the batch; the diagonal always stays.
template <typename S>
Mat<S> nce_mask(const Mat<S>& gt_forces, double delta_pos) {
  const Eigen::Index B = gt_forces.rows();
  Mat<double> d(B, B);
  for (Eigen::Index i = 0; i < B; ++i)
    for (Eigen::Index j = 0; j < B; ++j)
      d(i, j) = (gt_forces.row(i) - gt_forces.row(j)).template cast<double>().norm();
  const double dmax = d.maxCoeff();
  Mat<S> m = Mat<S>::Zero(B, B);
  for (Eigen::Index i = 0; i < B; ++i)
    for (Eigen::Index j = 0; j < B; ++j) {
      if (i == j) continue;
      if (dmax <= 0.0 || d(i, j) / dmax < delta_pos) m(i, j) = S(-1e4);
    }
  return m;
}

/// Symmetric InfoNCE over row-normalized embeddings with masked negatives.
template <typename S>
int nce_loss(Tape<S>& t, int h_a, int h_b, const Mat<S>& mask, double tau) {
  const Eigen::Index B = t.val(h_a).rows();
  const int u = normalize_rows(t, h_a);
  const int v = normalize_rows(t, h_b);
  const int logits = t.scale(t.matmul(u, t.transpose(v)), S(1.0 / tau));
  const int mc = t.constant(mask);
  Mat<S> eye = Mat<S>::Identity(B, B);
  const int eyec = t.constant(eye);
  auto direction = [&](int lg) {
    const int masked = t.add(lg, mc);
    const int pos = t.rowwise_sum(t.cmul(masked, eyec));  // [B,1] diagonal
    return t.mean(t.sub(t.logsumexp_rows(masked), pos));
  };
  return t.scale(t.add(direction(logits), direction(t.transpose(logits))), S(0.5));
}

// ---- MTNet composite ---------------------------------------------------------

template <typename S>
struct LossBatch {
  Mat<S> gt_forces;  // [B, N*3]
  Mat<S> contact;    // [B, S] ground-truth labels in {0,1}
};

struct MTNetLosses {
  int mse = -1, mae = -1, wmse = -1, wmae = -1, bce = -1;
  int kl_vis = -1, kl_tac = -1, kl_cross_prior = -1, kl_cross_post = -1;
  int nce = -1, geo = -1;
  int total = -1;
  double kl_scale = 1.0;
};

struct LossReport {
  double mse = 0, mae = 0, wmse = 0, wmae = 0, bce = 0;
  double kl_vis = 0, kl_tac = 0, kl_cross_prior = 0, kl_cross_post = 0;
  double nce = 0, geo = 0;
  double total = 0, kl_scale = 1.0;
};

inline void to_json(json& j, const LossReport& r) {
  j = json{{"mse", r.mse},
           {"mae", r.mae},
           {"wmse", r.wmse},
           {"wmae", r.wmae},
           {"bce", r.bce},
           {"kl_vis", r.kl_vis},
           {"kl_tac", r.kl_tac},
           {"kl_cross_prior", r.kl_cross_prior},
           {"kl_cross_post", r.kl_cross_post},
           {"nce", r.nce},
           {"geo", r.geo},
           {"total", r.total},
           {"kl_scale", r.kl_scale}};
}

/// Per-component reconstruction weights: taxels of touched sensors count
/// lambda times as much. Returns the matrix and its total mass.
template <typename S>
std::pair<Mat<S>, double> recon_weights(const TaxelLayout& lay, const Mat<S>& contact,
                                        double lambda) {
  const Eigen::Index B = contact.rows();
  const int N = lay.total_taxels;
  Mat<S> w(B, Eigen::Index(N) * 3);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int i = 0; i < N; ++i) {
      const S wi = contact(b, lay.sensor_of_taxel(i)) > S(0.5) ? S(lambda) : S(1);
      w(b, 3 * i) = w(b, 3 * i + 1) = w(b, 3 * i + 2) = wi;
    }
  return {w, double(w.template cast<double>().sum())};
}

template <typename S>
MTNetLosses mtnet_losses(Tape<S>& t, const ForwardMTNet& f, const TaxelLayout& lay,
                         const LossBatch<S>& batch, const LossWeights& w, long step) {
  MTNetLosses out;
  const int gt = t.constant(batch.gt_forces);
  const int labels = t.constant(batch.contact);
  auto [wmat, wsum] = recon_weights(lay, batch.contact, w.lambda_contact);
  const int wc = t.constant(wmat);

  auto branch_avg = [&](auto&& term) {
    return t.scale(t.add(term(f.dec_v), term(f.dec_t)), S(0.5));
  };
  out.mse = branch_avg([&](const DecodeOut& d) { return t.mean(t.square_(t.sub(d.forces, gt))); });
  out.mae = branch_avg([&](const DecodeOut& d) { return t.mean(t.abs_(t.sub(d.forces, gt))); });
  out.wmse = branch_avg([&](const DecodeOut& d) {
    return t.scale(t.sum(t.cmul(wc, t.square_(t.sub(d.forces, gt)))), S(1.0 / wsum));
  });
  out.wmae = branch_avg([&](const DecodeOut& d) {
    return t.scale(t.sum(t.cmul(wc, t.abs_(t.sub(d.forces, gt)))), S(1.0 / wsum));
  });
  out.bce = branch_avg([&](const DecodeOut& d) { return bce_logits(t, d.logits, labels); });

  out.kl_vis = kl_gauss(t, f.q_vt, f.p_v);
  out.kl_tac = kl_std(t, f.q_t);
  out.kl_cross_prior = kl_gauss(t, f.p_v, f.q_ema);
  out.kl_cross_post = kl_gauss(t, f.q_vt, f.q_ema);

  const Mat<S> mask = nce_mask(batch.gt_forces, w.delta_pos);
  out.nce = nce_loss(t, f.h_v, f.h_t, mask, w.tau);
  out.geo = geo_loss(t, f.h_v, f.h_t);

  out.kl_scale = w.kl_warmup <= 0 ? 1.0 : std::min(1.0, double(step) / double(w.kl_warmup));
  int total = t.scale(out.wmse, S(w.recon));
  total = t.add(total, t.scale(out.bce, S(w.bce)));
  auto maybe = [&](int node, double weight) {
    if (weight != 0.0) total = t.add(total, t.scale(node, S(weight)));
  };
  maybe(out.kl_vis, w.kl_vis * out.kl_scale);
  maybe(out.kl_tac, w.kl_tac * out.kl_scale);
  maybe(out.kl_cross_prior, w.kl_cross_prior * out.kl_scale);
  maybe(out.kl_cross_post, w.kl_cross_post * out.kl_scale);
  maybe(out.nce, w.nce);
  maybe(out.geo, w.geo);
  out.total = total;
  return out;
}

template <typename S>
LossReport read_losses(const Tape<S>& t, const MTNetLosses& n) {
  LossReport r;
  auto get = [&](int id) { return double(t.val(id)(0, 0)); };
  r.mse = get(n.mse);
  r.mae = get(n.mae);
  r.wmse = get(n.wmse);
  r.wmae = get(n.wmae);
  r.bce = get(n.bce);
  r.kl_vis = get(n.kl_vis);
  r.kl_tac = get(n.kl_tac);
  r.kl_cross_prior = get(n.kl_cross_prior);
  r.kl_cross_post = get(n.kl_cross_post);
  r.nce = get(n.nce);
  r.geo = get(n.geo);
  r.total = get(n.total);
  r.kl_scale = n.kl_scale;
  return r;
}

// ---- adapter objective ---------------------------------------------------------

struct AdaptWeights {
  double feat = 1.0;
  double prior = 0.1;
  double contact = 0.2;
  double recon = 1.0;
  double gate = 0.5;
};

inline void to_json(json& j, const AdaptWeights& w) {
  j = json{{"feat", w.feat},
           {"prior", w.prior},
           {"contact", w.contact},
           {"recon", w.recon},
           {"gate", w.gate}};
}

inline void from_json(const json& j, AdaptWeights& w) {
  AdaptWeights d;
  w.feat = j.value("feat", d.feat);
  w.prior = j.value("prior", d.prior);
  w.contact = j.value("contact", d.contact);
  w.recon = j.value("recon", d.recon);
  w.gate = j.value("gate", d.gate);
}

struct AMTNetLosses {
  int feat = -1, prior = -1, contact = -1, recon = -1, gate = -1;
  int total = -1;
};

struct AdaptReport {
  double feat = 0, prior = 0, contact = 0, recon = 0, gate = 0, total = 0;
};

inline void to_json(json& j, const AdaptReport& r) {
  j = json{{"feat", r.feat},     {"prior", r.prior}, {"contact", r.contact},
           {"recon", r.recon},   {"gate", r.gate},   {"total", r.total}};
}

/// The human tower chases the frozen robot tower on paired clips; the gate
/// learns to tell domains apart. Robot-side nodes must already be
/// gradient-free (bound frozen), teacher logits are detached here anyway.
template <typename S>
AMTNetLosses amtnet_losses(Tape<S>& t, int h_h, const GaussianN& p_h, int h_r,
                           const GaussianN& p_r, const DecodeOut& dec_h, const DecodeOut& dec_r,
                           int gate_logits, const Mat<S>& gt_forces, const Mat<S>& domain_labels,
                           const AdaptWeights& w) {
  AMTNetLosses out;
  out.feat = t.mean(t.square_(t.sub(h_h, t.detach(h_r))));
  GaussianN pr_sg{t.detach(p_r.mu), t.detach(p_r.lv)};
  out.prior = kl_gauss(t, p_h, pr_sg);
  const int teacher = t.sigmoid_(t.detach(dec_r.logits));
  out.contact = bce_logits(t, dec_h.logits, teacher);
  out.recon = t.mean(t.square_(t.sub(dec_h.forces, t.constant(gt_forces))));
  out.gate = bce_logits(t, gate_logits, t.constant(domain_labels));
  int total = t.scale(out.feat, S(w.feat));
  total = t.add(total, t.scale(out.prior, S(w.prior)));
  total = t.add(total, t.scale(out.contact, S(w.contact)));
  total = t.add(total, t.scale(out.recon, S(w.recon)));
  total = t.add(total, t.scale(out.gate, S(w.gate)));
  out.total = total;
  return out;
}

template <typename S>
AdaptReport read_adapt(const Tape<S>& t, const AMTNetLosses& n) {
  AdaptReport r;
  auto get = [&](int id) { return double(t.val(id)(0, 0)); };
  r.feat = get(n.feat);
  r.prior = get(n.prior);
  r.contact = get(n.contact);
  r.recon = get(n.recon);
  r.gate = get(n.gate);
  r.total = get(n.total);
  return r;
}

}  // namespace mtnet
