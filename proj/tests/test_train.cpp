#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <vector>

#include "mtnet/synth.hpp"
#include "mtnet/train.hpp"

using namespace mtnet;
using Catch::Matchers::WithinAbs;

namespace {

LayoutConfig mini_layout() {
  LayoutConfig lc;
  SensorPatch a;
  a.name = "f0";
  a.rows = 2;
  a.cols = 2;
  a.finger = 0;
  SensorPatch b = a;
  b.name = "f1";
  b.finger = 1;
  b.origin = Eigen::Vector3d(8, 0, 0);
  lc.sensors = {a, b};
  lc.expected_total = 8;
  return lc;
}

NetConfig mini_net() {
  NetConfig nc;
  nc.image = 16;
  nc.frames_k = 2;
  nc.latent = 4;
  nc.feat = 8;
  nc.conv1 = 2;
  nc.conv2 = 3;
  nc.conv3 = 4;
  nc.tac_h1 = 6;
  nc.tac_h2 = 8;
  nc.dec_h = 6;
  nc.gate_c = 2;
  return nc;
}

Episode fake_episode(const LayoutConfig& lc, int frames, int image, uint64_t seed,
                     const std::string& domain = "robot") {
  const TaxelLayout lay = build_taxel_layout(lc);
  Episode ep;
  ep.domain = domain;
  ep.fps = 30;
  ep.height = ep.width = image;
  ep.layout = lc;
  ep.tactile.resize(frames, lay.total_taxels * 3);
  ep.visual.resize(frames, image * image * 3);
  Rng rng(seed);
  rng.fill_normal(ep.tactile, 0.25);
  rng.fill_normal(ep.visual, 0.2);
  ep.visual = ep.visual.array().abs().min(1.0f).matrix();
  ep.contact = derive_contact_labels(ep.tactile, lay);
  return ep;
}

std::vector<Episode> fake_set(int n, uint64_t seed) {
  std::vector<Episode> eps;
  for (int i = 0; i < n; ++i)
    eps.push_back(fake_episode(mini_layout(), 12, 16, derive_seed(seed, std::to_string(i))));
  return eps;
}

// flatten every parameter for bitwise comparison
std::vector<float> dump_params(MTNetP<float>& p) {
  std::vector<float> out;
  visit_mtnet(p, [&](const char*, Dense<float>& d) {
    out.insert(out.end(), d.W.data(), d.W.data() + d.W.size());
    out.insert(out.end(), d.b.data(), d.b.data() + d.b.size());
  });
  return out;
}

}  // namespace

TEST_CASE("ablation switches") {
  const LossWeights base;
  SECTION("groups zero their terms") {
    LossWeights w = apply_ablation(base, {"distribution"});
    CHECK(w.kl_cross_prior == 0.0);
    CHECK(w.kl_cross_post == 0.0);
    CHECK(w.nce == base.nce);
    w = apply_ablation(base, {"representational"});
    CHECK(w.nce == 0.0);
    w = apply_ablation(base, {"relational"});
    CHECK(w.geo == 0.0);
  }
  SECTION("all six alignment terms off equals the unaligned variant") {
    const LossWeights a = apply_ablation(
        base, {"kl_vis", "kl_tac", "kl_cross_prior", "kl_cross_post", "nce", "geo"});
    const LossWeights b = loss_variant(base, "recon_only");
    CHECK(a.kl_vis == b.kl_vis);
    CHECK(a.kl_tac == b.kl_tac);
    CHECK(a.kl_cross_prior == b.kl_cross_prior);
    CHECK(a.kl_cross_post == b.kl_cross_post);
    CHECK(a.nce == b.nce);
    CHECK(a.geo == b.geo);
    CHECK(a.recon == base.recon);
    CHECK(a.bce == base.bce);
  }
  SECTION("no ablation is the full objective") {
    const LossWeights w = apply_ablation(base, {});
    CHECK(w.nce == base.nce);
    CHECK(w.kl_cross_post == base.kl_cross_post);
  }
  SECTION("unknown names throw") {
    CHECK_THROWS_AS(apply_ablation(base, {"dropout"}), ConfigError);
  }
}

TEST_CASE("episode split is a seeded partition") {
  const SplitIdx s = split_episodes(10, 0.2, 7);
  CHECK(s.train.size() == 8);
  CHECK(s.val.size() == 2);
  std::vector<int> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 10; ++i) CHECK(all[size_t(i)] == i);
  const SplitIdx again = split_episodes(10, 0.2, 7);
  CHECK(again.train == s.train);
  const SplitIdx other = split_episodes(10, 0.2, 8);
  CHECK(other.train != s.train);
  CHECK(split_episodes(1, 0.2, 1).val.empty());
  CHECK_THROWS_AS(split_episodes(0, 0.2, 1), SchemaError);
}

TEST_CASE("config validation") {
  TrainConfig tc;
  tc.batch = 1;
  CHECK_THROWS_AS(validate_train(tc, tc.weights), ConfigError);  // nce needs pairs
  LossWeights w = loss_variant(tc.weights, "recon_only");
  CHECK_NOTHROW(validate_train(tc, w));
  tc.batch = 0;
  CHECK_THROWS_AS(validate_train(tc, w), ConfigError);
  tc.batch = 4;
  tc.val_fraction = 1.0;
  CHECK_THROWS_AS(validate_train(tc, w), ConfigError);
  tc.val_fraction = 0.2;
  tc.lr = 0;
  CHECK_THROWS_AS(validate_train(tc, w), ConfigError);
  json j = TrainConfig{};
  const TrainConfig round = j.get<TrainConfig>();
  CHECK(round.batch == TrainConfig{}.batch);
  CHECK(round.weights.nce == LossWeights{}.nce);
}

TEST_CASE("adam descends a quadratic") {
  Mat<float> x(1, 1);
  x(0, 0) = 1.0f;
  Adam<float> opt;
  opt.lr = 0.1;
  for (int i = 0; i < 1; ++i) {
    TapeF t;
    ParamBind<float> pb(t, true);
    const int xn = pb(x);
    t.backward(t.scale(t.sum(t.square_(xn)), 0.5f));
    opt.step(t, pb.slots());
  }
  CHECK_THAT(double(x(0, 0)), WithinAbs(0.9, 1e-6));  // unit-ish first step
  for (int i = 0; i < 120; ++i) {
    TapeF t;
    ParamBind<float> pb(t, true);
    const int xn = pb(x);
    t.backward(t.scale(t.sum(t.square_(xn)), 0.5f));
    opt.step(t, pb.slots());
  }
  CHECK(std::abs(x(0, 0)) < 0.02f);
}

TEST_CASE("all-zero weights leave every parameter byte untouched") {
  const std::vector<Episode> eps = fake_set(3, 100);
  TrainConfig tc;
  tc.seed = 5;
  tc.epochs = 1;
  tc.steps_per_epoch = 2;
  tc.batch = 2;
  tc.weights = apply_ablation(
      LossWeights{}, {"recon", "bce", "kl_vis", "kl_tac", "kl_cross_prior", "kl_cross_post",
                      "nce", "geo"});
  MTNetP<float> net;
  const TrainLog log = train_mtnet(net, mini_net(), tc, eps);
  CHECK(log.steps.size() == 2);
  CHECK(log.steps[0].total == 0.0);
  MTNetP<float> ref;
  init_mtnet(ref, mini_net(), derive_seed(tc.seed, "init"));
  CHECK(dump_params(net) == dump_params(ref));
}

TEST_CASE("training is deterministic in the seed") {
  const std::vector<Episode> eps = fake_set(4, 200);
  TrainConfig tc;
  tc.seed = 9;
  tc.epochs = 1;
  tc.steps_per_epoch = 4;
  tc.batch = 2;
  tc.weights.kl_warmup = 8;
  MTNetP<float> a, b;
  const TrainLog la = train_mtnet(a, mini_net(), tc, eps);
  const TrainLog lb = train_mtnet(b, mini_net(), tc, eps);
  REQUIRE(la.steps.size() == lb.steps.size());
  for (size_t i = 0; i < la.steps.size(); ++i) {
    CHECK(la.steps[i].total == lb.steps[i].total);
    CHECK(la.steps[i].nce == lb.steps[i].nce);
  }
  CHECK(dump_params(a) == dump_params(b));
  TrainConfig other = tc;
  other.seed = 10;
  MTNetP<float> c;
  const TrainLog lc = train_mtnet(c, mini_net(), other, eps);
  CHECK(lc.steps[0].total != la.steps[0].total);
  CHECK(la.val.size() == 1);  // final-epoch validation on the held-out episode
}

TEST_CASE("warmup scales the kl components") {
  const std::vector<Episode> eps = fake_set(3, 300);
  TrainConfig tc;
  tc.epochs = 1;
  tc.steps_per_epoch = 4;
  tc.batch = 2;
  tc.weights.kl_warmup = 4;
  MTNetP<float> net;
  const TrainLog log = train_mtnet(net, mini_net(), tc, eps);
  REQUIRE(log.steps.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(log.steps[size_t(k)].kl_scale == k / 4.0);
}

TEST_CASE("rejects wrong domains and resolutions") {
  std::vector<Episode> eps = fake_set(2, 400);
  TrainConfig tc;
  tc.epochs = 0;
  MTNetP<float> net;
  eps[1].domain = "human";
  CHECK_THROWS_AS(train_mtnet(net, mini_net(), tc, eps), SchemaError);
  eps[1].domain = "robot";
  NetConfig big = mini_net();
  big.image = 32;
  CHECK_THROWS_AS(train_mtnet(net, big, tc, eps), SchemaError);
}

TEST_CASE("non-finite losses abort with step and component") {
  std::vector<Episode> eps = fake_set(2, 500);
  eps[0].tactile(3, 5) = std::numeric_limits<float>::quiet_NaN();
  eps[1].tactile.setConstant(std::numeric_limits<float>::quiet_NaN());
  TrainConfig tc;
  tc.epochs = 1;
  tc.steps_per_epoch = 3;
  tc.batch = 2;
  tc.val_fraction = 0;
  try {
    MTNetP<float> net;
    train_mtnet(net, mini_net(), tc, eps);
    FAIL("expected a TrainError");
  } catch (const TrainError& e) {
    const std::string what = e.what();
    CHECK(what.find("non-finite") != std::string::npos);
    CHECK(what.find("at step") != std::string::npos);
  }
}

TEST_CASE("short run on generated data improves the objective") {
  GenConfig gc;
  gc.frames = 24;
  std::vector<Episode> eps;
  for (int i = 0; i < 6; ++i)
    eps.push_back(generate_episode(gc, derive_seed(42, "ep/" + std::to_string(i)), "robot"));
  NetConfig nc;
  nc.image = 64;
  nc.frames_k = 3;
  nc.latent = 8;
  nc.feat = 32;
  nc.conv1 = 4;
  nc.conv2 = 6;
  nc.conv3 = 8;
  nc.tac_h1 = 16;
  nc.tac_h2 = 24;
  nc.dec_h = 16;
  TrainConfig tc;
  tc.seed = 3;
  tc.epochs = 3;
  tc.steps_per_epoch = 10;
  tc.batch = 4;
  tc.weights.kl_warmup = 10;
  tc.val_cap = 1;
  MTNetP<float> net;
  const TrainLog log = train_mtnet(net, nc, tc, eps);
  REQUIRE(log.steps.size() == 30);
  auto epoch_mean = [&](int e) {
    double acc = 0;
    for (int s = 0; s < 10; ++s) acc += log.steps[size_t(e * 10 + s)].total;
    return acc / 10;
  };
  CHECK(epoch_mean(2) < epoch_mean(0));
  // reconstruction specifically improves
  double first = 0, last = 0;
  for (int s = 0; s < 10; ++s) {
    first += log.steps[size_t(s)].wmse;
    last += log.steps[size_t(20 + s)].wmse;
  }
  CHECK(last < first);
  REQUIRE_FALSE(log.val.empty());
  CHECK(std::isfinite(log.val.back().second.nrmse));
  CHECK(log.wall_seconds > 0);
}

TEST_CASE("csv dumps carry one row per step") {
  TrainLog log;
  log.steps.resize(3);
  log.steps[1].total = 0.5;
  const std::string csv = losses_csv(log.steps);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.rfind("step,mse,", 0) == 0);
  CHECK(csv.find(",0.5,") != std::string::npos);
  log.adapt_steps.resize(2);
  const std::string acsv = adapt_csv(log.adapt_steps);
  CHECK(std::count(acsv.begin(), acsv.end(), '\n') == 3);
  std::vector<std::pair<int, MetricReport>> val(1);
  val[0].first = 4;
  CHECK(metrics_csv(val).rfind("epoch,") == 0);
}

TEST_CASE("pair matching") {
  std::vector<Episode> eps;
  for (int i = 0; i < 2; ++i) {
    Episode h = fake_episode(mini_layout(), 8, 16, 600 + uint64_t(i), "human");
    Episode r = fake_episode(mini_layout(), 8, 16, 700 + uint64_t(i), "robot");
    h.meta["pair"] = i;
    r.meta["pair"] = i;
    eps.push_back(h);
    eps.push_back(r);
  }
  const PairedSet ps = match_pairs(eps);
  REQUIRE(ps.human.size() == 2);
  CHECK(eps[size_t(ps.human[0])].domain == "human");
  CHECK(eps[size_t(ps.robot[0])].domain == "robot");
  CHECK(eps[size_t(ps.human[1])].meta["pair"] == eps[size_t(ps.robot[1])].meta["pair"]);

  eps.pop_back();  // drop a robot twin
  CHECK_THROWS_AS(match_pairs(eps), SchemaError);
  eps.clear();
  eps.push_back(fake_episode(mini_layout(), 8, 16, 1, "robot"));
  CHECK_THROWS_AS(match_pairs(eps), SchemaError);  // no pairs at all
}

TEST_CASE("adaptation trains only the human tower and gate") {
  std::vector<Episode> eps;
  for (int i = 0; i < 3; ++i) {
    const uint64_t seed = derive_seed(800, std::to_string(i));
    Episode h = fake_episode(mini_layout(), 10, 16, seed, "human");
    Episode r = h;  // scenario twins share the tactile stream
    r.domain = "robot";
    Rng rng(derive_seed(seed, "robot_pixels"));
    rng.fill_normal(r.visual, 0.2);
    r.visual = r.visual.array().abs().min(1.0f).matrix();
    h.meta["pair"] = i;
    r.meta["pair"] = i;
    eps.push_back(h);
    eps.push_back(r);
  }
  TrainConfig tc;
  tc.seed = 17;
  tc.epochs = 1;
  tc.steps_per_epoch = 4;
  tc.batch = 2;
  tc.val_fraction = 0.34;

  AMTNetP<float> net;
  init_mtnet(net.core, mini_net(), 55);
  const std::vector<float> core_before = dump_params(net.core);
  const TrainLog log = train_amtnet(net, mini_net(), tc, eps);
  REQUIRE(log.adapt_steps.size() == 4);
  for (const AdaptReport& r : log.adapt_steps) CHECK(std::isfinite(r.total));
  CHECK(dump_params(net.core) == core_before);  // frozen bytes

  // the human tower moved away from its seed init
  AMTNetP<float> ref;
  ref.core = net.core;
  init_amtnet(ref, mini_net(), derive_seed(tc.seed, "init/adapt"));
  CHECK((net.hum.c1.W - ref.hum.c1.W).cwiseAbs().maxCoeff() > 0.0f);
  CHECK((net.gate.fc.W - ref.gate.fc.W).cwiseAbs().maxCoeff() > 0.0f);

  SECTION("zero epochs keep the human tower at its init") {
    AMTNetP<float> z;
    init_mtnet(z.core, mini_net(), 55);
    TrainConfig zero = tc;
    zero.epochs = 0;
    train_amtnet(z, mini_net(), zero, eps);
    CHECK((z.hum.c1.W.array() == ref.hum.c1.W.array()).all());
  }
  SECTION("runs are reproducible") {
    AMTNetP<float> again;
    init_mtnet(again.core, mini_net(), 55);
    const TrainLog log2 = train_amtnet(again, mini_net(), tc, eps);
    REQUIRE(log2.adapt_steps.size() == log.adapt_steps.size());
    for (size_t i = 0; i < log.adapt_steps.size(); ++i)
      CHECK(log2.adapt_steps[i].total == log.adapt_steps[i].total);
    CHECK((again.hum.fc_feat.W.array() == net.hum.fc_feat.W.array()).all());
  }
}

TEST_CASE("adaptation losses fall on paired generated data") {
  GenConfig gc;
  gc.frames = 20;
  NetConfig nc;
  nc.image = 64;
  nc.frames_k = 3;
  nc.latent = 8;
  nc.feat = 32;
  nc.conv1 = 4;
  nc.conv2 = 6;
  nc.conv3 = 8;
  nc.tac_h1 = 16;
  nc.tac_h2 = 24;
  nc.dec_h = 16;
  std::vector<Episode> eps;
  for (int i = 0; i < 4; ++i) {
    const uint64_t seed = derive_seed(4242, "pair/" + std::to_string(i));
    for (const char* domain : {"human", "robot"}) {
      Episode ep = generate_episode(gc, seed, domain);
      ep.meta["pair"] = i;
      eps.push_back(std::move(ep));
    }
  }
  TrainConfig tc;
  tc.seed = 21;
  tc.epochs = 2;
  tc.steps_per_epoch = 8;
  tc.batch = 2;
  tc.val_fraction = 0.25;
  AMTNetP<float> net;
  init_mtnet(net.core, nc, 77);
  const TrainLog log = train_amtnet(net, nc, tc, eps);
  REQUIRE(log.adapt_steps.size() == 16);
  double first = 0, last = 0;
  for (int s = 0; s < 4; ++s) {
    first += log.adapt_steps[size_t(s)].total;
    last += log.adapt_steps[size_t(12 + s)].total;
  }
  CHECK(last < first);
  // gate separates the domains even this early
  double g_first = 0, g_last = 0;
  for (int s = 0; s < 4; ++s) {
    g_first += log.adapt_steps[size_t(s)].gate;
    g_last += log.adapt_steps[size_t(12 + s)].gate;
  }
  CHECK(g_last < g_first);
}

TEST_CASE("evaluation against ground truth is perfect") {
  const std::vector<Episode> eps = fake_set(2, 900);
  const TaxelLayout lay = build_taxel_layout(mini_layout());
  const MetricReport r = evaluate_with(
      [&](const Episode& ep) {
        Prediction p;
        p.forces = ep.tactile;
        p.contact = ep.contact;
        p.z = MatF::Zero(ep.frames(), 4);
        return p;
      },
      eps, all_indices(eps), lay);
  CHECK_THAT(r.nrmse, WithinAbs(0.0, 1e-9));
  CHECK_THAT(r.s_cossim, WithinAbs(1.0, 1e-9));
  CHECK_THAT(r.s_ccc, WithinAbs(1.0, 1e-9));
  CHECK_THAT(r.t_iou, WithinAbs(1.0, 1e-9));
  CHECK_THAT(r.w_f1, WithinAbs(1.0, 1e-9));
  CHECK_THROWS_AS(evaluate_with([](const Episode&) { return Prediction{}; }, eps,
                                std::vector<int>{}, lay),
                  SchemaError);
}
