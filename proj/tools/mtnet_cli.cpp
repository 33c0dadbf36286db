// Command-line front end: data generation, two training stages, evaluation,
// representation diagnostics and the mirror-touch simulator. Results go to
// stdout as JSON (or --out); progress and diagnostics go to stderr.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "mtnet/config.hpp"
#include "mtnet/diagnostics.hpp"
#include "mtnet/png.hpp"
#include "mtnet/reflex.hpp"
#include "mtnet/train.hpp"

using namespace mtnet;
namespace fs = std::filesystem;

namespace {

RunConfig load_cfg(const std::string& path) {
  if (path.empty()) return desk_config();
  return load_run_config(path);
}

fs::path data_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MTNET_DATA_ROOT")) return env;
  throw ConfigError("no dataset given: pass --data or set MTNET_DATA_ROOT");
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<Episode> eps;
};

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.manifest = read_manifest(dir);
  d.eps.reserve(d.manifest.episodes.size());
  for (const auto& e : d.manifest.episodes) d.eps.push_back(read_episode(dir / e.file));
  return d;
}

// stage-1 pool: plain robot episodes; scenario twins are reserved for
// adaptation so their events stay held out
std::vector<int> stage1_indices(const std::vector<Episode>& eps) {
  std::vector<int> idx;
  for (size_t i = 0; i < eps.size(); ++i)
    if (eps[i].domain == "robot" && !eps[i].meta.contains("pair")) idx.push_back(int(i));
  return idx;
}

std::vector<int> paired_indices(const std::vector<Episode>& eps) {
  std::vector<int> idx;
  for (size_t i = 0; i < eps.size(); ++i)
    if (eps[i].meta.contains("pair")) idx.push_back(int(i));
  return idx;
}

std::vector<Episode> select(const std::vector<Episode>& eps, const std::vector<int>& idx) {
  std::vector<Episode> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(eps[size_t(i)]);
  return out;
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out);
  if (!f) throw FormatError("cannot write " + out);
  f << j.dump(2) << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path.string());
  f << text;
}

std::string checkpoint_kind(const fs::path& path) {
  return read_tensor_file(path).header.value("kind", "");
}

json run_eval(const fs::path& ckpt_path, const fs::path& data, const std::string& split);

// ---- gen -------------------------------------------------------------------

int cmd_gen(const std::string& config, const std::string& out, uint64_t seed) {
  const RunConfig cfg = load_cfg(config);
  std::fprintf(stderr, "generating %d robot + %d paired episodes into %s\n", cfg.robot_episodes,
               cfg.pair_episodes, out.c_str());
  const DatasetManifest m =
      generate_dataset(cfg.gen, out, cfg.robot_episodes, cfg.pair_episodes, seed);
  long frames = 0;
  for (const auto& e : m.episodes) frames += e.frames;
  emit(json{{"dir", out},
            {"episodes", m.episodes.size()},
            {"frames", frames},
            {"seed", seed}},
       "");
  return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const std::string& config, const std::string& data, const std::string& out,
              const std::vector<std::string>& ablate) {
  const RunConfig cfg = load_cfg(config);
  const Dataset ds = load_dataset(data_dir(data));
  const std::vector<int> idx = stage1_indices(ds.eps);
  if (idx.empty()) throw SchemaError("dataset has no stage-1 robot episodes");
  std::vector<Episode> pool = select(ds.eps, idx);

  TrainConfig tc = cfg.train;
  tc.ablation = ablate;
  std::fprintf(stderr, "stage 1: %zu episodes, %d epochs\n", pool.size(), tc.epochs);
  MTNetP<float> net;
  const TrainLog log = train_mtnet(net, cfg.net, tc, pool);
  std::fprintf(stderr, "trained in %.1fs\n", log.wall_seconds);

  json files = json::array();
  for (int i : idx) files.push_back(ds.manifest.episodes[size_t(i)].file);
  const json extra{{"stage", "mtnet"}, {"train", tc}, {"files", files}};
  save_checkpoint<float>(out, &net, nullptr, cfg.net, extra);
  write_text(out + ".losses.csv", losses_csv(log.steps));
  if (!log.val.empty()) write_text(out + ".metrics.csv", metrics_csv(log.val));

  json summary{{"checkpoint", out},
               {"steps", log.steps.size()},
               {"wall_seconds", log.wall_seconds}};
  if (!log.steps.empty()) summary["final_losses"] = log.steps.back();
  if (!log.val.empty()) summary["final_val"] = log.val.back().second;
  emit(summary, "");
  return 0;
}

// ---- adapt -----------------------------------------------------------------

int cmd_adapt(const std::string& config, const std::string& data, const std::string& mtnet,
              const std::string& out) {
  const RunConfig cfg = load_cfg(config);
  const Dataset ds = load_dataset(data_dir(data));
  const std::vector<int> idx = paired_indices(ds.eps);
  if (idx.empty()) throw SchemaError("dataset has no paired episodes to adapt on");
  std::vector<Episode> pool = select(ds.eps, idx);

  AMTNetP<float> net;
  const NetConfig nc = load_checkpoint<float>(mtnet, &net.core, nullptr);
  TrainConfig tc = cfg.adapt;
  std::fprintf(stderr, "stage 2: %zu paired episodes, %d epochs\n", pool.size() / 2, tc.epochs);
  const TrainLog log = train_amtnet(net, nc, tc, pool);
  std::fprintf(stderr, "adapted in %.1fs\n", log.wall_seconds);

  const json extra{{"stage", "amtnet"}, {"adapt", tc}, {"source", mtnet}};
  save_checkpoint<float>(out, nullptr, &net, nc, extra);
  write_text(out + ".adapt.csv", adapt_csv(log.adapt_steps));

  json summary{{"checkpoint", out},
               {"steps", log.adapt_steps.size()},
               {"wall_seconds", log.wall_seconds}};
  if (!log.adapt_steps.empty()) summary["final_losses"] = log.adapt_steps.back();
  emit(summary, "");
  return 0;
}

// ---- eval ------------------------------------------------------------------

std::string metric_table(const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "metric   NRMSE  S-CosSim  S-CCC  T-IoU  W-F1\n"
                "value   %6.4f    %6.4f %6.4f %6.4f %6.4f\n",
                r.nrmse, r.s_cossim, r.s_ccc, r.t_iou, r.w_f1);
  return buf;
}

json run_eval(const fs::path& ckpt_path, const fs::path& data, const std::string& split) {
  const Dataset ds = load_dataset(data);
  const TaxelLayout lay = build_taxel_layout(ds.manifest.layout);
  const std::string kind = checkpoint_kind(ckpt_path);

  MTNetP<float> core;
  AMTNetP<float> anet;
  NetConfig nc;
  if (kind == "amtnet") {
    nc = load_checkpoint<float>(ckpt_path, nullptr, &anet);
    core = anet.core;
  } else {
    nc = load_checkpoint<float>(ckpt_path, &core, nullptr);
  }

  MetricReport rep;
  int count = 0;
  if (split == "pairs") {
    // human-branch predictions scored against the paired robot ground truth
    if (kind != "amtnet") throw ConfigError("--split pairs needs an adapted checkpoint");
    const std::vector<int> idx = paired_indices(ds.eps);
    std::vector<Episode> pool = select(ds.eps, idx);
    const PairedSet ps = match_pairs(pool);
    std::vector<Episode> scored;
    for (size_t k = 0; k < ps.human.size(); ++k) {
      Episode h = pool[size_t(ps.human[k])];
      const Episode& r = pool[size_t(ps.robot[k])];
      h.tactile = r.tactile;  // score against the twin's ground truth
      h.contact = r.contact;
      scored.push_back(std::move(h));
    }
    count = int(scored.size());
    rep = evaluate_with([&](const Episode& ep) { return amtnet_predict(anet, nc, lay, ep); },
                        scored, all_indices(scored), lay);
  } else {
    json extra;
    MTNetP<float> tmp;
    if (kind == "amtnet")
      load_checkpoint<float>(ckpt_path, nullptr, &anet, &extra);
    else
      load_checkpoint<float>(ckpt_path, &tmp, nullptr, &extra);

    std::vector<int> pool_idx = stage1_indices(ds.eps);
    std::vector<Episode> pool = select(ds.eps, pool_idx);
    std::vector<int> eval_idx = all_indices(pool);
    if (split == "train" || split == "val") {
      if (!extra.contains("train"))
        throw SchemaError("checkpoint lacks the training record needed for --split " + split);
      const TrainConfig tc = extra.at("train").get<TrainConfig>();
      const SplitIdx si = split_episodes(int(pool.size()), tc.val_fraction, tc.seed);
      eval_idx = split == "train" ? si.train : si.val;
    } else if (split != "all") {
      throw ConfigError("unknown --split '" + split + "'");
    }
    count = int(eval_idx.size());
    auto pred = [&](const Episode& ep) {
      return kind == "amtnet" ? amtnet_predict(anet, nc, lay, ep)
                              : mtnet_predict(core, nc, lay, ep);
    };
    rep = evaluate_with(pred, pool, eval_idx, lay);
  }

  json j = rep;
  j["split"] = split;
  j["episodes"] = count;
  j["checkpoint"] = ckpt_path.string();
  return j;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& split,
             const std::string& out) {
  const json j = run_eval(ckpt, data_dir(data), split);
  std::fputs(metric_table(j.get<MetricReport>()).c_str(), stderr);
  emit(j, out);
  return 0;
}

// ---- diagnose ----------------------------------------------------------------

int cmd_diagnose(const std::vector<std::string>& ckpts, uint64_t probe_seed, int untrained_seed,
                 const std::string& config, const std::string& heatmaps,
                 const std::string& out) {
  const RunConfig cfg = load_cfg(config);
  json variants = json::array();

  auto add = [&](const std::string& name, MTNetP<float>& net, const NetConfig& nc) {
    const ProbeSet ps = probe_features(net, nc, cfg.gen, probe_seed);
    const ManifoldReport rep = manifold_report(ps);
    std::fprintf(stderr, "%s: cka %.3f sil_tac %.3f sil_vis %.3f (%d probes)\n", name.c_str(),
                 rep.cka_align, rep.sil_tac, rep.sil_vis, rep.rows);
    if (!heatmaps.empty()) {
      fs::create_directories(heatmaps);
      const std::string stem = fs::path(name).stem().string();
      write_heatmap(fs::path(heatmaps) / (stem + "_vv.png"), rep.cos_vv, -1.0, 1.0);
      write_heatmap(fs::path(heatmaps) / (stem + "_tt.png"), rep.cos_tt, -1.0, 1.0);
      write_heatmap(fs::path(heatmaps) / (stem + "_vt.png"), rep.cos_vt, -1.0, 1.0);
    }
    variants.push_back(json{{"name", name}, {"report", rep}});
  };

  for (const std::string& c : ckpts) {
    MTNetP<float> net;
    const NetConfig nc = load_checkpoint<float>(c, &net, nullptr);
    add(c, net, nc);
  }
  if (untrained_seed >= 0) {
    MTNetP<float> net;
    init_mtnet(net, cfg.net, uint64_t(untrained_seed));
    add("untrained", net, cfg.net);
  }
  emit(json{{"probe_seed", probe_seed}, {"variants", variants}}, out);
  return 0;
}

// ---- reflex-sim ----------------------------------------------------------------

int cmd_reflex(const std::string& ckpt, const std::string& episode, double threshold,
               double reset, const std::string& out) {
  const Episode ep = read_episode(episode);
  const TaxelLayout lay = build_taxel_layout(ep.layout);
  ReflexConfig rc;
  rc.threshold_n = threshold;
  rc.reset_after_s = reset;
  rc.fps = int(std::lround(ep.fps));
  rc.validate();

  MirrorRun run;
  const std::string kind = checkpoint_kind(ckpt);
  NetConfig nc;
  if (kind == "amtnet") {
    AMTNetP<float> net;
    nc = load_checkpoint<float>(ckpt, nullptr, &net);
    run = run_mirror_touch(net, nc, lay, ep, rc);
  } else {
    MTNetP<float> net;
    nc = load_checkpoint<float>(ckpt, &net, nullptr);
    const Prediction pr = mtnet_predict(net, nc, lay, ep);
    ReflexState st;
    run.traces.resize(pr.forces.rows(), kFingerCount);
    for (Eigen::Index t = 0; t < pr.forces.rows(); ++t) {
      run.traces.row(t) = finger_forces(pr.forces.row(t), lay).transpose();
      reflex_step(st, pr.forces.row(t), lay, rc, int(t), run.events);
    }
    run.motion = motion_curve(ep.visual);
    run.gate_prob = -1;  // no gate in a stage-1 checkpoint
  }

  json events = json::array();
  for (const FlickEvent& e : run.events) events.push_back(e);
  json traces = json::array();
  for (Eigen::Index t = 0; t < run.traces.rows(); ++t) {
    json row = json::array();
    for (int f = 0; f < kFingerCount; ++f) row.push_back(run.traces(t, f));
    traces.push_back(std::move(row));
  }
  std::fprintf(stderr, "%zu flick events over %ld frames\n", run.events.size(),
               long(run.traces.rows()));
  emit(json{{"events", events},
            {"finger_traces", traces},
            {"motion", run.motion},
            {"gate_prob", run.gate_prob},
            {"threshold_n", rc.threshold_n},
            {"reset_after_s", rc.reset_after_s}},
       out);
  return 0;
}

// ---- ablation-study -------------------------------------------------------------

int cmd_ablation(const std::string& config, const std::string& data, int seeds,
                 const std::string& out) {
  const RunConfig cfg = load_cfg(config);
  const Dataset ds = load_dataset(data_dir(data));
  std::vector<Episode> pool = select(ds.eps, stage1_indices(ds.eps));
  if (pool.empty()) throw SchemaError("dataset has no stage-1 robot episodes");

  const std::vector<std::pair<std::string, std::vector<std::string>>> variants = {
      {"full", {}},
      {"no_distribution", {"distribution"}},
      {"no_representational", {"representational"}},
      {"no_relational", {"relational"}},
      {"recon_only", {"kl_vis", "kl_tac", "distribution", "representational", "relational"}}};

  json rows = json::array();
  std::string table =
      "variant               NRMSE         S-CosSim      S-CCC         T-IoU         W-F1\n";
  for (const auto& [name, ablate] : variants) {
    std::vector<MetricReport> reps;
    for (int s = 0; s < seeds; ++s) {
      TrainConfig tc = cfg.train;
      tc.ablation = ablate;
      tc.seed = derive_seed(cfg.train.seed, "ablation/" + std::to_string(s));
      MTNetP<float> net;
      const TrainLog log = train_mtnet(net, cfg.net, tc, pool);
      if (log.val.empty()) throw ConfigError("ablation study needs a validation split");
      reps.push_back(log.val.back().second);
      std::fprintf(stderr, "%s seed %d: w_f1 %.3f (%.0fs)\n", name.c_str(), s,
                   reps.back().w_f1, log.wall_seconds);
    }
    auto stat = [&](auto get) {
      double m = 0, v = 0;
      for (const MetricReport& r : reps) m += get(r);
      m /= double(reps.size());
      for (const MetricReport& r : reps) v += (get(r) - m) * (get(r) - m);
      return std::pair<double, double>{m, std::sqrt(v / double(reps.size()))};
    };
    const auto nrmse = stat([](const MetricReport& r) { return r.nrmse; });
    const auto cos = stat([](const MetricReport& r) { return r.s_cossim; });
    const auto ccc = stat([](const MetricReport& r) { return r.s_ccc; });
    const auto iou = stat([](const MetricReport& r) { return r.t_iou; });
    const auto f1 = stat([](const MetricReport& r) { return r.w_f1; });
    char line[256];
    std::snprintf(line, sizeof line,
                  "%-20s %5.3f±%.3f   %5.3f±%.3f   %5.3f±%.3f   %5.3f±%.3f   %5.3f±%.3f\n",
                  name.c_str(), nrmse.first, nrmse.second, cos.first, cos.second, ccc.first,
                  ccc.second, iou.first, iou.second, f1.first, f1.second);
    table += line;
    rows.push_back(json{{"variant", name},
                        {"seeds", seeds},
                        {"nrmse", {{"mean", nrmse.first}, {"sd", nrmse.second}}},
                        {"s_cossim", {{"mean", cos.first}, {"sd", cos.second}}},
                        {"s_ccc", {{"mean", ccc.first}, {"sd", ccc.second}}},
                        {"t_iou", {{"mean", iou.first}, {"sd", iou.second}}},
                        {"w_f1", {{"mean", f1.first}, {"sd", f1.second}}}});
  }
  std::fputs(table.c_str(), stderr);
  emit(json{{"table", rows}, {"text", table}}, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mtnet: synthetic visuo-tactile data, models and evaluation"};
  app.require_subcommand(1);

  std::string config, data, out, ckpt, episode, split = "val";
  std::vector<std::string> ablate, ckpts;
  uint64_t seed = 1, probe_seed = 1234;
  int untrained_seed = -1, seeds = 5;
  double threshold = ReflexConfig{}.threshold_n, reset = ReflexConfig{}.reset_after_s;
  std::string heatmaps;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config, "run config json (default: desk preset)");
  gen->add_option("--out", out, "output dataset directory")->required();
  gen->add_option("--seed", seed, "master seed");

  CLI::App* train = app.add_subcommand("train", "stage 1: train the core model");
  train->add_option("--config", config);
  train->add_option("--data", data, "dataset directory (or MTNET_DATA_ROOT)");
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--ablate", ablate, "loss groups/terms to disable");

  CLI::App* adapt = app.add_subcommand("adapt", "stage 2: fit the human branch and gate");
  adapt->add_option("--config", config);
  adapt->add_option("--data", data);
  adapt->add_option("--mtnet", ckpt, "stage-1 checkpoint")->required();
  adapt->add_option("--out", out, "checkpoint path")->required();

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data);
  eval->add_option("--split", split, "all|train|val|pairs");
  eval->add_option("--out", out, "write the report here instead of stdout");

  CLI::App* diag = app.add_subcommand("diagnose", "manifold report over checkpoints");
  diag->add_option("--ckpts", ckpts, "checkpoints to probe");
  diag->add_option("--probe-seed", probe_seed);
  diag->add_option("--untrained", untrained_seed, "also probe a fresh net with this init seed");
  diag->add_option("--config", config, "net/gen settings for the probe");
  diag->add_option("--heatmaps", heatmaps, "directory for similarity-matrix pngs");
  diag->add_option("--out", out);

  CLI::App* reflex = app.add_subcommand("reflex-sim", "mirror-touch events on one episode");
  reflex->add_option("--ckpt", ckpt)->required();
  reflex->add_option("--episode", episode, "episode file")->required();
  reflex->add_option("--threshold", threshold, "flick threshold in newtons");
  reflex->add_option("--reset", reset, "re-arm window in seconds");
  reflex->add_option("--out", out);

  CLI::App* abl = app.add_subcommand("ablation-study", "variant table over several seeds");
  abl->add_option("--config", config);
  abl->add_option("--data", data);
  abl->add_option("--seeds", seeds, "seeds per variant");
  abl->add_option("--out", out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(config, out, seed);
    if (train->parsed()) return cmd_train(config, data, out, ablate);
    if (adapt->parsed()) return cmd_adapt(config, data, ckpt, out);
    if (eval->parsed()) return cmd_eval(ckpt, data, split, out);
    if (diag->parsed()) return cmd_diagnose(ckpts, probe_seed, untrained_seed, config, heatmaps, out);
    if (reflex->parsed()) return cmd_reflex(ckpt, episode, threshold, reset, out);
    if (abl->parsed()) return cmd_ablation(config, data, seeds, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
