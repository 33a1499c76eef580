// Acceptance suite: runs criteria 1-10 and prints one PASS/FAIL line each.
// Trained models are cached under --workdir keyed by config hash, so a rerun
// only retrains what changed; --fresh ignores the cache.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/helpers.hpp"
#include "ipath/errors.hpp"
#include "ipath/experiment.hpp"
#include "ipath/hashing.hpp"

using namespace ipath;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

fs::path g_work;
bool g_fresh = false;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void note(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// Desk-scale base: 4K traces, m = 9, default noise, 10/10/20 epochs.
RunConfig base_config() {
  RunConfig c;
  c.dataset.size = 4000;
  c.schedule.epochs = {10, 10, 20};
  return c;
}

// Cache key: the config without its output directory.
std::string run_key(const RunConfig& c) {
  auto j = c.to_json();
  j.erase("output_dir");
  return hash_hex(j.dump() + code_version());
}

// ------------------------------------------------------------ shared runs

std::map<std::string, std::unique_ptr<Environment>> g_envs;

const Environment& environment(const RunConfig& c) {
  auto j = c.to_json();
  const std::string key = hash_hex(j["field"].dump() + j["walks"].dump() + j["seeds"].dump());
  auto it = g_envs.find(key);
  if (it == g_envs.end()) it = g_envs.emplace(key, std::make_unique<Environment>(make_environment(c))).first;
  return *it->second;
}

struct Run {
  RunConfig config;
  Dataset ds;
  std::optional<TrainState> stage1;
  std::optional<TrainState> final_state;
  EvalReport report;
  double pipeline_seconds = 0.0;  // synthesis + training + evaluation
  bool cached = false;
};

std::map<std::string, std::unique_ptr<Run>> g_runs;

const Run& run(const std::string& label, const RunConfig& config) {
  const std::string key = run_key(config);
  if (auto it = g_runs.find(key); it != g_runs.end()) return *it->second;

  auto r = std::make_unique<Run>();
  r->config = config;
  const fs::path dir = g_work / key;
  fs::create_directories(dir);
  const fs::path ck1 = dir / "ckpt_stage1.bin";
  const fs::path ck3 = dir / "ckpt_stage3.bin";
  const fs::path timing = dir / "timing.json";

  const auto t0 = Clock::now();
  r->ds = synthesize(config, environment(config));
  if (!g_fresh && fs::exists(ck1) && fs::exists(ck3) && fs::exists(timing)) {
    note(label + ": reusing checkpoints in " + dir.string());
    r->stage1 = load_checkpoint(ck1);
    r->final_state = load_checkpoint(ck3);
    r->report = evaluate(config, r->final_state->model, r->ds);
    r->pipeline_seconds = nlohmann::json::parse(read_text(timing))["seconds"].get<double>();
    r->cached = true;
  } else {
    note(label + ": training " + std::to_string(config.dataset.size) + " traces into " + dir.string());
    TrainHooks hooks;
    hooks.on_stage_end = [&](const TrainState& s) {
      if (s.completed_stage == 1) r->stage1 = TrainState{s.model.clone(), s.adam, s.completed_stage, s.seed, s.history};
      save_checkpoint(s, dir / ("ckpt_stage" + std::to_string(s.completed_stage) + ".bin"));
    };
    r->final_state = train(r->ds, resolved_model(config), config.schedule, config.ablation, config.seeds.model, hooks);
    r->report = evaluate(config, r->final_state->model, r->ds);
    r->pipeline_seconds = seconds_since(t0);
    write_text(timing, nlohmann::json{{"seconds", r->pipeline_seconds}}.dump() + "\n");
    // Runs that skip stage 1 compare against the final model.
    if (!r->stage1) {
      fs::copy_file(ck3, ck1, fs::copy_options::overwrite_existing);
      r->stage1 = load_checkpoint(ck1);
    }
  }
  const auto& m = r->report.metrics;
  note(label + ": DE " + fmt(m.de[0].value) + " " + fmt(m.de[1].value) + " " + fmt(m.de[2].value) + "  LCDR " +
       fmt(m.lcdr[0].value) + " " + fmt(m.lcdr[1].value) + " " + fmt(m.lcdr[2].value) + "  (" +
       fmt(r->pipeline_seconds, 1) + " s)");
  return *g_runs.emplace(key, std::move(r)).first->second;
}

const Run& full_4k() { return run("full 4K", base_config()); }

RunConfig sized(std::int64_t size) {
  RunConfig c = base_config();
  c.dataset.size = size;
  return c;
}

// ------------------------------------------------------------ criteria

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Criterion 1: exact linear-codec properties on 1000 random inputs.
double linear_violation(const Model& model, std::uint64_t seed) {
  const int dim = model.config().latent_dim;
  const int m = model.config().trace_length;
  const int aps = model.config().aps;
  Rng rng = make_rng({seed});
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = distance(decode_displacement(model, nn::RowVector::Zero(dim)), Vec2{0, 0});
  for (int trial = 0; trial < 1000; ++trial) {
    nn::RowVector a(dim), b(dim);
    for (int i = 0; i < dim; ++i) {
      a(i) = g(rng);
      b(i) = g(rng);
    }
    const Vec2 sum = decode_displacement(model, a + b);
    worst = std::max(worst, distance(sum, decode_displacement(model, a) + decode_displacement(model, b)));

    const FTrace fa = test::random_ftrace(m, aps, rng);
    const FTrace fb = test::random_ftrace(m, aps, rng);
    const FTrace fc = test::random_ftrace(m, aps, rng);
    const Vec2 ab = relloc(model, fa, fb).delta_hat;
    const Vec2 ba = relloc(model, fb, fa).delta_hat;
    const Vec2 bc = relloc(model, fb, fc).delta_hat;
    const Vec2 ac = relloc(model, fa, fc).delta_hat;
    worst = std::max(worst, distance(ab, ba * -1.0));
    worst = std::max(worst, distance(ac, ab + bc));
  }
  return worst;
}

Outcome criterion1() {
  const Model fresh = Model::init(resolved_model(base_config()), 101);
  const double before = linear_violation(fresh, 1);
  const double after = linear_violation(full_4k().final_state->model, 2);
  return {before < 1e-6 && after < 1e-6, "max violation before " + sci(before) + ", after training " +
                                             sci(after) + " (tol 1e-6)"};
}

// Criterion 2: finite-difference gradient oracle on the toy model.
Outcome criterion2() {
  const Dataset ds = test::random_dataset(3, 3, 2, 17);
  const std::vector<std::int64_t> ids{0, 1, 2};
  const PathwaySet single[] = {{true, false, false, false},
                               {false, true, false, false},
                               {false, false, true, false},
                               {false, false, false, true}};
  double worst = 0.0;
  for (Backbone bb : {Backbone::attention, Backbone::recurrent, Backbone::feedforward}) {
    for (DCodecKind dk : {DCodecKind::linear, DCodecKind::nonlinear}) {
      ModelConfig c = test::toy_config();
      c.backbone = bb;
      c.d_codec = dk;
      Model model = Model::init(c, 21);
      const TraceBatch batch = make_batch(ds, ids, model.normalizer());
      for (const PathwaySet& p : single) worst = std::max(worst, test::gradient_check(model, batch, p).max_rel_err);
    }
  }
  return {worst < 1e-4, "max relative error " + sci(worst) + " over 4 pathways x 6 model variants (tol 1e-4)"};
}

// Criterion 3: brute-force metric references.
double oracle_de(const std::vector<PairSample>& pairs, const std::vector<Vec2>& pred, double k) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double dx = pairs[i].target.x, dy = pairs[i].target.y;
    if (std::sqrt(dx * dx + dy * dy) <= k) {
      sum += std::hypot(pred[i].x - dx, pred[i].y - dy);
      ++n;
    }
  }
  return sum / n;
}

double oracle_lcdr(const std::vector<PairSample>& pairs, const std::vector<double>& latent, double k, double w,
                   std::uint64_t seed) {
  long lo = 1L << 40, hi = -1;
  for (const PairSample& p : pairs) {
    if (p.length <= 0.0) continue;
    lo = std::min(lo, static_cast<long>(std::floor(p.length / w)));
    hi = std::max(hi, static_cast<long>(std::floor(p.length / w)));
  }
  Rng rng = make_rng({seed, 0x1cd2ULL});
  double sum = 0.0;
  int couples = 0;
  for (long b = lo; b <= hi; ++b) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (pairs[i].length > 0.0 && static_cast<long>(std::floor(pairs[i].length / w)) == b) members.push_back(i);
    }
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t c = 0; c + 1 < members.size(); c += 2) {
      const PairSample& p = pairs[members[c]];
      const PairSample& q = pairs[members[c + 1]];
      if (p.length > k) continue;
      const double rp = latent[members[c]] / p.length;
      const double rq = latent[members[c + 1]] / q.length;
      sum += std::min(rp, rq) / std::max(rp, rq);
      ++couples;
    }
  }
  return sum / couples;
}

Outcome criterion3() {
  const Run& r = full_4k();
  const Model& model = r.final_state->model;
  double worst = 0.0;
  int checks = 0;
  for (std::uint64_t seed : {5ULL, 6ULL, 7ULL}) {
    const auto pairs = sample_pairs(r.ds, 100, seed);
    const PairPredictions pred = predict_pairs(model, r.ds, pairs);
    for (double k : kMetricBuckets) {
      worst = std::max(worst, std::abs(displacement_error(pairs, pred.delta_hat, k).value - oracle_de(pairs, pred.delta_hat, k)));
      // Wide bins keep enough couples below k = 5 with only 100 pairs.
      for (double w : {0.5, 2.0}) {
        worst = std::max(worst, std::abs(lcdr(pairs, pred.latent_distance, k, w, seed).value -
                                         oracle_lcdr(pairs, pred.latent_distance, k, w, seed)));
        ++checks;
      }
      ++checks;
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "max |library - oracle| %.3g over %d DE/LCDR values (tol 1e-9)", worst, checks);
  return {worst <= 1e-9, buf};
}

// Criterion 4: desk-scale headline numbers and runtime.
Outcome criterion4() {
  const Run& r = full_4k();
  const double de5 = r.report.metrics.de[0].value;
  const double de_all = r.report.metrics.de[2].value;
  const bool ok = de5 < 1.5 && de_all < 7.0 && r.pipeline_seconds <= 1800.0;
  return {ok, "DE(5) " + fmt(de5) + " (< 1.5), DE(all) " + fmt(de_all) + " (< 7), pipeline " +
                  fmt(r.pipeline_seconds, 1) + " s (<= 1800)" + (r.cached ? " [timing from cached run]" : "")};
}

// Criterion 5: scaling with dataset size.
Outcome criterion5() {
  const Run& a = full_4k();
  const Run& b = run("full 12K", sized(12000));
  const Run& c = run("full 40K", sized(40000));
  const double d4 = a.report.metrics.de[2].value, d12 = b.report.metrics.de[2].value, d40 = c.report.metrics.de[2].value;
  const double l4 = a.report.metrics.lcdr[2].value, l40 = c.report.metrics.lcdr[2].value;
  const bool ok = d4 > d12 && d12 > d40 && l40 > l4;
  return {ok, "DE(all) 4K/12K/40K " + fmt(d4) + " / " + fmt(d12) + " / " + fmt(d40) + ", LCDR(all) 4K " + fmt(l4) +
                  " -> 40K " + fmt(l40)};
}

// Criterion 6: ablation ordering on matched seeds and data.
Outcome criterion6() {
  const auto cells = sweep_cells(base_config(), SweepKind::ablation);
  auto cell = [&](const std::string& name) -> const Run& {
    for (const SweepCell& c : cells) {
      if (c.name == name) return run("ablation " + name, c.config);
    }
    throw std::logic_error("no ablation cell " + name);
  };
  const Run& full = cell("full");
  const Run& nonlinear = cell("nonlinear_d");
  const Run& no_enc_dec = cell("no_d_encoder_f_decoder");
  const Run& ff = cell("feedforward");
  const double f_all = full.report.metrics.de[2].value;
  const double nl_all = nonlinear.report.metrics.de[2].value;
  const double ne_all = no_enc_dec.report.metrics.de[2].value;
  const double f5 = full.report.metrics.de[0].value, ff5 = ff.report.metrics.de[0].value;
  const bool ok = nl_all >= 2.0 * f_all && ne_all >= 1.5 * f_all && ff5 > f5;
  return {ok, "nonlinear DE(all) " + fmt(nl_all / f_all, 2) + "x full (>= 2), w/o d-enc+f-dec " +
                  fmt(ne_all / f_all, 2) + "x (>= 1.5), feedforward DE(5) " + fmt(ff5) + " vs full " + fmt(f5)};
}

// Criterion 7: noise sensitivity, dataset rebuilt and model retrained per lambda.
Outcome criterion7() {
  std::map<double, double> de;
  for (double lambda : {0.0, 0.5, 1.0, 2.5}) {
    RunConfig c = base_config();
    c.dataset.noise.lambda = lambda;
    de[lambda] = run("lambda " + fmt(lambda, 1), c).report.metrics.de[2].value;
  }
  const double lo = std::min({de[0.0], de[0.5], de[1.0]});
  const double hi = std::max({de[0.0], de[0.5], de[1.0]});
  const double variation = (hi - lo) / lo;
  const bool ok = de[2.5] >= 1.5 * de[1.0] && variation < 0.25;
  return {ok, "DE(all) at lambda 0/0.5/1/2.5: " + fmt(de[0.0]) + " / " + fmt(de[0.5]) + " / " + fmt(de[1.0]) + " / " +
                  fmt(de[2.5]) + "; 2.5 vs 1.0 ratio " + fmt(de[2.5] / de[1.0], 2) + " (>= 1.5), spread over {0,0.5,1} " +
                  fmt(100 * variation, 1) + "% (< 25%)"};
}

// Criterion 8: latent coherence from stage 1 to stage 3.
Outcome criterion8() {
  const Run& r = full_4k();
  const MetricsReport s1 = evaluate_metrics(r.stage1->model, r.ds, metric_options(r.config));
  const double gain = r.report.metrics.lcdr[2].value - s1.lcdr[2].value;
  auto rms = [&](const Model& m) {
    const LatentProjection p = latent_projection(m, r.ds, r.ds.test);
    return procrustes_rms(p.projected, p.truth);
  };
  const double rms1 = rms(r.stage1->model), rms3 = rms(r.final_state->model);
  const bool ok = gain >= 0.05 && rms3 < rms1;
  return {ok, "LCDR(all) stage 1 " + fmt(s1.lcdr[2].value) + " -> stage 3 " + fmt(r.report.metrics.lcdr[2].value) +
                  " (gain " + fmt(gain) + ", >= 0.05); Procrustes RMS " + fmt(rms1, 3) + " -> " + fmt(rms3, 3) + " m"};
}

// Criterion 9: few-shot absolute localization on the 40K model.
Outcome criterion9() {
  const Run& r = run("full 40K", sized(40000));
  const Model& model = r.final_state->model;
  const std::int64_t q = r.config.metrics.fewshot_queries;
  const std::uint64_t seed = r.config.seeds.eval;
  const double e32 = evaluate_fewshot(model, r.ds, 32, q, seed).mean_error;
  const double e4 = evaluate_fewshot(model, r.ds, 4, q, seed).mean_error;
  const double e16 = evaluate_fewshot(model, r.ds, 16, q, seed).mean_error;
  const double e64 = evaluate_fewshot(model, r.ds, 64, q, seed).mean_error;
  const double de5 = r.report.metrics.de[0].value;
  const bool ok = e32 <= 2.0 * de5 && e16 <= 1.1 * e4 && e64 <= 1.1 * e16;
  return {ok, "K=32 error " + fmt(e32) + " vs 2 x DE(5) = " + fmt(2 * de5) + "; K=4/16/64: " + fmt(e4) + " / " +
                  fmt(e16) + " / " + fmt(e64)};
}

// Criterion 10: the same config twice gives identical hashes and reports.
struct DeterminismRun {
  std::string dataset_hash;
  std::string checkpoint_hash;
  std::string parameter_hash;
  std::vector<std::string> reports;
};

DeterminismRun determinism_run(const RunConfig& c, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  DeterminismRun out;
  const Environment env = make_environment(c);
  const Dataset built = synthesize(c, env);
  save_dataset(built, dir / "data");
  const Dataset ds = load_dataset(dir / "data");
  out.dataset_hash = dataset_hash(dir / "data");
  const TrainState s = train(ds, resolved_model(c), c.schedule, c.ablation, c.seeds.model);
  save_checkpoint(s, dir / "ckpt_stage3.bin");
  out.checkpoint_hash = hash_file(dir / "ckpt_stage3.bin");
  out.parameter_hash = parameter_hash(s.model);
  const EvalReport r = evaluate(c, s.model, ds);
  out.reports = {r.metrics.to_json().dump(2), metrics_csv(r.metrics), fewshot_json(r.fewshot).dump(2),
                 projection_csv(latent_projection(s.model, ds, ds.test)), training_log_csv(s.history)};
  // The log carries wall times; compare only the loss columns.
  std::string& log = out.reports.back();
  std::istringstream in(log);
  std::string line, stripped;
  while (std::getline(in, line)) stripped += line.substr(0, line.rfind(',')) + "\n";
  log = stripped;
  return out;
}

Outcome criterion10() {
  RunConfig c = base_config();
  c.dataset.size = 1000;
  c.schedule.epochs = {2, 2, 2};
  c.metrics.pairs = 2000;
  c.metrics.fewshot_queries = 100;
  const DeterminismRun a = determinism_run(c, g_work / "determinism_a");
  const DeterminismRun b = determinism_run(c, g_work / "determinism_b");
  const bool ok = a.dataset_hash == b.dataset_hash && a.checkpoint_hash == b.checkpoint_hash &&
                  a.parameter_hash == b.parameter_hash && a.reports == b.reports;
  return {ok, "dataset " + a.dataset_hash + (a.dataset_hash == b.dataset_hash ? " ==" : " !=") + " " + b.dataset_hash +
                  ", checkpoint " + a.checkpoint_hash + (a.checkpoint_hash == b.checkpoint_hash ? " ==" : " !=") + " " +
                  b.checkpoint_hash + ", reports " + (a.reports == b.reports ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "directory for cached runs");
  app.add_flag("--fresh", g_fresh, "retrain even when cached checkpoints exist");
  app.add_option("--only", only, "criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);
  g_work = workdir;
  fs::create_directories(g_work);

  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  const char* titles[] = {"linear codec properties", "gradient oracle",    "metric oracles",
                          "desk-scale headline",     "dataset-size trend", "ablation ordering",
                          "noise sensitivity",       "stage coherence",    "few-shot extension",
                          "determinism"};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << titles[i] << "): " << o.detail << " ["
              << fmt(seconds_since(t0), 1) << " s]" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
