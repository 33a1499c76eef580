// Command-line driver: synth -> train -> eval, plus sweeps and batch relloc.

#include <omp.h>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ipath/errors.hpp"
#include "ipath/experiment.hpp"
#include "ipath/hashing.hpp"

namespace fs = std::filesystem;
using namespace ipath;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> seed_overrides;
  std::string out;
  int threads = 0;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::load(c.config_path);
  for (const std::string& s : c.seed_overrides) cfg.apply_seed_override(s);
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Common& c, const RunConfig& cfg, const char* sub) {
  return c.out.empty() ? fs::path(cfg.output_dir) / sub : fs::path(c.out);
}

void log(const std::string& msg) { std::cerr << "[ipath] " << msg << std::endl; }

std::string pretty(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

Dataset load_checked(const RunConfig& cfg, const fs::path& dir, std::string& hash) {
  Dataset ds = load_dataset(dir);
  hash = dataset_hash(dir);
  check_dataset(cfg, ds, hash);
  return ds;
}

// ------------------------------------------------------------------- synth

void write_dataset_dir(const RunConfig& cfg, const Environment& env, const Dataset& ds, const fs::path& dir) {
  save_dataset(ds, dir);
  write_text(dir / "field.json", env.bundle.to_json().dump(1) + "\n");
  write_text(dir / "config.json", pretty(cfg.to_json()));
  RunManifest m;
  m.config_hash = cfg.hash();
  m.dataset_hash = dataset_hash(dir);
  for (const char* f : {"manifest.json", "traces.jsonl", "field.json", "config.json"}) m.add(dir, f);
  m.save(dir);
}

int cmd_synth(const Common& c) {
  const RunConfig cfg = load_config(c);
  const fs::path dir = out_dir(c, cfg, "dataset");
  log("building field and radio map");
  const Environment env = make_environment(cfg);
  log("synthesizing " + std::to_string(cfg.dataset.size) + " traces (m=" + std::to_string(cfg.dataset.m) + ")");
  const Dataset ds = synthesize(cfg, env);
  write_dataset_dir(cfg, env, ds, dir);
  std::cout << dataset_hash(dir) << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

void write_training_outputs(const RunConfig& cfg, const TrainState& state, const std::string& data_hash,
                            const fs::path& dir, const std::vector<EpochRecord>& earlier) {
  std::vector<EpochRecord> history = earlier;
  history.insert(history.end(), state.history.begin(), state.history.end());
  write_text(dir / "train_log.csv", training_log_csv(history));
  write_text(dir / "config.json", pretty(cfg.to_json()));
  RunManifest m;
  m.config_hash = cfg.hash();
  m.dataset_hash = data_hash;
  for (int s = 1; s <= state.completed_stage; ++s) {
    const std::string name = "ckpt_stage" + std::to_string(s) + ".bin";
    if (fs::exists(dir / name)) m.add(dir, name);
  }
  m.add(dir, "train_log.csv");
  m.add(dir, "config.json");
  m.save(dir);
}

// Log rows of an earlier run, kept when resuming.
std::vector<EpochRecord> earlier_history(const fs::path& log_path, int up_to_stage) {
  std::vector<EpochRecord> out;
  std::ifstream in(log_path);
  if (!in) return out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string t; std::getline(ss, t, ',');) f.push_back(t);
    if (f.size() < 7) continue;
    EpochRecord r;
    r.stage = std::stoi(f[0]);
    if (r.stage > up_to_stage) continue;
    r.epoch = std::stoi(f[1]);
    auto opt = [](const std::string& s) { return s.empty() ? std::optional<double>() : std::stod(s); };
    r.losses.fd = opt(f[2]);
    r.losses.dd = opt(f[3]);
    r.losses.fda = opt(f[4]);
    r.losses.ffs = opt(f[5]);
    r.wall_time_s = std::stod(f[6]);
    out.push_back(r);
  }
  return out;
}

TrainState run_train(const RunConfig& cfg, const Dataset& ds, const std::string& data_hash, const fs::path& dir,
                     const std::string& resume) {
  TrainState state = resume.empty() ? init_train_state(resolved_model(cfg), cfg.seeds.model) : load_checkpoint(resume);
  std::vector<EpochRecord> earlier;
  if (!resume.empty()) {
    if (!(state.model.config() == resolved_model(cfg))) {
      throw ConfigError("checkpoint " + resume + " was trained with a different model config");
    }
    earlier = earlier_history(dir / "train_log.csv", state.completed_stage);
    log("resuming after stage " + std::to_string(state.completed_stage));
  }
  fs::create_directories(dir);
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochRecord& r) {
    auto v = [](const std::optional<double>& x) { return x ? format_double(*x) : std::string("-"); };
    log("stage " + std::to_string(r.stage) + " epoch " + std::to_string(r.epoch) + " FD " + v(r.losses.fd) + " DD " +
        v(r.losses.dd) + " FDA " + v(r.losses.fda) + " FFS " + v(r.losses.ffs));
  };
  hooks.on_stage_end = [&](const TrainState& s) {
    save_checkpoint(s, dir / ("ckpt_stage" + std::to_string(s.completed_stage) + ".bin"));
    write_training_outputs(cfg, s, data_hash, dir, earlier);
  };
  run_training(state, ds, cfg.schedule, cfg.ablation, hooks);
  return state;
}

int cmd_train(const Common& c, const std::string& dataset_dir, const std::string& resume) {
  const RunConfig cfg = load_config(c);
  const fs::path dir = out_dir(c, cfg, "train");
  std::string hash;
  const Dataset ds = load_checked(cfg, dataset_dir, hash);
  const TrainState state = run_train(cfg, ds, hash, dir, resume);
  std::cout << parameter_hash(state.model) << "\n";
  return 0;
}

// -------------------------------------------------------------------- eval

void write_eval_outputs(const RunConfig& cfg, const Model& model, const Dataset& ds, const std::string& data_hash,
                        const fs::path& dir, const EvalReport& report) {
  write_text(dir / "metrics.json", pretty(report.metrics.to_json()));
  write_text(dir / "metrics.csv", metrics_csv(report.metrics));
  nlohmann::ordered_json fs_json = fewshot_json(report.fewshot);
  fs_json["config"] = cfg.to_json();
  write_text(dir / "fewshot.json", pretty(fs_json));
  write_text(dir / "latent_projection.csv", projection_csv(latent_projection(model, ds, ds.test)));
  RunManifest m;
  m.config_hash = cfg.hash();
  m.dataset_hash = data_hash;
  for (const char* f : {"metrics.json", "metrics.csv", "fewshot.json", "latent_projection.csv"}) m.add(dir, f);
  m.save(dir);
}

int cmd_eval(const Common& c, const std::string& dataset_dir, const std::string& checkpoint, int fewshot_k) {
  RunConfig cfg = load_config(c);
  if (fewshot_k != -1) {
    if (fewshot_k < 1) throw ConfigError("--fewshot-k must be >= 1");
    cfg.metrics.fewshot_anchors = fewshot_k;
  }
  const fs::path dir = out_dir(c, cfg, "eval");
  std::string hash;
  const Dataset ds = load_checked(cfg, dataset_dir, hash);
  const TrainState state = load_checkpoint(checkpoint);
  if (!(state.model.config() == resolved_model(cfg))) {
    throw ConfigError("checkpoint " + checkpoint + " does not match the model config");
  }
  const EvalReport report = evaluate(cfg, state.model, ds);
  write_eval_outputs(cfg, state.model, ds, hash, dir, report);
  std::cout << report.metrics.to_json()["DE(5)"]["value"].dump() << " " << report.metrics.to_json()["DE(all)"]["value"].dump()
            << "\n";
  return 0;
}

// ------------------------------------------------------------------ relloc

FTrace parse_ftrace(const nlohmann::json& j, int aps) {
  FTrace f;
  f.aps = aps;
  for (const auto& row : j) {
    if (!row.is_array() || static_cast<int>(row.size()) != aps) {
      throw IntegrityError("each fingerprint must have " + std::to_string(aps) + " values");
    }
    for (const auto& v : row) f.rssi.push_back(v.get<double>());
    ++f.length;
  }
  return f;
}

int cmd_relloc(const std::string& checkpoint, const std::string& pairs_path, const std::string& out_path) {
  const TrainState state = load_checkpoint(checkpoint);
  const int aps = state.model.config().aps;
  std::ifstream in(pairs_path);
  if (!in) throw IntegrityError("cannot read " + pairs_path);
  std::ostringstream out;
  std::string line;
  for (std::int64_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    FTrace a, b;
    try {
      rec = nlohmann::json::parse(line);
      a = parse_ftrace(rec.at("a"), aps);
      b = parse_ftrace(rec.at("b"), aps);
    } catch (const std::exception& e) {
      throw IntegrityError("pair line " + std::to_string(lineno) + ": " + e.what());
    }
    const RelLocResult r = relloc(state.model, a, b);
    nlohmann::ordered_json o;
    o["pair_id"] = rec.contains("pair_id") ? rec["pair_id"] : nlohmann::json(lineno);
    o["delta_hat"] = {r.delta_hat.x, r.delta_hat.y};
    o["latent_distance"] = r.latent_distance;
    out << o.dump() << "\n";
  }
  if (out_path.empty() || out_path == "-") {
    std::cout << out.str();
  } else {
    write_text(out_path, out.str());
  }
  return 0;
}

// ------------------------------------------------------------------- sweep

// Loads a finished cell's metrics, or returns false when it must be (re)run.
bool load_cell(const fs::path& dir, MetricsReport& report) {
  if (!fs::exists(dir / kManifestFile)) return false;
  try {
    if (!RunManifest::load(dir).verify(dir)) return false;
    const auto j = nlohmann::json::parse(read_text(dir / "metrics.json"));
    const char* names[] = {"DE(5)", "DE(10)", "DE(all)"};
    const char* lnames[] = {"LCDR(5)", "LCDR(10)", "LCDR(all)"};
    for (std::size_t b = 0; b < 3; ++b) {
      report.de[b] = {j.at(names[b]).at("value").get<double>(), j.at(names[b]).at("count").get<std::int64_t>()};
      report.lcdr[b] = {j.at(lnames[b]).at("value").get<double>(), j.at(lnames[b]).at("count").get<std::int64_t>()};
    }
    report.pairs = j.at("pairs").get<std::int64_t>();
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

int cmd_sweep(const Common& c, const std::string& kind_name, const std::string& filter) {
  const RunConfig base = load_config(c);
  const SweepKind kind = parse_sweep_kind(kind_name);
  const fs::path root = c.out.empty() ? fs::path(base.output_dir) / ("sweep_" + kind_name) : fs::path(c.out);
  RunConfig rooted = base;
  rooted.output_dir = root.string();
  const std::vector<SweepCell> all = sweep_cells(rooted, kind);
  const std::vector<SweepCell> cells = filter_cells(all, filter);

  std::map<std::string, MetricsReport> done;
  std::map<std::string, std::pair<Environment, Dataset>> data_cache;  // keyed by data hash
  int failures = 0;
  for (const SweepCell& cell : cells) {
    const fs::path dir = cell.config.output_dir;
    MetricsReport report;
    if (load_cell(dir, report)) {
      log("cell " + cell.name + " already complete");
      done[cell.name] = report;
      continue;
    }
    log("cell " + cell.name);
    try {
      const std::string key = cell.config.data_hash();
      auto it = data_cache.find(key);
      if (it == data_cache.end()) {
        data_cache.clear();
        Environment env = make_environment(cell.config);
        Dataset ds = synthesize(cell.config, env);
        it = data_cache.emplace(key, std::make_pair(std::move(env), std::move(ds))).first;
      }
      const Dataset& ds = it->second.second;
      const std::string hash = dataset_hash(ds);
      write_text(dir / "config.json", pretty(cell.config.to_json()));
      const TrainState state = run_train(cell.config, ds, hash, dir, "");
      const EvalReport eval = evaluate(cell.config, state.model, ds);
      write_text(dir / "metrics.json", pretty(eval.metrics.to_json()));
      write_text(dir / "metrics.csv", metrics_csv(eval.metrics));
      nlohmann::ordered_json fs_json = fewshot_json(eval.fewshot);
      write_text(dir / "fewshot.json", pretty(fs_json));
      RunManifest m;
      m.config_hash = cell.config.hash();
      m.dataset_hash = hash;
      for (const char* f : {"ckpt_stage3.bin", "train_log.csv", "config.json", "metrics.json", "metrics.csv", "fewshot.json"}) {
        m.add(dir, f);
      }
      m.save(dir);
      done[cell.name] = eval.metrics;
    } catch (const Error& e) {
      ++failures;
      log("cell " + cell.name + " failed: " + e.what());
      write_text(dir / "error.txt", std::string(e.what()) + "\n");
    }
  }

  // The aggregate covers every cell of the sweep, marking those not yet run.
  std::vector<const MetricsReport*> reports;
  for (const SweepCell& cell : all) {
    MetricsReport r;
    if (!done.contains(cell.name) && load_cell(cell.config.output_dir, r)) done[cell.name] = r;
    auto it = done.find(cell.name);
    reports.push_back(it == done.end() ? nullptr : &it->second);
  }
  write_text(root / "aggregate.csv", sweep_csv(all, reports));
  std::cout << (root / "aggregate.csv").string() << "\n";
  return failures == 0 ? 0 : static_cast<int>(ExitCode::failure);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relative WiFi localization: dataset synthesis, training, evaluation and sweeps"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub, bool with_config = true) {
    if (with_config) {
      sub->add_option("--config", common.config_path, "Run config (JSON)");
      sub->add_option("--seed-override", common.seed_overrides, "Seed override name=int (field, data, model, eval)");
    }
    sub->add_option("--out", common.out, "Output path");
    sub->add_option("--threads", common.threads, "OpenMP threads (0 = runtime default)");
  };

  std::string dataset_dir, checkpoint, resume, pairs, kind, cells;
  int fewshot_k = -1;

  auto* synth = app.add_subcommand("synth", "Build the field, radio map and dataset");
  add_common(synth);

  auto* train = app.add_subcommand("train", "Run the three-stage training schedule");
  add_common(train);
  train->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  train->add_option("--resume", resume, "Continue from a stage checkpoint");

  auto* eval = app.add_subcommand("eval", "Metrics, few-shot report and latent projection");
  add_common(eval);
  eval->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--fewshot-k", fewshot_k, "Override the few-shot anchor count");

  auto* rel = app.add_subcommand("relloc", "Batch relative localization over JSON-Lines trace pairs");
  add_common(rel, false);
  rel->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  rel->add_option("--pairs", pairs, "Input JSON-Lines: {pair_id, a, b} with a/b as m x n dBm arrays")->required();

  auto* sweep = app.add_subcommand("sweep", "Retrain and evaluate every cell of a sweep");
  add_common(sweep);
  sweep->add_option("kind", kind, "noise, size_length or ablation")->required();
  sweep->add_option("--cells", cells, "Comma-separated cell name filter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  try {
    if (common.threads > 0) omp_set_num_threads(common.threads);
    if (*synth) return cmd_synth(common);
    if (*train) return cmd_train(common, dataset_dir, resume);
    if (*eval) return cmd_eval(common, dataset_dir, checkpoint, fewshot_k);
    if (*rel) return cmd_relloc(checkpoint, pairs, common.out);
    if (*sweep) return cmd_sweep(common, kind, cells);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(ExitCode::failure);
  }
  return 0;
}
