#include "ipath/experiment.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "ipath/errors.hpp"
#include "ipath/hashing.hpp"

#ifndef IPATH_VERSION
#define IPATH_VERSION "dev"
#endif

namespace ipath {

Environment make_environment(const RunConfig& config) {
  GprKernelParams kernel = default_kernel(config.field.path_loss, config.field.samples_per_anchor);
  kernel.signal_var = config.field.kernel_signal_var;
  kernel.length_scale = config.field.kernel_length_scale;

  Environment env;
  env.bundle = make_field_bundle(config.seeds.field, config.field.path_loss, config.field.anchors,
                                 config.field.samples_per_anchor);
  env.bundle.kernel = kernel;
  env.map = env.bundle.fit_map();
  Rng walk_rng = make_rng({config.seeds.data, 0x3a1bULL});
  env.bank = generate_walk_bank(config.walks.count, config.walks.length, walk_rng);
  env.field_hash = hash_hex(env.bundle.to_json().dump());
  return env;
}

DatasetOptions dataset_options(const RunConfig& config) {
  DatasetOptions o;
  o.size = config.dataset.size;
  o.m = config.dataset.m;
  o.noise = config.dataset.noise;
  o.seed = config.seeds.data;
  return o;
}

Dataset synthesize(const RunConfig& config, const Environment& env, Exec exec) {
  Dataset ds = build_dataset(env.bundle.layout, env.map, env.bank, dataset_options(config), exec);
  ds.manifest.field_hash = env.field_hash;
  ds = split_dataset(std::move(ds), config.dataset.train_ratio, config.seeds.data);
  if (config.dataset.test_lambda) {
    NoiseConfig noise = config.dataset.noise;
    noise.lambda = *config.dataset.test_lambda;
    for (std::int64_t id : ds.test) renoise_trace(ds.traces[static_cast<std::size_t>(id)], env.map, noise);
  }
  return ds;
}

void check_dataset(const RunConfig& config, const Dataset& ds, const std::string& hash) {
  if (!config.dataset.expect_hash.empty() && config.dataset.expect_hash != hash) {
    throw IntegrityError("dataset hash " + hash + " does not match the pinned hash " + config.dataset.expect_hash);
  }
  if (ds.manifest.m != config.dataset.m) {
    throw IntegrityError("dataset has m=" + std::to_string(ds.manifest.m) + " but the config expects m=" +
                         std::to_string(config.dataset.m));
  }
  if (ds.manifest.n != static_cast<int>(config.model.aps)) {
    throw IntegrityError("dataset has " + std::to_string(ds.manifest.n) + " access points but the model expects " +
                         std::to_string(config.model.aps));
  }
}

EvalReport evaluate(const RunConfig& config, const Model& model, const Dataset& ds, Exec exec) {
  EvalReport r;
  r.metrics = evaluate_metrics(model, ds, metric_options(config), exec);
  r.metrics.config = config.to_json();
  r.fewshot = evaluate_fewshot(model, ds, config.metrics.fewshot_anchors, config.metrics.fewshot_queries,
                               config.seeds.eval, 64, exec);
  return r;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "metric,k,value,count\n";
  const char* names[] = {"5", "10", "all"};
  for (std::size_t b = 0; b < 3; ++b) {
    os << "DE," << names[b] << ',' << format_double(report.de[b].value) << ',' << report.de[b].count << '\n';
  }
  for (std::size_t b = 0; b < 3; ++b) {
    os << "LCDR," << names[b] << ',' << format_double(report.lcdr[b].value) << ',' << report.lcdr[b].count << '\n';
  }
  return os.str();
}

std::string training_log_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "stage,epoch,L_FD,L_DD,L_FDA,L_FFS,wall_time_s\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const EpochRecord& r : history) {
    os << r.stage << ',' << r.epoch << ',' << opt(r.losses.fd) << ',' << opt(r.losses.dd) << ',' << opt(r.losses.fda)
       << ',' << opt(r.losses.ffs) << ',' << format_double(r.wall_time_s) << '\n';
  }
  return os.str();
}

std::string projection_csv(const LatentProjection& projection) {
  std::ostringstream os;
  os << "trace_id,x_pca,y_pca,x_true,y_true\n";
  for (std::size_t i = 0; i < projection.projected.size(); ++i) {
    os << projection.trace_ids[i] << ',' << format_double(projection.projected[i].x) << ','
       << format_double(projection.projected[i].y) << ',' << format_double(projection.truth[i].x) << ','
       << format_double(projection.truth[i].y) << '\n';
  }
  return os.str();
}

nlohmann::ordered_json fewshot_json(const FewShotReport& report) {
  return {{"anchors", report.anchors}, {"queries", report.queries}, {"mean_error", report.mean_error}};
}

std::string to_string(SweepKind kind) {
  switch (kind) {
    case SweepKind::noise: return "noise";
    case SweepKind::size_length: return "size_length";
    case SweepKind::ablation: return "ablation";
  }
  return "?";
}

SweepKind parse_sweep_kind(const std::string& s) {
  if (s == "noise") return SweepKind::noise;
  if (s == "size_length") return SweepKind::size_length;
  if (s == "ablation") return SweepKind::ablation;
  throw ConfigError("unknown sweep kind '" + s + "' (expected noise, size_length or ablation)");
}

namespace {

std::string size_label(std::int64_t n) {
  return n % 1000 == 0 ? std::to_string(n / 1000) + "K" : std::to_string(n);
}

}  // namespace

std::vector<SweepCell> sweep_cells(const RunConfig& base, SweepKind kind) {
  std::vector<SweepCell> cells;
  switch (kind) {
    case SweepKind::noise:
      for (double lambda : base.sweep.lambdas) {
        SweepCell c{"lambda_" + format_double(lambda), base, {{"lambda", lambda}}};
        c.config.dataset.noise.lambda = lambda;
        c.config.dataset.test_lambda.reset();
        cells.push_back(std::move(c));
      }
      break;
    case SweepKind::size_length:
      for (int m : base.sweep.m_values) {
        for (std::int64_t n : base.sweep.sizes) {
          SweepCell c{"m" + std::to_string(m) + "_n" + size_label(n), base, {{"m", m}, {"size", n}}};
          c.config.dataset.m = m;
          c.config.dataset.size = n;
          c.config.walks.length = std::max(c.config.walks.length, m);
          cells.push_back(std::move(c));
        }
      }
      break;
    case SweepKind::ablation: {
      auto add = [&](const std::string& name, auto&& edit) {
        SweepCell c{name, base, {{"variant", name}}};
        edit(c.config);
        cells.push_back(std::move(c));
      };
      add("full", [](RunConfig& c) { c.ablation = {}; });
      add("recurrent", [](RunConfig& c) {
        c.ablation = {};
        c.model.backbone = Backbone::recurrent;
      });
      add("feedforward", [](RunConfig& c) {
        c.ablation = {};
        c.model.backbone = Backbone::feedforward;
      });
      add("no_d_encoder", [](RunConfig& c) { c.ablation = {true, false}; });
      add("no_d_encoder_f_decoder", [](RunConfig& c) { c.ablation = {true, true}; });
      add("nonlinear_d", [](RunConfig& c) {
        c.ablation = {};
        c.model.d_codec = DCodecKind::nonlinear;
      });
      break;
    }
  }
  for (SweepCell& c : cells) c.config.output_dir = (std::filesystem::path(base.output_dir) / c.name).string();
  return cells;
}

std::vector<SweepCell> filter_cells(std::vector<SweepCell> cells, const std::string& filter) {
  if (filter.empty()) return cells;
  std::vector<std::string> tokens;
  std::stringstream ss(filter);
  for (std::string t; std::getline(ss, t, ',');) {
    if (!t.empty()) tokens.push_back(t);
  }
  std::vector<SweepCell> kept;
  for (SweepCell& c : cells) {
    for (const std::string& t : tokens) {
      if (c.name.find(t) != std::string::npos) {
        kept.push_back(std::move(c));
        break;
      }
    }
  }
  if (kept.empty()) throw ConfigError("cell filter '" + filter + "' matches no sweep cell");
  return kept;
}

std::string sweep_csv(const std::vector<SweepCell>& cells, const std::vector<const MetricsReport*>& reports) {
  std::ostringstream os;
  os << "cell";
  if (!cells.empty()) {
    for (auto it = cells.front().labels.begin(); it != cells.front().labels.end(); ++it) os << ',' << it.key();
  }
  os << ",DE(5),DE(10),DE(all),LCDR(5),LCDR(10),LCDR(all),status\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    os << cells[i].name;
    for (auto it = cells[i].labels.begin(); it != cells[i].labels.end(); ++it) {
      os << ',' << (it->is_string() ? it->get<std::string>() : it->dump());
    }
    const MetricsReport* r = i < reports.size() ? reports[i] : nullptr;
    if (r) {
      for (const auto& v : r->de) os << ',' << format_double(v.value);
      for (const auto& v : r->lcdr) os << ',' << format_double(v.value);
      os << ",ok\n";
    } else {
      os << ",,,,,,,missing\n";
    }
  }
  return os.str();
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash;
  j["dataset_hash"] = dataset_hash;
  nlohmann::ordered_json arts = nlohmann::ordered_json::array();
  for (const auto& [path, hash] : artifacts) arts.push_back({{"path", path}, {"hash", hash}});
  j["artifacts"] = arts;
  j["created"] = created;
  j["code_version"] = code_version;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.config_hash = j.at("config_hash").get<std::string>();
    m.dataset_hash = j.at("dataset_hash").get<std::string>();
    for (const auto& a : j.at("artifacts")) {
      m.artifacts.emplace_back(a.at("path").get<std::string>(), a.at("hash").get<std::string>());
    }
    m.created = j.at("created").get<std::string>();
    m.code_version = j.at("code_version").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

void RunManifest::add(const std::filesystem::path& dir, const std::string& relative) {
  artifacts.emplace_back(relative, hash_file(dir / relative));
}

void RunManifest::save(const std::filesystem::path& dir) const {
  RunManifest m = *this;
  if (m.created.empty()) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m.created = buf;
  }
  if (m.code_version.empty()) m.code_version = ipath::code_version();
  write_text(dir / kManifestFile, m.to_json().dump(2) + "\n");
}

RunManifest RunManifest::load(const std::filesystem::path& dir) {
  const std::string text = read_text(dir / kManifestFile);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("run manifest is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

bool RunManifest::verify(const std::filesystem::path& dir) const {
  for (const auto& [path, hash] : artifacts) {
    const std::filesystem::path p = dir / path;
    if (!std::filesystem::exists(p) || hash_file(p) != hash) return false;
  }
  return true;
}

std::string code_version() { return IPATH_VERSION; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace ipath
