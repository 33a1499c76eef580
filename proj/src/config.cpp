#include "ipath/config.hpp"

#include <fstream>
#include <set>

#include "ipath/errors.hpp"
#include "ipath/hashing.hpp"

namespace ipath {
namespace {

// Reads an object section, remembering which keys were consumed so that any
// leftover (misspelled) key can be reported with its full path.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + label() + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + child_path(key) + "' has the wrong type");
    }
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + child_path(key) + "' has the wrong type");
    }
  }

  // Returns null when absent.
  const nlohmann::json* child(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.contains(it.key())) throw ConfigError("unknown config key '" + child_path(it.key()) + "'");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  Section root(j, "");

  if (const auto* f = root.child("field")) {
    Section s(*f, "field");
    s.read("anchors", c.field.anchors);
    s.read("samples_per_anchor", c.field.samples_per_anchor);
    if (const auto* pl = s.child("path_loss")) {
      Section p(*pl, "field.path_loss");
      p.read("p0_dbm", c.field.path_loss.p0_dbm);
      p.read("ref_dist_m", c.field.path_loss.ref_dist_m);
      p.read("exponent", c.field.path_loss.exponent);
      p.read("wall_atten_db", c.field.path_loss.wall_atten_db);
      p.read("shadow_sigma_db", c.field.path_loss.shadow_sigma_db);
      p.read("floor_dbm", c.field.path_loss.floor_dbm);
      p.finish();
    }
    if (const auto* k = s.child("kernel")) {
      Section p(*k, "field.kernel");
      p.read("signal_var", c.field.kernel_signal_var);
      p.read("length_scale", c.field.kernel_length_scale);
      p.finish();
    }
    s.finish();
  }
  if (const auto* w = root.child("walks")) {
    Section s(*w, "walks");
    s.read("count", c.walks.count);
    s.read("length", c.walks.length);
    s.finish();
  }
  if (const auto* d = root.child("dataset")) {
    Section s(*d, "dataset");
    s.read("size", c.dataset.size);
    s.read("m", c.dataset.m);
    s.read("train_ratio", c.dataset.train_ratio);
    s.read_optional("test_lambda", c.dataset.test_lambda);
    s.read("expect_hash", c.dataset.expect_hash);
    if (const auto* nz = s.child("noise")) {
      Section p(*nz, "dataset.noise");
      p.read("sigma_f", c.dataset.noise.sigma_f);
      p.read("sigma_r", c.dataset.noise.sigma_r);
      p.read("sigma_theta", c.dataset.noise.sigma_theta);
      p.read("lambda", c.dataset.noise.lambda);
      p.finish();
    }
    s.finish();
  }
  if (const auto* m = root.child("model")) {
    Section s(*m, "model");
    s.read("latent_dim", c.model.latent_dim);
    std::string backbone = to_string(c.model.backbone);
    s.read("backbone", backbone);
    c.model.backbone = parse_backbone(backbone);
    s.read("depth", c.model.depth);
    s.read("heads", c.model.heads);
    s.read("ffn_dim", c.model.ffn_dim);
    s.read("attention_window", c.model.attention_window);
    std::string codec = to_string(c.model.d_codec);
    s.read("d_codec", codec);
    c.model.d_codec = parse_d_codec(codec);
    s.finish();
  }
  if (const auto* sc = root.child("schedule")) {
    Section s(*sc, "schedule");
    s.read("epochs", c.schedule.epochs);
    s.read("learning_rate", c.schedule.learning_rate);
    s.read("batch_size", c.schedule.batch_size);
    s.read("final_lr_ratio", c.schedule.final_lr_ratio);
    s.finish();
  }
  if (const auto* a = root.child("ablation")) {
    Section s(*a, "ablation");
    s.read("disable_d_encoder", c.ablation.disable_d_encoder);
    s.read("disable_f_decoder", c.ablation.disable_f_decoder);
    s.finish();
  }
  if (const auto* mt = root.child("metrics")) {
    Section s(*mt, "metrics");
    s.read("pairs", c.metrics.pairs);
    s.read("lcdr_bin_width", c.metrics.lcdr_bin_width);
    s.read("fewshot_anchors", c.metrics.fewshot_anchors);
    s.read("fewshot_queries", c.metrics.fewshot_queries);
    s.finish();
  }
  if (const auto* sd = root.child("seeds")) {
    Section s(*sd, "seeds");
    s.read("field", c.seeds.field);
    s.read("data", c.seeds.data);
    s.read("model", c.seeds.model);
    s.read("eval", c.seeds.eval);
    s.finish();
  }
  if (const auto* sw = root.child("sweep")) {
    Section s(*sw, "sweep");
    s.read("lambdas", c.sweep.lambdas);
    s.read("m_values", c.sweep.m_values);
    s.read("sizes", c.sweep.sizes);
    s.finish();
  }
  root.read("output_dir", c.output_dir);
  root.finish();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::validate() const {
  try {
    field.path_loss.validate();
    dataset.noise.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (field.anchors < 2) throw ConfigError("field.anchors must be >= 2");
  if (field.samples_per_anchor < 1) throw ConfigError("field.samples_per_anchor must be >= 1");
  if (!(field.kernel_length_scale > 0.0) || !(field.kernel_signal_var > 0.0)) {
    throw ConfigError("field.kernel values must be positive");
  }
  if (walks.count < 1) throw ConfigError("walks.count must be >= 1");
  if (walks.length < dataset.m) throw ConfigError("walks.length must be >= dataset.m");
  if (dataset.size < 1) throw ConfigError("dataset.size must be >= 1");
  if (dataset.m < 2) throw ConfigError("dataset.m must be >= 2");
  if (!(dataset.train_ratio > 0.0 && dataset.train_ratio < 1.0)) throw ConfigError("dataset.train_ratio must be in (0, 1)");
  if (dataset.test_lambda && !(*dataset.test_lambda >= 0.0)) throw ConfigError("dataset.test_lambda must be >= 0");
  resolved_model(*this).validate();
  schedule.validate();
  ablation.validate();
  if (metrics.pairs < 1) throw ConfigError("metrics.pairs must be >= 1");
  if (!(metrics.lcdr_bin_width > 0.0)) throw ConfigError("metrics.lcdr_bin_width must be positive");
  if (metrics.fewshot_anchors < 1) throw ConfigError("metrics.fewshot_anchors must be >= 1");
  if (metrics.fewshot_queries < 1) throw ConfigError("metrics.fewshot_queries must be >= 1");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  const PathLossParams& pl = field.path_loss;
  j["field"] = {{"anchors", field.anchors},
                {"samples_per_anchor", field.samples_per_anchor},
                {"path_loss",
                 {{"p0_dbm", pl.p0_dbm},
                  {"ref_dist_m", pl.ref_dist_m},
                  {"exponent", pl.exponent},
                  {"wall_atten_db", pl.wall_atten_db},
                  {"shadow_sigma_db", pl.shadow_sigma_db},
                  {"floor_dbm", pl.floor_dbm}}},
                {"kernel", {{"signal_var", field.kernel_signal_var}, {"length_scale", field.kernel_length_scale}}}};
  j["walks"] = {{"count", walks.count}, {"length", walks.length}};
  j["dataset"] = {{"size", dataset.size},
                  {"m", dataset.m},
                  {"train_ratio", dataset.train_ratio},
                  {"noise",
                   {{"sigma_f", dataset.noise.sigma_f},
                    {"sigma_r", dataset.noise.sigma_r},
                    {"sigma_theta", dataset.noise.sigma_theta},
                    {"lambda", dataset.noise.lambda}}},
                  {"test_lambda", dataset.test_lambda ? nlohmann::ordered_json(*dataset.test_lambda) : nlohmann::ordered_json()},
                  {"expect_hash", dataset.expect_hash}};
  j["model"] = {{"latent_dim", model.latent_dim}, {"backbone", to_string(model.backbone)}, {"depth", model.depth},
                {"heads", model.heads},           {"ffn_dim", model.ffn_dim},
                {"attention_window", model.attention_window}, {"d_codec", to_string(model.d_codec)}};
  j["schedule"] = {{"epochs", schedule.epochs}, {"learning_rate", schedule.learning_rate}, {"batch_size", schedule.batch_size},
                   {"final_lr_ratio", schedule.final_lr_ratio}};
  j["ablation"] = {{"disable_d_encoder", ablation.disable_d_encoder}, {"disable_f_decoder", ablation.disable_f_decoder}};
  j["metrics"] = {{"pairs", metrics.pairs},
                  {"lcdr_bin_width", metrics.lcdr_bin_width},
                  {"fewshot_anchors", metrics.fewshot_anchors},
                  {"fewshot_queries", metrics.fewshot_queries}};
  j["seeds"] = {{"field", seeds.field}, {"data", seeds.data}, {"model", seeds.model}, {"eval", seeds.eval}};
  j["sweep"] = {{"lambdas", sweep.lambdas}, {"m_values", sweep.m_values}, {"sizes", sweep.sizes}};
  j["output_dir"] = output_dir;
  return j;
}

std::string RunConfig::hash() const { return hash_hex(to_json().dump()); }

std::string RunConfig::data_hash() const {
  const auto j = to_json();
  nlohmann::ordered_json d;
  d["field"] = j["field"];
  d["walks"] = j["walks"];
  d["dataset"] = j["dataset"];
  d["dataset"].erase("expect_hash");
  d["seeds"] = {{"field", seeds.field}, {"data", seeds.data}};
  return hash_hex(d.dump());
}

void RunConfig::apply_seed_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("seed override must look like name=value, got '" + assignment + "'");
  const std::string name = assignment.substr(0, eq);
  std::uint64_t value = 0;
  try {
    std::size_t used = 0;
    value = std::stoull(assignment.substr(eq + 1), &used);
    if (used != assignment.size() - eq - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("seed override '" + assignment + "' has a non-integer value");
  }
  if (name == "field") seeds.field = value;
  else if (name == "data") seeds.data = value;
  else if (name == "model") seeds.model = value;
  else if (name == "eval") seeds.eval = value;
  else throw ConfigError("unknown seed '" + name + "' (expected field, data, model or eval)");
}

ModelConfig resolved_model(const RunConfig& config) {
  ModelConfig m = config.model;
  m.trace_length = config.dataset.m;
  m.rssi_floor = config.field.path_loss.floor_dbm;
  m.rssi_ceiling = config.field.path_loss.p0_dbm;
  return m;
}

MetricsOptions metric_options(const RunConfig& config) {
  return {config.metrics.pairs, config.metrics.lcdr_bin_width, config.seeds.eval};
}

}  // namespace ipath
