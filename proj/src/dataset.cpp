#include "ipath/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>
#include <string>

#include "ipath/errors.hpp"
#include "ipath/hashing.hpp"

namespace ipath {

void NoiseConfig::validate() const {
  if (!(sigma_f >= 0.0) || !(sigma_r >= 0.0) || !(sigma_theta >= 0.0)) throw DomainError("noise sigmas must be >= 0");
  if (!(lambda >= 0.0)) throw DomainError("noise lambda must be >= 0");
}

PairedTrace derive_traces(const Trajectory& t, const GprRadioMap& map) {
  PairedTrace out;
  out.trajectory = t;
  const int m = t.size();
  const int n = map.ap_count();
  out.dtrace.steps.resize(static_cast<std::size_t>(m));
  for (int i = 1; i < m; ++i) {
    out.dtrace.steps[static_cast<std::size_t>(i)] = t.positions[static_cast<std::size_t>(i)] - t.positions[static_cast<std::size_t>(i - 1)];
  }
  out.ftrace.length = m;
  out.ftrace.aps = n;
  out.ftrace.rssi.resize(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    map.query_into(t.positions[static_cast<std::size_t>(i)],
                   std::span<double>(out.ftrace.rssi).subspan(static_cast<std::size_t>(i) * n, static_cast<std::size_t>(n)));
  }
  return out;
}

FTrace inject_rssi_noise(const FTrace& f, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw DomainError("rssi noise sigma must be >= 0");
  FTrace out = f;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> eps(0.0, sigma);
  for (double& v : out.rssi) v = perturb_rssi(v, eps(rng));
  return out;
}

Vec2 perturb_step(Vec2 d, double eps_r, double eps_theta) {
  const double r = d.norm();
  if (r == 0.0) return {0.0, 0.0};
  const double theta = std::atan2(d.y, d.x);
  const double r_hat = r * (1.0 + eps_r);
  const double theta_hat = theta + eps_theta;
  return {r_hat * std::cos(theta_hat), r_hat * std::sin(theta_hat)};
}

DTrace inject_displacement_noise(const DTrace& d, double sigma_r, double sigma_theta, Rng& rng) {
  if (!(sigma_r >= 0.0) || !(sigma_theta >= 0.0)) throw DomainError("displacement noise sigmas must be >= 0");
  DTrace out = d;
  if (sigma_r == 0.0 && sigma_theta == 0.0) return out;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 1; i < out.steps.size(); ++i) {
    if (out.steps[i].norm() == 0.0) continue;
    const double er = sigma_r * unit(rng);
    const double et = sigma_theta * unit(rng);
    out.steps[i] = perturb_step(out.steps[i], er, et);
  }
  return out;
}

std::uint64_t trace_seed(std::uint64_t dataset_seed, std::int64_t trace_id) {
  return derive_seed({dataset_seed, static_cast<std::uint64_t>(trace_id), 0x7ace5eedULL});
}

namespace {

// Rejection-samples one placed trajectory. Returns false after max_attempts.
bool place_trajectory(const FieldLayout& layout, const std::vector<Trajectory>& bank, int m, Rng& rng,
                      int max_attempts, Trajectory& out) {
  std::uniform_int_distribution<std::size_t> pick(0, bank.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const Trajectory cropped = crop_subtrajectory(bank[pick(rng)], m, rng);
    const Vec2 start{unit(rng) * layout.width_m, unit(rng) * layout.height_m};
    const double angle = unit(rng) * 2.0 * std::numbers::pi;
    if (!is_walkable(layout, start, 0.0)) continue;
    Trajectory placed = place_and_rotate(cropped, start, angle);
    if (!collides(layout, placed)) {
      out = std::move(placed);
      return true;
    }
  }
  return false;
}

void apply_noise(PairedTrace& trace, const NoiseConfig& noise) {
  Rng rng = make_rng({trace.seed, 1});
  trace.ftrace = inject_rssi_noise(trace.ftrace, noise.sigma_f * noise.lambda, rng);
  trace.dtrace = inject_displacement_noise(trace.dtrace, noise.sigma_r * noise.lambda, noise.sigma_theta * noise.lambda, rng);
}

}  // namespace

void renoise_trace(PairedTrace& trace, const GprRadioMap& map, const NoiseConfig& noise) {
  PairedTrace clean = derive_traces(trace.trajectory, map);
  trace.ftrace = std::move(clean.ftrace);
  trace.dtrace = std::move(clean.dtrace);
  apply_noise(trace, noise);
}

PairedTrace synthesize_trace(const FieldLayout& layout, const GprRadioMap& map, const std::vector<Trajectory>& bank,
                             const DatasetOptions& options, std::int64_t trace_id) {
  const std::uint64_t seed = trace_seed(options.seed, trace_id);
  Rng rng = make_rng({seed, 0});
  Trajectory placed;
  if (!place_trajectory(layout, bank, options.m, rng, options.max_attempts_per_trace, placed)) {
    throw ConfigError("trace " + std::to_string(trace_id) + ": no collision-free placement found");
  }
  PairedTrace trace = derive_traces(placed, map);
  trace.trace_id = trace_id;
  trace.seed = seed;
  apply_noise(trace, options.noise);
  return trace;
}

Dataset build_dataset(const FieldLayout& layout, const GprRadioMap& map, const std::vector<Trajectory>& bank,
                      const DatasetOptions& options, Exec exec) {
  if (options.size < 1) throw DomainError("dataset size must be >= 1");
  if (bank.empty()) throw DomainError("walk bank is empty");
  for (const Trajectory& t : bank) {
    if (t.size() < options.m) throw LengthError("walk bank entry shorter than m");
  }
  options.noise.validate();

  // Probe the acceptance rate before committing to the full build.
  {
    Rng probe = make_rng({options.seed, 0x9a0beULL});
    int accepted = 0;
    Trajectory scratch;
    for (int i = 0; i < options.probe_attempts; ++i) {
      accepted += place_trajectory(layout, bank, options.m, probe, 1, scratch) ? 1 : 0;
    }
    const double rate = static_cast<double>(accepted) / std::max(1, options.probe_attempts);
    if (rate < options.min_accept_rate) {
      throw ConfigError("placement acceptance rate " + std::to_string(rate) + " is below " +
                        std::to_string(options.min_accept_rate) + ": field too cluttered");
    }
  }

  Dataset ds;
  ds.manifest.m = options.m;
  ds.manifest.n = map.ap_count();
  ds.manifest.count = options.size;
  ds.manifest.seed = options.seed;
  ds.manifest.noise = options.noise;
  ds.traces.resize(static_cast<std::size_t>(options.size));

  const std::int64_t size = options.size;
  if (exec == Exec::serial) {
    for (std::int64_t id = 0; id < size; ++id) {
      ds.traces[static_cast<std::size_t>(id)] = synthesize_trace(layout, map, bank, options, id);
    }
    return ds;
  }

  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t id = 0; id < size; ++id) {
    try {
      ds.traces[static_cast<std::size_t>(id)] = synthesize_trace(layout, map, bank, options, id);
    } catch (...) {
#pragma omp critical(ipath_dataset_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return ds;
}

Dataset split_dataset(Dataset ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DomainError("split ratio must be in (0, 1)");
  const auto n = static_cast<std::int64_t>(ds.traces.size());
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng = make_rng({seed, 0x5b11dULL});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::int64_t>(std::floor(ratio * static_cast<double>(n)));
  ds.train.assign(order.begin(), order.begin() + n_train);
  ds.test.assign(order.begin() + n_train, order.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.test.begin(), ds.test.end());
  ds.manifest.split_seed = seed;
  ds.manifest.train_ratio = ratio;
  return ds;
}

// ---------------------------------------------------------------------------
// Serialization: manifest.json + traces.jsonl, floats in shortest round-trip form.

namespace {

nlohmann::json vec_array(const std::vector<Vec2>& v) {
  auto arr = nlohmann::json::array();
  for (const Vec2& p : v) arr.push_back({p.x, p.y});
  return arr;
}

std::vector<Vec2> vec_from(const nlohmann::json& arr) {
  std::vector<Vec2> out;
  out.reserve(arr.size());
  for (const auto& p : arr) {
    if (p.size() != 2) throw std::invalid_argument("2-D point expected");
    out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  return out;
}

}  // namespace

std::string serialize_manifest(const Dataset& ds) {
  const DatasetManifest& m = ds.manifest;
  nlohmann::ordered_json j;
  j["version"] = m.version;
  j["m"] = m.m;
  j["n"] = m.n;
  j["count"] = m.count;
  j["seed"] = m.seed;
  j["split_seed"] = m.split_seed;
  j["train_ratio"] = m.train_ratio;
  j["noise"] = {{"sigma_f", m.noise.sigma_f},
                {"sigma_r", m.noise.sigma_r},
                {"sigma_theta", m.noise.sigma_theta},
                {"lambda", m.noise.lambda}};
  j["field_hash"] = m.field_hash;
  j["train"] = ds.train;
  j["test"] = ds.test;
  return j.dump(1) + "\n";
}

std::string serialize_record(const PairedTrace& t) {
  nlohmann::ordered_json j;
  j["trace_id"] = t.trace_id;
  j["seed"] = t.seed;
  j["positions"] = vec_array(t.trajectory.positions);
  j["dtrace"] = vec_array(t.dtrace.steps);
  auto f = nlohmann::json::array();
  for (int i = 0; i < t.ftrace.length; ++i) {
    auto row = nlohmann::json::array();
    for (int a = 0; a < t.ftrace.aps; ++a) row.push_back(t.ftrace.at(i, a));
    f.push_back(std::move(row));
  }
  j["ftrace"] = std::move(f);
  return j.dump();
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << serialize_manifest(ds);
    if (!out) throw IntegrityError("failed writing " + (dir / "manifest.json").string());
  }
  std::ofstream out(dir / "traces.jsonl", std::ios::binary | std::ios::trunc);
  for (const PairedTrace& t : ds.traces) out << serialize_record(t) << '\n';
  if (!out) throw IntegrityError("failed writing " + (dir / "traces.jsonl").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) throw IntegrityError("cannot open " + (dir / "manifest.json").string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(std::string("malformed manifest: ") + e.what(), -1, -1);
    }
    try {
      DatasetManifest& m = ds.manifest;
      m.version = j.at("version").get<int>();
      if (m.version != DatasetManifest::kFormatVersion) {
        throw LoadError("dataset format version " + std::to_string(m.version) + " is not supported (expected " +
                            std::to_string(DatasetManifest::kFormatVersion) + ")",
                        -1, -1);
      }
      m.m = j.at("m").get<int>();
      m.n = j.at("n").get<int>();
      m.count = j.at("count").get<std::int64_t>();
      m.seed = j.at("seed").get<std::uint64_t>();
      m.split_seed = j.at("split_seed").get<std::uint64_t>();
      m.train_ratio = j.at("train_ratio").get<double>();
      const auto& nz = j.at("noise");
      m.noise = {nz.at("sigma_f").get<double>(), nz.at("sigma_r").get<double>(), nz.at("sigma_theta").get<double>(),
                 nz.at("lambda").get<double>()};
      m.field_hash = j.at("field_hash").get<std::string>();
      ds.train = j.at("train").get<std::vector<std::int64_t>>();
      ds.test = j.at("test").get<std::vector<std::int64_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(std::string("malformed manifest: ") + e.what(), -1, -1);
    }
  }

  std::ifstream in(dir / "traces.jsonl", std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + (dir / "traces.jsonl").string());
  std::string line;
  long index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PairedTrace t;
      t.trace_id = j.at("trace_id").get<std::int64_t>();
      t.seed = j.at("seed").get<std::uint64_t>();
      t.trajectory.positions = vec_from(j.at("positions"));
      t.dtrace.steps = vec_from(j.at("dtrace"));
      const auto& f = j.at("ftrace");
      t.ftrace.length = static_cast<int>(f.size());
      t.ftrace.aps = ds.manifest.n;
      for (const auto& row : f) {
        if (static_cast<int>(row.size()) != ds.manifest.n) throw std::invalid_argument("fingerprint width != n");
        for (const auto& v : row) t.ftrace.rssi.push_back(v.get<double>());
      }
      const int m = ds.manifest.m;
      if (t.trajectory.size() != m || static_cast<int>(t.dtrace.steps.size()) != m || t.ftrace.length != m) {
        throw std::invalid_argument("sequence length != m");
      }
      if (t.trace_id != index) throw std::invalid_argument("trace_id out of sequence");
      ds.traces.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw LoadError("record " + std::to_string(index) + " is malformed (last good record: " +
                          std::to_string(index - 1) + "): " + e.what(),
                      index, index - 1);
    }
    ++index;
  }
  if (static_cast<std::int64_t>(ds.traces.size()) != ds.manifest.count) {
    throw IntegrityError("manifest lists " + std::to_string(ds.manifest.count) + " traces but " +
                         std::to_string(ds.traces.size()) + " records were read (last good record: " +
                         std::to_string(index - 1) + ")");
  }
  for (const auto* split : {&ds.train, &ds.test}) {
    for (std::int64_t id : *split) {
      if (id < 0 || id >= ds.manifest.count) throw IntegrityError("split index " + std::to_string(id) + " out of range");
    }
  }
  return ds;
}

std::string dataset_hash(const std::filesystem::path& dir) {
  Fnv1a h;
  for (const char* name : {"manifest.json", "traces.jsonl"}) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw IntegrityError("cannot open " + (dir / name).string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h.update(bytes);
  }
  return h.hex();
}

std::string dataset_hash(const Dataset& ds) {
  Fnv1a h;
  h.update(serialize_manifest(ds));
  for (const PairedTrace& t : ds.traces) {
    h.update(serialize_record(t));
    h.update("\n");
  }
  return h.hex();
}

}  // namespace ipath
