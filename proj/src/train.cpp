#include "ipath/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ipath/errors.hpp"
#include "ipath/hashing.hpp"

namespace ipath {

void StageSchedule::validate() const {
  for (int e : epochs) {
    if (e < 0) throw ConfigError("schedule epochs must be >= 0");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("schedule.learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("schedule.batch_size must be positive");
  if (!(final_lr_ratio > 0.0 && final_lr_ratio <= 1.0)) throw ConfigError("schedule.final_lr_ratio must be in (0, 1]");
}

double StageSchedule::lr_at(std::int64_t step, std::int64_t steps) const {
  if (final_lr_ratio == 1.0 || steps <= 1) return learning_rate;
  const double t = static_cast<double>(step) / static_cast<double>(steps - 1);
  const double lo = learning_rate * final_lr_ratio;
  return lo + 0.5 * (learning_rate - lo) * (1.0 + std::cos(M_PI * t));
}

void adam_step(nn::ParamList params, AdamState& state, double lr, const AdamOptions& opt) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const nn::Param* p : params) {
      state.m.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Param& p = *params[i];
    Mat& m = state.m[i];
    Mat& v = state.v[i];
    m = opt.beta1 * m + (1.0 - opt.beta1) * p.grad;
    v = opt.beta2 * v + (1.0 - opt.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.eps);
  }
}

TrainState init_train_state(const ModelConfig& config, std::uint64_t seed) {
  return TrainState{Model::init(config, seed), AdamState{}, 0, seed, {}};
}

namespace {

bool finite(const PathwayLossValues& v) {
  for (const auto& x : {v.fd, v.dd, v.fda, v.ffs}) {
    if (x && !std::isfinite(*x)) return false;
  }
  return true;
}

std::string describe(const PathwayLossValues& v) {
  std::ostringstream os;
  auto put = [&](const char* name, const std::optional<double>& x) {
    os << ' ' << name << '=';
    if (x) os << *x;
    else os << '-';
  };
  put("L_FD", v.fd);
  put("L_DD", v.dd);
  put("L_FDA", v.fda);
  put("L_FFS", v.ffs);
  return os.str();
}

}  // namespace

void run_training(TrainState& state, const Dataset& ds, const StageSchedule& schedule, const AblationConfig& ablation,
                  const TrainHooks& hooks) {
  schedule.validate();
  ablation.validate();
  if (ds.train.empty()) throw DomainError("training split is empty");
  if (ds.manifest.n != state.model.config().aps || ds.manifest.m != state.model.config().trace_length) {
    throw ShapeError("dataset shape (m=" + std::to_string(ds.manifest.m) + ", n=" + std::to_string(ds.manifest.n) +
                     ") does not match the model config");
  }

  const FingerprintNormalizer norm = state.model.normalizer();
  const auto monitor_count = std::min<std::size_t>(ds.train.size(), static_cast<std::size_t>(std::max(1, hooks.monitor_traces)));
  const std::vector<std::int64_t> monitor_ids(ds.train.begin(), ds.train.begin() + static_cast<std::ptrdiff_t>(monitor_count));
  const TraceBatch monitor = make_batch(ds, monitor_ids, norm);
  PathwaySet loggable = ablation.available();
  if (ds.manifest.m < 2) loggable.ffs = false;

  for (int stage = state.completed_stage + 1; stage <= 3; ++stage) {
    const PathwaySet active = stage_pathways(stage, ablation);
    const int epochs = schedule.epochs[static_cast<std::size_t>(stage - 1)];
    if (active.any()) {
      const auto batches_per_epoch =
          static_cast<std::int64_t>((ds.train.size() + static_cast<std::size_t>(schedule.batch_size) - 1) /
                                    static_cast<std::size_t>(schedule.batch_size));
      const std::int64_t stage_steps = batches_per_epoch * epochs;
      for (int epoch = 0; epoch < epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::int64_t> order = ds.train;
        Rng rng = make_rng({state.seed, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(epoch), 0xe90cULL});
        std::shuffle(order.begin(), order.end(), rng);

        for (std::size_t start = 0, batch_index = 0; start < order.size(); start += static_cast<std::size_t>(schedule.batch_size), ++batch_index) {
          const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
          const TraceBatch batch = make_batch(ds, std::span<const std::int64_t>(order).subspan(start, end - start), norm);
          state.model.zero_grad();
          const PathwayLossValues losses = run_pathways(state.model, batch, active, true);
          if (!finite(losses)) {
            throw DivergenceError("non-finite loss at stage " + std::to_string(stage) + ", epoch " +
                                  std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ":" +
                                  describe(losses));
          }
          const auto step = static_cast<std::int64_t>(epoch) * batches_per_epoch + static_cast<std::int64_t>(batch_index);
          adam_step(state.model.params(), state.adam, schedule.lr_at(step, stage_steps));
        }

        EpochRecord rec;
        rec.stage = stage;
        rec.epoch = epoch;
        rec.losses = run_pathways(state.model, monitor, loggable, false);
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!finite(rec.losses)) {
          throw DivergenceError("non-finite monitored loss after stage " + std::to_string(stage) + ", epoch " +
                                std::to_string(epoch) + ":" + describe(rec.losses));
        }
        state.history.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);
      }
    }
    state.completed_stage = stage;
    if (hooks.on_stage_end) hooks.on_stage_end(state);
  }
}

TrainState train(const Dataset& ds, const ModelConfig& config, const StageSchedule& schedule,
                 const AblationConfig& ablation, std::uint64_t seed, const TrainHooks& hooks) {
  TrainState state = init_train_state(config, seed);
  run_training(state, ds, schedule, ablation, hooks);
  return state;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'I', 'P', 'A', 'T', 'H', 'C', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_mat(std::ostream& out, const Mat& m) {
  put<std::int64_t>(out, m.rows());
  put<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IntegrityError("checkpoint is truncated");
  return v;
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1ULL << 30)) throw IntegrityError("checkpoint string length is implausible");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw IntegrityError("checkpoint is truncated");
  return s;
}

Mat get_mat(std::istream& in) {
  const auto rows = get<std::int64_t>(in);
  const auto cols = get<std::int64_t>(in);
  if (rows < 0 || cols < 0 || rows * cols > (1LL << 28)) throw IntegrityError("checkpoint matrix shape is implausible");
  Mat m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw IntegrityError("checkpoint is truncated");
  return m;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int32_t>(out, state.completed_stage);
  put<std::uint64_t>(out, state.seed);
  put_string(out, state.model.config().to_json().dump());
  put<std::int64_t>(out, state.adam.step);
  const auto params = state.model.params();
  const bool has_moments = state.adam.m.size() == params.size();
  put<std::uint64_t>(out, params.size());
  put<std::uint8_t>(out, has_moments ? 1 : 0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_string(out, params[i]->name);
    put_mat(out, params[i]->value);
    if (has_moments) {
      put_mat(out, state.adam.m[i]);
      put_mat(out, state.adam.v[i]);
    }
  }
  if (!out) throw IntegrityError("failed writing checkpoint " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IntegrityError(path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  const auto stage = get<std::int32_t>(in);
  const auto seed = get<std::uint64_t>(in);
  const ModelConfig config = ModelConfig::from_json(nlohmann::json::parse(get_string(in)));
  TrainState state = init_train_state(config, seed);
  state.completed_stage = stage;
  state.adam.step = get<std::int64_t>(in);
  auto params = state.model.params();
  const auto count = get<std::uint64_t>(in);
  const bool has_moments = get<std::uint8_t>(in) != 0;
  if (count != params.size()) throw IntegrityError("checkpoint parameter count does not match its model config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = get_string(in);
    if (name != params[i]->name) throw IntegrityError("checkpoint parameter '" + name + "' where '" + params[i]->name + "' was expected");
    Mat value = get_mat(in);
    if (value.rows() != params[i]->value.rows() || value.cols() != params[i]->value.cols()) {
      throw IntegrityError("checkpoint parameter '" + name + "' has the wrong shape");
    }
    params[i]->value = std::move(value);
    if (has_moments) {
      state.adam.m.push_back(get_mat(in));
      state.adam.v.push_back(get_mat(in));
    }
  }
  return state;
}

std::string parameter_hash(const Model& model) {
  Fnv1a h;
  for (const nn::Param* p : model.params()) {
    h.update(p->name);
    const std::int64_t shape[2] = {p->value.rows(), p->value.cols()};
    h.update(std::string_view(reinterpret_cast<const char*>(shape), sizeof(shape)));
    h.update(std::string_view(reinterpret_cast<const char*>(p->value.data()), sizeof(double) * static_cast<std::size_t>(p->value.size())));
  }
  return h.hex();
}

}  // namespace ipath
