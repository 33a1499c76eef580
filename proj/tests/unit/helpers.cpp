#include "helpers.hpp"

#include <algorithm>
#include <cmath>

namespace ipath::test {

const SmallWorld& small_world() {
  static const SmallWorld world = [] {
    FieldBundle b = make_field_bundle(0);
    GprRadioMap map = b.fit_map();
    Rng rng = make_rng({11});
    auto bank = generate_walk_bank(64, 32, rng);
    return SmallWorld{std::move(b), std::move(map), std::move(bank)};
  }();
  return world;
}

Dataset small_dataset(std::int64_t size, int m, std::uint64_t seed, NoiseConfig noise) {
  const SmallWorld& w = small_world();
  DatasetOptions o;
  o.size = size;
  o.m = m;
  o.seed = seed;
  o.noise = noise;
  return split_dataset(build_dataset(w.bundle.layout, w.map, w.bank, o), 0.8, seed);
}

ModelConfig toy_config(int m, int aps) {
  ModelConfig c;
  c.latent_dim = 4;
  c.depth = 1;
  c.heads = 2;
  c.ffn_dim = 8;
  c.aps = aps;
  c.trace_length = m;
  return c;
}

FTrace random_ftrace(int m, int aps, Rng& rng) {
  std::uniform_real_distribution<double> u(-92.0, -42.0);
  FTrace f;
  f.length = m;
  f.aps = aps;
  for (int i = 0; i < m * aps; ++i) f.rssi.push_back(u(rng));
  return f;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace ipath::test

namespace ipath::test {

Dataset random_dataset(int traces, int m, int aps, std::uint64_t seed) {
  Rng rng = make_rng({seed});
  std::normal_distribution<double> step(0.0, 0.6);
  Dataset ds;
  ds.manifest.m = m;
  ds.manifest.n = aps;
  for (int t = 0; t < traces; ++t) {
    PairedTrace p;
    p.trace_id = t;
    p.ftrace = random_ftrace(m, aps, rng);
    Vec2 pos{10.0, 10.0};
    for (int i = 0; i < m; ++i) {
      const Vec2 d = i == 0 ? Vec2{0, 0} : Vec2{step(rng), step(rng)};
      pos += d;
      p.trajectory.positions.push_back(pos);
      p.dtrace.steps.push_back(d);
    }
    ds.traces.push_back(std::move(p));
    ds.train.push_back(t);
    ds.test.push_back(t);
  }
  ds.manifest.count = traces;
  return ds;
}

namespace {

double selected_loss(const PathwayLossValues& v) {
  return v.fd.value_or(0.0) + v.dd.value_or(0.0) + v.fda.value_or(0.0) + v.ffs.value_or(0.0);
}

}  // namespace

GradCheck gradient_check(Model& model, const TraceBatch& batch, PathwaySet which, double step) {
  model.zero_grad();
  const double loss = selected_loss(run_pathways(model, batch, which, true));
  // Central differences carry roundoff of about eps * |loss| / step, so
  // gradients below this floor (e.g. the exactly-zero key bias gradient of
  // softmax attention) are compared in absolute terms.
  const double floor = 1e-6 * std::max(1.0, std::abs(loss));
  GradCheck out;
  for (nn::Param* p : model.params()) {
    const Mat analytic = p->grad;
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        const double keep = p->value(r, c);
        p->value(r, c) = keep + step;
        const double up = selected_loss(run_pathways(model, batch, which, false));
        p->value(r, c) = keep - step;
        const double down = selected_loss(run_pathways(model, batch, which, false));
        p->value(r, c) = keep;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic(r, c);
        const double scale = std::max({std::abs(a), std::abs(numeric), floor});
        out.max_rel_err = std::max(out.max_rel_err, std::abs(a - numeric) / scale);
        ++out.checked;
      }
    }
  }
  return out;
}

}  // namespace ipath::test
