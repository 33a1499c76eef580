#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "ipath/errors.hpp"
#include "ipath/inference.hpp"
#include "ipath/train.hpp"

using namespace ipath;

TEST_CASE("model config validation and JSON round trip") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(Model::init(c, 1), ConfigError);
  c.heads = 4;
  c.backbone = Backbone::recurrent;
  c.d_codec = DCodecKind::nonlinear;
  CHECK(ModelConfig::from_json(nlohmann::json::parse(c.to_json().dump())) == c);
  CHECK_THROWS_AS(parse_backbone("cnn"), ConfigError);
  CHECK_THROWS_AS(parse_d_codec("quadratic"), ConfigError);
}

TEST_CASE("fingerprint normalizer") {
  const FingerprintNormalizer n(-95, -40);
  CHECK(n.normalize(-95.0) == 0.0);
  CHECK(n.normalize(-40.0) == 1.0);
  CHECK(n.normalize(-120.0) == 0.0);
  CHECK(n.normalize(-10.0) == 1.0);
  for (double v = -95.0; v <= -40.0; v += 0.37) CHECK(std::abs(n.denormalize(n.normalize(v)) - v) < 1e-6);
}

TEST_CASE("initialization determinism and parameter counts") {
  ModelConfig c;
  const Model a = Model::init(c, 3);
  const Model b = Model::init(c, 3);
  const Model d = Model::init(c, 4);
  CHECK(parameter_hash(a) == parameter_hash(b));
  CHECK(parameter_hash(a) != parameter_hash(d));
  CHECK(a.parameter_count("d_enc") + a.parameter_count("d_dec") == 4u * 64u);

  c.backbone = Backbone::feedforward;
  const Model ff = Model::init(c, 3);
  for (const nn::Param* p : ff.params()) CHECK(p->name.find("pos") == std::string::npos);
  CHECK(ff.f_encoder().per_token());

  c.d_codec = DCodecKind::nonlinear;
  const Model nl = Model::init(c, 3);
  CHECK(nl.parameter_count("d_enc") + nl.parameter_count("d_dec") > 4u * 64u);
}

TEST_CASE("encode/decode shape contracts") {
  const Model model = Model::init(ModelConfig{}, 5);
  Rng rng = make_rng({1});
  for (int m = 1; m <= 16; ++m) {
    const FTrace f = test::random_ftrace(m, 20, rng);
    const Mat l = encode_ftrace(model, f);
    CHECK(l.rows() == m);
    CHECK(l.cols() == 64);
    const Mat r = decode_ftrace(model, l);
    CHECK(r.rows() == m);
    CHECK(r.cols() == 20);
    DTrace d;
    for (int i = 0; i < m; ++i) d.steps.push_back({0.1 * i, -0.2 * i});
    const Mat e = encode_dtrace(model, d);
    CHECK(e.rows() == m);
    CHECK(e.cols() == 64);
    CHECK(decode_dtrace(model, e).steps.size() == static_cast<std::size_t>(m));
  }
  CHECK_THROWS_AS(encode_ftrace(model, FTrace{0, 20, {}}), LengthError);
  CHECK_THROWS_AS(encode_ftrace(model, test::random_ftrace(9, 19, rng)), ShapeError);
  CHECK_THROWS_AS(decode_ftrace(model, Mat::Zero(9, 63)), ShapeError);

  ModelConfig rc;
  rc.backbone = Backbone::recurrent;
  const Model rec = Model::init(rc, 5);
  CHECK_NOTHROW(encode_ftrace(rec, test::random_ftrace(9, 20, rng)));
  CHECK_THROWS_AS(encode_ftrace(rec, test::random_ftrace(7, 20, rng)), ShapeError);
}

TEST_CASE("f-encoder is context-aware and order-sensitive") {
  ModelConfig c;
  c.attention_window = 0;
  const Model model = Model::init(c, 5);
  Rng rng = make_rng({2});
  const FTrace f = test::random_ftrace(9, 20, rng);
  FTrace rev = f;
  for (int i = 0; i < 9; ++i) {
    for (int ap = 0; ap < 20; ++ap) rev.rssi[static_cast<std::size_t>(i * 20 + ap)] = f.at(8 - i, ap);
  }
  const Mat a = encode_ftrace(model, f);
  const Mat b = encode_ftrace(model, rev);
  CHECK((a.row(8) - b.row(0)).norm() > 1e-6);
  CHECK(encode_ftrace(model, f) == a);

  // Changing only the first fingerprint moves the last code.
  FTrace g = f;
  g.rssi[0] += 10.0;
  CHECK((encode_ftrace(model, g).row(8) - a.row(8)).norm() > 1e-9);
}

TEST_CASE("zero-weight model gives constant per-token output") {
  Model model = Model::init(test::toy_config(), 1);
  for (nn::Param* p : model.params()) {
    if (p->name.find("gamma") == std::string::npos) p->value.setZero();
  }
  Rng rng = make_rng({3});
  const Mat out = decode_ftrace(model, encode_ftrace(model, test::random_ftrace(3, 2, rng)));
  for (Eigen::Index i = 1; i < out.rows(); ++i) CHECK((out.row(i) - out.row(0)).norm() < 1e-12);
}

TEST_CASE("linear d-codec is exactly linear and zero-preserving") {
  const Model model = Model::init(ModelConfig{}, 9);
  Rng rng = make_rng({4});
  std::normal_distribution<double> g(0.0, 1.0);
  nn::RowVector zero = nn::RowVector::Zero(64);
  CHECK(decode_displacement(model, zero) == Vec2{0, 0});
  CHECK(encode_dtrace(model, DTrace{{{0, 0}}}).norm() == 0.0);
  for (int trial = 0; trial < 1000; ++trial) {
    nn::RowVector a(64), b(64);
    for (int i = 0; i < 64; ++i) {
      a(i) = g(rng);
      b(i) = g(rng);
    }
    const double alpha = g(rng), beta = g(rng);
    const Vec2 lhs = decode_displacement(model, alpha * a + beta * b);
    const Vec2 rhs = decode_displacement(model, a) * alpha + decode_displacement(model, b) * beta;
    REQUIRE(distance(lhs, rhs) < 1e-6);
    const Vec2 d1{g(rng), g(rng)}, d2{g(rng), g(rng)};
    const Mat e = encode_dtrace(model, DTrace{{d1, d2, d1 + d2}});
    REQUIRE((e.row(0) + e.row(1) - e.row(2)).norm() < 1e-12);
  }
}

TEST_CASE("relloc identities on an untrained model") {
  const Model model = Model::init(ModelConfig{}, 11);
  Rng rng = make_rng({5});
  for (int trial = 0; trial < 50; ++trial) {
    const FTrace a = test::random_ftrace(9, 20, rng);
    const FTrace b = test::random_ftrace(9, 20, rng);
    const FTrace c = test::random_ftrace(9, 20, rng);
    const RelLocResult aa = relloc(model, a, a);
    CHECK(aa.delta_hat == Vec2{0, 0});
    CHECK(aa.latent_distance == 0.0);
    const Vec2 ab = relloc(model, a, b).delta_hat;
    const Vec2 ba = relloc(model, b, a).delta_hat;
    CHECK(distance(ab, ba * -1.0) < 1e-12);
    const Vec2 ac = relloc(model, a, c).delta_hat;
    const Vec2 bc = relloc(model, b, c).delta_hat;
    CHECK(distance(ac, ab + bc) < 1e-6);
    CHECK(relloc(model, a, b).latent_distance >= 0.0);
  }
  CHECK_THROWS_AS(relloc(model, test::random_ftrace(9, 20, rng), test::random_ftrace(7, 20, rng)), ShapeError);
}

TEST_CASE("few-shot absolute localization") {
  const Model model = Model::init(ModelConfig{}, 12);
  Rng rng = make_rng({6});
  std::vector<AnchorTrace> anchors;
  for (int i = 0; i < 5; ++i) anchors.push_back({test::random_ftrace(9, 20, rng), {1.0 + i, 2.0 * i}});
  CHECK_THROWS_AS(fewshot_absolute(model, anchors[0].ftrace, {}), DomainError);

  const FewShotEstimate self = fewshot_absolute(model, anchors[3].ftrace, anchors);
  CHECK(self.anchor_index == 3);
  CHECK(self.position == anchors[3].endpoint);

  const FTrace q = test::random_ftrace(9, 20, rng);
  const std::vector<AnchorTrace> one{anchors[1]};
  const FewShotEstimate single = fewshot_absolute(model, q, one);
  const Vec2 v = relloc(model, anchors[1].ftrace, q).delta_hat;
  CHECK(distance(single.position, anchors[1].endpoint + v) < 1e-12);

  // Duplicate anchors tie; the lower index wins.
  std::vector<AnchorTrace> dup{anchors[2], anchors[2]};
  dup[1].endpoint = {9, 9};
  CHECK(fewshot_absolute(model, q, dup).anchor_index == 0);
}

TEST_CASE("analytic gradients match finite differences") {
  const Dataset ds = test::random_dataset(3, 3, 2, 17);
  const std::vector<std::int64_t> ids{0, 1, 2};
  const PathwaySet single[] = {{true, false, false, false},
                               {false, true, false, false},
                               {false, false, true, false},
                               {false, false, false, true}};
  const std::string names[] = {"FD", "DD", "FDA", "FFS"};
  for (Backbone bb : {Backbone::attention, Backbone::recurrent, Backbone::feedforward}) {
    for (DCodecKind dk : {DCodecKind::linear, DCodecKind::nonlinear}) {
      ModelConfig c = test::toy_config();
      c.backbone = bb;
      c.d_codec = dk;
      Model model = Model::init(c, 21);
      const TraceBatch batch = make_batch(ds, ids, model.normalizer());
      for (int p = 0; p < 4; ++p) {
        const test::GradCheck g = test::gradient_check(model, batch, single[p]);
        INFO(to_string(bb), " ", to_string(dk), " ", names[p], " max rel err ", g.max_rel_err);
        CHECK(g.checked > 0);
        CHECK(g.max_rel_err < 1e-4);
      }
    }
  }
}

TEST_CASE("pathway loss definitions") {
  const Dataset ds = test::random_dataset(4, 5, 3, 2);
  ModelConfig c = test::toy_config(5, 3);
  Model model = Model::init(c, 2);
  const std::vector<std::int64_t> ids{0, 1, 2, 3};
  const TraceBatch batch = make_batch(ds, ids, model.normalizer());

  // Reference FD: per-trace sums, batch mean.
  double fd = 0.0, dd = 0.0, ffs = 0.0;
  for (std::int64_t id : ids) {
    const PairedTrace& t = ds.traces[static_cast<std::size_t>(id)];
    const Mat f = model.normalizer().normalize(t.ftrace);
    const Mat l = encode_ftrace(model, t.ftrace);
    fd += (f - decode_ftrace(model, l)).cwiseAbs().sum();
    const DTrace back = decode_dtrace(model, encode_dtrace(model, t.dtrace));
    Mat diff = Mat::Zero(l.rows(), l.cols());
    for (int i = 1; i < 5; ++i) {
      dd += std::abs(t.dtrace.steps[i].x - back.steps[i].x) + std::abs(t.dtrace.steps[i].y - back.steps[i].y);
      diff.row(i) = l.row(i) - l.row(i - 1);
    }
    const DTrace ehat = decode_dtrace(model, diff);
    for (int i = 1; i < 5; ++i) {
      ffs += std::abs(t.dtrace.steps[i].x - ehat.steps[i].x) + std::abs(t.dtrace.steps[i].y - ehat.steps[i].y);
    }
  }
  CHECK(loss_fd(model, batch) == doctest::Approx(fd / 4).epsilon(1e-12));
  CHECK(loss_dd(model, batch) == doctest::Approx(dd / 4).epsilon(1e-12));
  CHECK(loss_ffs(model, batch) == doctest::Approx(ffs / 4).epsilon(1e-12));

  // m = 1: FDA reduces to FD; FFS is undefined.
  const Dataset one = test::random_dataset(2, 1, 3, 3);
  ModelConfig c1 = test::toy_config(1, 3);
  Model m1 = Model::init(c1, 4);
  const std::vector<std::int64_t> ids1{0, 1};
  const TraceBatch b1 = make_batch(one, ids1, m1.normalizer());
  CHECK(loss_fda(m1, b1) == doctest::Approx(loss_fd(m1, b1)).epsilon(1e-12));
  CHECK_THROWS_AS(loss_ffs(m1, b1), LengthError);

  const PathwayLossValues all = run_pathways(model, batch, kAllPathways, false);
  CHECK(*all.fd >= 0.0);
  CHECK(*all.dd >= 0.0);
  CHECK(*all.fda >= 0.0);
  CHECK(*all.ffs >= 0.0);
}

TEST_CASE("FDA with a stationary trace equals FD on constant codes") {
  // Stationary trace: e_i = 0, identical fingerprints give identical codes
  // only for per-token encoders, so use the feedforward backbone.
  ModelConfig c = test::toy_config(4, 2);
  c.backbone = Backbone::feedforward;
  Model model = Model::init(c, 6);
  PairedTrace t;
  t.ftrace = FTrace{4, 2, {-60, -70, -60, -70, -60, -70, -60, -70}};
  t.dtrace.steps.assign(4, Vec2{0, 0});
  const TraceBatch b = make_batch(t.ftrace, t.dtrace, model.normalizer());
  CHECK(loss_fda(model, b) == doctest::Approx(loss_fd(model, b)).epsilon(1e-12));
  CHECK(loss_ffs(model, b) == doctest::Approx(0.0));
}

TEST_CASE("stage composition and ablations") {
  const AblationConfig none;
  const AblationConfig no_d{true, false};
  const AblationConfig no_df{true, true};
  CHECK(stage_pathways(1, none) == PathwaySet{true, false, false, false});
  CHECK(stage_pathways(2, none) == PathwaySet{true, false, true, false});
  CHECK(stage_pathways(3, none) == PathwaySet{true, true, false, true});
  CHECK(stage_pathways(2, no_d) == PathwaySet{true, false, false, false});
  CHECK(stage_pathways(3, no_d) == PathwaySet{true, false, false, true});
  CHECK_FALSE(stage_pathways(1, no_df).any());
  CHECK_FALSE(stage_pathways(2, no_df).any());
  CHECK(stage_pathways(3, no_df) == PathwaySet{false, false, false, true});
  CHECK_THROWS_AS(stage_pathways(0, none), DomainError);
  CHECK_THROWS_AS(stage_pathways(4, none), DomainError);
  CHECK_THROWS_AS((AblationConfig{false, true}.validate()), ConfigError);

  PathwayLossValues v;
  v.fd = 1.5;
  v.dd = 0.25;
  v.fda = 2.0;
  v.ffs = 3.0;
  CHECK(stage_loss(1, v, none) == 1.5);
  CHECK(stage_loss(2, v, none) == 1.5 + 2.0);
  CHECK(stage_loss(3, v, none) == 1.5 + 0.25 + 3.0);
  CHECK(stage_loss(2, v, no_d) == 1.5);
  CHECK(stage_loss(3, v, no_df) == 3.0);
}

TEST_CASE("serial and parallel attention agree bitwise") {
  Rng rng = make_rng({7});
  const int len = 9, batch = 37, dim = 16, heads = 4;
  std::normal_distribution<double> g;
  Mat q(batch * len, dim), k(batch * len, dim), v(batch * len, dim), dctx(batch * len, dim);
  for (Mat* m : {&q, &k, &v, &dctx}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = g(rng);
  }
  Mat attn_s, attn_p;
  const Mat ctx_s = nn::attention_core(q, k, v, len, heads, &attn_s, Exec::serial);
  const Mat ctx_p = nn::attention_core(q, k, v, len, heads, &attn_p, Exec::parallel);
  CHECK(ctx_s == ctx_p);
  CHECK(attn_s == attn_p);
  Mat dq_s, dk_s, dv_s, dq_p, dk_p, dv_p;
  nn::attention_core_backward(q, k, v, attn_s, dctx, len, heads, dq_s, dk_s, dv_s, Exec::serial);
  nn::attention_core_backward(q, k, v, attn_p, dctx, len, heads, dq_p, dk_p, dv_p, Exec::parallel);
  CHECK(dq_s == dq_p);
  CHECK(dk_s == dk_p);
  CHECK(dv_s == dv_p);
}

TEST_CASE("training: empty schedule, determinism, checkpoints and resume") {
  const Dataset ds = test::random_dataset(40, 3, 2, 8);
  const ModelConfig c = test::toy_config();

  StageSchedule none;
  none.epochs = {0, 0, 0};
  const TrainState idle = train(ds, c, none, {}, 3);
  CHECK(parameter_hash(idle.model) == parameter_hash(Model::init(c, 3)));
  CHECK(idle.adam.step == 0);

  StageSchedule s;
  s.epochs = {1, 1, 1};
  s.batch_size = 8;
  std::vector<TrainState> snapshots;
  TrainHooks hooks;
  const auto dir = std::filesystem::temp_directory_path() / "ipath_test_ckpt";
  std::filesystem::create_directories(dir);
  hooks.on_stage_end = [&](const TrainState& st) {
    save_checkpoint(st, dir / ("ckpt_stage" + std::to_string(st.completed_stage) + ".bin"));
  };
  const TrainState full = train(ds, c, s, {}, 3, hooks);
  const TrainState again = train(ds, c, s, {}, 3);
  CHECK(parameter_hash(full.model) == parameter_hash(again.model));
  CHECK(full.history.size() == 3);
  for (const EpochRecord& r : full.history) {
    CHECK(r.losses.fd.has_value());
    CHECK(r.losses.dd.has_value());
    CHECK(r.losses.fda.has_value());
    CHECK(r.losses.ffs.has_value());
  }

  TrainState loaded = load_checkpoint(dir / "ckpt_stage3.bin");
  CHECK(parameter_hash(loaded.model) == parameter_hash(full.model));
  CHECK(loaded.completed_stage == 3);
  CHECK(loaded.adam.step == full.adam.step);
  REQUIRE(loaded.adam.m.size() == full.adam.m.size());
  for (std::size_t i = 0; i < full.adam.m.size(); ++i) {
    CHECK(loaded.adam.m[i] == full.adam.m[i]);
    CHECK(loaded.adam.v[i] == full.adam.v[i]);
  }
  CHECK(loaded.model.config() == c);

  TrainState resumed = load_checkpoint(dir / "ckpt_stage2.bin");
  CHECK(resumed.completed_stage == 2);
  run_training(resumed, ds, s, {});
  CHECK(parameter_hash(resumed.model) == parameter_hash(full.model));

  // Truncated checkpoint.
  {
    const auto p = dir / "ckpt_stage3.bin";
    const auto size = std::filesystem::file_size(p);
    std::filesystem::resize_file(p, size / 2);
    CHECK_THROWS_AS(load_checkpoint(p), IntegrityError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("ablated training skips stages without pathways") {
  const Dataset ds = test::random_dataset(16, 3, 2, 9);
  StageSchedule s;
  s.epochs = {2, 2, 1};
  s.batch_size = 8;
  const TrainState st = train(ds, test::toy_config(), s, AblationConfig{true, true}, 1);
  REQUIRE(st.history.size() == 1);
  CHECK(st.history[0].stage == 3);
  CHECK_FALSE(st.history[0].losses.fd.has_value());
  CHECK_FALSE(st.history[0].losses.dd.has_value());
  CHECK(st.history[0].losses.ffs.has_value());
}

TEST_CASE("divergence is reported with diagnostics") {
  Dataset ds = test::random_dataset(8, 3, 2, 10);
  ds.traces[2].dtrace.steps[1] = {std::nan(""), 0.0};
  StageSchedule s;
  s.epochs = {0, 0, 1};
  try {
    train(ds, test::toy_config(), s, {}, 1);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 0") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
  }
}

TEST_CASE("cosine step-size schedule") {
  StageSchedule s;
  s.learning_rate = 4e-3;
  s.final_lr_ratio = 0.01;
  CHECK(s.lr_at(0, 101) == doctest::Approx(4e-3).epsilon(1e-12));
  CHECK(s.lr_at(50, 101) == doctest::Approx(0.5 * (4e-3 + 4e-5)).epsilon(1e-12));
  CHECK(s.lr_at(100, 101) == doctest::Approx(4e-5).epsilon(1e-12));
  for (int t = 1; t < 101; ++t) CHECK(s.lr_at(t, 101) <= s.lr_at(t - 1, 101));
  s.final_lr_ratio = 1.0;
  CHECK(s.lr_at(70, 101) == 4e-3);
  s.final_lr_ratio = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("stage-1 training on 4K traces lowers L_FD every epoch") {
  const Dataset ds = test::small_dataset(4000);
  StageSchedule s;
  s.epochs = {5, 0, 0};
  ModelConfig c;
  c.aps = ds.manifest.n;
  const TrainState st = train(ds, c, s, {}, 2);
  REQUIRE(st.history.size() == 5);
  for (std::size_t e = 1; e < st.history.size(); ++e) {
    INFO("epoch ", e);
    CHECK(*st.history[e].losses.fd < *st.history[e - 1].losses.fd);
  }
}

TEST_CASE("windowed attention masks distant steps") {
  Rng rng = make_rng({8});
  const int len = 9, batch = 5, dim = 8, heads = 2, w = 2;
  std::normal_distribution<double> g;
  Mat q(batch * len, dim), k(batch * len, dim), v(batch * len, dim);
  for (Mat* m : {&q, &k, &v}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = g(rng);
  }
  Mat attn_s, attn_p;
  const Mat ctx_s = nn::attention_core(q, k, v, len, heads, &attn_s, Exec::serial, w);
  const Mat ctx_p = nn::attention_core(q, k, v, len, heads, &attn_p, Exec::parallel, w);
  CHECK(ctx_s == ctx_p);
  CHECK(attn_s == attn_p);
  for (Eigen::Index r = 0; r < attn_s.rows(); ++r) {
    const int i = static_cast<int>(r % len);
    double sum = 0.0;
    for (int j = 0; j < len; ++j) {
      if (std::abs(i - j) > w) CHECK(attn_s(r, j) == 0.0);
      sum += attn_s(r, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  // A window covering the whole trace is the unmasked core.
  Mat attn_full;
  CHECK(nn::attention_core(q, k, v, len, heads, &attn_full, Exec::serial, len) ==
        nn::attention_core(q, k, v, len, heads, nullptr, Exec::serial));
}

TEST_CASE("windowed f-encoder only sees nearby steps") {
  ModelConfig c;
  c.attention_window = 2;
  const Model model = Model::init(c, 5);
  Rng rng = make_rng({3});
  const FTrace f = test::random_ftrace(9, 20, rng);
  const Mat a = encode_ftrace(model, f);
  FTrace g = f;
  for (int ap = 0; ap < 20; ++ap) g.rssi[static_cast<std::size_t>(ap)] += 10.0;
  const Mat b = encode_ftrace(model, g);
  // One block of radius 2: step 0 reaches codes 0..2 and nothing further.
  CHECK((b.row(2) - a.row(2)).norm() > 1e-9);
  for (int i = 3; i < 9; ++i) CHECK(b.row(i) == a.row(i));
}

TEST_CASE("windowed attention gradients match finite differences") {
  const Dataset ds = test::random_dataset(3, 5, 2, 19);
  const std::vector<std::int64_t> ids{0, 1, 2};
  ModelConfig c = test::toy_config(5);
  c.attention_window = 1;
  Model model = Model::init(c, 23);
  const TraceBatch batch = make_batch(ds, ids, model.normalizer());
  for (const PathwaySet& p : {PathwaySet{true, false, false, false}, PathwaySet{false, false, false, true}}) {
    const test::GradCheck g = test::gradient_check(model, batch, p);
    CHECK(g.checked > 0);
    CHECK(g.max_rel_err < 1e-4);
  }
}
