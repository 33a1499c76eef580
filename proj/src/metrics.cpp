#include "ipath/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "ipath/errors.hpp"

namespace ipath {

std::vector<PairSample> sample_pairs(const Dataset& ds, std::int64_t n, std::uint64_t seed) {
  const auto t = static_cast<std::int64_t>(ds.test.size());
  if (t < 2) throw DomainError("pair sampling needs at least two test traces");
  if (n < 1) throw DomainError("pair count must be >= 1");
  const std::int64_t available = t * (t - 1) / 2;
  if (n > available) {
    throw DomainError("requested " + std::to_string(n) + " pairs but only " + std::to_string(available) +
                      " distinct test pairs exist");
  }
  Rng rng = make_rng({seed, 0x9a125ULL});
  std::vector<std::pair<std::int64_t, std::int64_t>> chosen;
  chosen.reserve(static_cast<std::size_t>(n));
  if (n * 4 > available) {
    for (std::int64_t i = 0; i < t; ++i) {
      for (std::int64_t j = i + 1; j < t; ++j) chosen.emplace_back(i, j);
    }
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(static_cast<std::size_t>(n));
  } else {
    std::uniform_int_distribution<std::int64_t> pick(0, t - 1);
    std::unordered_set<std::int64_t> seen;
    while (static_cast<std::int64_t>(chosen.size()) < n) {
      std::int64_t i = pick(rng);
      std::int64_t j = pick(rng);
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      if (seen.insert(i * t + j).second) chosen.emplace_back(i, j);
    }
  }

  std::bernoulli_distribution flip(0.5);
  std::vector<PairSample> pairs;
  pairs.reserve(chosen.size());
  for (auto [i, j] : chosen) {
    if (flip(rng)) std::swap(i, j);
    PairSample p;
    p.a = ds.test[static_cast<std::size_t>(i)];
    p.b = ds.test[static_cast<std::size_t>(j)];
    const Vec2 ea = ds.traces[static_cast<std::size_t>(p.a)].trajectory.positions.back();
    const Vec2 eb = ds.traces[static_cast<std::size_t>(p.b)].trajectory.positions.back();
    p.target = eb - ea;
    p.length = p.target.norm();
    pairs.push_back(p);
  }
  return pairs;
}

PairPredictions predict_pairs(const Model& model, const Dataset& ds, std::span<const PairSample> pairs, Exec exec) {
  // Encode every referenced trace once.
  std::vector<std::int64_t> ids;
  ids.reserve(pairs.size() * 2);
  for (const PairSample& p : pairs) {
    ids.push_back(p.a);
    ids.push_back(p.b);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const Mat codes = encode_endpoints(model, ds, ids, exec);
  auto row_of = [&](std::int64_t id) {
    return static_cast<Eigen::Index>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };

  Mat deltas(static_cast<Eigen::Index>(pairs.size()), codes.cols());
  PairPredictions out;
  out.latent_distance.resize(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    deltas.row(static_cast<Eigen::Index>(k)) = codes.row(row_of(pairs[k].b)) - codes.row(row_of(pairs[k].a));
    out.latent_distance[k] = deltas.row(static_cast<Eigen::Index>(k)).norm();
  }
  out.delta_hat = decode_displacements(model, deltas);
  return out;
}

std::vector<double> pair_errors(std::span<const PairSample> pairs, std::span<const Vec2> delta_hat, Exec exec) {
  if (pairs.size() != delta_hat.size()) throw ShapeError("one prediction per pair is required");
  std::vector<double> err(pairs.size());
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
  if (exec == Exec::serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) err[static_cast<std::size_t>(i)] = distance(delta_hat[static_cast<std::size_t>(i)], pairs[static_cast<std::size_t>(i)].target);
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) err[static_cast<std::size_t>(i)] = distance(delta_hat[static_cast<std::size_t>(i)], pairs[static_cast<std::size_t>(i)].target);
  }
  return err;
}

MetricValue displacement_error(std::span<const PairSample> pairs, std::span<const Vec2> delta_hat, double k) {
  if (pairs.empty()) throw DomainError("displacement error needs at least one pair");
  const std::vector<double> err = pair_errors(pairs, delta_hat);
  MetricValue out;
  double sum = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].length <= k) {
      sum += err[i];
      ++out.count;
    }
  }
  if (out.count == 0) throw DomainError("no pair has a target length within k; DE is undefined");
  out.value = sum / static_cast<double>(out.count);
  return out;
}

MetricValue lcdr(std::span<const PairSample> pairs, std::span<const double> latent_distance, double k,
                 double bin_width, std::uint64_t seed) {
  if (pairs.size() != latent_distance.size()) throw ShapeError("one latent distance per pair is required");
  if (!(bin_width > 0.0)) throw DomainError("LCDR bin width must be positive");
  std::map<std::int64_t, std::vector<std::size_t>> bins;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].length > 0.0) bins[static_cast<std::int64_t>(std::floor(pairs[i].length / bin_width))].push_back(i);
  }
  Rng rng = make_rng({seed, 0x1cd2ULL});
  MetricValue out;
  double sum = 0.0;
  for (auto& [bin, members] : bins) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t c = 0; c + 1 < members.size(); c += 2) {
      const std::size_t p = members[c];
      const std::size_t q = members[c + 1];
      if (pairs[p].length > k) continue;
      const double rp = latent_distance[p] / pairs[p].length;
      const double rq = latent_distance[q] / pairs[q].length;
      const double hi = std::max(rp, rq);
      sum += hi > 0.0 ? std::min(rp, rq) / hi : 1.0;
      ++out.count;
    }
  }
  if (out.count == 0) throw DomainError("no pair couples available; LCDR is undefined");
  out.value = sum / static_cast<double>(out.count);
  return out;
}

namespace {

std::string bucket_name(const char* metric, double k) {
  if (std::isinf(k)) return std::string(metric) + "(all)";
  return std::string(metric) + "(" + std::to_string(static_cast<int>(k)) + ")";
}

}  // namespace

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["pairs"] = pairs;
  for (std::size_t b = 0; b < kMetricBuckets.size(); ++b) {
    j[bucket_name("DE", kMetricBuckets[b])] = {{"value", de[b].value}, {"count", de[b].count}};
  }
  for (std::size_t b = 0; b < kMetricBuckets.size(); ++b) {
    j[bucket_name("LCDR", kMetricBuckets[b])] = {{"value", lcdr[b].value}, {"count", lcdr[b].count}};
  }
  j["config"] = config;
  return j;
}

MetricsReport evaluate_metrics(const Model& model, const Dataset& ds, const MetricsOptions& options, Exec exec) {
  const std::vector<PairSample> pairs = sample_pairs(ds, options.pairs, options.seed);
  const PairPredictions pred = predict_pairs(model, ds, pairs, exec);
  MetricsReport r;
  r.pairs = static_cast<std::int64_t>(pairs.size());
  for (std::size_t b = 0; b < kMetricBuckets.size(); ++b) {
    r.de[b] = displacement_error(pairs, pred.delta_hat, kMetricBuckets[b]);
    r.lcdr[b] = lcdr(pairs, pred.latent_distance, kMetricBuckets[b], options.lcdr_bin_width, options.seed);
  }
  return r;
}

LatentProjection project_codes(const Mat& codes) {
  if (codes.rows() < 3) throw DomainError("latent projection needs at least 3 traces");
  const Eigen::MatrixXd x = codes.rowwise() - codes.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(codes.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd basis(d, 2);
  for (int c = 0; c < 2; ++c) {
    const Eigen::Index col = std::max<Eigen::Index>(0, d - 1 - c);
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    basis.col(c) = v;
  }
  const Eigen::MatrixXd proj = x * basis;
  LatentProjection out;
  for (Eigen::Index i = 0; i < proj.rows(); ++i) out.projected.push_back({proj(i, 0), proj(i, 1)});
  out.total_variance = cov.trace();
  const Eigen::VectorXd ev = eig.eigenvalues();
  out.explained_variance = ev(d - 1) + (d > 1 ? ev(d - 2) : 0.0);
  return out;
}

LatentProjection latent_projection(const Model& model, const Dataset& ds, std::span<const std::int64_t> ids, Exec exec) {
  if (ids.size() < 3) throw DomainError("latent projection needs at least 3 traces");
  LatentProjection out = project_codes(encode_endpoints(model, ds, ids, exec));
  out.trace_ids.assign(ids.begin(), ids.end());
  for (std::int64_t id : ids) out.truth.push_back(ds.traces[static_cast<std::size_t>(id)].trajectory.positions.back());
  return out;
}

double procrustes_rms(std::span<const Vec2> from, std::span<const Vec2> to) {
  if (from.size() != to.size() || from.empty()) throw ShapeError("procrustes needs two equally sized point sets");
  const auto n = static_cast<Eigen::Index>(from.size());
  Eigen::MatrixXd x(n, 2), y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = from[static_cast<std::size_t>(i)].x;
    x(i, 1) = from[static_cast<std::size_t>(i)].y;
    y(i, 0) = to[static_cast<std::size_t>(i)].x;
    y(i, 1) = to[static_cast<std::size_t>(i)].y;
  }
  x = x.rowwise() - x.colwise().mean();
  y = y.rowwise() - y.colwise().mean();
  const double xx = x.squaredNorm();
  Eigen::MatrixXd residual = y;
  if (xx > 0.0) {
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(x.transpose() * y, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix2d r = svd.matrixU() * svd.matrixV().transpose();
    const double scale = svd.singularValues().sum() / xx;
    residual = y - scale * x * r;
  }
  return std::sqrt(residual.squaredNorm() / static_cast<double>(n));
}

FewShotReport evaluate_fewshot(const Model& model, const Dataset& ds, int anchors, std::int64_t queries,
                               std::uint64_t seed, int max_anchors, Exec exec) {
  if (anchors < 1) throw DomainError("few-shot evaluation needs K >= 1 anchors");
  const int pool = std::max(anchors, max_anchors);
  std::vector<std::int64_t> order = ds.test;
  Rng rng = make_rng({seed, 0xfe35ULL});
  std::shuffle(order.begin(), order.end(), rng);
  if (static_cast<std::int64_t>(order.size()) < pool + 1) throw DomainError("test split too small for the anchor pool");
  const std::int64_t q = std::min<std::int64_t>(queries, static_cast<std::int64_t>(order.size()) - pool);

  std::vector<std::int64_t> ids(order.begin(), order.begin() + anchors);
  ids.insert(ids.end(), order.begin() + pool, order.begin() + pool + q);
  const Mat codes = encode_endpoints(model, ds, ids, exec);

  std::vector<double> err(static_cast<std::size_t>(q));
  auto solve = [&](std::int64_t j) {
    const Eigen::Index row = anchors + j;
    Mat deltas(anchors, codes.cols());
    for (int a = 0; a < anchors; ++a) deltas.row(a) = codes.row(row) - codes.row(a);
    const std::vector<Vec2> d = decode_displacements(model, deltas);
    int best = 0;
    for (int a = 1; a < anchors; ++a) {
      if (d[static_cast<std::size_t>(a)].norm() < d[static_cast<std::size_t>(best)].norm()) best = a;
    }
    const Vec2 anchor_end = ds.traces[static_cast<std::size_t>(ids[static_cast<std::size_t>(best)])].trajectory.positions.back();
    const Vec2 truth = ds.traces[static_cast<std::size_t>(ids[static_cast<std::size_t>(row)])].trajectory.positions.back();
    err[static_cast<std::size_t>(j)] = distance(anchor_end + d[static_cast<std::size_t>(best)], truth);
  };
  if (exec == Exec::serial) {
    for (std::int64_t j = 0; j < q; ++j) solve(j);
  } else {
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < q; ++j) solve(j);
  }
  FewShotReport r;
  r.anchors = anchors;
  r.queries = q;
  double sum = 0.0;
  for (double e : err) sum += e;
  r.mean_error = q > 0 ? sum / static_cast<double>(q) : 0.0;
  return r;
}

}  // namespace ipath
