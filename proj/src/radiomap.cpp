#include "ipath/radiomap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ipath/errors.hpp"

namespace ipath {

void GprKernelParams::validate() const {
  if (!(length_scale > 0.0)) throw DomainError("kernel length scale must be positive");
  if (!(noise_var >= 0.0)) throw DomainError("kernel noise variance must be non-negative");
  if (!(signal_var > 0.0)) throw DomainError("kernel signal variance must be positive");
}

GprKernelParams default_kernel(const PathLossParams& params, int samples_per_anchor) {
  GprKernelParams k;
  k.noise_var = params.shadow_sigma_db * params.shadow_sigma_db / samples_per_anchor;
  k.prior_mean = params.floor_dbm;
  return k;
}

GprRadioMap GprRadioMap::fit(std::span<const Vec2> anchors, std::span<const double> targets, int ap_count,
                             const GprKernelParams& kernel, Bounds bounds, double clamp_lo, double clamp_hi) {
  kernel.validate();
  const auto n = static_cast<Eigen::Index>(anchors.size());
  if (n < 2) throw FitError("GPR fit needs at least two anchors");
  if (ap_count < 1 || targets.size() != anchors.size() * static_cast<std::size_t>(ap_count)) {
    throw FitError("GPR targets do not match anchors x aps");
  }

  const double inv_two_l2 = 1.0 / (2.0 * kernel.length_scale * kernel.length_scale);
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const Vec2 d = anchors[static_cast<std::size_t>(i)] - anchors[static_cast<std::size_t>(j)];
      const double v = kernel.signal_var * std::exp(-dot(d, d) * inv_two_l2);
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += kernel.noise_var;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw FitError("GPR kernel matrix is singular");
  const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  if (!diag.allFinite() || diag.minCoeff() * diag.minCoeff() < 1e-13 * kernel.signal_var) {
    throw FitError("GPR kernel matrix is numerically singular (duplicate anchors without noise?)");
  }

  Eigen::MatrixXd y(n, ap_count);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int a = 0; a < ap_count; ++a) {
      y(i, a) = targets[static_cast<std::size_t>(i) * ap_count + a] - kernel.prior_mean;
    }
  }

  GprRadioMap map;
  map.kernel_ = kernel;
  map.bounds_ = bounds;
  map.clamp_lo_ = clamp_lo;
  map.clamp_hi_ = clamp_hi;
  map.anchors_.assign(anchors.begin(), anchors.end());
  map.targets_.assign(targets.begin(), targets.end());
  map.weights_ = llt.solve(y);
  return map;
}

double GprRadioMap::posterior_mean(int ap_index, Vec2 point) const {
  if (ap_index < 0 || ap_index >= ap_count()) throw DomainError("AP index out of range");
  const double inv_two_l2 = 1.0 / (2.0 * kernel_.length_scale * kernel_.length_scale);
  double acc = 0.0;
  for (std::size_t i = 0; i < anchors_.size(); ++i) {
    const Vec2 d = point - anchors_[i];
    acc += kernel_.signal_var * std::exp(-dot(d, d) * inv_two_l2) * weights_(static_cast<Eigen::Index>(i), ap_index);
  }
  return kernel_.prior_mean + acc;
}

void GprRadioMap::query_into(Vec2 point, std::span<double> out) const {
  if (!bounds_.contains(point)) throw DomainError("fingerprint query outside the field");
  const auto n = static_cast<Eigen::Index>(anchors_.size());
  const double inv_two_l2 = 1.0 / (2.0 * kernel_.length_scale * kernel_.length_scale);
  Eigen::VectorXd kstar(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2 d = point - anchors_[static_cast<std::size_t>(i)];
    kstar(i) = kernel_.signal_var * std::exp(-dot(d, d) * inv_two_l2);
  }
  const Eigen::VectorXd mean = weights_.transpose() * kstar;
  for (int a = 0; a < ap_count(); ++a) {
    out[static_cast<std::size_t>(a)] = std::clamp(kernel_.prior_mean + mean(a), clamp_lo_, clamp_hi_);
  }
}

std::vector<double> GprRadioMap::query_fingerprint(Vec2 point) const {
  std::vector<double> out(static_cast<std::size_t>(ap_count()));
  query_into(point, out);
  return out;
}

std::vector<double> GprRadioMap::query_batch(std::span<const Vec2> points, Exec exec) const {
  const auto aps = static_cast<std::size_t>(ap_count());
  std::vector<double> out(points.size() * aps);
  const auto count = static_cast<std::ptrdiff_t>(points.size());
  if (exec == Exec::serial) {
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      query_into(points[static_cast<std::size_t>(i)], std::span<double>(out).subspan(static_cast<std::size_t>(i) * aps, aps));
    }
    return out;
  }
  // Exceptions cannot cross the parallel region; validate first.
  for (const Vec2& p : points) {
    if (!bounds_.contains(p)) throw DomainError("fingerprint query outside the field");
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    query_into(points[static_cast<std::size_t>(i)], std::span<double>(out).subspan(static_cast<std::size_t>(i) * aps, aps));
  }
  return out;
}

GprRadioMap FieldBundle::fit_map() const {
  return GprRadioMap::fit(anchor_points, anchor_means, layout.ap_count(), kernel, layout.bounds(), path_loss.floor_dbm,
                          path_loss.p0_dbm);
}

namespace {

nlohmann::json points_json(const std::vector<Vec2>& pts) {
  auto arr = nlohmann::json::array();
  for (const Vec2& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

std::vector<Vec2> points_from(const nlohmann::json& arr) {
  std::vector<Vec2> out;
  for (const auto& p : arr) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

}  // namespace

nlohmann::json FieldBundle::to_json() const {
  nlohmann::json j;
  j["layout"]["width_m"] = layout.width_m;
  j["layout"]["height_m"] = layout.height_m;
  auto walls = nlohmann::json::array();
  for (const Segment& w : layout.walls) walls.push_back({w.a.x, w.a.y, w.b.x, w.b.y});
  j["layout"]["walls"] = walls;
  j["layout"]["aps"] = points_json(layout.aps);
  j["path_loss"] = {{"p0_dbm", path_loss.p0_dbm},
                    {"ref_dist_m", path_loss.ref_dist_m},
                    {"exponent", path_loss.exponent},
                    {"wall_atten_db", path_loss.wall_atten_db},
                    {"shadow_sigma_db", path_loss.shadow_sigma_db},
                    {"floor_dbm", path_loss.floor_dbm}};
  j["kernel"] = {{"signal_var", kernel.signal_var},
                 {"length_scale", kernel.length_scale},
                 {"noise_var", kernel.noise_var},
                 {"prior_mean", kernel.prior_mean}};
  j["anchor_points"] = points_json(anchor_points);
  j["anchor_means"] = anchor_means;
  return j;
}

FieldBundle FieldBundle::from_json(const nlohmann::json& j) {
  try {
    FieldBundle b;
    const auto& l = j.at("layout");
    b.layout.width_m = l.at("width_m").get<double>();
    b.layout.height_m = l.at("height_m").get<double>();
    for (const auto& w : l.at("walls")) {
      b.layout.walls.push_back({{w.at(0).get<double>(), w.at(1).get<double>()}, {w.at(2).get<double>(), w.at(3).get<double>()}});
    }
    b.layout.aps = points_from(l.at("aps"));
    const auto& p = j.at("path_loss");
    b.path_loss = {p.at("p0_dbm").get<double>(),        p.at("ref_dist_m").get<double>(),
                   p.at("exponent").get<double>(),      p.at("wall_atten_db").get<double>(),
                   p.at("shadow_sigma_db").get<double>(), p.at("floor_dbm").get<double>()};
    const auto& k = j.at("kernel");
    b.kernel = {k.at("signal_var").get<double>(), k.at("length_scale").get<double>(), k.at("noise_var").get<double>(),
                k.at("prior_mean").get<double>()};
    b.anchor_points = points_from(j.at("anchor_points"));
    b.anchor_means = j.at("anchor_means").get<std::vector<double>>();
    b.layout.validate();
    b.path_loss.validate();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed field document: ") + e.what());
  }
}

FieldBundle make_field_bundle(std::uint64_t seed, const PathLossParams& params, int anchor_count,
                              int samples_per_anchor) {
  FieldBundle b;
  b.layout = build_default_field(seed);
  b.path_loss = params;
  b.kernel = default_kernel(params, samples_per_anchor);
  const AnchorGrid grid = survey_anchors(b.layout, params, anchor_count, samples_per_anchor, seed);
  b.anchor_points = grid.anchor_points;
  b.anchor_means = grid.mean_targets();
  return b;
}

}  // namespace ipath
