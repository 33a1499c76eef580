#include "ipath/pathways.hpp"

#include <cmath>

#include "ipath/errors.hpp"

namespace ipath {

void AblationConfig::validate() const {
  if (disable_f_decoder && !disable_d_encoder) {
    throw ConfigError("ablation.disable_f_decoder requires ablation.disable_d_encoder");
  }
}

PathwaySet AblationConfig::available() const {
  PathwaySet s = kAllPathways;
  if (disable_d_encoder) s.dd = s.fda = false;
  if (disable_f_decoder) s.fd = s.fda = false;
  return s;
}

PathwaySet stage_pathways(int stage, const AblationConfig& ablation) {
  PathwaySet s;
  switch (stage) {
    case 1: s.fd = true; break;
    case 2: s.fd = s.fda = true; break;
    case 3: s.fd = s.dd = s.ffs = true; break;
    default: throw DomainError("training stage must be 1, 2 or 3 (got " + std::to_string(stage) + ")");
  }
  const PathwaySet avail = ablation.available();
  return {s.fd && avail.fd, s.dd && avail.dd, s.fda && avail.fda, s.ffs && avail.ffs};
}

double stage_loss(int stage, const PathwayLossValues& losses, const AblationConfig& ablation) {
  const PathwaySet s = stage_pathways(stage, ablation);
  double total = 0.0;
  auto add = [&](bool on, const std::optional<double>& v, const char* name) {
    if (!on) return;
    if (!v) throw DomainError(std::string("stage loss needs the ") + name + " pathway value");
    total += *v;
  };
  add(s.fd, losses.fd, "FD");
  add(s.dd, losses.dd, "DD");
  add(s.fda, losses.fda, "FDA");
  add(s.ffs, losses.ffs, "FFS");
  return total;
}

TraceBatch make_batch(const Dataset& ds, std::span<const std::int64_t> ids, const FingerprintNormalizer& norm) {
  TraceBatch b;
  b.batch = static_cast<int>(ids.size());
  b.len = ds.manifest.m;
  const int n = ds.manifest.n;
  b.f.resize(static_cast<Eigen::Index>(b.batch) * b.len, n);
  b.d.resize(static_cast<Eigen::Index>(b.batch) * b.len, 2);
  for (int k = 0; k < b.batch; ++k) {
    const PairedTrace& t = ds.traces[static_cast<std::size_t>(ids[static_cast<std::size_t>(k)])];
    for (int i = 0; i < b.len; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(k) * b.len + i;
      for (int a = 0; a < n; ++a) b.f(r, a) = norm.normalize(t.ftrace.at(i, a));
      b.d(r, 0) = t.dtrace.steps[static_cast<std::size_t>(i)].x;
      b.d(r, 1) = t.dtrace.steps[static_cast<std::size_t>(i)].y;
    }
  }
  return b;
}

TraceBatch make_batch(const FTrace& f, const DTrace& d, const FingerprintNormalizer& norm) {
  if (static_cast<int>(d.steps.size()) != f.length) throw ShapeError("f-trace and d-trace lengths differ");
  TraceBatch b;
  b.batch = 1;
  b.len = f.length;
  b.f = norm.normalize(f);
  b.d.resize(f.length, 2);
  for (int i = 0; i < f.length; ++i) {
    b.d(i, 0) = d.steps[static_cast<std::size_t>(i)].x;
    b.d(i, 1) = d.steps[static_cast<std::size_t>(i)].y;
  }
  return b;
}

namespace {

double l1(const Mat& r) { return r.cwiseAbs().sum(); }

Mat l1_grad(const Mat& r, double scale) {
  return r.unaryExpr([scale](double v) { return v > 0.0 ? scale : (v < 0.0 ? -scale : 0.0); });
}

// Zeroes the first step of every trace (the d1 placeholder is excluded).
void mask_first_step(Mat& m, int batch, int len) {
  for (int b = 0; b < batch; ++b) m.row(static_cast<Eigen::Index>(b) * len).setZero();
}

// `trainable` is null for a forward-only evaluation.
PathwayLossValues run(const Model& model, Model* trainable, const TraceBatch& batch, PathwaySet which) {
  const int B = batch.batch;
  const int m = batch.len;
  if (B < 1 || m < 1) throw LengthError("empty batch");
  if (batch.f.rows() != batch.d.rows()) throw ShapeError("f-trace and d-trace lengths differ");
  if (which.ffs && m < 2) throw LengthError("FFS pathway needs traces of length >= 2");
  const bool grad = trainable != nullptr;
  const double inv_b = 1.0 / B;
  const Eigen::Index rows = static_cast<Eigen::Index>(B) * m;
  const int dim = model.config().latent_dim;

  PathwayLossValues out;
  const bool need_l = which.fd || which.fda || which.ffs;
  const bool need_e = which.dd || which.fda;

  std::unique_ptr<nn::NetCache> c_lenc, c_fd, c_denc, c_dd, c_fda, c_ffs;
  auto cache = [grad](std::unique_ptr<nn::NetCache>& c) { return grad ? &c : nullptr; };

  Mat L, E;
  Mat dL, dE;
  if (need_l) {
    L = model.f_encoder().forward(batch.f, m, cache(c_lenc));
    if (grad) dL = Mat::Zero(rows, dim);
  }
  if (need_e) {
    E = model.d_encoder().forward(batch.d, m, cache(c_denc));
    if (grad) dE = Mat::Zero(rows, dim);
  }

  if (which.fd) {
    const Mat r = model.f_decoder().forward(L, m, cache(c_fd)) - batch.f;
    out.fd = l1(r) * inv_b;
    if (grad) dL += trainable->f_decoder().backward(l1_grad(r, inv_b), *c_fd);
  }

  if (which.dd) {
    Mat r = model.d_decoder().forward(E, m, cache(c_dd)) - batch.d;
    mask_first_step(r, B, m);
    out.dd = l1(r) * inv_b;
    if (grad) dE += trainable->d_decoder().backward(l1_grad(r, inv_b), *c_dd);
  }

  if (which.fda) {
    Mat lhat = L;
    for (int b = 0; b < B; ++b) {
      for (int i = 1; i < m; ++i) {
        const Eigen::Index r = static_cast<Eigen::Index>(b) * m + i;
        lhat.row(r) = L.row(r - 1) + E.row(r);
      }
    }
    const Mat r = model.f_decoder().forward(lhat, m, cache(c_fda)) - batch.f;
    out.fda = l1(r) * inv_b;
    if (grad) {
      const Mat dlhat = trainable->f_decoder().backward(l1_grad(r, inv_b), *c_fda);
      for (int b = 0; b < B; ++b) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * m;
        dL.row(r0) += dlhat.row(r0);
        for (int i = 1; i < m; ++i) {
          dL.row(r0 + i - 1) += dlhat.row(r0 + i);
          dE.row(r0 + i) += dlhat.row(r0 + i);
        }
      }
    }
  }

  if (which.ffs) {
    Mat ehat = Mat::Zero(rows, dim);
    for (int b = 0; b < B; ++b) {
      for (int i = 1; i < m; ++i) {
        const Eigen::Index r = static_cast<Eigen::Index>(b) * m + i;
        ehat.row(r) = L.row(r) - L.row(r - 1);
      }
    }
    Mat r = model.d_decoder().forward(ehat, m, cache(c_ffs)) - batch.d;
    mask_first_step(r, B, m);
    out.ffs = l1(r) * inv_b;
    if (grad) {
      const Mat dehat = trainable->d_decoder().backward(l1_grad(r, inv_b), *c_ffs);
      for (int b = 0; b < B; ++b) {
        for (int i = 1; i < m; ++i) {
          const Eigen::Index r0 = static_cast<Eigen::Index>(b) * m + i;
          dL.row(r0) += dehat.row(r0);
          dL.row(r0 - 1) -= dehat.row(r0);
        }
      }
    }
  }

  if (grad) {
    if (need_e) trainable->d_encoder().backward(dE, *c_denc);
    if (need_l) trainable->f_encoder().backward(dL, *c_lenc);
  }
  return out;
}

}  // namespace

PathwayLossValues run_pathways(Model& model, const TraceBatch& batch, PathwaySet which, bool backprop) {
  return run(model, backprop ? &model : nullptr, batch, which);
}

double loss_fd(const Model& model, const TraceBatch& batch) { return *run(model, nullptr, batch, {.fd = true}).fd; }
double loss_dd(const Model& model, const TraceBatch& batch) { return *run(model, nullptr, batch, {.dd = true}).dd; }
double loss_fda(const Model& model, const TraceBatch& batch) { return *run(model, nullptr, batch, {.fda = true}).fda; }
double loss_ffs(const Model& model, const TraceBatch& batch) { return *run(model, nullptr, batch, {.ffs = true}).ffs; }

}  // namespace ipath
