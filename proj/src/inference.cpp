#include "ipath/inference.hpp"

#include <algorithm>

#include "ipath/errors.hpp"

namespace ipath {

nn::RowVector endpoint_code(const Model& model, const FTrace& f) {
  const Mat codes = encode_ftrace(model, f);
  return codes.row(codes.rows() - 1);
}

Vec2 decode_displacement(const Model& model, const nn::RowVector& latent_delta) {
  const Mat y = model.d_decoder().forward(Mat(latent_delta), 1, nullptr);
  return {y(0, 0), y(0, 1)};
}

RelLocResult relloc(const Model& model, const FTrace& a, const FTrace& b) {
  if (a.length != b.length) throw ShapeError("relloc needs two traces of equal length");
  const nn::RowVector diff = endpoint_code(model, b) - endpoint_code(model, a);
  return {decode_displacement(model, diff), diff.norm()};
}

FewShotEstimate fewshot_absolute(const Model& model, const FTrace& query, std::span<const AnchorTrace> anchors) {
  if (anchors.empty()) throw DomainError("few-shot localization needs at least one anchor");
  const nn::RowVector lq = endpoint_code(model, query);
  FewShotEstimate best;
  double best_len = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Vec2 delta = decode_displacement(model, lq - endpoint_code(model, anchors[i].ftrace));
    const double len = delta.norm();
    if (best.anchor_index < 0 || len < best_len) {
      best_len = len;
      best.anchor_index = static_cast<int>(i);
      best.delta_hat = delta;
      best.position = anchors[i].endpoint + delta;
    }
  }
  return best;
}

namespace {

constexpr std::size_t kEncodeChunk = 256;

void encode_chunk(const Model& model, const Dataset& ds, std::span<const std::int64_t> ids, std::size_t chunk,
                  const FingerprintNormalizer& norm, Mat& out) {
  const int m = ds.manifest.m;
  const int n = ds.manifest.n;
  const std::size_t begin = chunk * kEncodeChunk;
  const std::size_t end = std::min(ids.size(), begin + kEncodeChunk);
  const auto count = static_cast<Eigen::Index>(end - begin);
  Mat f(count * m, n);
  for (Eigen::Index k = 0; k < count; ++k) {
    const FTrace& t = ds.traces[static_cast<std::size_t>(ids[begin + static_cast<std::size_t>(k)])].ftrace;
    for (int i = 0; i < m; ++i) {
      for (int a = 0; a < n; ++a) f(k * m + i, a) = norm.normalize(t.at(i, a));
    }
  }
  const Mat codes = model.f_encoder().forward(f, m, nullptr);
  for (Eigen::Index k = 0; k < count; ++k) out.row(static_cast<Eigen::Index>(begin) + k) = codes.row(k * m + m - 1);
}

}  // namespace

Mat encode_endpoints(const Model& model, const Dataset& ds, std::span<const std::int64_t> ids, Exec exec) {
  if (ds.manifest.n != model.config().aps) throw ShapeError("dataset AP count does not match the model");
  if (!model.f_encoder().any_length() && ds.manifest.m != model.config().trace_length) {
    throw ShapeError("backbone " + to_string(model.config().backbone) + " requires traces of length " +
                     std::to_string(model.config().trace_length));
  }
  Mat out(static_cast<Eigen::Index>(ids.size()), model.config().latent_dim);
  const FingerprintNormalizer norm = model.normalizer();
  const auto chunks = static_cast<std::ptrdiff_t>((ids.size() + kEncodeChunk - 1) / kEncodeChunk);
  if (exec == Exec::serial) {
    for (std::ptrdiff_t c = 0; c < chunks; ++c) encode_chunk(model, ds, ids, static_cast<std::size_t>(c), norm, out);
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c = 0; c < chunks; ++c) encode_chunk(model, ds, ids, static_cast<std::size_t>(c), norm, out);
  }
  return out;
}

std::vector<Vec2> decode_displacements(const Model& model, const Mat& latent_deltas) {
  std::vector<Vec2> out;
  if (latent_deltas.rows() == 0) return out;
  const Mat y = model.d_decoder().forward(latent_deltas, 1, nullptr);
  out.reserve(static_cast<std::size_t>(y.rows()));
  for (Eigen::Index i = 0; i < y.rows(); ++i) out.push_back({y(i, 0), y(i, 1)});
  return out;
}

}  // namespace ipath
