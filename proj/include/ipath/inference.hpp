#pragma once

#include <span>
#include <vector>

#include "ipath/model.hpp"

namespace ipath {

struct RelLocResult {
  Vec2 delta_hat;
  double latent_distance = 0.0;  // |l_B^m - l_A^m|
};

/// Displacement from the endpoint of trace A to the endpoint of trace B,
/// decoded from the difference of their endpoint latent codes.
RelLocResult relloc(const Model& model, const FTrace& a, const FTrace& b);

/// Endpoint (last-step) latent code of a single trace.
nn::RowVector endpoint_code(const Model& model, const FTrace& f);

/// d-decoder applied to one latent difference.
Vec2 decode_displacement(const Model& model, const nn::RowVector& latent_delta);

struct AnchorTrace {
  FTrace ftrace;
  Vec2 endpoint;
};

struct FewShotEstimate {
  Vec2 position;
  int anchor_index = -1;
  Vec2 delta_hat;
};

/// Anchor with the shortest predicted displacement to the query (lowest index
/// on ties) plus that displacement. Throws DomainError for no anchors.
FewShotEstimate fewshot_absolute(const Model& model, const FTrace& query, std::span<const AnchorTrace> anchors);

/// Endpoint codes of many dataset traces, one row per id. Traces are encoded
/// in fixed chunks so serial and parallel runs agree bit for bit.
Mat encode_endpoints(const Model& model, const Dataset& ds, std::span<const std::int64_t> ids,
                     Exec exec = Exec::parallel);

/// Decoded displacements for rows of latent differences (k x latent).
std::vector<Vec2> decode_displacements(const Model& model, const Mat& latent_deltas);

}  // namespace ipath
