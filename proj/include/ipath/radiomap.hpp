#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <span>
#include <vector>

#include "ipath/field.hpp"
#include "ipath/parallel.hpp"

namespace ipath {

struct GprKernelParams {
  double signal_var = 25.0;   // dB^2
  double length_scale = 3.0;  // m
  double noise_var = 0.08;    // dB^2, shadow variance of a 50-sample mean
  double prior_mean = -95.0;  // dBm

  void validate() const;
  bool operator==(const GprKernelParams&) const = default;
};

/// Kernel defaults tied to the survey: noise is the variance of an anchor mean.
GprKernelParams default_kernel(const PathLossParams& params, int samples_per_anchor);

/// Per-AP Gaussian-process posterior mean over the anchor survey. Every AP
/// shares the squared-exponential kernel and the anchor inputs, so a single
/// Cholesky factor serves all of them. Immutable after fit.
class GprRadioMap {
 public:
  /// `targets` is anchors x aps, row-major. Throws FitError when the kernel
  /// matrix is singular.
  static GprRadioMap fit(std::span<const Vec2> anchors, std::span<const double> targets, int ap_count,
                         const GprKernelParams& kernel, Bounds bounds, double clamp_lo, double clamp_hi);

  int ap_count() const { return static_cast<int>(weights_.cols()); }
  const GprKernelParams& kernel() const { return kernel_; }
  const std::vector<Vec2>& anchors() const { return anchors_; }
  const std::vector<double>& targets() const { return targets_; }
  Bounds bounds() const { return bounds_; }
  double clamp_lo() const { return clamp_lo_; }
  double clamp_hi() const { return clamp_hi_; }

  /// Unclamped posterior mean for one AP.
  double posterior_mean(int ap_index, Vec2 point) const;

  /// Clamped per-AP fingerprint at `point` (length ap_count). Throws
  /// DomainError outside bounds.
  std::vector<double> query_fingerprint(Vec2 point) const;
  void query_into(Vec2 point, std::span<double> out) const;

  /// Fingerprints for many points, rows x aps row-major.
  std::vector<double> query_batch(std::span<const Vec2> points, Exec exec = Exec::parallel) const;

 private:
  GprKernelParams kernel_;
  Bounds bounds_;
  double clamp_lo_ = 0.0;
  double clamp_hi_ = 0.0;
  std::vector<Vec2> anchors_;
  std::vector<double> targets_;
  Eigen::MatrixXd weights_;  // anchors x aps, (K + s_n^2 I)^-1 (Y - mu)
};

/// Everything needed to rebuild the simulated environment and its radio map.
struct FieldBundle {
  FieldLayout layout;
  PathLossParams path_loss;
  GprKernelParams kernel;
  std::vector<Vec2> anchor_points;
  std::vector<double> anchor_means;  // anchors x aps

  GprRadioMap fit_map() const;
  nlohmann::json to_json() const;
  static FieldBundle from_json(const nlohmann::json& j);
};

FieldBundle make_field_bundle(std::uint64_t seed, const PathLossParams& params = {}, int anchor_count = 337,
                              int samples_per_anchor = 50);

}  // namespace ipath
