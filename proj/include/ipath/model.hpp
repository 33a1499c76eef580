#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipath/dataset.hpp"
#include "ipath/nn/nets.hpp"

namespace ipath {

using nn::Mat;

enum class Backbone { attention, recurrent, feedforward };
enum class DCodecKind { linear, nonlinear };

std::string to_string(Backbone b);
std::string to_string(DCodecKind k);
Backbone parse_backbone(const std::string& s);
DCodecKind parse_d_codec(const std::string& s);

struct ModelConfig {
  int latent_dim = 64;
  Backbone backbone = Backbone::attention;
  int depth = 1;
  int heads = 4;
  int ffn_dim = 128;
  // Attention span in steps on each side; 0 attends over the whole trace.
  int attention_window = 0;
  DCodecKind d_codec = DCodecKind::linear;
  // Shapes fixed by the data the model is trained on.
  int aps = 20;
  int trace_length = 9;
  // Fingerprint clamp range mapped onto [0, 1].
  double rssi_floor = -95.0;
  double rssi_ceiling = -40.0;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

/// Affine map of the clamp range [floor, ceiling] dBm onto [0, 1].
class FingerprintNormalizer {
 public:
  FingerprintNormalizer(double floor_dbm, double ceiling_dbm) : lo_(floor_dbm), hi_(ceiling_dbm) {}

  double normalize(double dbm) const;
  double denormalize(double unit) const { return lo_ + unit * (hi_ - lo_); }

  /// m x n normalized token matrix for one trace.
  Mat normalize(const FTrace& f) const;

 private:
  double lo_;
  double hi_;
};

/// The two autoencoders sharing one latent space: a sequence codec for
/// f-traces and a codec for d-trace steps (bias-free linear by default).
class Model {
 public:
  static Model init(const ModelConfig& config, std::uint64_t seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  Model clone() const;

  const ModelConfig& config() const { return config_; }
  FingerprintNormalizer normalizer() const { return {config_.rssi_floor, config_.rssi_ceiling}; }

  const nn::SequenceNet& f_encoder() const { return *f_enc_; }
  const nn::SequenceNet& f_decoder() const { return *f_dec_; }
  const nn::SequenceNet& d_encoder() const { return *d_enc_; }
  const nn::SequenceNet& d_decoder() const { return *d_dec_; }
  nn::SequenceNet& f_encoder() { return *f_enc_; }
  nn::SequenceNet& f_decoder() { return *f_dec_; }
  nn::SequenceNet& d_encoder() { return *d_enc_; }
  nn::SequenceNet& d_decoder() { return *d_dec_; }

  /// All parameters in a fixed order; names are unique.
  nn::ParamList params();
  std::vector<const nn::Param*> params() const;
  std::size_t parameter_count(const std::string& prefix = "") const;
  void zero_grad();
  void set_exec(Exec exec);

 private:
  Model() = default;

  ModelConfig config_;
  std::unique_ptr<nn::SequenceNet> f_enc_;
  std::unique_ptr<nn::SequenceNet> f_dec_;
  std::unique_ptr<nn::SequenceNet> d_enc_;
  std::unique_ptr<nn::SequenceNet> d_dec_;
};

/// m x latent codes of one f-trace (dBm input, normalized internally).
/// Throws LengthError for empty traces and ShapeError on AP-count mismatch or
/// an unsupported length for fixed-length backbones.
Mat encode_ftrace(const Model& model, const FTrace& f);

/// m x n normalized reconstruction of a latent sequence.
Mat decode_ftrace(const Model& model, const Mat& latents);

/// m x latent codes of the displacement steps.
Mat encode_dtrace(const Model& model, const DTrace& d);

/// Displacements decoded from m x latent codes.
DTrace decode_dtrace(const Model& model, const Mat& latents);

}  // namespace ipath
