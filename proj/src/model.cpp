#include "ipath/model.hpp"

#include <algorithm>

#include "ipath/errors.hpp"

namespace ipath {

std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::attention: return "attention";
    case Backbone::recurrent: return "recurrent";
    case Backbone::feedforward: return "feedforward";
  }
  return "?";
}

std::string to_string(DCodecKind k) { return k == DCodecKind::linear ? "linear" : "nonlinear"; }

Backbone parse_backbone(const std::string& s) {
  if (s == "attention") return Backbone::attention;
  if (s == "recurrent") return Backbone::recurrent;
  if (s == "feedforward") return Backbone::feedforward;
  throw ConfigError("unknown backbone '" + s + "' (expected attention, recurrent or feedforward)");
}

DCodecKind parse_d_codec(const std::string& s) {
  if (s == "linear") return DCodecKind::linear;
  if (s == "nonlinear") return DCodecKind::nonlinear;
  throw ConfigError("unknown d_codec '" + s + "' (expected linear or nonlinear)");
}

void ModelConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("model.latent_dim must be positive");
  if (heads < 1 || latent_dim % heads != 0) throw ConfigError("model.latent_dim must be divisible by model.heads");
  if (depth < 1) throw ConfigError("model.depth must be positive");
  if (ffn_dim < 1) throw ConfigError("model.ffn_dim must be positive");
  if (attention_window < 0) throw ConfigError("model.attention_window must be >= 0");
  if (aps < 1) throw ConfigError("model needs at least one AP");
  if (trace_length < 1) throw ConfigError("model trace length must be positive");
  if (!(rssi_floor < rssi_ceiling)) throw ConfigError("rssi_floor must be below rssi_ceiling");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["latent_dim"] = latent_dim;
  j["backbone"] = to_string(backbone);
  j["depth"] = depth;
  j["heads"] = heads;
  j["ffn_dim"] = ffn_dim;
  j["attention_window"] = attention_window;
  j["d_codec"] = to_string(d_codec);
  j["aps"] = aps;
  j["trace_length"] = trace_length;
  j["rssi_floor"] = rssi_floor;
  j["rssi_ceiling"] = rssi_ceiling;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.latent_dim = j.at("latent_dim").get<int>();
    c.backbone = parse_backbone(j.at("backbone").get<std::string>());
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.attention_window = j.at("attention_window").get<int>();
    c.d_codec = parse_d_codec(j.at("d_codec").get<std::string>());
    c.aps = j.at("aps").get<int>();
    c.trace_length = j.at("trace_length").get<int>();
    c.rssi_floor = j.at("rssi_floor").get<double>();
    c.rssi_ceiling = j.at("rssi_ceiling").get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

double FingerprintNormalizer::normalize(double dbm) const {
  return (std::clamp(dbm, lo_, hi_) - lo_) / (hi_ - lo_);
}

Mat FingerprintNormalizer::normalize(const FTrace& f) const {
  Mat out(f.length, f.aps);
  for (int i = 0; i < f.length; ++i) {
    for (int a = 0; a < f.aps; ++a) out(i, a) = normalize(f.at(i, a));
  }
  return out;
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  Rng rng = make_rng({seed, 0x30de1ULL});
  const int d = config.latent_dim;
  const int n = config.aps;
  switch (config.backbone) {
    case Backbone::attention:
      m.f_enc_ = std::make_unique<nn::AttentionNet>("f_enc", n, d, d, config.depth, config.heads, config.ffn_dim, rng,
                                                     config.attention_window);
      m.f_dec_ = std::make_unique<nn::AttentionNet>("f_dec", d, n, d, config.depth, config.heads, config.ffn_dim, rng,
                                                     config.attention_window);
      break;
    case Backbone::recurrent:
      m.f_enc_ = std::make_unique<nn::RecurrentNet>("f_enc", n, d, d, rng);
      m.f_dec_ = std::make_unique<nn::RecurrentNet>("f_dec", d, n, d, rng);
      break;
    case Backbone::feedforward:
      m.f_enc_ = std::make_unique<nn::MlpNet>("f_enc", n, d, config.ffn_dim, 3, nn::Activation::gelu, true, rng);
      m.f_dec_ = std::make_unique<nn::MlpNet>("f_dec", d, n, config.ffn_dim, 3, nn::Activation::gelu, true, rng);
      break;
  }
  if (config.d_codec == DCodecKind::linear) {
    m.d_enc_ = std::make_unique<nn::LinearNet>("d_enc", 2, d, rng, 0.1);
    m.d_dec_ = std::make_unique<nn::LinearNet>("d_dec", d, 2, rng, 0.1);
  } else {
    m.d_enc_ = std::make_unique<nn::MlpNet>("d_enc", 2, d, d, 2, nn::Activation::tanh, true, rng);
    m.d_dec_ = std::make_unique<nn::MlpNet>("d_dec", d, 2, d, 2, nn::Activation::tanh, true, rng);
  }
  return m;
}

Model Model::clone() const {
  Model copy = Model::init(config_, 0);
  const auto src = params();
  auto dst = copy.params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
  return copy;
}

nn::ParamList Model::params() {
  nn::ParamList out;
  f_enc_->collect(out);
  f_dec_->collect(out);
  d_enc_->collect(out);
  d_dec_->collect(out);
  return out;
}

std::vector<const nn::Param*> Model::params() const {
  auto list = const_cast<Model*>(this)->params();
  return {list.begin(), list.end()};
}

std::size_t Model::parameter_count(const std::string& prefix) const {
  std::size_t total = 0;
  for (const nn::Param* p : params()) {
    if (p->name.starts_with(prefix)) total += static_cast<std::size_t>(p->value.size());
  }
  return total;
}

void Model::zero_grad() {
  for (nn::Param* p : params()) p->zero_grad();
}

void Model::set_exec(Exec exec) {
  f_enc_->set_exec(exec);
  f_dec_->set_exec(exec);
  d_enc_->set_exec(exec);
  d_dec_->set_exec(exec);
}

Mat encode_ftrace(const Model& model, const FTrace& f) {
  if (f.length < 1) throw LengthError("cannot encode an empty f-trace");
  if (f.aps != model.config().aps) throw ShapeError("f-trace has " + std::to_string(f.aps) + " APs, model expects " +
                                                    std::to_string(model.config().aps));
  if (!model.f_encoder().any_length() && f.length != model.config().trace_length) {
    throw ShapeError("backbone " + to_string(model.config().backbone) + " requires traces of length " +
                     std::to_string(model.config().trace_length));
  }
  return model.f_encoder().forward(model.normalizer().normalize(f), f.length, nullptr);
}

Mat decode_ftrace(const Model& model, const Mat& latents) {
  if (latents.cols() != model.config().latent_dim || latents.rows() < 1) {
    throw ShapeError("latent sequence must be m x " + std::to_string(model.config().latent_dim));
  }
  return model.f_decoder().forward(latents, static_cast<int>(latents.rows()), nullptr);
}

Mat encode_dtrace(const Model& model, const DTrace& d) {
  Mat x(static_cast<Eigen::Index>(d.steps.size()), 2);
  for (std::size_t i = 0; i < d.steps.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = d.steps[i].x;
    x(static_cast<Eigen::Index>(i), 1) = d.steps[i].y;
  }
  return model.d_encoder().forward(x, std::max<int>(1, static_cast<int>(d.steps.size())), nullptr);
}

DTrace decode_dtrace(const Model& model, const Mat& latents) {
  if (latents.cols() != model.config().latent_dim) {
    throw ShapeError("latent sequence must be m x " + std::to_string(model.config().latent_dim));
  }
  const Mat y = model.d_decoder().forward(latents, std::max<int>(1, static_cast<int>(latents.rows())), nullptr);
  DTrace out;
  for (Eigen::Index i = 0; i < y.rows(); ++i) out.steps.push_back({y(i, 0), y(i, 1)});
  return out;
}

}  // namespace ipath
