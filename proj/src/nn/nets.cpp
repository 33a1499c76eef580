#include "ipath/nn/nets.hpp"

#include <cmath>

namespace ipath::nn {

Mat positional_encoding(int len, int dim) {
  Mat pe(len, dim);
  for (int i = 0; i < len; ++i) {
    for (int j = 0; j < dim; ++j) {
      const double rate = std::pow(10000.0, -static_cast<double>(j - j % 2) / dim);
      pe(i, j) = (j % 2 == 0) ? std::sin(i * rate) : std::cos(i * rate);
    }
  }
  return pe;
}

// ---------------------------------------------------------------- AttentionNet

struct AttentionNet::Cache final : NetCache {
  int len = 0;
  Mat x;
  std::vector<TransformerBlock::Cache> blocks;
  LayerNorm::Cache norm;
  Mat normed;
};

AttentionNet::AttentionNet(const std::string& name, int in, int out, int dim, int depth, int heads, int ffn_dim,
                           Rng& rng, int window)
    : dim_(dim), in_(name + ".in", in, dim, true, rng), norm_(name + ".norm", dim), out_(name + ".out", dim, out, true, rng) {
  const double residual_gain = 1.0 / std::sqrt(2.0 * depth);
  for (int l = 0; l < depth; ++l) {
    blocks_.emplace_back(name + ".block" + std::to_string(l), dim, heads, ffn_dim, rng, residual_gain, window);
  }
}

Mat AttentionNet::forward(const Mat& x, int len, std::unique_ptr<NetCache>* cache) const {
  Cache* c = nullptr;
  if (cache) {
    auto owned = std::make_unique<Cache>();
    c = owned.get();
    *cache = std::move(owned);
    c->len = len;
    c->x = x;
    c->blocks.resize(blocks_.size());
  }
  Mat h = in_.forward(x);
  const Mat pe = positional_encoding(len, dim_);
  for (Eigen::Index r = 0; r < h.rows(); ++r) h.row(r) += pe.row(r % len);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    h = blocks_[l].forward(h, len, c ? &c->blocks[l] : nullptr, exec_);
  }
  Mat normed = norm_.forward(h, c ? &c->norm : nullptr);
  Mat y = out_.forward(normed);
  if (c) c->normed = std::move(normed);
  return y;
}

Mat AttentionNet::backward(const Mat& dy, const NetCache& cache) {
  const auto& c = static_cast<const Cache&>(cache);
  Mat dh = norm_.backward(out_.backward(c.normed, dy), c.norm);
  for (std::size_t l = blocks_.size(); l-- > 0;) dh = blocks_[l].backward(dh, c.len, c.blocks[l], exec_);
  return in_.backward(c.x, dh);
}

void AttentionNet::collect(ParamList& out) {
  in_.collect(out);
  for (auto& b : blocks_) b.collect(out);
  norm_.collect(out);
  out_.collect(out);
}

// ---------------------------------------------------------------- RecurrentNet

struct RecurrentNet::Cache final : NetCache {
  Lstm::Cache l1, l2;
  Mat h2;
};

RecurrentNet::RecurrentNet(const std::string& name, int in, int out, int hidden, Rng& rng)
    : l1_(name + ".lstm0", in, hidden, rng), l2_(name + ".lstm1", hidden, hidden, rng), out_(name + ".out", hidden, out, true, rng) {}

Mat RecurrentNet::forward(const Mat& x, int len, std::unique_ptr<NetCache>* cache) const {
  Cache* c = nullptr;
  if (cache) {
    auto owned = std::make_unique<Cache>();
    c = owned.get();
    *cache = std::move(owned);
  }
  const Mat h1 = l1_.forward(x, len, c ? &c->l1 : nullptr);
  Mat h2 = l2_.forward(h1, len, c ? &c->l2 : nullptr);
  Mat y = out_.forward(h2);
  if (c) c->h2 = std::move(h2);
  return y;
}

Mat RecurrentNet::backward(const Mat& dy, const NetCache& cache) {
  const auto& c = static_cast<const Cache&>(cache);
  const Mat dh2 = out_.backward(c.h2, dy);
  return l1_.backward(l2_.backward(dh2, c.l2), c.l1);
}

void RecurrentNet::collect(ParamList& out) {
  l1_.collect(out);
  l2_.collect(out);
  out_.collect(out);
}

// ---------------------------------------------------------------- MlpNet

struct MlpNet::Cache final : NetCache {
  std::vector<Mat> inputs;  // input of every linear layer
  std::vector<Mat> pre;     // pre-activations of the hidden layers
};

MlpNet::MlpNet(const std::string& name, int in, int out, int hidden, int layers, Activation act, bool bias, Rng& rng)
    : act_(act) {
  for (int l = 0; l < layers; ++l) {
    const int a = l == 0 ? in : hidden;
    const int b = l + 1 == layers ? out : hidden;
    layers_.emplace_back(name + ".fc" + std::to_string(l), a, b, bias, rng);
  }
}

Mat MlpNet::forward(const Mat& x, int /*len*/, std::unique_ptr<NetCache>* cache) const {
  Cache* c = nullptr;
  if (cache) {
    auto owned = std::make_unique<Cache>();
    c = owned.get();
    *cache = std::move(owned);
  }
  Mat h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (c) c->inputs.push_back(h);
    Mat z = layers_[l].forward(h);
    if (l + 1 == layers_.size()) return z;
    h = act_ == Activation::gelu ? gelu(z) : Mat(z.array().tanh().matrix());
    if (c) c->pre.push_back(std::move(z));
  }
  return h;
}

Mat MlpNet::backward(const Mat& dy, const NetCache& cache) {
  const auto& c = static_cast<const Cache&>(cache);
  Mat d = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    d = layers_[l].backward(c.inputs[l], d);
    if (l == 0) break;
    const Mat& z = c.pre[l - 1];
    if (act_ == Activation::gelu) {
      d = gelu_backward(z, d);
    } else {
      d = d.cwiseProduct((1.0 - z.array().tanh().square()).matrix());
    }
  }
  return d;
}

void MlpNet::collect(ParamList& out) {
  for (auto& l : layers_) l.collect(out);
}

// ---------------------------------------------------------------- LinearNet

struct LinearNet::Cache final : NetCache {
  Mat x;
};

LinearNet::LinearNet(const std::string& name, int in, int out, Rng& rng, double init_std)
    : w_(make_param(name + ".w", out, in)) {
  init_normal(w_, init_std, rng);
}

Mat LinearNet::forward(const Mat& x, int /*len*/, std::unique_ptr<NetCache>* cache) const {
  if (cache) {
    auto owned = std::make_unique<Cache>();
    owned->x = x;
    *cache = std::move(owned);
  }
  return x * w_.value.transpose();
}

Mat LinearNet::backward(const Mat& dy, const NetCache& cache) {
  const auto& c = static_cast<const Cache&>(cache);
  w_.grad.noalias() += dy.transpose() * c.x;
  return dy * w_.value;
}

void LinearNet::collect(ParamList& out) { out.push_back(&w_); }

}  // namespace ipath::nn
