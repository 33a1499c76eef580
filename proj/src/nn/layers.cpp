#include "ipath/nn/layers.hpp"

#include <cmath>
#include <numbers>

namespace ipath::nn {

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, int in, int out, bool bias, Rng& rng, double init_gain)
    : w_(make_param(name + ".w", out, in)), bias_(bias) {
  init_normal(w_, init_gain / std::sqrt(static_cast<double>(in)), rng);
  if (bias_) b_ = make_param(name + ".b", 1, out);
}

Mat Linear::forward(const Mat& x) const {
  Mat y = x * w_.value.transpose();
  if (bias_) y.rowwise() += b_.value.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
  w_.grad.noalias() += dy.transpose() * x;
  if (bias_) b_.grad.row(0) += dy.colwise().sum();
  return dy * w_.value;
}

void Linear::collect(ParamList& out) {
  out.push_back(&w_);
  if (bias_) out.push_back(&b_);
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& name, int dim)
    : gamma_(make_param(name + ".gamma", 1, dim)), beta_(make_param(name + ".beta", 1, dim)) {
  gamma_.value.setOnes();
}

Mat LayerNorm::forward(const Mat& x, Cache* cache) const {
  const auto d = static_cast<double>(x.cols());
  const Eigen::VectorXd mean = x.rowwise().mean();
  Mat xhat = x.colwise() - mean;
  const Eigen::VectorXd var = xhat.array().square().rowwise().sum() / d;
  const Eigen::VectorXd inv_std = (var.array() + kEps).rsqrt();
  xhat.array().colwise() *= inv_std.array();
  Mat y = xhat.array().rowwise() * gamma_.value.row(0).array();
  y.rowwise() += beta_.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

Mat LayerNorm::backward(const Mat& dy, const Cache& cache) {
  gamma_.grad.row(0) += (dy.array() * cache.xhat.array()).matrix().colwise().sum();
  beta_.grad.row(0) += dy.colwise().sum();
  const auto d = static_cast<double>(dy.cols());
  const Mat dxhat = dy.array().rowwise() * gamma_.value.row(0).array();
  const Eigen::VectorXd sum_dxhat = dxhat.rowwise().sum();
  const Eigen::VectorXd sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum();
  Mat dx = (dxhat * d).colwise() - sum_dxhat;
  dx -= (cache.xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
  dx.array().colwise() *= (cache.inv_std.array() / d);
  return dx;
}

void LayerNorm::collect(ParamList& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ---------------------------------------------------------------- GELU (tanh form)

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Mat gelu(const Mat& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); });
}

Mat gelu_backward(const Mat& x, const Mat& dy) {
  const Mat d = x.unaryExpr([](double v) {
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
  });
  return dy.cwiseProduct(d);
}

// ---------------------------------------------------------------- attention core

namespace {

void attention_one(const Mat& q, const Mat& k, const Mat& v, int len, int heads, int window, Eigen::Index b, Mat* attn,
                   Mat& ctx) {
  const auto dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index r0 = b * len;
  for (int h = 0; h < heads; ++h) {
    const auto c0 = h * dh;
    Mat s = (q.block(r0, c0, len, dh) * k.block(r0, c0, len, dh).transpose()) * scale;
    for (Eigen::Index i = 0; i < len; ++i) {
      Eigen::Index lo = 0, n = len;
      if (window > 0) {
        lo = std::max<Eigen::Index>(0, i - window);
        n = std::min<Eigen::Index>(len, i + window + 1) - lo;
      }
      auto row = s.row(i).segment(lo, n);
      const double mx = row.maxCoeff();
      row = (row.array() - mx).exp();
      row /= row.sum();
      s.row(i).head(lo).setZero();
      s.row(i).tail(len - lo - n).setZero();
    }
    ctx.block(r0, c0, len, dh).noalias() = s * v.block(r0, c0, len, dh);
    if (attn) attn->block((b * heads + h) * len, 0, len, len) = s;
  }
}

void attention_one_backward(const Mat& q, const Mat& k, const Mat& v, const Mat& attn, const Mat& dctx, int len,
                            int heads, Eigen::Index b, Mat& dq, Mat& dk, Mat& dv) {
  const auto dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index r0 = b * len;
  for (int h = 0; h < heads; ++h) {
    const auto c0 = h * dh;
    const auto a = attn.block((b * heads + h) * len, 0, len, len);
    const auto dc = dctx.block(r0, c0, len, dh);
    dv.block(r0, c0, len, dh).noalias() = a.transpose() * dc;
    const Mat da = dc * v.block(r0, c0, len, dh).transpose();
    Mat ds = a.cwiseProduct(da);
    const Eigen::VectorXd rowsum = ds.rowwise().sum();
    ds -= (a.array().colwise() * rowsum.array()).matrix();
    ds *= scale;
    dq.block(r0, c0, len, dh).noalias() = ds * k.block(r0, c0, len, dh);
    dk.block(r0, c0, len, dh).noalias() = ds.transpose() * q.block(r0, c0, len, dh);
  }
}

}  // namespace

Mat attention_core(const Mat& q, const Mat& k, const Mat& v, int len, int heads, Mat* attn, Exec exec, int window) {
  const Eigen::Index batch = q.rows() / len;
  Mat ctx(q.rows(), q.cols());
  if (attn) attn->resize(batch * heads * len, len);
  if (exec == Exec::serial) {
    for (Eigen::Index b = 0; b < batch; ++b) attention_one(q, k, v, len, heads, window, b, attn, ctx);
  } else {
#pragma omp parallel for schedule(static)
    for (Eigen::Index b = 0; b < batch; ++b) attention_one(q, k, v, len, heads, window, b, attn, ctx);
  }
  return ctx;
}

void attention_core_backward(const Mat& q, const Mat& k, const Mat& v, const Mat& attn, const Mat& dctx, int len,
                             int heads, Mat& dq, Mat& dk, Mat& dv, Exec exec) {
  const Eigen::Index batch = q.rows() / len;
  dq.resize(q.rows(), q.cols());
  dk.resize(k.rows(), k.cols());
  dv.resize(v.rows(), v.cols());
  if (exec == Exec::serial) {
    for (Eigen::Index b = 0; b < batch; ++b) attention_one_backward(q, k, v, attn, dctx, len, heads, b, dq, dk, dv);
  } else {
#pragma omp parallel for schedule(static)
    for (Eigen::Index b = 0; b < batch; ++b) attention_one_backward(q, k, v, attn, dctx, len, heads, b, dq, dk, dv);
  }
}

// ---------------------------------------------------------------- MultiHeadAttention

MultiHeadAttention::MultiHeadAttention(const std::string& name, int dim, int heads, Rng& rng, double out_gain,
                                       int window)
    : dim_(dim),
      heads_(heads),
      window_(window),
      q_(name + ".q", dim, dim, true, rng),
      k_(name + ".k", dim, dim, true, rng),
      v_(name + ".v", dim, dim, true, rng),
      o_(name + ".o", dim, dim, true, rng, out_gain) {}

Mat MultiHeadAttention::forward(const Mat& x, int len, Cache* cache, Exec exec) const {
  Mat q = q_.forward(x);
  Mat k = k_.forward(x);
  Mat v = v_.forward(x);
  Mat ctx = attention_core(q, k, v, len, heads_, cache ? &cache->attn : nullptr, exec, window_);
  Mat y = o_.forward(ctx);
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->ctx = std::move(ctx);
  }
  return y;
}

Mat MultiHeadAttention::backward(const Mat& dy, int len, const Cache& cache, Exec exec) {
  const Mat dctx = o_.backward(cache.ctx, dy);
  Mat dq, dk, dv;
  attention_core_backward(cache.q, cache.k, cache.v, cache.attn, dctx, len, heads_, dq, dk, dv, exec);
  Mat dx = q_.backward(cache.x, dq);
  dx += k_.backward(cache.x, dk);
  dx += v_.backward(cache.x, dv);
  return dx;
}

void MultiHeadAttention::collect(ParamList& out) {
  q_.collect(out);
  k_.collect(out);
  v_.collect(out);
  o_.collect(out);
}

// ---------------------------------------------------------------- TransformerBlock

TransformerBlock::TransformerBlock(const std::string& name, int dim, int heads, int ffn_dim, Rng& rng,
                                   double residual_gain, int window)
    : ln1_(name + ".ln1", dim),
      ln2_(name + ".ln2", dim),
      attn_(name + ".attn", dim, heads, rng, residual_gain, window),
      ff1_(name + ".ff1", dim, ffn_dim, true, rng),
      ff2_(name + ".ff2", ffn_dim, dim, true, rng, residual_gain) {}

Mat TransformerBlock::forward(const Mat& x, int len, Cache* cache, Exec exec) const {
  const Mat h1 = ln1_.forward(x, cache ? &cache->ln1 : nullptr);
  Mat x1 = x + attn_.forward(h1, len, cache ? &cache->attn : nullptr, exec);
  Mat h2 = ln2_.forward(x1, cache ? &cache->ln2 : nullptr);
  Mat f1 = ff1_.forward(h2);
  Mat g = gelu(f1);
  Mat y = x1 + ff2_.forward(g);
  if (cache) {
    cache->h2 = std::move(h2);
    cache->f1 = std::move(f1);
    cache->g = std::move(g);
  }
  return y;
}

Mat TransformerBlock::backward(const Mat& dy, int len, const Cache& cache, Exec exec) {
  const Mat dg = ff2_.backward(cache.g, dy);
  const Mat df1 = gelu_backward(cache.f1, dg);
  const Mat dh2 = ff1_.backward(cache.h2, df1);
  Mat dx1 = dy + ln2_.backward(dh2, cache.ln2);
  const Mat dh1 = attn_.backward(dx1, len, cache.attn, exec);
  dx1 += ln1_.backward(dh1, cache.ln1);
  return dx1;
}

void TransformerBlock::collect(ParamList& out) {
  ln1_.collect(out);
  attn_.collect(out);
  ln2_.collect(out);
  ff1_.collect(out);
  ff2_.collect(out);
}

// ---------------------------------------------------------------- Lstm

namespace {

Mat sigmoid(const Mat& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

Lstm::Lstm(const std::string& name, int in, int hidden, Rng& rng)
    : hidden_(hidden),
      w_(make_param(name + ".w", 4 * hidden, in)),
      u_(make_param(name + ".u", 4 * hidden, hidden)),
      b_(make_param(name + ".b", 1, 4 * hidden)) {
  init_normal(w_, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  init_normal(u_, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  // Forget-gate bias starts open.
  b_.value.block(0, hidden, 1, hidden).setOnes();
}

Mat Lstm::forward(const Mat& x, int len, Cache* cache) const {
  const Eigen::Index batch = x.rows() / len;
  const int h = hidden_;
  Mat out(x.rows(), h);
  Mat h_prev = Mat::Zero(batch, h);
  Mat c_prev = Mat::Zero(batch, h);
  if (cache) {
    *cache = Cache{};
    cache->batch = static_cast<int>(batch);
    cache->len = len;
  }
  Mat xt(batch, x.cols());
  for (int t = 0; t < len; ++t) {
    for (Eigen::Index b = 0; b < batch; ++b) xt.row(b) = x.row(b * len + t);
    Mat z = xt * w_.value.transpose();
    z.noalias() += h_prev * u_.value.transpose();
    z.rowwise() += b_.value.row(0);
    Mat gi = sigmoid(z.middleCols(0, h));
    Mat gf = sigmoid(z.middleCols(h, h));
    Mat gg = z.middleCols(2 * h, h).array().tanh().matrix();
    Mat go = sigmoid(z.middleCols(3 * h, h));
    Mat c = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gg);
    Mat tc = c.array().tanh().matrix();
    Mat hn = go.cwiseProduct(tc);
    for (Eigen::Index b = 0; b < batch; ++b) out.row(b * len + t) = hn.row(b);
    if (cache) {
      cache->x.push_back(xt);
      cache->h_prev.push_back(h_prev);
      cache->c_prev.push_back(c_prev);
      cache->i.push_back(std::move(gi));
      cache->f.push_back(std::move(gf));
      cache->g.push_back(std::move(gg));
      cache->o.push_back(std::move(go));
      cache->tc.push_back(std::move(tc));
      cache->c.push_back(c);
    }
    h_prev = std::move(hn);
    c_prev = std::move(c);
  }
  return out;
}

Mat Lstm::backward(const Mat& dy, const Cache& cache) {
  const int len = cache.len;
  const Eigen::Index batch = cache.batch;
  const int h = hidden_;
  Mat dx(dy.rows(), w_.value.cols());
  Mat dh_next = Mat::Zero(batch, h);
  Mat dc_next = Mat::Zero(batch, h);
  Mat dht(batch, h);
  Mat dz(batch, 4 * h);
  for (int t = len - 1; t >= 0; --t) {
    const auto ut = static_cast<std::size_t>(t);
    for (Eigen::Index b = 0; b < batch; ++b) dht.row(b) = dy.row(b * len + t);
    dht += dh_next;
    const Mat& gi = cache.i[ut];
    const Mat& gf = cache.f[ut];
    const Mat& gg = cache.g[ut];
    const Mat& go = cache.o[ut];
    const Mat& tc = cache.tc[ut];
    const Mat dc = dht.cwiseProduct(go).cwiseProduct((1.0 - tc.array().square()).matrix()) + dc_next;
    dz.middleCols(0, h) = dc.cwiseProduct(gg).cwiseProduct(gi.cwiseProduct((1.0 - gi.array()).matrix()));
    dz.middleCols(h, h) = dc.cwiseProduct(cache.c_prev[ut]).cwiseProduct(gf.cwiseProduct((1.0 - gf.array()).matrix()));
    dz.middleCols(2 * h, h) = dc.cwiseProduct(gi).cwiseProduct((1.0 - gg.array().square()).matrix());
    dz.middleCols(3 * h, h) = dht.cwiseProduct(tc).cwiseProduct(go.cwiseProduct((1.0 - go.array()).matrix()));
    dc_next = dc.cwiseProduct(gf);

    w_.grad.noalias() += dz.transpose() * cache.x[ut];
    u_.grad.noalias() += dz.transpose() * cache.h_prev[ut];
    b_.grad.row(0) += dz.colwise().sum();
    const Mat dxt = dz * w_.value;
    dh_next = dz * u_.value;
    for (Eigen::Index b = 0; b < batch; ++b) dx.row(b * len + t) = dxt.row(b);
  }
  return dx;
}

void Lstm::collect(ParamList& out) {
  out.push_back(&w_);
  out.push_back(&u_);
  out.push_back(&b_);
}

}  // namespace ipath::nn
