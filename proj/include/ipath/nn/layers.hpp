#pragma once

#include <string>

#include "ipath/nn/tensor.hpp"
#include "ipath/parallel.hpp"

namespace ipath::nn {

/// y = x W^T (+ b). W is out x in.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, bool bias, Rng& rng, double init_gain = 1.0);

  Mat forward(const Mat& x) const;
  /// Accumulates parameter gradients for input `x` and returns dL/dx.
  Mat backward(const Mat& x, const Mat& dy);
  void collect(ParamList& out);

  int in_dim() const { return static_cast<int>(w_.value.cols()); }
  int out_dim() const { return static_cast<int>(w_.value.rows()); }
  bool has_bias() const { return bias_; }

 private:
  Param w_;
  Param b_;
  bool bias_ = false;
};

class LayerNorm {
 public:
  struct Cache {
    Mat xhat;
    Eigen::VectorXd inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim);

  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamList& out);

 private:
  Param gamma_;
  Param beta_;
  static constexpr double kEps = 1e-5;
};

Mat gelu(const Mat& x);
/// dL/dx given dL/dy and the pre-activation x.
Mat gelu_backward(const Mat& x, const Mat& dy);

/// Multi-head self-attention within each trace (no cross-trace mixing).
class MultiHeadAttention {
 public:
  struct Cache {
    Mat x;
    Mat q, k, v;
    Mat attn;  // (batch * heads * len) x len softmax weights
    Mat ctx;
  };

  MultiHeadAttention() = default;
  /// window > 0 limits each position to neighbours at most `window` steps away.
  MultiHeadAttention(const std::string& name, int dim, int heads, Rng& rng, double out_gain, int window = 0);

  Mat forward(const Mat& x, int len, Cache* cache, Exec exec) const;
  Mat backward(const Mat& dy, int len, const Cache& cache, Exec exec);
  void collect(ParamList& out);

 private:
  int dim_ = 0;
  int heads_ = 1;
  int window_ = 0;
  Linear q_, k_, v_, o_;
};

/// Per-trace softmax attention core, serial reference and OpenMP paths.
/// `attn` receives (batch * heads * len) x len weights; returns the context.
/// With window > 0, keys more than `window` steps away get zero weight.
Mat attention_core(const Mat& q, const Mat& k, const Mat& v, int len, int heads, Mat* attn, Exec exec,
                   int window = 0);
void attention_core_backward(const Mat& q, const Mat& k, const Mat& v, const Mat& attn, const Mat& dctx, int len,
                             int heads, Mat& dq, Mat& dk, Mat& dv, Exec exec);

/// Pre-norm transformer block: x + MHA(LN(x)), then + FFN(LN(.)).
class TransformerBlock {
 public:
  struct Cache {
    LayerNorm::Cache ln1;
    MultiHeadAttention::Cache attn;
    LayerNorm::Cache ln2;
    Mat h2, f1, g;
  };

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, int dim, int heads, int ffn_dim, Rng& rng, double residual_gain,
                   int window = 0);

  Mat forward(const Mat& x, int len, Cache* cache, Exec exec) const;
  Mat backward(const Mat& dy, int len, const Cache& cache, Exec exec);
  void collect(ParamList& out);

 private:
  LayerNorm ln1_, ln2_;
  MultiHeadAttention attn_;
  Linear ff1_, ff2_;
};

/// Single LSTM layer over trace-major token rows, gates ordered i, f, g, o.
class Lstm {
 public:
  struct Cache {
    int batch = 0;
    int len = 0;
    std::vector<Mat> x;                  // per step, batch x in
    std::vector<Mat> i, f, g, o, c, tc;  // per step, batch x hidden
    std::vector<Mat> h_prev, c_prev;
  };

  Lstm() = default;
  Lstm(const std::string& name, int in, int hidden, Rng& rng);

  Mat forward(const Mat& x, int len, Cache* cache) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamList& out);

 private:
  int hidden_ = 0;
  Param w_;  // 4h x in
  Param u_;  // 4h x h
  Param b_;  // 1 x 4h
};

}  // namespace ipath::nn
