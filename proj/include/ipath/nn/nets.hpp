#pragma once

#include <memory>
#include <vector>

#include "ipath/nn/layers.hpp"

namespace ipath::nn {

struct NetCache {
  virtual ~NetCache() = default;
};

/// Token-sequence network mapping (batch * len) x in rows to (batch * len) x out.
/// forward() is const and thread-safe; a non-null `cache` records what
/// backward() needs. backward() accumulates into the parameter gradients.
class SequenceNet {
 public:
  virtual ~SequenceNet() = default;

  virtual Mat forward(const Mat& x, int len, std::unique_ptr<NetCache>* cache) const = 0;
  virtual Mat backward(const Mat& dy, const NetCache& cache) = 0;
  virtual void collect(ParamList& out) = 0;

  /// Whether each output row depends only on its own input row.
  virtual bool per_token() const = 0;
  /// Whether sequences longer or shorter than the trained length are valid input.
  virtual bool any_length() const = 0;

  void set_exec(Exec exec) { exec_ = exec; }

 protected:
  Exec exec_ = Exec::parallel;
};

/// Sinusoidal position table, len x dim.
Mat positional_encoding(int len, int dim);

/// Input projection, sinusoidal positions, pre-norm transformer blocks,
/// final norm and an output projection.
class AttentionNet final : public SequenceNet {
 public:
  AttentionNet(const std::string& name, int in, int out, int dim, int depth, int heads, int ffn_dim, Rng& rng,
               int window = 0);

  Mat forward(const Mat& x, int len, std::unique_ptr<NetCache>* cache) const override;
  Mat backward(const Mat& dy, const NetCache& cache) override;
  void collect(ParamList& out) override;
  bool per_token() const override { return false; }
  bool any_length() const override { return true; }

 private:
  struct Cache;
  int dim_;
  Linear in_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm norm_;
  Linear out_;
};

/// Two stacked LSTMs of width `hidden` and an output projection.
class RecurrentNet final : public SequenceNet {
 public:
  RecurrentNet(const std::string& name, int in, int out, int hidden, Rng& rng);

  Mat forward(const Mat& x, int len, std::unique_ptr<NetCache>* cache) const override;
  Mat backward(const Mat& dy, const NetCache& cache) override;
  void collect(ParamList& out) override;
  bool per_token() const override { return false; }
  bool any_length() const override { return false; }

 private:
  struct Cache;
  Lstm l1_, l2_;
  Linear out_;
};

enum class Activation { gelu, tanh };

/// Per-token perceptron: Linear, activation, [Linear, activation,] Linear.
class MlpNet final : public SequenceNet {
 public:
  MlpNet(const std::string& name, int in, int out, int hidden, int layers, Activation act, bool bias, Rng& rng);

  Mat forward(const Mat& x, int len, std::unique_ptr<NetCache>* cache) const override;
  Mat backward(const Mat& dy, const NetCache& cache) override;
  void collect(ParamList& out) override;
  bool per_token() const override { return true; }
  bool any_length() const override { return true; }

 private:
  struct Cache;
  Activation act_;
  std::vector<Linear> layers_;
};

/// Bias-free linear map, y = x W^T.
class LinearNet final : public SequenceNet {
 public:
  LinearNet(const std::string& name, int in, int out, Rng& rng, double init_std);

  Mat forward(const Mat& x, int len, std::unique_ptr<NetCache>* cache) const override;
  Mat backward(const Mat& dy, const NetCache& cache) override;
  void collect(ParamList& out) override;
  bool per_token() const override { return true; }
  bool any_length() const override { return true; }

 private:
  struct Cache;
  Param w_;
};

}  // namespace ipath::nn
