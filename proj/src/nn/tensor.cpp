#include "ipath/nn/tensor.hpp"

namespace ipath::nn {

Param make_param(std::string name, int rows, int cols) {
  Param p;
  p.name = std::move(name);
  p.value = Mat::Zero(rows, cols);
  p.grad = Mat::Zero(rows, cols);
  return p;
}

void init_normal(Param& p, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
}

}  // namespace ipath::nn
