#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ipath/random.hpp"

namespace ipath::nn {

// Token matrices are (batch * len) x features, trace-major: row b * len + i.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParamList = std::vector<Param*>;

Param make_param(std::string name, int rows, int cols);
void init_normal(Param& p, double stddev, Rng& rng);

}  // namespace ipath::nn
