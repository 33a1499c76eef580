#pragma once

#include <vector>

#include "ipath/dataset.hpp"
#include "ipath/model.hpp"
#include "ipath/pathways.hpp"

namespace ipath::test {

// Default field, its fitted map and a small walk bank, built once per binary.
struct SmallWorld {
  FieldBundle bundle;
  GprRadioMap map;
  std::vector<Trajectory> bank;
};

const SmallWorld& small_world();

// A split dataset of `size` traces on the small world.
Dataset small_dataset(std::int64_t size, int m = 9, std::uint64_t seed = 7, NoiseConfig noise = {});

// Tiny model used by gradient and property tests.
ModelConfig toy_config(int m = 3, int aps = 2);

// Random f-trace in dBm within the default clamp range.
FTrace random_ftrace(int m, int aps, Rng& rng);

// Relative error used by the finite-difference checks.
double rel_err(double a, double b);

}  // namespace ipath::test

namespace ipath::test {

// Random traces with the given shape; no field involved.
Dataset random_dataset(int traces, int m, int aps, std::uint64_t seed);

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// Central finite differences of one pathway loss against the analytic
// gradient, over every parameter entry.
GradCheck gradient_check(Model& model, const TraceBatch& batch, PathwaySet which, double step = 1e-5);

}  // namespace ipath::test
