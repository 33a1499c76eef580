#pragma once

namespace ipath {

// Every data-parallel kernel has a serial reference path and an OpenMP path.
// Both produce bit-identical results: parallel loops only map, reductions
// happen serially afterwards in a fixed order.
enum class Exec { serial, parallel };

int max_threads();

}  // namespace ipath
