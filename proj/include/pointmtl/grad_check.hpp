#pragma once

#include <functional>
#include <vector>

#include "pointmtl/tensor.hpp"

namespace pointmtl {

struct GradCheckOptions {
    double eps = 1e-5;
    // 0 checks every element; otherwise at most this many coordinates per
    // input, sampled deterministically from the seed.
    int64_t max_coords_per_input = 0;
    uint64_t sample_seed = 0;
};

// Compares tape gradients of a scalar-valued function against central finite
// differences, element by element. The function must be deterministic across
// calls (re-seed any rng it consumes). Returns the worst relative error with a
// 1e-8 denominator floor. Throws a numeric error on non-finite values.
double grad_check(const std::function<Tensor(Tape&)>& f, std::vector<Tensor> inputs,
                  const GradCheckOptions& opts = {});

}  // namespace pointmtl
