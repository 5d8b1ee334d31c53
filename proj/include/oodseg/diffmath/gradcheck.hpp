#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "oodseg/diffmath/tape.hpp"

namespace oodseg::diffmath {

/// Builds a scalar loss on `tape` from parameter leaves (in `params` order).
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares backward() against central differences for every scalar entry
/// of every parameter. The error per entry is
/// |analytic - numeric| / max(1, |numeric|).
GradCheckResult finite_diff_check(const ScalarFunction& f, std::span<const Tensor> params, double step = 1e-5);

}  // namespace oodseg::diffmath
