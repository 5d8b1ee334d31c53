#include "oodseg/diffmath/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "oodseg/errors.hpp"

namespace oodseg::diffmath {

namespace {

double evaluate(const ScalarFunction& f, std::span<const Tensor> params) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const Tensor& p : params) leaves.push_back(tape.constant(p));
    const double v = f(tape, leaves).item();
    if (!std::isfinite(v)) throw NumericError("gradcheck: non-finite function value");
    return v;
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarFunction& f, std::span<const Tensor> params, double step) {
    if (!(step > 0.0)) throw ValidationError("gradcheck: step must be positive");

    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> leaves;
        for (const Tensor& p : params) leaves.push_back(tape.variable(p));
        Var loss = f(tape, leaves);
        if (!std::isfinite(loss.item())) throw NumericError("gradcheck: non-finite function value");
        tape.backward(loss);
        for (const Var& leaf : leaves) analytic.push_back(leaf.grad());
    }

    GradCheckResult result;
    std::vector<Tensor> probe(params.begin(), params.end());
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto base = params[k].data();
        for (std::size_t i = 0; i < base.size(); ++i) {
            std::vector<double> plus(base.begin(), base.end());
            std::vector<double> minus(base.begin(), base.end());
            plus[i] += step;
            minus[i] -= step;
            probe[k] = Tensor(params[k].shape(), std::move(plus));
            const double fp = evaluate(f, probe);
            probe[k] = Tensor(params[k].shape(), std::move(minus));
            const double fm = evaluate(f, probe);
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[k][i];
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            if (err > result.max_relative_error || (k == 0 && i == 0)) {
                result = GradCheckResult{err, k, i, a, numeric};
            }
        }
        probe[k] = params[k];
    }
    return result;
}

}  // namespace oodseg::diffmath
