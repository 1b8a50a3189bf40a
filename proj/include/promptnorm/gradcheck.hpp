#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "promptnorm/tensor.hpp"

namespace promptnorm {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

/// Checks the tape gradient of `loss_fn` at `value` against central finite
/// differences. `loss_fn` receives a fresh tape plus the leaf registered on
/// it and must return a scalar recorded on that tape. The step for entry i
/// is step_scale * max(1, |v_i|); relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-12).
inline GradCheckResult finite_difference_check(
    const std::function<Tensor(Tape&, const Tensor&)>& loss_fn, const Tensor& value,
    double step_scale = 1e-5) {
    Tape tape;
    Tensor leaf = tape.leaf(value);
    Tensor loss = loss_fn(tape, leaf);
    Gradients grads = backward(tape, loss);
    const Tensor analytic = grads.at(leaf);

    GradCheckResult result;
    std::vector<double> probe = value.data();
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double v0 = probe[i];
        const double h = step_scale * std::max(1.0, std::abs(v0));

        probe[i] = v0 + h;
        Tape tp;
        const double fp = loss_fn(tp, tp.leaf(Tensor(value.shape(), probe))).scalar_value();

        probe[i] = v0 - h;
        Tape tm;
        const double fm = loss_fn(tm, tm.leaf(Tensor(value.shape(), probe))).scalar_value();
        probe[i] = v0;

        const double numeric = (fp - fm) / (2.0 * h);
        const double denom =
            std::max({std::abs(analytic.at(i)), std::abs(numeric), 1e-12});
        const double rel = std::abs(analytic.at(i) - numeric) / denom;
        if (rel > result.max_rel_err) {
            result.max_rel_err = rel;
            result.worst_index = i;
            result.analytic_at_worst = analytic.at(i);
            result.numeric_at_worst = numeric;
        }
    }
    return result;
}

}  // namespace promptnorm
