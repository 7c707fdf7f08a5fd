#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "mwalk/autodiff.hpp"
#include "mwalk/tensor.hpp"

namespace mwalk {

struct GradCheckResult {
    double max_relative_error = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0;
    double numeric = 0;
    std::size_t checked = 0;
};

/// Compares reverse-mode gradients with central differences for every scalar of
/// `store`. `loss` must build a width-1 node on the given tape and be a
/// deterministic function of the parameters. Relative error uses
/// max(|analytic|, |numeric|, floor) as denominator so that vanishing gradients
/// are compared absolutely.
template <class Loss>
GradCheckResult grad_check(ParamStore<double>& store, Loss&& loss, double eps = 1e-5, double floor = 1e-6) {
    auto eval = [&] {
        Tape<double> tape(false);
        Var out = loss(tape);
        if (tape.width(out) != 1) throw DimensionError("grad_check: loss must be a scalar");
        return tape.value(out)[0];
    };

    const double base = eval();
    if (eval() != base) throw ContractError("grad_check: forward pass is not deterministic");

    store.zero_grad();
    {
        Tape<double> tape(true);
        Var out = loss(tape);
        tape.grad(out)[0] = 1.0;
        tape.backward();
    }

    GradCheckResult res;
    for (auto& [name, p] : store) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            double& w = p.value.data[i];
            const double saved = w;
            w = saved + eps;
            const double fp = eval();
            w = saved - eps;
            const double fm = eval();
            w = saved;
            const double numeric = (fp - fm) / (2 * eps);
            const double analytic = p.grad[i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), floor});
            const double rel = std::abs(numeric - analytic) / denom;
            ++res.checked;
            if (rel > res.max_relative_error) {
                res.max_relative_error = rel;
                res.worst_param = name;
                res.worst_index = i;
                res.analytic = analytic;
                res.numeric = numeric;
            }
        }
    }
    store.zero_grad();
    return res;
}

}  // namespace mwalk
