#pragma once

// Central finite-difference oracle for gradient checks. Lives in test code
// and stays independent of the analytic backward paths it verifies.

#include <cmath>
#include <functional>

#include "firecast/optim.hpp"

namespace fdcheck {

inline constexpr double kEps = 1e-5;

inline double rel_error(double analytic, double numeric) {
    const double scale =
        std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    return std::fabs(analytic - numeric) / scale;
}

// Perturbs every scalar of every parameter value by +-eps, evaluates the
// loss, and compares (L+ - L-) / (2 eps) against the accumulated grads.
// compute_grads must leave gradients in param->grad.
inline double max_param_rel_error(const firecast::ParamRefs& params,
                                  const std::function<double()>& loss,
                                  const std::function<void()>& compute_grads,
                                  double eps = kEps) {
    firecast::zero_grads(params);
    compute_grads();
    double worst = 0.0;
    for (firecast::Parameter* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + eps;
            const double plus = loss();
            p->value[i] = saved - eps;
            const double minus = loss();
            p->value[i] = saved;
            const double numeric = (plus - minus) / (2.0 * eps);
            worst = std::max(worst, rel_error(p->grad[i], numeric));
        }
    }
    firecast::zero_grads(params);
    return worst;
}

// Same idea for a gradient with respect to a plain tensor input.
inline double max_input_rel_error(firecast::Tensor& input,
                                  const firecast::Tensor& analytic_grad,
                                  const std::function<double()>& loss,
                                  double eps = kEps) {
    double worst = 0.0;
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double saved = input[i];
        input[i] = saved + eps;
        const double plus = loss();
        input[i] = saved - eps;
        const double minus = loss();
        input[i] = saved;
        const double numeric = (plus - minus) / (2.0 * eps);
        worst = std::max(worst, rel_error(analytic_grad[i], numeric));
    }
    return worst;
}

}  // namespace fdcheck
