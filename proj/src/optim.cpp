#include "firecast/optim.hpp"

#include <unordered_set>

#include "firecast/errors.hpp"

namespace firecast {

Parameter::Parameter(std::string name_, Tensor init)
    : name(std::move(name_)),
      value(std::move(init)),
      grad(value.shape()),
      velocity(value.shape()) {}

void Parameter::zero_grad() {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = 0.0;
}

void sgd_step(const ParamRefs& params, double lr, double momentum, double l2) {
    if (lr <= 0.0) {
        throw ConfigError("learning rate must be positive, got " +
                          std::to_string(lr));
    }
    if (momentum < 0.0 || momentum >= 1.0) {
        throw ConfigError("momentum must lie in [0, 1), got " +
                          std::to_string(momentum));
    }
    if (l2 < 0.0) {
        throw ConfigError("l2 coefficient must be non-negative, got " +
                          std::to_string(l2));
    }
    for (Parameter* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double v =
                momentum * p->velocity[i] + p->grad[i] + l2 * p->value[i];
            p->velocity[i] = v;
            p->value[i] -= lr * v;
        }
        p->zero_grad();
    }
}

void zero_grads(const ParamRefs& params) {
    for (Parameter* p : params) p->zero_grad();
}

void validate_param_set(const ConstParamRefs& params) {
    std::unordered_set<std::string> names;
    for (const Parameter* p : params) {
        if (!names.insert(p->name).second) {
            throw ArgumentError("duplicate parameter name: " + p->name);
        }
        if (!p->value.same_shape(p->grad)) {
            throw DimensionError("parameter " + p->name +
                                 ": grad shape does not match value");
        }
    }
}

}  // namespace firecast
