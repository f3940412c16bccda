#pragma once

#include <string>
#include <vector>

#include "firecast/tensor.hpp"

namespace firecast {

// A trainable tensor with its gradient accumulator and momentum buffer.
// Names are unique within a model and double as serialization keys.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor velocity;

    Parameter() = default;
    Parameter(std::string name_, Tensor init);

    void zero_grad();
};

using ParamRefs = std::vector<Parameter*>;
using ConstParamRefs = std::vector<const Parameter*>;

// SGD with momentum and L2 weight decay:
//   v <- momentum*v + grad + l2*value;  value <- value - lr*v
// Gradients are zeroed afterwards.
void sgd_step(const ParamRefs& params, double lr, double momentum, double l2);

void zero_grads(const ParamRefs& params);

// Distinct names, matching value/grad shapes.
void validate_param_set(const ConstParamRefs& params);

}  // namespace firecast
